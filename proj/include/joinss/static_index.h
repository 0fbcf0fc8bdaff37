// include/joinss/static_index.h
//
// The static subset-sampling index over an acyclic join.
//
// For node i with children c_0 < ... < c_{C-1}, slot t of tuple u holds
//   W^t_{i,u}(l) = # results of T_i^t (i plus the subtrees of c_t..c_{C-1})
//                  through u with score l,
// built right to left by
//   W^t = convolve(M_{c_t, u[key(c_t)]}, W^{t+1}, shift_t),
// where W^C is the indicator at the combiner identity and shift_t is phi(u)
// for t = C-1 and the identity otherwise; a leaf's only slot is the indicator
// at phi(u). Slot 0 doubles as W^∅. M_{i,v} sums W^∅ over the key group of v.
//
// Ranked access inside bucket l follows the canonical result order: root
// tuple, then score pair (l1, l2) lexicographically, then the rank inside
// the child subtree (major) and inside the remaining siblings (minor).

#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "joinss/convolution.h"
#include "joinss/relation.h"
#include "joinss/rng.h"
#include "joinss/sampling.h"
#include "joinss/score.h"

namespace joinss {

struct PreprocessOptions {
  bool reduce = true;                 // semi-join reduce before building
  std::optional<int> L_override;
  ConvolutionMode convolution = ConvolutionMode::kExact;
  bool prefix_sums = true;            // one-shot builds its own X arrays
  std::size_t result_cap = kDefaultResultCap;
};

// Pairs (l1, l2) whose term contributes to slot l of W^t at a tuple with the
// given shift, in lexicographic order. For PRODUCT below the tail this is the
// anti-diagonal l1 + l2 = l - shift; otherwise every pair matching the
// combiner predicate.
template <typename Fn>
void for_each_score_pair(const Aggregator& agg, int shift, int l, Fn&& fn) {
  const int L = agg.L();
  if (agg.kind() == AggregatorKind::kProduct && l < L) {
    for (int l1 = 0; l1 <= l - shift; ++l1)
      if (!fn(l1, l - shift - l1)) return;
    return;
  }
  for (int l1 = 0; l1 <= L; ++l1)
    for (int l2 = 0; l2 <= L; ++l2)
      if (agg.combine(shift, agg.combine(l1, l2)) == l && !fn(l1, l2)) return;
}

class StaticIndex {
 public:
  // Everything the index stores; exposed for serialization and tests.
  struct Data {
    JoinQuery query;
    AggregatorKind kind = AggregatorKind::kProduct;
    ScoreParams params;
    std::size_t result_cap = kDefaultResultCap;
    std::vector<std::vector<int>> phi;          // [i][u]
    std::vector<std::vector<u128>> w;           // [i][(u * slots + t) * (L+1) + l]
    std::vector<std::vector<u128>> m;           // [i][g * (L+1) + l]; empty at the root
    std::vector<std::vector<u128>> prefix;      // [i][l * n_i + u], running within the group
    std::vector<u128> bucket_sizes;             // l < L
    u128 total = 0;
    u128 tail_size = 0;
  };

  StaticIndex() = default;
  explicit StaticIndex(Data data);

  static StaticIndex build(const JoinQuery& query, AggregatorKind kind, const PreprocessOptions& options = {});

  const Data& data() const { return data_; }
  const JoinQuery& query() const { return data_.query; }
  const Aggregator& aggregator() const { return *agg_; }
  int L() const { return data_.params.L; }
  int phi(std::size_t i, std::size_t u) const { return data_.phi[i][u]; }

  std::size_t slots(std::size_t i) const { return std::max<std::size_t>(1, query().tree().children[i].size()); }
  // W^t_{i,u}; t may equal the child count of an internal node (indicator at
  // the identity).
  const u128* w(std::size_t i, std::size_t t, std::size_t u) const;
  Histogram w_hist(std::size_t i, std::size_t t, std::size_t u) const;
  // M_{i,g}, or nullptr when the root or the group is absent.
  const u128* m(std::size_t i, std::size_t g) const;
  bool has_prefix_sums() const { return !data_.prefix.empty(); }
  // Sum of W^∅_{i,u'}(l) over u' <= u inside u's group.
  u128 prefix(std::size_t i, int l, std::size_t u) const { return data_.prefix[i][l * query().relation(i).size() + u]; }
  int shift(std::size_t i, std::size_t t, std::size_t u) const;

  const std::vector<u128>& bucket_sizes() const { return data_.bucket_sizes; }
  u128 total() const { return data_.total; }
  u128 tail_size() const { return data_.tail_size; }

  // The tau-th result (1-based) of bucket l < L.
  JoinResult recursive_access(int l, u128 tau) const;
  // RecursiveAccess(i, ∅, v, l, tau) where v selects group g of R_i; writes the
  // fragment into rows.
  void access_group(std::size_t i, std::size_t g, int l, u128 tau, std::vector<std::size_t>& rows) const;
  // RecursiveAccess(i, c_t, u, l, tau) for a tuple u of R_i.
  void access_tuple(std::size_t i, std::size_t t, std::size_t u, int l, u128 tau,
                    std::vector<std::size_t>& rows) const;

  // Results scored >= L in canonical order, materialized once on first use.
  const std::vector<JoinResult>& tail_results() const;
  bool tail_materialized() const;
  JoinResult tail_access(u128 tau) const;

  JoinResult make_result(std::vector<std::size_t> rows) const;

  // Sub-instances {B_l}_{l<L} followed by the tail.
  MetaIndex<JoinResult> meta_index() const;
  // One subset sample of Join(Q).
  std::vector<JoinResult> query_sample(Rng& rng, BatchStats* stats = nullptr) const;

 private:
  struct TailCache {
    std::once_flag once;
    std::vector<JoinResult> results;
    bool filled = false;
  };

  Data data_;
  std::optional<Aggregator> agg_;
  std::shared_ptr<TailCache> tail_ = std::make_shared<TailCache>();
};

// Score pair and split ranks chosen by one RecursiveAccess step.
struct PairSplit {
  int l1 = 0;
  int l2 = 0;
  u128 tau1 = 0;
  u128 tau2 = 0;
};

// Locates the pair covering tau among the terms m[l1] * next[l2] and splits
// tau into (ceil(tau / next[l2]), ((tau - 1) mod next[l2]) + 1). Throws
// RankError when tau exceeds the total.
PairSplit split_rank(const Aggregator& agg, int shift, int l, u128 tau, const u128* m, const u128* next);

}  // namespace joinss
