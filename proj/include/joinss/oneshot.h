// include/joinss/oneshot.h
//
// One-shot subset sampling: every ranked access of a single query is resolved
// in one batched top-down pass. Requests travel as quintuples; per (node,
// slot) they are radix sorted by rank, grouped, and resolved by a forward
// co-traversal of the X arrays (running sums of W over a key group) and the
// Y arrays (running sums of the pair terms M(l1) * W^{t+1}(l2) of one tuple).
//
// Slot t > 0 is always conditioned on the tuple chosen at slot 0, so its X
// phase runs over the singleton group {u} with X = W^t_u.

#pragma once

#include <cstddef>
#include <map>
#include <unordered_map>
#include <utility>
#include <vector>

#include "joinss/static_index.h"

namespace joinss {

struct Quintuple {
  std::size_t request = 0;  // position in the caller's request list
  std::size_t node = 0;
  std::size_t slot = 0;     // child slot t; 0 with group conditioning means ∅
  bool by_group = true;     // conditioned on a key group g (else on tuple u)
  std::size_t cond = 0;     // g or u
  int l = 0;
  u128 tau = 0;
};

// Stable LSD radix sort with 16-bit digits; the pass count follows the
// largest key's bit length.
template <typename T, typename Key>
std::size_t radix_sort_by(std::vector<T>& items, Key&& key) {
  if (items.size() < 2) return 0;
  u128 max_key = 0;
  for (const auto& it : items) max_key = std::max<u128>(max_key, key(it));
  const int passes = std::max(1, (bit_width(max_key) + 15) / 16);
  std::vector<T> buffer(items.size());
  std::vector<std::size_t> count(1u << 16);
  for (int p = 0; p < passes; ++p) {
    std::fill(count.begin(), count.end(), 0);
    const int shift = 16 * p;
    for (const auto& it : items) ++count[static_cast<std::size_t>((key(it) >> shift) & 0xffff)];
    std::size_t sum = 0;
    for (auto& c : count) {
      const std::size_t here = c;
      c = sum;
      sum += here;
    }
    for (auto& it : items) buffer[count[static_cast<std::size_t>((key(it) >> shift) & 0xffff)]++] = std::move(it);
    items.swap(buffer);
  }
  return static_cast<std::size_t>(passes);
}

void radix_sort_by_rank(std::vector<Quintuple>& batch);

struct YEntry {
  int l1 = 0;
  int l2 = 0;
  u128 cum = 0;  // running sum through this pair
};

// All pair terms of slot l of W^t_{i,u} in lexicographic pair order,
// including zero terms, as running sums.
std::vector<u128> dense_y(const Aggregator& agg, int shift, int l, const u128* m, const u128* next);

// Query-time statistics of the one-shot algorithm.
class XYTables {
 public:
  // Y entries are computed on first use unless eager_y is set.
  explicit XYTables(const StaticIndex& idx, bool eager_y = false);

  // Running sum of W^∅_{i,u'}(l) over u' <= u inside u's group.
  u128 x(std::size_t i, int l, std::size_t u) const { return x_[i][static_cast<std::size_t>(l) * n_[i] + u]; }
  // Nonzero pair terms of W^t_{i,u}(l) with running sums.
  const std::vector<YEntry>& y(std::size_t i, std::size_t t, std::size_t u, int l);
  std::size_t x_entries() const;
  std::size_t y_entries() const;

 private:
  u64 y_key(std::size_t i, std::size_t t, std::size_t u, int l) const;

  const StaticIndex& idx_;
  std::vector<std::size_t> n_;
  std::vector<std::vector<u128>> x_;
  std::vector<u64> slot_base_;
  std::unordered_map<u64, std::vector<YEntry>> y_;
};

struct OneShotStats {
  // Radix sorts by rank per (node, slot).
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> rank_sorts;
  std::size_t group_sorts = 0;
  std::size_t quintuples = 0;
  std::size_t x_cursor_steps = 0;
  std::size_t y_cursor_steps = 0;
  // Times a cursor would have had to move backward; always zero.
  std::size_t cursor_regressions = 0;
  // Largest cursor movement inside one X or Y array versus its length.
  bool movement_within_bounds = true;
};

// Results for (l, tau) requests with l < L, aligned with the request list.
std::vector<JoinResult> batch_recursive_access(const StaticIndex& idx, XYTables& xy,
                                               const std::vector<std::pair<int, u128>>& requests,
                                               OneShotStats* stats = nullptr);

struct OneShotOptions {
  PreprocessOptions preprocess;
  bool eager_y = false;
};

// Preprocess, build X/Y, draw the query's positions, resolve them in one batch
// and rejection-filter. Uses the random streams exactly as StaticIndex::
// query_sample does, so both return the same sample for the same seed.
std::vector<JoinResult> oneshot_sample(const JoinQuery& query, AggregatorKind kind, Rng& rng,
                                       const OneShotOptions& options = {}, OneShotStats* stats = nullptr,
                                       BatchStats* batch = nullptr);

// Same, over an index already built.
std::vector<JoinResult> oneshot_sample(const StaticIndex& idx, Rng& rng, bool eager_y = false,
                                       OneShotStats* stats = nullptr, BatchStats* batch = nullptr);

}  // namespace joinss
