// include/joinss/dynamic_index.h
//
// Insert-only dynamic subset-sampling index.
//
// Tuples of every relation are kept in insertion order. For each key group
// of a non-root relation we keep the exact sum M̂ of its members' approximate
// statistics W̃^∅ and the rounded value M̃ = 2^ceil(log2 M̂). Tuple
// statistics are recomputed with M̃ in place of M:
//   W̃^t = convolve(M̃_{c_t, u[key(c_t)]}, W̃^{t+1}, shift_t),
// so a change propagates to the parent only when some M̃ crosses a power of
// two. Ranked access walks Fenwick trees over the members' W̃^∅ in insertion
// order; a rank that lands beyond a child group's exact total M̂ is a dummy.
// The root group's M̂ gives the (approximate) bucket sizes, including the
// tail slot L.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "joinss/convolution.h"
#include "joinss/relation.h"
#include "joinss/rng.h"
#include "joinss/sampling.h"
#include "joinss/score.h"

namespace joinss {

struct DynamicOptions {
  std::optional<int> L_override;
  u64 initial_threshold = 64;
  ConvolutionMode convolution = ConvolutionMode::kExact;
};

// 2^ceil(log2 x) for x >= 1, and 0 for x == 0.
u128 round_up_pow2(u128 x);

class DynamicIndex {
 public:
  DynamicIndex(std::vector<std::string> names, std::vector<std::vector<std::string>> schemas, AggregatorKind kind,
               DynamicOptions options = {});

  // Inserts a tuple; returns false (with a warning) for a duplicate. Throws on
  // an arity mismatch or an invalid weight.
  bool insert(std::size_t relation, Tuple tuple);
  std::optional<std::size_t> relation_id(const std::string& name) const;

  const JoinTree& tree() const { return tree_; }
  const Aggregator& aggregator() const { return agg_; }
  int L() const { return agg_.L(); }
  std::size_t relation_count() const { return nodes_.size(); }
  const std::string& relation_name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& schema(std::size_t i) const { return tree_.schemas[i]; }
  std::size_t size(std::size_t i) const { return nodes_[i].tuples.size(); }
  const Tuple& tuple(std::size_t i, std::size_t u) const { return nodes_[i].tuples[u]; }
  u64 inserted_count() const { return inserted_; }
  u64 rebuild_threshold() const { return threshold_; }
  std::size_t rebuilds() const { return rebuilds_; }

  std::size_t slots(std::size_t i) const { return std::max<std::size_t>(1, tree_.children[i].size()); }
  // W̃^t_{i,u}; t equal to the child count gives the sentinel indicator.
  const u128* w_tilde(std::size_t i, std::size_t t, std::size_t u) const;
  std::size_t group_of(std::size_t i, std::size_t u) const { return nodes_[i].group_of[u]; }
  std::size_t group_count(std::size_t i) const { return nodes_[i].groups.size(); }
  const std::vector<u128>& m_hat(std::size_t i, std::size_t g) const { return nodes_[i].groups[g].mhat; }
  const std::vector<u128>& m_tilde(std::size_t i, std::size_t g) const { return nodes_[i].groups[g].mtil; }
  // Times M̃_{i,g}(l) changed since the last rebuild.
  unsigned m_tilde_changes(std::size_t i, std::size_t g, int l) const { return nodes_[i].groups[g].changes[l]; }
  int shift(std::size_t i, std::size_t t, std::size_t u) const;

  // Approximate sizes of buckets 0..L (slot L is the tail).
  std::vector<u128> bucket_sizes() const;

  // The tau-th position of bucket l <= L, or nullopt for a dummy position.
  std::optional<JoinResult> access(int l, u128 tau) const;
  MetaIndex<JoinResult> meta_index() const;
  std::vector<JoinResult> query_sample(Rng& rng, BatchStats* stats = nullptr) const;

  // Every join result through tuple u of relation i (rows in insertion ids).
  std::vector<std::vector<std::size_t>> results_through(std::size_t i, std::size_t u) const;

  ValueVec result_values(const std::vector<std::size_t>& rows) const;
  const std::vector<std::string>& attributes() const { return attributes_; }
  double result_probability(const std::vector<std::size_t>& rows) const;
  int result_score(const std::vector<std::size_t>& rows) const;
  JoinResult make_result(std::vector<std::size_t> rows) const;

  // Current relations (insertion order as timestamps) over the same tree.
  JoinQuery snapshot() const;

  // Recomputes every W̃ from the stored M̃, every M̂ from its members and
  // checks the Fenwick totals and the rounding relation; throws on mismatch.
  void check_consistency() const;

 private:
  struct Group {
    std::vector<std::size_t> members;    // insertion order
    std::vector<u128> mhat;
    std::vector<u128> mtil;
    std::vector<unsigned> changes;
    std::vector<u128> fenwick;           // 1-based nodes, H counts each
    std::vector<std::size_t> referrers;  // parent tuples linking here
  };

  struct Node {
    std::vector<Tuple> tuples;
    std::unordered_set<ValueVec, ValueVecHash> seen;
    std::vector<std::size_t> key_pos;                   // key(i) in i's schema
    std::vector<std::vector<std::size_t>> child_pos;    // key(c_t) in i's schema
    std::vector<int> phi;
    std::vector<std::vector<u128>> w;                   // [u][t * H + l]
    std::vector<std::vector<std::size_t>> links;        // [u][t]
    std::vector<std::size_t> group_of;
    std::vector<std::size_t> pos_in_group;
    std::vector<Group> groups;
    std::unordered_map<ValueVec, std::size_t, ValueVecHash> group_index;
  };

  std::size_t H() const { return static_cast<std::size_t>(agg_.L()) + 1; }
  std::size_t group_for(std::size_t i, const ValueVec& key);
  void compute_w(std::size_t i, std::size_t u, std::size_t from_slot);
  void fenwick_append(Group& g, const u128* value);
  void fenwick_add(Group& g, std::size_t pos, const std::vector<u128>& delta);
  void fenwick_prefix(const Group& g, std::size_t count, std::vector<u128>& out) const;
  // Finds the member holding rank tau of slot l; returns (member index, rank within).
  std::pair<std::size_t, u128> fenwick_search(const Group& g, int l, u128 tau) const;
  void add_to_group(std::size_t i, std::size_t g, const std::vector<u128>& delta);
  void rebuild();
  bool access_group(std::size_t i, std::size_t g, int l, u128 tau, std::vector<std::size_t>& rows) const;
  bool access_tuple(std::size_t i, std::size_t t, std::size_t u, int l, u128 tau,
                    std::vector<std::size_t>& rows) const;

  std::vector<std::string> names_;
  JoinTree tree_;
  AggregatorKind kind_;
  DynamicOptions options_;
  Aggregator agg_;
  std::vector<Node> nodes_;
  std::vector<std::string> attributes_;
  std::vector<std::pair<std::size_t, std::size_t>> attribute_sources_;
  Histogram sentinel_;
  u64 inserted_ = 0;
  u64 threshold_ = 0;
  std::size_t rebuilds_ = 0;
};

// Maintains one subset sample of the growing join: on every insertion each
// new join result is included independently with its probability.
class OneShotMaintainer {
 public:
  OneShotMaintainer(DynamicIndex& index, Rng rng) : index_(index), rng_(rng) {}

  bool insert(std::size_t relation, Tuple tuple);
  const std::vector<std::vector<std::size_t>>& sample() const { return sample_; }
  std::size_t delta_results() const { return delta_results_; }

 private:
  DynamicIndex& index_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> sample_;
  std::size_t delta_results_ = 0;
};

}  // namespace joinss
