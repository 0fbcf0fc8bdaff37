// include/joinss/relation.h
//
// Relations, acyclic join trees and the exact relational operations the
// indexes are checked against.
//
// Tuples of a keyed relation are sorted by (key value, timestamp, values), so
// every key group R_i ⋉ v is a contiguous range. Node ids of a JoinTree are
// the input relation ids.

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "joinss/score.h"
#include "joinss/types.h"

namespace joinss {

using Value = std::variant<i64, std::string>;
using ValueVec = std::vector<Value>;

// Integers when the token is all digits (optionally signed), else strings.
Value parse_value(const std::string& token);
std::string value_to_string(const Value& v);

struct ValueVecHash {
  std::size_t operator()(const ValueVec& values) const noexcept;
};

struct Tuple {
  ValueVec values;  // aligned with the owning relation's schema
  double weight = 1.0;
  u64 timestamp = 0;
};

inline constexpr std::size_t kNoGroup = std::numeric_limits<std::size_t>::max();

struct GroupRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

class Relation {
 public:
  Relation() = default;
  Relation(std::string name, std::vector<std::string> schema);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& schema() const { return schema_; }
  std::size_t arity() const { return schema_.size(); }
  std::size_t size() const { return tuples_.size(); }
  const std::vector<Tuple>& tuples() const { return tuples_; }
  const Tuple& tuple(std::size_t i) const { return tuples_[i]; }

  // Appends a tuple; returns false (and leaves the relation unchanged) when
  // the same values are already present. Invalidates the key grouping.
  bool add(Tuple t);
  bool contains(const ValueVec& values) const { return seen_.count(values) > 0; }

  // Position of an attribute in the schema, or nullopt.
  std::optional<std::size_t> position(const std::string& attr) const;

  // Sets key(i), sorts the tuples canonically and rebuilds the group index.
  void set_key(const std::vector<std::string>& key_attrs);
  const std::vector<std::string>& key_attrs() const { return key_attrs_; }
  const std::vector<std::size_t>& key_positions() const { return key_positions_; }

  std::size_t group_count() const { return groups_.size(); }
  const GroupRange& group(std::size_t g) const { return groups_[g]; }
  std::size_t group_of_tuple(std::size_t u) const { return tuple_group_[u]; }
  // Group holding the given key value, or kNoGroup.
  std::size_t find_group(const ValueVec& key) const;
  ValueVec project(const Tuple& t, const std::vector<std::size_t>& positions) const;

 private:
  std::string name_;
  std::vector<std::string> schema_;
  std::vector<Tuple> tuples_;
  std::unordered_set<ValueVec, ValueVecHash> seen_;
  std::vector<std::string> key_attrs_;
  std::vector<std::size_t> key_positions_;
  std::vector<GroupRange> groups_;
  std::vector<std::size_t> tuple_group_;
  std::unordered_map<ValueVec, std::size_t, ValueVecHash> group_index_;
};

// Canonical tuple order: timestamp, then values lexicographically
// (integers before strings).
bool canonical_less(const Tuple& a, const Tuple& b);

struct JoinTree {
  std::size_t root = 0;
  std::vector<std::vector<std::string>> schemas;
  std::vector<std::size_t> parent;                  // kNoGroup for the root
  std::vector<std::vector<std::size_t>> children;   // ascending ids
  std::vector<std::vector<std::string>> key;        // sorted; empty for the root
  std::vector<std::size_t> preorder;                // children visited in order

  std::size_t size() const { return schemas.size(); }
  bool is_leaf(std::size_t i) const { return children[i].empty(); }
  // Index of i among its parent's children.
  std::size_t child_slot(std::size_t i) const;
  // Number of proper descendants.
  std::size_t descendants(std::size_t i) const;
};

// GYO ear removal. The lowest relation id is kept as root; ears are removed in
// ascending id order, each attached to the first witness by id.
JoinTree build_join_tree(const std::vector<std::vector<std::string>>& schemas);

// For every attribute, the nodes whose schema contains it are connected.
bool satisfies_connectedness(const JoinTree& tree);

struct JoinResult {
  std::vector<std::size_t> rows;  // tuple index per relation id
  double probability = 0.0;
  int score = 0;

  friend bool operator==(const JoinResult& a, const JoinResult& b) { return a.rows == b.rows; }
  friend bool operator<(const JoinResult& a, const JoinResult& b) { return a.rows < b.rows; }
};

// A join tree with its keyed relations and precomputed parent-to-child group
// links.
class JoinQuery {
 public:
  JoinQuery() = default;
  // Keys, sorts and links the relations along the given tree.
  JoinQuery(JoinTree tree, std::vector<Relation> relations);
  // Builds the join tree from the relations' schemas.
  static JoinQuery from_relations(std::vector<Relation> relations);

  const JoinTree& tree() const { return tree_; }
  std::size_t size() const { return relations_.size(); }
  const Relation& relation(std::size_t i) const { return relations_[i]; }
  const std::vector<Relation>& relations() const { return relations_; }
  u64 input_size() const;

  // Group of R_c that joins with tuple u of R_i, where c is the t-th child of
  // i; kNoGroup when absent.
  std::size_t child_group(std::size_t i, std::size_t t, std::size_t u) const { return links_[i][t][u]; }

  // Sorted union of all attributes.
  const std::vector<std::string>& attributes() const { return attributes_; }
  // Values of a result aligned with attributes().
  ValueVec result_values(const JoinResult& r) const;
  double result_probability(const std::vector<std::size_t>& rows, const Aggregator& agg) const;
  int result_score_of(const std::vector<std::size_t>& rows, const Aggregator& agg) const;

 private:
  void link();

  JoinTree tree_;
  std::vector<Relation> relations_;
  std::vector<std::vector<std::vector<std::size_t>>> links_;
  std::vector<std::string> attributes_;
  std::vector<std::pair<std::size_t, std::size_t>> attribute_sources_;  // (relation, position)
};

// Two-pass semi-join filtering; every surviving tuple joins.
JoinQuery semijoin_reduce(const JoinQuery& query);

inline constexpr std::size_t kDefaultResultCap = 10'000'000;

// All join results in canonical order (preorder nodes, per-relation order).
std::vector<JoinResult> materialize_join(const JoinQuery& query, const Aggregator& agg,
                                         std::size_t result_cap = kDefaultResultCap);
// Streams results without storing them; the callback may return false to stop.
void for_each_join_result(const JoinQuery& query, const std::function<bool(const std::vector<std::size_t>&)>& fn);

// |Join(Q)| by bottom-up count aggregation.
u128 count_join(const JoinQuery& query);

}  // namespace joinss
