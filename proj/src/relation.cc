// src/relation.cc

#include "joinss/relation.h"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace joinss {

Value parse_value(const std::string& token) {
  std::size_t start = 0;
  if (!token.empty() && (token[0] == '-' || token[0] == '+')) start = 1;
  if (start == token.size() || token.size() - start > 18) return token;
  for (std::size_t i = start; i < token.size(); ++i)
    if (token[i] < '0' || token[i] > '9') return token;
  return static_cast<i64>(std::stoll(token));
}

std::string value_to_string(const Value& v) {
  if (const auto* i = std::get_if<i64>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

std::size_t ValueVecHash::operator()(const ValueVec& values) const noexcept {
  std::size_t h = 0x9e3779b97f4a7c15ULL;
  for (const auto& v : values) {
    const std::size_t x = std::visit([](const auto& a) { return std::hash<std::decay_t<decltype(a)>>{}(a); }, v);
    h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

Relation::Relation(std::string name, std::vector<std::string> schema)
    : name_(std::move(name)), schema_(std::move(schema)) {
  std::set<std::string> distinct;
  for (const auto& a : schema_) {
    if (a.empty()) throw InvalidArgument("relation " + name_ + ": empty attribute name");
    if (!distinct.insert(a).second) throw InvalidArgument("relation " + name_ + ": duplicate attribute " + a);
  }
  if (schema_.empty()) throw InvalidArgument("relation " + name_ + ": empty schema");
}

bool Relation::add(Tuple t) {
  if (t.values.size() != schema_.size())
    throw InvalidArgument("relation " + name_ + ": tuple has " + std::to_string(t.values.size()) +
                          " values, schema has " + std::to_string(schema_.size()));
  if (!(t.weight >= 0.0 && t.weight <= 1.0))
    throw InvalidProbability("relation " + name_ + ": weight outside [0,1]: " + std::to_string(t.weight));
  if (!seen_.insert(t.values).second) return false;
  tuples_.push_back(std::move(t));
  groups_.clear();
  tuple_group_.clear();
  group_index_.clear();
  return true;
}

std::optional<std::size_t> Relation::position(const std::string& attr) const {
  for (std::size_t i = 0; i < schema_.size(); ++i)
    if (schema_[i] == attr) return i;
  return std::nullopt;
}

ValueVec Relation::project(const Tuple& t, const std::vector<std::size_t>& positions) const {
  ValueVec out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(t.values[p]);
  return out;
}

bool canonical_less(const Tuple& a, const Tuple& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.values < b.values;
}

void Relation::set_key(const std::vector<std::string>& key_attrs) {
  key_attrs_ = key_attrs;
  key_positions_.clear();
  for (const auto& a : key_attrs_) {
    const auto pos = position(a);
    if (!pos) throw InvalidArgument("relation " + name_ + ": key attribute " + a + " not in schema");
    key_positions_.push_back(*pos);
  }
  std::vector<ValueVec> keys;
  keys.reserve(tuples_.size());
  for (const auto& t : tuples_) keys.push_back(project(t, key_positions_));
  std::vector<std::size_t> order(tuples_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (keys[x] != keys[y]) return keys[x] < keys[y];
    return canonical_less(tuples_[x], tuples_[y]);
  });
  std::vector<Tuple> sorted;
  sorted.reserve(tuples_.size());
  std::vector<ValueVec> sorted_keys;
  sorted_keys.reserve(tuples_.size());
  for (std::size_t idx : order) {
    sorted.push_back(std::move(tuples_[idx]));
    sorted_keys.push_back(std::move(keys[idx]));
  }
  tuples_ = std::move(sorted);

  groups_.clear();
  group_index_.clear();
  tuple_group_.assign(tuples_.size(), 0);
  for (std::size_t u = 0; u < tuples_.size(); ++u) {
    if (u == 0 || sorted_keys[u] != sorted_keys[u - 1]) {
      group_index_.emplace(sorted_keys[u], groups_.size());
      groups_.push_back(GroupRange{u, u});
    }
    groups_.back().end = u + 1;
    tuple_group_[u] = groups_.size() - 1;
  }
}

std::size_t Relation::find_group(const ValueVec& key) const {
  const auto it = group_index_.find(key);
  return it == group_index_.end() ? kNoGroup : it->second;
}

std::size_t JoinTree::child_slot(std::size_t i) const {
  const auto& siblings = children[parent[i]];
  return static_cast<std::size_t>(std::find(siblings.begin(), siblings.end(), i) - siblings.begin());
}

std::size_t JoinTree::descendants(std::size_t i) const {
  std::size_t count = 0;
  for (std::size_t c : children[i]) count += 1 + descendants(c);
  return count;
}

namespace {

std::vector<std::string> sorted_intersection(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> x(a), y(b), out;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(out));
  return out;
}

}  // namespace

JoinTree build_join_tree(const std::vector<std::vector<std::string>>& schemas) {
  const std::size_t k = schemas.size();
  if (k == 0) throw InvalidArgument("join needs at least one relation");
  JoinTree tree;
  tree.root = 0;
  tree.schemas = schemas;
  tree.parent.assign(k, kNoGroup);
  tree.children.assign(k, {});
  tree.key.assign(k, {});

  std::vector<std::set<std::string>> attrs(k);
  for (std::size_t i = 0; i < k; ++i) attrs[i].insert(schemas[i].begin(), schemas[i].end());
  std::vector<bool> present(k, true);
  std::size_t remaining = k;

  while (remaining > 1) {
    bool removed = false;
    for (std::size_t e = 1; e < k && !removed; ++e) {
      if (!present[e]) continue;
      std::set<std::string> shared;
      for (const auto& a : attrs[e])
        for (std::size_t o = 0; o < k; ++o)
          if (o != e && present[o] && attrs[o].count(a)) {
            shared.insert(a);
            break;
          }
      for (std::size_t f = 0; f < k; ++f) {
        if (f == e || !present[f]) continue;
        if (std::includes(attrs[f].begin(), attrs[f].end(), shared.begin(), shared.end())) {
          tree.parent[e] = f;
          present[e] = false;
          --remaining;
          removed = true;
          break;
        }
      }
    }
    if (!removed) {
      std::ostringstream msg;
      msg << "join is cyclic; no ear among relations";
      for (std::size_t i = 0; i < k; ++i) {
        if (!present[i]) continue;
        msg << " R" << i + 1 << "{";
        bool first = true;
        for (const auto& a : attrs[i]) {
          msg << (first ? "" : ",") << a;
          first = false;
        }
        msg << "}";
      }
      throw CyclicQueryError(msg.str());
    }
  }

  for (std::size_t i = 1; i < k; ++i) {
    tree.children[tree.parent[i]].push_back(i);
    tree.key[i] = sorted_intersection(schemas[i], schemas[tree.parent[i]]);
  }
  // Children are appended in ascending id order already.
  std::vector<std::size_t> stack{tree.root};
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    tree.preorder.push_back(i);
    for (auto it = tree.children[i].rbegin(); it != tree.children[i].rend(); ++it) stack.push_back(*it);
  }
  return tree;
}

bool satisfies_connectedness(const JoinTree& tree) {
  std::set<std::string> all;
  for (const auto& s : tree.schemas) all.insert(s.begin(), s.end());
  for (const auto& a : all) {
    std::vector<bool> has(tree.size(), false);
    std::size_t holders = 0;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      has[i] = std::find(tree.schemas[i].begin(), tree.schemas[i].end(), a) != tree.schemas[i].end();
      holders += has[i];
    }
    // Connected iff exactly one holder has no holding parent.
    std::size_t tops = 0;
    for (std::size_t i = 0; i < tree.size(); ++i)
      if (has[i] && (tree.parent[i] == kNoGroup || !has[tree.parent[i]])) ++tops;
    if (holders > 0 && tops != 1) return false;
  }
  return true;
}

JoinQuery::JoinQuery(JoinTree tree, std::vector<Relation> relations)
    : tree_(std::move(tree)), relations_(std::move(relations)) {
  if (relations_.size() != tree_.size()) throw InvalidArgument("relation count does not match join tree");
  for (std::size_t i = 0; i < relations_.size(); ++i) {
    if (relations_[i].schema() != tree_.schemas[i])
      throw InvalidArgument("relation " + relations_[i].name() + " does not match its join tree schema");
    relations_[i].set_key(tree_.key[i]);
  }
  link();
}

JoinQuery JoinQuery::from_relations(std::vector<Relation> relations) {
  std::vector<std::vector<std::string>> schemas;
  for (const auto& r : relations) schemas.push_back(r.schema());
  return JoinQuery(build_join_tree(schemas), std::move(relations));
}

void JoinQuery::link() {
  const std::size_t k = relations_.size();
  links_.assign(k, {});
  for (std::size_t i = 0; i < k; ++i) {
    const Relation& r = relations_[i];
    for (std::size_t c : tree_.children[i]) {
      std::vector<std::size_t> positions;
      for (const auto& a : tree_.key[c]) positions.push_back(*r.position(a));
      std::vector<std::size_t> link(r.size());
      for (std::size_t u = 0; u < r.size(); ++u) link[u] = relations_[c].find_group(r.project(r.tuple(u), positions));
      links_[i].push_back(std::move(link));
    }
  }
  std::set<std::string> all;
  for (const auto& s : tree_.schemas) all.insert(s.begin(), s.end());
  attributes_.assign(all.begin(), all.end());
  attribute_sources_.clear();
  auto& sources = attribute_sources_;
  for (const auto& a : attributes_) {
    for (std::size_t i = 0; i < k; ++i) {
      if (const auto pos = relations_[i].position(a)) {
        sources.emplace_back(i, *pos);
        break;
      }
    }
  }
}

u64 JoinQuery::input_size() const {
  u64 n = 0;
  for (const auto& r : relations_) n += r.size();
  return n;
}

ValueVec JoinQuery::result_values(const JoinResult& r) const {
  ValueVec out;
  out.reserve(attributes_.size());
  for (const auto& [rel, pos] : attribute_sources_) out.push_back(relations_[rel].tuple(r.rows[rel]).values[pos]);
  return out;
}

double JoinQuery::result_probability(const std::vector<std::size_t>& rows, const Aggregator& agg) const {
  std::vector<double> weights(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) weights[i] = relations_[i].tuple(rows[i]).weight;
  return agg.probability(weights);
}

int JoinQuery::result_score_of(const std::vector<std::size_t>& rows, const Aggregator& agg) const {
  std::vector<int> scores(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = tuple_score(relations_[i].tuple(rows[i]).weight, agg.L());
  return result_score(scores, agg);
}

JoinQuery semijoin_reduce(const JoinQuery& query) {
  const JoinTree& tree = query.tree();
  const std::size_t k = query.size();
  std::vector<std::vector<bool>> alive(k);
  for (std::size_t i = 0; i < k; ++i) alive[i].assign(query.relation(i).size(), true);

  auto group_alive_counts = [&](std::size_t c) {
    const Relation& r = query.relation(c);
    std::vector<std::size_t> counts(r.group_count(), 0);
    for (std::size_t u = 0; u < r.size(); ++u)
      if (alive[c][u]) ++counts[r.group_of_tuple(u)];
    return counts;
  };

  // Leaf-to-root.
  for (auto it = tree.preorder.rbegin(); it != tree.preorder.rend(); ++it) {
    const std::size_t i = *it;
    for (std::size_t t = 0; t < tree.children[i].size(); ++t) {
      const auto counts = group_alive_counts(tree.children[i][t]);
      for (std::size_t u = 0; u < alive[i].size(); ++u) {
        const std::size_t g = query.child_group(i, t, u);
        if (g == kNoGroup || counts[g] == 0) alive[i][u] = false;
      }
    }
  }
  // Root-to-leaf.
  for (std::size_t i : tree.preorder) {
    for (std::size_t t = 0; t < tree.children[i].size(); ++t) {
      const std::size_t c = tree.children[i][t];
      std::vector<bool> referenced(query.relation(c).group_count(), false);
      for (std::size_t u = 0; u < alive[i].size(); ++u) {
        const std::size_t g = query.child_group(i, t, u);
        if (alive[i][u] && g != kNoGroup) referenced[g] = true;
      }
      const Relation& rc = query.relation(c);
      for (std::size_t w = 0; w < rc.size(); ++w)
        if (!referenced[rc.group_of_tuple(w)]) alive[c][w] = false;
    }
  }

  std::vector<Relation> reduced;
  reduced.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Relation& r = query.relation(i);
    Relation out(r.name(), r.schema());
    for (std::size_t u = 0; u < r.size(); ++u)
      if (alive[i][u]) out.add(r.tuple(u));
    reduced.push_back(std::move(out));
  }
  return JoinQuery(tree, std::move(reduced));
}

void for_each_join_result(const JoinQuery& query, const std::function<bool(const std::vector<std::size_t>&)>& fn) {
  const JoinTree& tree = query.tree();
  const std::size_t k = query.size();
  for (std::size_t i = 0; i < k; ++i)
    if (query.relation(i).size() == 0) return;
  std::vector<std::size_t> rows(k, 0);
  std::vector<std::size_t> slot(k, 0);
  for (std::size_t i = 0; i < k; ++i)
    if (i != tree.root) slot[i] = tree.child_slot(i);
  bool stop = false;
  std::function<void(std::size_t)> dfs = [&](std::size_t depth) {
    if (stop) return;
    if (depth == k) {
      if (!fn(rows)) stop = true;
      return;
    }
    const std::size_t i = tree.preorder[depth];
    std::size_t begin = 0, end = query.relation(i).size();
    if (i != tree.root) {
      const std::size_t g = query.child_group(tree.parent[i], slot[i], rows[tree.parent[i]]);
      if (g == kNoGroup) return;
      begin = query.relation(i).group(g).begin;
      end = query.relation(i).group(g).end;
    }
    for (std::size_t u = begin; u < end && !stop; ++u) {
      rows[i] = u;
      dfs(depth + 1);
    }
  };
  dfs(0);
}

std::vector<JoinResult> materialize_join(const JoinQuery& query, const Aggregator& agg, std::size_t result_cap) {
  std::vector<JoinResult> out;
  for_each_join_result(query, [&](const std::vector<std::size_t>& rows) {
    if (out.size() >= result_cap)
      throw MemoryGuardError("join result count exceeds cap of " + std::to_string(result_cap));
    JoinResult r;
    r.rows = rows;
    r.probability = query.result_probability(rows, agg);
    r.score = query.result_score_of(rows, agg);
    out.push_back(std::move(r));
    return true;
  });
  return out;
}

u128 count_join(const JoinQuery& query) {
  const JoinTree& tree = query.tree();
  const std::size_t k = query.size();
  std::vector<std::vector<u128>> group_sum(k);
  for (auto it = tree.preorder.rbegin(); it != tree.preorder.rend(); ++it) {
    const std::size_t i = *it;
    const Relation& r = query.relation(i);
    group_sum[i].assign(r.group_count(), 0);
    for (std::size_t u = 0; u < r.size(); ++u) {
      u128 count = 1;
      for (std::size_t t = 0; t < tree.children[i].size() && count != 0; ++t) {
        const std::size_t g = query.child_group(i, t, u);
        count = g == kNoGroup ? 0 : checked_mul(count, group_sum[tree.children[i][t]][g]);
      }
      group_sum[i][r.group_of_tuple(u)] = checked_add(group_sum[i][r.group_of_tuple(u)], count);
    }
  }
  u128 total = 0;
  for (u128 s : group_sum[tree.root]) total = checked_add(total, s);
  return total;
}

}  // namespace joinss
