// src/dynamic_index.cc

#include "joinss/dynamic_index.h"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "joinss/log.h"
#include "joinss/static_index.h"

namespace joinss {

u128 round_up_pow2(u128 x) {
  if (x == 0) return 0;
  const int b = bit_width(x - 1);
  if (b >= 128) throw CapacityError("rounded counter exceeds 128 bits");
  return u128{1} << b;
}

namespace {

int initial_L(const std::vector<std::vector<std::string>>& schemas, const DynamicOptions& options) {
  return compute_score_params(schemas, std::max<u64>(2, options.initial_threshold), options.L_override).L;
}

std::vector<std::size_t> positions_of(const std::vector<std::string>& schema, const std::vector<std::string>& attrs) {
  std::vector<std::size_t> out;
  for (const auto& a : attrs) out.push_back(static_cast<std::size_t>(std::find(schema.begin(), schema.end(), a) - schema.begin()));
  return out;
}

ValueVec project(const Tuple& t, const std::vector<std::size_t>& pos) {
  ValueVec out;
  out.reserve(pos.size());
  for (auto p : pos) out.push_back(t.values[p]);
  return out;
}

}  // namespace

DynamicIndex::DynamicIndex(std::vector<std::string> names, std::vector<std::vector<std::string>> schemas,
                           AggregatorKind kind, DynamicOptions options)
    : names_(std::move(names)),
      tree_(build_join_tree(schemas)),
      kind_(kind),
      options_(options),
      agg_(kind, initial_L(schemas, options), static_cast<int>(schemas.size())) {
  if (names_.size() != tree_.size()) throw InvalidArgument("relation names and schemas differ in count");
  if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size())
    throw InvalidArgument("relation names must be unique");
  threshold_ = std::max<u64>(1, options_.initial_threshold);
  sentinel_ = indicator(agg_.identity(), agg_.L());
  nodes_.resize(tree_.size());
  for (std::size_t i = 0; i < tree_.size(); ++i) {
    Node& n = nodes_[i];
    n.key_pos = positions_of(tree_.schemas[i], tree_.key[i]);
    for (std::size_t c : tree_.children[i]) n.child_pos.push_back(positions_of(tree_.schemas[i], tree_.key[c]));
  }
  std::set<std::string> all;
  for (const auto& s : tree_.schemas) all.insert(s.begin(), s.end());
  attributes_.assign(all.begin(), all.end());
  for (const auto& a : attributes_)
    for (std::size_t i = 0; i < tree_.size(); ++i) {
      const auto& s = tree_.schemas[i];
      if (auto it = std::find(s.begin(), s.end(), a); it != s.end()) {
        attribute_sources_.emplace_back(i, static_cast<std::size_t>(it - s.begin()));
        break;
      }
    }
}

std::optional<std::size_t> DynamicIndex::relation_id(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

const u128* DynamicIndex::w_tilde(std::size_t i, std::size_t t, std::size_t u) const {
  if (!tree_.is_leaf(i) && t == tree_.children[i].size()) return sentinel_.data();
  return nodes_[i].w[u].data() + t * H();
}

int DynamicIndex::shift(std::size_t i, std::size_t t, std::size_t u) const {
  return t + 1 == tree_.children[i].size() ? nodes_[i].phi[u] : agg_.identity();
}

std::size_t DynamicIndex::group_for(std::size_t i, const ValueVec& key) {
  Node& n = nodes_[i];
  if (auto it = n.group_index.find(key); it != n.group_index.end()) return it->second;
  Group g;
  g.mhat.assign(H(), 0);
  g.mtil.assign(H(), 0);
  g.changes.assign(H(), 0);
  n.groups.push_back(std::move(g));
  n.group_index.emplace(key, n.groups.size() - 1);
  return n.groups.size() - 1;
}

void DynamicIndex::compute_w(std::size_t i, std::size_t u, std::size_t from_slot) {
  Node& n = nodes_[i];
  const std::size_t C = tree_.children[i].size();
  const std::size_t h = H();
  auto& w = n.w[u];
  if (C == 0) {
    w.assign(h, 0);
    w[n.phi[u]] = 1;
    return;
  }
  for (std::size_t t = std::min(from_slot, C - 1) + 1; t-- > 0;) {
    const std::size_t c = tree_.children[i][t];
    const Group& g = nodes_[c].groups[n.links[u][t]];
    const Histogram next = t + 1 == C ? sentinel_ : Histogram(w.begin() + (t + 1) * h, w.begin() + (t + 2) * h);
    const Histogram out = convolve(g.mtil, next, shift(i, t, u), agg_, options_.convolution);
    std::copy(out.begin(), out.end(), w.begin() + t * h);
  }
}

void DynamicIndex::fenwick_prefix(const Group& g, std::size_t count, std::vector<u128>& out) const {
  const std::size_t h = H();
  out.assign(h, 0);
  for (std::size_t k = count; k > 0; k &= k - 1)
    for (std::size_t l = 0; l < h; ++l) out[l] += g.fenwick[(k - 1) * h + l];
}

void DynamicIndex::fenwick_append(Group& g, const u128* value) {
  const std::size_t h = H();
  const std::size_t k = g.fenwick.size() / h + 1;
  std::vector<u128> before, lower;
  fenwick_prefix(g, k - 1, before);
  fenwick_prefix(g, k - (k & (~k + 1)), lower);
  for (std::size_t l = 0; l < h; ++l) g.fenwick.push_back(value[l] + before[l] - lower[l]);
}

void DynamicIndex::fenwick_add(Group& g, std::size_t pos, const std::vector<u128>& delta) {
  const std::size_t h = H();
  const std::size_t n = g.fenwick.size() / h;
  for (std::size_t k = pos + 1; k <= n; k += k & (~k + 1))
    for (std::size_t l = 0; l < h; ++l) g.fenwick[(k - 1) * h + l] = checked_add(g.fenwick[(k - 1) * h + l], delta[l]);
}

std::pair<std::size_t, u128> DynamicIndex::fenwick_search(const Group& g, int l, u128 tau) const {
  const std::size_t h = H();
  const std::size_t n = g.fenwick.size() / h;
  std::size_t step = 1;
  while (step * 2 <= n) step *= 2;
  std::size_t pos = 0;
  for (; step > 0; step /= 2) {
    if (pos + step > n) continue;
    const u128 v = g.fenwick[(pos + step - 1) * h + l];
    if (v < tau) {
      pos += step;
      tau -= v;
    }
  }
  if (pos >= n) throw RankError("rank beyond the group's Fenwick total");
  return {pos, tau};
}

void DynamicIndex::add_to_group(std::size_t i, std::size_t gid, const std::vector<u128>& delta) {
  Group& g = nodes_[i].groups[gid];
  const std::size_t h = H();
  bool changed = false;
  for (std::size_t l = 0; l < h; ++l) {
    g.mhat[l] = checked_add(g.mhat[l], delta[l]);
    const u128 r = round_up_pow2(g.mhat[l]);
    if (r != g.mtil[l]) {
      g.mtil[l] = r;
      ++g.changes[l];
      changed = true;
    }
  }
  if (!changed || i == tree_.root) return;
  const std::size_t p = tree_.parent[i];
  const std::size_t slot = tree_.child_slot(i);
  Node& pn = nodes_[p];
  std::map<std::size_t, std::vector<u128>> parent_delta;
  for (std::size_t up : g.referrers) {
    const std::vector<u128> old(pn.w[up].begin(), pn.w[up].begin() + h);
    compute_w(p, up, slot);
    std::vector<u128> d(h);
    for (std::size_t l = 0; l < h; ++l) {
      if (pn.w[up][l] < old[l]) throw Error("approximate statistic decreased");
      d[l] = pn.w[up][l] - old[l];
    }
    const std::size_t pg = pn.group_of[up];
    fenwick_add(pn.groups[pg], pn.pos_in_group[up], d);
    auto& acc = parent_delta[pg];
    if (acc.empty()) acc.assign(h, 0);
    for (std::size_t l = 0; l < h; ++l) acc[l] = checked_add(acc[l], d[l]);
  }
  for (const auto& [pg, d] : parent_delta) add_to_group(p, pg, d);
}

bool DynamicIndex::insert(std::size_t i, Tuple tuple) {
  if (i >= nodes_.size()) throw InvalidArgument("unknown relation id " + std::to_string(i));
  Node& n = nodes_[i];
  if (tuple.values.size() != tree_.schemas[i].size())
    throw InvalidArgument("relation " + names_[i] + ": tuple arity does not match the schema");
  if (!(tuple.weight >= 0.0 && tuple.weight <= 1.0))
    throw InvalidProbability("relation " + names_[i] + ": weight outside [0,1]");
  if (n.seen.count(tuple.values)) {
    log().warn("duplicate tuple ignored in relation {}", names_[i]);
    return false;
  }
  n.seen.insert(tuple.values);
  const std::size_t u = n.tuples.size();
  n.phi.push_back(tuple_score(tuple.weight, L()));
  n.links.emplace_back();
  for (std::size_t t = 0; t < tree_.children[i].size(); ++t) {
    const std::size_t c = tree_.children[i][t];
    const std::size_t g = group_for(c, project(tuple, n.child_pos[t]));
    nodes_[c].groups[g].referrers.push_back(u);
    n.links[u].push_back(g);
  }
  const std::size_t own = group_for(i, project(tuple, n.key_pos));
  n.tuples.push_back(std::move(tuple));
  n.w.emplace_back(slots(i) * H(), 0);
  compute_w(i, u, slots(i) - 1);
  n.group_of.push_back(own);
  Group& g = n.groups[own];
  n.pos_in_group.push_back(g.members.size());
  g.members.push_back(u);
  fenwick_append(g, n.w[u].data());
  add_to_group(i, own, std::vector<u128>(n.w[u].begin(), n.w[u].begin() + H()));
  ++inserted_;
  if (inserted_ >= threshold_) {
    threshold_ *= 2;
    rebuild();
  }
  return true;
}

void DynamicIndex::rebuild() {
  std::vector<std::vector<std::string>> schemas = tree_.schemas;
  const int L = compute_score_params(schemas, threshold_, options_.L_override).L;
  agg_ = Aggregator(kind_, L, static_cast<int>(tree_.size()));
  sentinel_ = indicator(agg_.identity(), L);
  const std::size_t h = H();
  for (auto it = tree_.preorder.rbegin(); it != tree_.preorder.rend(); ++it) {
    const std::size_t i = *it;
    Node& n = nodes_[i];
    for (std::size_t u = 0; u < n.tuples.size(); ++u) {
      n.phi[u] = tuple_score(n.tuples[u].weight, L);
      n.w[u].assign(slots(i) * h, 0);
      compute_w(i, u, slots(i) - 1);
    }
    for (Group& g : n.groups) {
      g.mhat.assign(h, 0);
      g.mtil.assign(h, 0);
      g.changes.assign(h, 0);
      g.fenwick.clear();
      for (std::size_t u : g.members) {
        for (std::size_t l = 0; l < h; ++l) g.mhat[l] = checked_add(g.mhat[l], n.w[u][l]);
        fenwick_append(g, n.w[u].data());
      }
      for (std::size_t l = 0; l < h; ++l) g.mtil[l] = round_up_pow2(g.mhat[l]);
    }
  }
  ++rebuilds_;
  log().debug("dynamic index rebuilt: {} tuples, next threshold {}, L={}", inserted_, threshold_, L);
}

std::vector<u128> DynamicIndex::bucket_sizes() const {
  const Node& root = nodes_[tree_.root];
  if (root.groups.empty()) return std::vector<u128>(H(), 0);
  return root.groups[0].mhat;
}

bool DynamicIndex::access_group(std::size_t i, std::size_t gid, int l, u128 tau, std::vector<std::size_t>& rows) const {
  const Node& n = nodes_[i];
  const Group& g = n.groups[gid];
  if (tau > g.mhat[l]) return false;
  const auto [k, rest] = fenwick_search(g, l, tau);
  const std::size_t u = g.members[k];
  rows[i] = u;
  if (tree_.is_leaf(i)) {
    if (rest != 1) throw RankError("leaf rank beyond its indicator");
    return true;
  }
  return access_tuple(i, 0, u, l, rest, rows);
}

bool DynamicIndex::access_tuple(std::size_t i, std::size_t t, std::size_t u, int l, u128 tau,
                                std::vector<std::size_t>& rows) const {
  const std::size_t c = tree_.children[i][t];
  const std::size_t g = nodes_[i].links[u][t];
  const PairSplit s =
      split_rank(agg_, shift(i, t, u), l, tau, nodes_[c].groups[g].mtil.data(), w_tilde(i, t + 1, u));
  if (!access_group(c, g, s.l1, s.tau1, rows)) return false;
  if (t + 1 < tree_.children[i].size()) return access_tuple(i, t + 1, u, s.l2, s.tau2, rows);
  return true;
}

std::optional<JoinResult> DynamicIndex::access(int l, u128 tau) const {
  if (l < 0 || l > L()) throw RankError("score outside [0, L]");
  const auto sizes = bucket_sizes();
  if (tau == 0 || tau > sizes[l]) throw RankError("rank outside the approximate bucket");
  std::vector<std::size_t> rows(tree_.size(), kNoGroup);
  if (!access_group(tree_.root, 0, l, tau, rows)) return std::nullopt;
  return make_result(std::move(rows));
}

MetaIndex<JoinResult> DynamicIndex::meta_index() const {
  const auto sizes = bucket_sizes();
  std::vector<SubInstanceSpec<JoinResult>> specs;
  for (int l = 0; l <= L(); ++l) {
    SubInstanceSpec<JoinResult> s;
    s.size = sizes[l];
    s.p_upper = agg_.bucket_upper(l);
    s.access = [this, l](u128 tau) { return access(l, tau); };
    s.weight_of = [](const JoinResult& r) { return r.probability; };
    specs.push_back(std::move(s));
  }
  return build_meta_index(std::move(specs));
}

std::vector<JoinResult> DynamicIndex::query_sample(Rng& rng, BatchStats* stats) const {
  return ss_rejected_batch(meta_index(), rng, stats);
}

std::vector<std::vector<std::size_t>> DynamicIndex::results_through(std::size_t i, std::size_t u) const {
  // Visit nodes outward from i; each is reached through one tree neighbour.
  struct Step {
    std::size_t node;
    std::size_t via;
    bool child_of_via;
  };
  std::vector<Step> order;
  std::vector<bool> seen(tree_.size(), false);
  std::vector<std::size_t> frontier{i};
  seen[i] = true;
  for (std::size_t f = 0; f < frontier.size(); ++f) {
    const std::size_t x = frontier[f];
    for (std::size_t c : tree_.children[x])
      if (!seen[c]) {
        seen[c] = true;
        order.push_back({c, x, true});
        frontier.push_back(c);
      }
    if (x != tree_.root && !seen[tree_.parent[x]]) {
      seen[tree_.parent[x]] = true;
      order.push_back({tree_.parent[x], x, false});
      frontier.push_back(tree_.parent[x]);
    }
  }
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> rows(tree_.size(), kNoGroup);
  rows[i] = u;
  std::function<void(std::size_t)> rec = [&](std::size_t d) {
    if (d == order.size()) {
      out.push_back(rows);
      return;
    }
    const Step& s = order[d];
    const std::vector<std::size_t>* candidates;
    if (s.child_of_via) {
      const std::size_t g = nodes_[s.via].links[rows[s.via]][tree_.child_slot(s.node)];
      candidates = &nodes_[s.node].groups[g].members;
    } else {
      candidates = &nodes_[s.via].groups[nodes_[s.via].group_of[rows[s.via]]].referrers;
    }
    for (std::size_t x : *candidates) {
      rows[s.node] = x;
      rec(d + 1);
    }
    rows[s.node] = kNoGroup;
  };
  rec(0);
  return out;
}

ValueVec DynamicIndex::result_values(const std::vector<std::size_t>& rows) const {
  ValueVec out;
  out.reserve(attributes_.size());
  for (const auto& [rel, pos] : attribute_sources_) out.push_back(nodes_[rel].tuples[rows[rel]].values[pos]);
  return out;
}

double DynamicIndex::result_probability(const std::vector<std::size_t>& rows) const {
  std::vector<double> weights(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) weights[i] = nodes_[i].tuples[rows[i]].weight;
  return agg_.probability(weights);
}

int DynamicIndex::result_score(const std::vector<std::size_t>& rows) const {
  std::vector<int> scores(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = nodes_[i].phi[rows[i]];
  return joinss::result_score(scores, agg_);
}

JoinResult DynamicIndex::make_result(std::vector<std::size_t> rows) const {
  JoinResult r;
  r.probability = result_probability(rows);
  r.score = result_score(rows);
  r.rows = std::move(rows);
  return r;
}

JoinQuery DynamicIndex::snapshot() const {
  std::vector<Relation> rels;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Relation r(names_[i], tree_.schemas[i]);
    for (std::size_t u = 0; u < nodes_[i].tuples.size(); ++u) {
      Tuple t = nodes_[i].tuples[u];
      t.timestamp = u;
      r.add(std::move(t));
    }
    rels.push_back(std::move(r));
  }
  return JoinQuery(tree_, std::move(rels));
}

void DynamicIndex::check_consistency() const {
  const std::size_t h = H();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const std::size_t C = tree_.children[i].size();
    for (std::size_t u = 0; u < n.tuples.size(); ++u) {
      if (C == 0) {
        if (n.w[u] != indicator(n.phi[u], L())) throw Error("leaf statistic is not its indicator");
        continue;
      }
      for (std::size_t t = 0; t < C; ++t) {
        const Group& g = nodes_[tree_.children[i][t]].groups[n.links[u][t]];
        const u128* next = w_tilde(i, t + 1, u);
        const Histogram expect = convolve_exact(g.mtil, Histogram(next, next + h), shift(i, t, u), agg_);
        if (!std::equal(expect.begin(), expect.end(), n.w[u].begin() + t * h))
          throw Error("approximate statistic disagrees with its recursion");
      }
    }
    for (const Group& g : n.groups) {
      std::vector<u128> sum(h, 0), fen;
      for (std::size_t u : g.members)
        for (std::size_t l = 0; l < h; ++l) sum[l] += n.w[u][l];
      fenwick_prefix(g, g.members.size(), fen);
      if (sum != g.mhat || fen != g.mhat) throw Error("group total disagrees with its members");
      for (std::size_t l = 0; l < h; ++l)
        if (g.mtil[l] != round_up_pow2(g.mhat[l])) throw Error("rounded counter is stale");
    }
  }
}

bool OneShotMaintainer::insert(std::size_t relation, Tuple tuple) {
  if (!index_.insert(relation, std::move(tuple))) return false;
  const std::size_t u = index_.size(relation) - 1;
  for (auto& rows : index_.results_through(relation, u)) {
    ++delta_results_;
    if (rng_.bernoulli(index_.result_probability(rows))) sample_.push_back(std::move(rows));
  }
  return true;
}

}  // namespace joinss
