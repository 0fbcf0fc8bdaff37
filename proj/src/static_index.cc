// src/static_index.cc

#include "joinss/static_index.h"

#include <algorithm>

#include "joinss/log.h"

namespace joinss {

namespace {

// Indicator at the combiner identity, shared by every sentinel slot.
const u128* sentinel_for(const Aggregator& agg) {
  thread_local std::vector<Histogram> cache;
  const std::size_t idx = static_cast<std::size_t>(agg.L()) * 2 + (agg.combines_by_min() ? 1 : 0);
  if (cache.size() <= idx) cache.resize(idx + 1);
  if (cache[idx].empty()) cache[idx] = indicator(agg.identity(), agg.L());
  return cache[idx].data();
}

}  // namespace

PairSplit split_rank(const Aggregator& agg, int shift, int l, u128 tau, const u128* m, const u128* next) {
  if (m == nullptr || tau == 0) throw RankError("rank outside the addressed range");
  PairSplit out;
  bool found = false;
  for_each_score_pair(agg, shift, l, [&](int l1, int l2) {
    const u128 term = m[l1] == 0 || next[l2] == 0 ? 0 : checked_mul(m[l1], next[l2]);
    if (tau <= term) {
      out.l1 = l1;
      out.l2 = l2;
      out.tau1 = (tau + next[l2] - 1) / next[l2];
      out.tau2 = (tau - 1) % next[l2] + 1;
      found = true;
      return false;
    }
    tau -= term;
    return true;
  });
  if (!found) throw RankError("rank exceeds the score-pair total");
  return out;
}

StaticIndex::StaticIndex(Data data) : data_(std::move(data)) {
  agg_.emplace(data_.kind, data_.params.L, static_cast<int>(std::max<std::size_t>(1, data_.query.size())));
}

StaticIndex StaticIndex::build(const JoinQuery& query, AggregatorKind kind, const PreprocessOptions& options) {
  Data d;
  d.kind = kind;
  d.result_cap = options.result_cap;
  std::vector<std::vector<std::string>> schemas;
  for (const auto& r : query.relations()) schemas.push_back(r.schema());
  d.params = compute_score_params(schemas, query.input_size(), options.L_override);
  d.query = options.reduce ? semijoin_reduce(query) : query;

  const JoinQuery& q = d.query;
  const JoinTree& tree = q.tree();
  const std::size_t k = q.size();
  const int L = d.params.L;
  const std::size_t H = static_cast<std::size_t>(L) + 1;
  const Aggregator agg(kind, L, static_cast<int>(k));
  const Histogram zeros(H, 0);
  const Histogram sentinel = indicator(agg.identity(), L);

  d.phi.assign(k, {});
  d.w.assign(k, {});
  d.m.assign(k, {});
  for (auto it = tree.preorder.rbegin(); it != tree.preorder.rend(); ++it) {
    const std::size_t i = *it;
    const Relation& r = q.relation(i);
    const std::size_t n = r.size();
    const std::size_t C = tree.children[i].size();
    const std::size_t slots = std::max<std::size_t>(1, C);
    d.phi[i].resize(n);
    d.w[i].assign(n * slots * H, 0);
    for (std::size_t u = 0; u < n; ++u) {
      const int phi = tuple_score(r.tuple(u).weight, L);
      d.phi[i][u] = phi;
      u128* base = d.w[i].data() + u * slots * H;
      if (C == 0) {
        base[phi] = 1;
        continue;
      }
      Histogram next = sentinel;
      for (std::size_t t = C; t-- > 0;) {
        const std::size_t c = tree.children[i][t];
        const std::size_t g = q.child_group(i, t, u);
        const int shift = t + 1 == C ? phi : agg.identity();
        Histogram m_child = g == kNoGroup ? zeros : Histogram(d.m[c].begin() + g * H, d.m[c].begin() + (g + 1) * H);
        next = convolve(m_child, next, shift, agg, options.convolution);
        std::copy(next.begin(), next.end(), base + t * H);
      }
    }
    if (i != tree.root) {
      d.m[i].assign(r.group_count() * H, 0);
      for (std::size_t u = 0; u < n; ++u) {
        const std::size_t g = r.group_of_tuple(u);
        const u128* wu = d.w[i].data() + u * slots * H;
        for (std::size_t l = 0; l < H; ++l) d.m[i][g * H + l] = checked_add(d.m[i][g * H + l], wu[l]);
      }
    }
  }

  if (options.prefix_sums) {
    d.prefix.assign(k, {});
    for (std::size_t i = 0; i < k; ++i) {
      const Relation& r = q.relation(i);
      const std::size_t n = r.size();
      const std::size_t slots = std::max<std::size_t>(1, tree.children[i].size());
      d.prefix[i].assign(n * H, 0);
      for (std::size_t l = 0; l < H; ++l) {
        u128* row = d.prefix[i].data() + l * n;
        for (std::size_t u = 0; u < n; ++u) {
          const u128 wu = d.w[i][u * slots * H + l];
          const bool first = u == 0 || r.group_of_tuple(u) != r.group_of_tuple(u - 1);
          row[u] = first ? wu : checked_add(row[u - 1], wu);
        }
      }
    }
  }

  const std::size_t root = tree.root;
  const std::size_t root_slots = std::max<std::size_t>(1, tree.children[root].size());
  d.bucket_sizes.assign(L, 0);
  u128 tail_slot = 0;
  for (std::size_t u = 0; u < q.relation(root).size(); ++u) {
    const u128* wu = d.w[root].data() + u * root_slots * H;
    for (int l = 0; l < L; ++l) d.bucket_sizes[l] = checked_add(d.bucket_sizes[l], wu[l]);
    tail_slot = checked_add(tail_slot, wu[L]);
  }
  d.total = count_join(q);
  u128 non_tail = 0;
  for (u128 b : d.bucket_sizes) non_tail = checked_add(non_tail, b);
  if (non_tail > d.total || d.total - non_tail != tail_slot)
    throw Error("index inconsistency: bucket sizes do not add up to the join size");
  d.tail_size = d.total - non_tail;
  log().debug("built static index: L={} rho={} N={} |join|={} tail={}", L, d.params.rho, d.params.n,
              to_string(d.total), to_string(d.tail_size));
  return StaticIndex(std::move(d));
}

const u128* StaticIndex::w(std::size_t i, std::size_t t, std::size_t u) const {
  const std::size_t C = query().tree().children[i].size();
  if (C > 0 && t == C) return sentinel_for(*agg_);
  const std::size_t H = static_cast<std::size_t>(L()) + 1;
  return data_.w[i].data() + (u * slots(i) + t) * H;
}

Histogram StaticIndex::w_hist(std::size_t i, std::size_t t, std::size_t u) const {
  const u128* p = w(i, t, u);
  return Histogram(p, p + L() + 1);
}

const u128* StaticIndex::m(std::size_t i, std::size_t g) const {
  if (i == query().tree().root || g == kNoGroup) return nullptr;
  return data_.m[i].data() + g * (static_cast<std::size_t>(L()) + 1);
}

int StaticIndex::shift(std::size_t i, std::size_t t, std::size_t u) const {
  return t + 1 == query().tree().children[i].size() ? data_.phi[i][u] : agg_->identity();
}

void StaticIndex::access_group(std::size_t i, std::size_t g, int l, u128 tau, std::vector<std::size_t>& rows) const {
  if (!has_prefix_sums()) throw Error("index was built without prefix sums");
  const Relation& r = query().relation(i);
  if (g == kNoGroup || g >= r.group_count()) throw RankError("access into an absent group");
  const GroupRange range = r.group(g);
  const u128* row = data_.prefix[i].data() + static_cast<std::size_t>(l) * r.size();
  if (tau == 0 || tau > row[range.end - 1]) throw RankError("rank outside the group total");
  // Smallest u whose running sum reaches tau.
  const std::size_t u = static_cast<std::size_t>(std::lower_bound(row + range.begin, row + range.end, tau) - row);
  const u128 before = u == range.begin ? 0 : row[u - 1];
  rows[i] = u;
  if (query().tree().is_leaf(i)) return;
  access_tuple(i, 0, u, l, tau - before, rows);
}

void StaticIndex::access_tuple(std::size_t i, std::size_t t, std::size_t u, int l, u128 tau,
                               std::vector<std::size_t>& rows) const {
  const JoinTree& tree = query().tree();
  rows[i] = u;
  const std::size_t c = tree.children[i][t];
  const std::size_t g = query().child_group(i, t, u);
  const PairSplit s = split_rank(*agg_, shift(i, t, u), l, tau, m(c, g), w(i, t + 1, u));
  access_group(c, g, s.l1, s.tau1, rows);
  if (t + 1 < tree.children[i].size()) access_tuple(i, t + 1, u, s.l2, s.tau2, rows);
}

JoinResult StaticIndex::recursive_access(int l, u128 tau) const {
  if (l < 0 || l >= L()) throw RankError("score outside [0, L)");
  if (tau == 0 || tau > data_.bucket_sizes[l]) throw RankError("rank outside the bucket");
  std::vector<std::size_t> rows(query().size(), kNoGroup);
  access_group(query().tree().root, 0, l, tau, rows);
  return make_result(std::move(rows));
}

JoinResult StaticIndex::make_result(std::vector<std::size_t> rows) const {
  JoinResult r;
  r.probability = query().result_probability(rows, *agg_);
  r.score = query().result_score_of(rows, *agg_);
  r.rows = std::move(rows);
  return r;
}

const std::vector<JoinResult>& StaticIndex::tail_results() const {
  std::call_once(tail_->once, [this] {
    std::vector<JoinResult> out;
    for_each_join_result(query(), [&](const std::vector<std::size_t>& rows) {
      if (query().result_score_of(rows, *agg_) < L()) return true;
      if (out.size() >= data_.result_cap)
        throw MemoryGuardError("tail bucket exceeds cap of " + std::to_string(data_.result_cap));
      out.push_back(make_result(rows));
      return true;
    });
    if (out.size() != data_.tail_size) throw Error("index inconsistency: tail size mismatch");
    log().debug("materialized {} tail results", out.size());
    tail_->results = std::move(out);
    tail_->filled = true;
  });
  return tail_->results;
}

bool StaticIndex::tail_materialized() const { return tail_->filled; }

JoinResult StaticIndex::tail_access(u128 tau) const {
  const auto& tail = tail_results();
  if (tau == 0 || tau > tail.size()) throw RankError("rank outside the tail bucket");
  return tail[static_cast<std::size_t>(tau - 1)];
}

MetaIndex<JoinResult> StaticIndex::meta_index() const {
  std::vector<SubInstanceSpec<JoinResult>> specs;
  specs.reserve(L() + 1);
  auto weight = [](const JoinResult& r) { return r.probability; };
  for (int l = 0; l < L(); ++l) {
    SubInstanceSpec<JoinResult> s;
    s.size = data_.bucket_sizes[l];
    s.p_upper = agg_->bucket_upper(l);
    s.access = [this, l](u128 tau) { return std::optional<JoinResult>(recursive_access(l, tau)); };
    s.weight_of = weight;
    specs.push_back(std::move(s));
  }
  SubInstanceSpec<JoinResult> tail;
  tail.size = data_.tail_size;
  tail.p_upper = agg_->bucket_upper(L());
  tail.access = [this](u128 tau) { return std::optional<JoinResult>(tail_access(tau)); };
  tail.weight_of = weight;
  specs.push_back(std::move(tail));
  return build_meta_index(std::move(specs));
}

std::vector<JoinResult> StaticIndex::query_sample(Rng& rng, BatchStats* stats) const {
  return ss_rejected_batch(meta_index(), rng, stats);
}

}  // namespace joinss
