// src/oneshot.cc

#include "joinss/oneshot.h"

#include "joinss/log.h"

namespace joinss {

void radix_sort_by_rank(std::vector<Quintuple>& batch) {
  radix_sort_by(batch, [](const Quintuple& q) { return q.tau; });
}

std::vector<u128> dense_y(const Aggregator& agg, int shift, int l, const u128* m, const u128* next) {
  std::vector<u128> out;
  u128 run = 0;
  for_each_score_pair(agg, shift, l, [&](int l1, int l2) {
    if (m != nullptr && m[l1] != 0 && next[l2] != 0) run = checked_add(run, checked_mul(m[l1], next[l2]));
    out.push_back(run);
    return true;
  });
  return out;
}

XYTables::XYTables(const StaticIndex& idx, bool eager_y) : idx_(idx) {
  const JoinQuery& q = idx.query();
  const std::size_t H = static_cast<std::size_t>(idx.L()) + 1;
  u64 base = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Relation& r = q.relation(i);
    const std::size_t n = r.size();
    n_.push_back(n);
    slot_base_.push_back(base);
    base += static_cast<u64>(n) * idx.slots(i);
    std::vector<u128> xi(n * H, 0);
    for (std::size_t u = 0; u < n; ++u) {
      const u128* wu = idx.w(i, 0, u);
      const bool first = u == 0 || r.group_of_tuple(u) != r.group_of_tuple(u - 1);
      for (std::size_t l = 0; l < H; ++l) {
        u128& cell = xi[l * n + u];
        cell = first ? wu[l] : checked_add(xi[l * n + u - 1], wu[l]);
      }
    }
    x_.push_back(std::move(xi));
  }
  if (!eager_y) return;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t t = 0; t < q.tree().children[i].size(); ++t)
      for (std::size_t u = 0; u < n_[i]; ++u)
        for (int l = 0; l <= idx.L(); ++l) y(i, t, u, l);
}

u64 XYTables::y_key(std::size_t i, std::size_t t, std::size_t u, int l) const {
  return (slot_base_[i] + static_cast<u64>(u) * idx_.slots(i) + t) * static_cast<u64>(idx_.L() + 1) +
         static_cast<u64>(l);
}

const std::vector<YEntry>& XYTables::y(std::size_t i, std::size_t t, std::size_t u, int l) {
  const u64 key = y_key(i, t, u, l);
  if (auto it = y_.find(key); it != y_.end()) return it->second;
  std::vector<YEntry> entries;
  const std::size_t c = idx_.query().tree().children[i][t];
  const u128* m = idx_.m(c, idx_.query().child_group(i, t, u));
  if (m != nullptr) {
    const u128* next = idx_.w(i, t + 1, u);
    u128 run = 0;
    for_each_score_pair(idx_.aggregator(), idx_.shift(i, t, u), l, [&](int l1, int l2) {
      if (m[l1] != 0 && next[l2] != 0) {
        run = checked_add(run, checked_mul(m[l1], next[l2]));
        entries.push_back({l1, l2, run});
      }
      return true;
    });
  }
  return y_.emplace(key, std::move(entries)).first->second;
}

std::size_t XYTables::x_entries() const {
  std::size_t total = 0;
  for (const auto& x : x_) total += x.size();
  return total;
}

std::size_t XYTables::y_entries() const {
  std::size_t total = 0;
  for (const auto& [key, v] : y_) total += v.size();
  return total;
}

namespace {

class BatchEngine {
 public:
  BatchEngine(const StaticIndex& idx, XYTables& xy, std::size_t requests, OneShotStats& stats)
      : idx_(idx), xy_(xy), stats_(stats), H_(static_cast<std::size_t>(idx.L()) + 1),
        rows_(requests, std::vector<std::size_t>(idx.query().size(), kNoGroup)) {}

  std::vector<std::vector<std::size_t>>& rows() { return rows_; }

  // P_{i,∅}: requests conditioned on a key group of R_i.
  void run_group_set(std::size_t i, std::vector<Quintuple> batch) {
    if (batch.empty()) return;
    stats_.quintuples += batch.size();
    sort_for_traversal(i, 0, batch);
    const Relation& r = idx_.query().relation(i);
    const bool leaf = idx_.query().tree().is_leaf(i);
    std::vector<Quintuple> slot0;
    for (std::size_t a = 0; a < batch.size();) {
      const std::size_t g = batch[a].cond;
      const int l = batch[a].l;
      if (g == kNoGroup || g >= r.group_count()) throw RankError("access into an absent group");
      const GroupRange range = r.group(g);
      const u128 total = xy_.x(i, l, range.end - 1);
      std::size_t u = range.begin;
      u128 last = 0;
      for (; a < batch.size() && batch[a].cond == g && batch[a].l == l; ++a) {
        const Quintuple& q = batch[a];
        if (q.tau == 0 || q.tau > total) throw RankError("rank outside the group total");
        if (q.tau < last) ++stats_.cursor_regressions;
        last = q.tau;
        while (xy_.x(i, l, u) < q.tau) {
          ++u;
          ++stats_.x_cursor_steps;
        }
        const u128 tau = q.tau - (u == range.begin ? 0 : xy_.x(i, l, u - 1));
        rows_[q.request][i] = u;
        if (leaf) {
          if (tau != 1) throw RankError("leaf rank beyond its indicator");
          continue;
        }
        slot0.push_back({q.request, i, 0, false, u, l, tau});
      }
      if (u - range.begin >= range.size()) stats_.movement_within_bounds = false;
    }
    if (!leaf) run_pairs(i, 0, std::move(slot0));
  }

  // P_{i,c_t} for t > 0: conditioned on the tuple already chosen at slot 0.
  void run_tuple_set(std::size_t i, std::size_t t, std::vector<Quintuple> batch) {
    if (batch.empty()) return;
    stats_.quintuples += batch.size();
    radix_sort_by_rank(batch);
    ++stats_.rank_sorts[{i, t}];
    for (const Quintuple& q : batch) {
      const u128 own = idx_.w(i, t, q.cond)[q.l];
      if (q.tau == 0 || q.tau > own) throw RankError("rank outside the tuple total");
    }
    run_pairs(i, t, std::move(batch));
  }

 private:
  void sort_for_traversal(std::size_t i, std::size_t t, std::vector<Quintuple>& batch) {
    radix_sort_by_rank(batch);
    ++stats_.rank_sorts[{i, t}];
    const std::size_t H = H_;
    radix_sort_by(batch, [H](const Quintuple& q) {
      return static_cast<u128>(q.cond == kNoGroup ? 0 : q.cond + 1) * H + static_cast<u128>(q.l);
    });
    ++stats_.group_sorts;
  }

  // Y phase at slot t: split each rank over the score pairs of its tuple.
  void run_pairs(std::size_t i, std::size_t t, std::vector<Quintuple> batch) {
    sort_for_traversal(i, t, batch);
    const JoinTree& tree = idx_.query().tree();
    const std::size_t c = tree.children[i][t];
    const bool more = t + 1 < tree.children[i].size();
    std::vector<Quintuple> child, next_slot;
    for (std::size_t a = 0; a < batch.size();) {
      const std::size_t u = batch[a].cond;
      const int l = batch[a].l;
      const auto& ys = xy_.y(i, t, u, l);
      const u128* next = idx_.w(i, t + 1, u);
      const std::size_t g = idx_.query().child_group(i, t, u);
      std::size_t k = 0;
      u128 last = 0;
      for (; a < batch.size() && batch[a].cond == u && batch[a].l == l; ++a) {
        const Quintuple& q = batch[a];
        if (ys.empty() || q.tau == 0 || q.tau > ys.back().cum) throw RankError("rank exceeds the score-pair total");
        if (q.tau < last) ++stats_.cursor_regressions;
        last = q.tau;
        while (ys[k].cum < q.tau) {
          ++k;
          ++stats_.y_cursor_steps;
        }
        const u128 rel = q.tau - (k == 0 ? 0 : ys[k - 1].cum);
        const u128 w2 = next[ys[k].l2];
        child.push_back({q.request, c, 0, true, g, ys[k].l1, (rel + w2 - 1) / w2});
        if (more) next_slot.push_back({q.request, i, t + 1, false, u, ys[k].l2, (rel - 1) % w2 + 1});
      }
      if (!ys.empty() && k >= ys.size()) stats_.movement_within_bounds = false;
    }
    run_group_set(c, std::move(child));
    if (more) run_tuple_set(i, t + 1, std::move(next_slot));
  }

  const StaticIndex& idx_;
  XYTables& xy_;
  OneShotStats& stats_;
  std::size_t H_;
  std::vector<std::vector<std::size_t>> rows_;
};

}  // namespace

std::vector<JoinResult> batch_recursive_access(const StaticIndex& idx, XYTables& xy,
                                               const std::vector<std::pair<int, u128>>& requests,
                                               OneShotStats* stats) {
  OneShotStats local;
  OneShotStats& s = stats ? *stats : local;
  std::vector<Quintuple> seed;
  seed.reserve(requests.size());
  for (std::size_t r = 0; r < requests.size(); ++r) {
    const auto [l, tau] = requests[r];
    if (l < 0 || l >= idx.L()) throw RankError("score outside [0, L)");
    if (tau == 0 || tau > idx.bucket_sizes()[l]) throw RankError("rank outside the bucket");
    seed.push_back({r, idx.query().tree().root, 0, true, 0, l, tau});
  }
  BatchEngine engine(idx, xy, requests.size(), s);
  engine.run_group_set(idx.query().tree().root, std::move(seed));
  std::vector<JoinResult> out;
  out.reserve(requests.size());
  for (auto& rows : engine.rows()) out.push_back(idx.make_result(std::move(rows)));
  return out;
}

std::vector<JoinResult> oneshot_sample(const StaticIndex& idx, Rng& rng, bool eager_y, OneShotStats* stats,
                                       BatchStats* batch) {
  const auto meta = idx.meta_index();
  auto [positions, rejection] = split_query_streams(rng);
  const auto draws = draw_batch_positions(meta, positions);
  const std::size_t tail = static_cast<std::size_t>(idx.L());
  std::vector<std::pair<int, u128>> requests;
  for (const auto& d : draws)
    if (d.instance != tail) requests.emplace_back(static_cast<int>(d.instance), d.position);
  XYTables xy(idx, eager_y);
  auto resolved = batch_recursive_access(idx, xy, requests, stats);
  std::vector<JoinResult> out;
  std::size_t next = 0;
  for (const auto& d : draws) {
    JoinResult e = d.instance == tail ? idx.tail_access(d.position) : std::move(resolved[next++]);
    if (batch) ++batch->accesses;
    if (rejection_keep(e.probability, meta.specs[d.instance].p_upper, rejection)) {
      out.push_back(std::move(e));
      if (batch) ++batch->accepted;
    }
  }
  log().debug("one-shot sample: {} draws, {} kept, {} Y entries", draws.size(), out.size(), xy.y_entries());
  return out;
}

std::vector<JoinResult> oneshot_sample(const JoinQuery& query, AggregatorKind kind, Rng& rng,
                                       const OneShotOptions& options, OneShotStats* stats, BatchStats* batch) {
  PreprocessOptions pre = options.preprocess;
  pre.prefix_sums = false;
  const auto idx = StaticIndex::build(query, kind, pre);
  return oneshot_sample(idx, rng, options.eager_y, stats, batch);
}

}  // namespace joinss
