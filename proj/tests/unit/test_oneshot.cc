#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "joinss/oneshot.h"
#include "joinss/oracle.h"
#include "support/brute_force.h"
#include "support/instances.h"

using namespace joinss;
using namespace joinss::testing;

namespace {

constexpr AggregatorKind kAllKinds[] = {AggregatorKind::kProduct, AggregatorKind::kMin, AggregatorKind::kMax,
                                        AggregatorKind::kSum};

std::vector<std::pair<int, u128>> exhaustive_requests(const StaticIndex& idx) {
  std::vector<std::pair<int, u128>> out;
  for (int l = 0; l < idx.L(); ++l)
    for (u128 tau = 1; tau <= idx.bucket_sizes()[l]; ++tau) out.emplace_back(l, tau);
  return out;
}

}  // namespace

TEST_CASE("radix sort by rank") {
  std::vector<Quintuple> batch(3);
  batch[0].tau = 3;
  batch[1].tau = 1;
  batch[2].tau = 2;
  radix_sort_by_rank(batch);
  CHECK(batch[0].tau == 1);
  CHECK(batch[1].tau == 2);
  CHECK(batch[2].tau == 3);

  std::vector<Quintuple> ties(5);
  for (std::size_t r = 0; r < 5; ++r) {
    ties[r].request = r;
    ties[r].tau = r % 2 == 0 ? 7 : 5;
  }
  radix_sort_by_rank(ties);
  std::vector<std::size_t> order;
  for (const auto& q : ties) order.push_back(q.request);
  CHECK(order == std::vector<std::size_t>{1, 3, 0, 2, 4});

  std::mt19937_64 gen(17);
  std::vector<Quintuple> big(10000);
  for (std::size_t r = 0; r < big.size(); ++r) {
    big[r].request = r;
    big[r].tau = (static_cast<u128>(gen()) << 64 | gen()) >> (gen() % 128);
  }
  auto expected = big;
  std::stable_sort(expected.begin(), expected.end(), [](const Quintuple& a, const Quintuple& b) { return a.tau < b.tau; });
  radix_sort_by_rank(big);
  for (std::size_t r = 0; r < big.size(); ++r) {
    CHECK(big[r].tau == expected[r].tau);
    CHECK(big[r].request == expected[r].request);
  }
}

TEST_CASE("dense Y over a score-pair set") {
  const Aggregator agg(AggregatorKind::kProduct, 4, 2);
  // Pairs of l=2 are (0,2),(1,1),(2,0); only the last term is nonzero.
  const u128 m[5] = {0, 0, 1, 0, 0};
  const u128 next[5] = {1, 0, 0, 0, 0};
  CHECK(dense_y(agg, 0, 2, m, next) == std::vector<u128>{0, 0, 1});
}

TEST_CASE("X and Y arrays equal their definitions") {
  std::mt19937_64 gen(3030);
  RandomInstanceOptions opt;
  opt.max_tuples = 12;
  opt.max_results = 3000;
  for (int trial = 0; trial < 24; ++trial) {
    const JoinQuery q = random_query(gen, opt);
    const AggregatorKind kind = kAllKinds[trial % 4];
    PreprocessOptions po;
    po.prefix_sums = false;
    const auto idx = StaticIndex::build(q, kind, po);
    XYTables xy(idx, true);
    const JoinQuery& rq = idx.query();
    const int L = idx.L();
    for (std::size_t i = 0; i < rq.size(); ++i) {
      const Relation& r = rq.relation(i);
      for (std::size_t g = 0; g < r.group_count(); ++g) {
        const GroupRange range = r.group(g);
        for (int l = 0; l <= L; ++l) {
          u128 run = 0;
          for (std::size_t u = range.begin; u < range.end; ++u) {
            run += brute_W(rq, kind, L, i, 0, u)[l];
            REQUIRE(xy.x(i, l, u) == run);
          }
        }
      }
      for (std::size_t t = 0; t < rq.tree().children[i].size(); ++t) {
        const std::size_t c = rq.tree().children[i][t];
        for (std::size_t u = 0; u < r.size(); ++u) {
          const auto w = brute_W(rq, kind, L, i, t, u);
          const auto next = t + 1 < rq.tree().children[i].size() ? brute_W(rq, kind, L, i, t + 1, u)
                                                                 : indicator(idx.aggregator().identity(), L);
          const bool last = t + 1 == rq.tree().children[i].size();
          const int shift = last ? tuple_score(r.tuple(u).weight, L) : (kind == AggregatorKind::kMax || kind == AggregatorKind::kSum ? L : 0);
          const std::size_t g = rq.child_group(i, t, u);
          std::vector<u128> m(L + 1, 0);
          if (g != kNoGroup) {
            const auto& child = rq.relation(c);
            m = brute_M(rq, kind, L, c, child.group(g).begin);
          }
          for (int l = 0; l <= L; ++l) {
            // Direct term-by-term evaluation of the pair sums.
            std::vector<YEntry> direct;
            u128 run = 0;
            for (int l1 = 0; l1 <= L; ++l1)
              for (int l2 = 0; l2 <= L; ++l2) {
                if (brute_fold(kind, L, {l1, l2, shift}) != l) continue;
                if (m[l1] * next[l2] == 0) continue;
                run += m[l1] * next[l2];
                direct.push_back({l1, l2, run});
              }
            const auto& y = xy.y(i, t, u, l);
            REQUIRE(y.size() == direct.size());
            for (std::size_t k = 0; k < y.size(); ++k) {
              CHECK(y[k].l1 == direct[k].l1);
              CHECK(y[k].l2 == direct[k].l2);
              CHECK(y[k].cum == direct[k].cum);
            }
            CHECK((y.empty() ? u128{0} : y.back().cum) == w[l]);
          }
        }
      }
    }
  }
}

TEST_CASE("batch access on the canonical instance") {
  const auto idx = StaticIndex::build(canonical_query(), AggregatorKind::kProduct);
  XYTables xy(idx);
  const auto requests = exhaustive_requests(idx);
  const auto results = batch_recursive_access(idx, xy, requests);
  REQUIRE(results.size() == 4);
  std::vector<JoinResult> sorted = results;
  std::sort(sorted.begin(), sorted.end());
  auto all = materialize_join(idx.query(), idx.aggregator());
  std::sort(all.begin(), all.end());
  CHECK(sorted == all);
  CHECK(batch_recursive_access(idx, xy, {}).empty());
  const auto twice = batch_recursive_access(idx, xy, {{2, 1}, {2, 1}});
  CHECK(twice[0].rows == twice[1].rows);
  CHECK(twice[0].rows == idx.recursive_access(2, 1).rows);
  CHECK_THROWS_AS(batch_recursive_access(idx, xy, {{2, 3}}), RankError);
}

TEST_CASE("batch access equals sequential access") {
  std::mt19937_64 gen(8080);
  RandomInstanceOptions opt;
  opt.max_results = 6000;
  for (int trial = 0; trial < 40; ++trial) {
    const JoinQuery q = random_query(gen, opt);
    const auto idx = StaticIndex::build(q, kAllKinds[trial % 4]);
    XYTables xy(idx);
    auto requests = exhaustive_requests(idx);
    // Duplicates and shuffled order.
    const std::size_t n = requests.size();
    for (std::size_t r = 0; r < n / 3; ++r) requests.push_back(requests[gen() % n]);
    std::shuffle(requests.begin(), requests.end(), gen);
    OneShotStats stats;
    const auto batch = batch_recursive_access(idx, xy, requests, &stats);
    REQUIRE(batch.size() == requests.size());
    for (std::size_t r = 0; r < requests.size(); ++r) {
      const auto seq = idx.recursive_access(requests[r].first, requests[r].second);
      REQUIRE(batch[r].rows == seq.rows);
      CHECK(batch[r].score == seq.score);
    }
    CHECK(stats.cursor_regressions == 0);
    CHECK(stats.movement_within_bounds);
    for (const auto& [key, count] : stats.rank_sorts) {
      const bool leaf = idx.query().tree().is_leaf(key.first);
      CHECK(count == (leaf ? 1u : 2u));
    }
  }
}

TEST_CASE("one-shot sample reproduces the static query draw for draw") {
  std::mt19937_64 gen(123);
  for (int trial = 0; trial < 12; ++trial) {
    const JoinQuery q = random_query(gen);
    const AggregatorKind kind = kAllKinds[trial % 4];
    const auto idx = StaticIndex::build(q, kind);
    for (u64 seed = 0; seed < 20; ++seed) {
      Rng a(seed), b(seed);
      auto s1 = idx.query_sample(a);
      auto s2 = oneshot_sample(q, kind, b);
      REQUIRE(s1.size() == s2.size());
      for (std::size_t k = 0; k < s1.size(); ++k) CHECK(s1[k].rows == s2[k].rows);
    }
  }
}

TEST_CASE("one-shot sample on degenerate weights") {
  auto rels = [](double w) {
    return std::vector<Relation>{make_relation("R1", {"A", "B"}, {{{"1", "1"}, w}, {{"2", "1"}, w}}),
                                 make_relation("R2", {"B", "C"}, {{{"1", "1"}, w}, {{"1", "2"}, w}})};
  };
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    CHECK(oneshot_sample(JoinQuery::from_relations(rels(1.0)), AggregatorKind::kProduct, rng).size() == 4);
    CHECK(oneshot_sample(JoinQuery::from_relations(rels(0.0)), AggregatorKind::kProduct, rng).empty());
  }
}

TEST_CASE("one-shot distribution on the canonical instance") {
  PreprocessOptions po;
  po.prefix_sums = false;
  const auto idx = StaticIndex::build(canonical_query(), AggregatorKind::kProduct, po);
  const auto results = materialize_join(idx.query(), idx.aggregator());
  std::vector<double> expected;
  std::map<std::vector<std::size_t>, std::size_t> pos;
  for (const auto& r : results) {
    pos[r.rows] = expected.size();
    expected.push_back(r.probability);
  }
  FrequencyAccumulator acc(expected);
  Rng rng(99);
  for (int t = 0; t < 200000; ++t) {
    std::vector<std::size_t> ids;
    for (const auto& r : oneshot_sample(idx, rng)) ids.push_back(pos.at(r.rows));
    acc.add_trial(ids);
  }
  const auto report = acc.report();
  CHECK(report.z_ok());
  CHECK(report.relative_mean_error() < 0.02);
  CHECK(report.correlation_ok());
  CHECK(report.size_ok());
}
