#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "joinss/oracle.h"
#include "joinss/static_index.h"
#include "support/brute_force.h"
#include "support/instances.h"

using namespace joinss;
using namespace joinss::testing;

namespace {

constexpr AggregatorKind kAllKinds[] = {AggregatorKind::kProduct, AggregatorKind::kMin, AggregatorKind::kMax,
                                        AggregatorKind::kSum};

void check_statistics_against_brute_force(const StaticIndex& idx) {
  const JoinQuery& q = idx.query();
  const JoinTree& tree = q.tree();
  const int L = idx.L();
  const AggregatorKind kind = idx.aggregator().kind();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Relation& r = q.relation(i);
    for (std::size_t u = 0; u < r.size(); ++u) {
      for (std::size_t t = 0; t < idx.slots(i); ++t) REQUIRE(idx.w_hist(i, t, u) == brute_W(q, kind, L, i, t, u));
      if (i == tree.root) continue;
      const u128* m = idx.m(i, r.group_of_tuple(u));
      REQUIRE(Histogram(m, m + L + 1) == brute_M(q, kind, L, i, u));
    }
  }
}

void check_recursion_identity(const StaticIndex& idx) {
  const JoinQuery& q = idx.query();
  const int L = idx.L();
  const Histogram zeros(L + 1, 0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const std::size_t C = q.tree().children[i].size();
    for (std::size_t u = 0; u < q.relation(i).size(); ++u) {
      if (C == 0) {
        CHECK(idx.w_hist(i, 0, u) == indicator(idx.phi(i, u), L));
        continue;
      }
      for (std::size_t t = 0; t < C; ++t) {
        const u128* m = idx.m(q.tree().children[i][t], q.child_group(i, t, u));
        const Histogram mh = m ? Histogram(m, m + L + 1) : zeros;
        CHECK(convolve_exact(mh, idx.w_hist(i, t + 1, u), idx.shift(i, t, u), idx.aggregator()) ==
              idx.w_hist(i, t, u));
      }
    }
  }
}

void check_bijection(const StaticIndex& idx) {
  const auto results = materialize_join(idx.query(), idx.aggregator());
  for (int l = 0; l < idx.L(); ++l) {
    const auto bucket = enumerate_bucket(results, l, idx.aggregator());
    REQUIRE(idx.bucket_sizes()[l] == bucket.size());
    std::set<std::vector<std::size_t>> seen;
    for (u128 tau = 1; tau <= idx.bucket_sizes()[l]; ++tau) {
      const JoinResult r = idx.recursive_access(l, tau);
      CHECK(r.score == l);
      seen.insert(r.rows);
    }
    REQUIRE(seen.size() == bucket.size());
    for (const auto& b : bucket) CHECK(seen.count(b.rows) == 1);
  }
  const auto tail = enumerate_bucket(results, idx.L(), idx.aggregator());
  CHECK(idx.tail_size() == tail.size());
}

}  // namespace

TEST_CASE("leaf tuple statistics") {
  std::vector<Relation> rels{make_relation("R", {"A"}, {{{"x"}, 0.5}})};
  PreprocessOptions po;
  po.L_override = 4;
  const auto idx = StaticIndex::build(JoinQuery::from_relations(rels), AggregatorKind::kProduct, po);
  const Histogram w = idx.w_hist(0, 0, 0);
  for (int l = 0; l <= idx.L(); ++l) CHECK(w[l] == (l == 1 ? 1u : 0u));
  const JoinResult r = idx.recursive_access(1, 1);
  CHECK(r.rows == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(idx.recursive_access(1, 2), RankError);
  CHECK_THROWS_AS(idx.recursive_access(0, 1), RankError);
}

TEST_CASE("canonical instance buckets and ranked access") {
  const auto idx = StaticIndex::build(canonical_query(), AggregatorKind::kProduct);
  const auto& b = idx.bucket_sizes();
  CHECK(b[0] == 0);
  CHECK(b[1] == 1);
  CHECK(b[2] == 2);
  CHECK(b[3] == 1);
  for (int l = 4; l < idx.L(); ++l) CHECK(b[l] == 0);
  CHECK(idx.tail_size() == 0);
  CHECK(idx.total() == 4);

  const JoinQuery& q = idx.query();
  auto values = [&](const JoinResult& r) {
    std::vector<std::string> out;
    for (const auto& v : q.result_values(r)) out.push_back(value_to_string(v));
    return out;
  };
  CHECK(values(idx.recursive_access(2, 1)) == std::vector<std::string>{"a1", "b1", "c2"});
  CHECK(values(idx.recursive_access(2, 2)) == std::vector<std::string>{"a2", "b1", "c1"});
  CHECK_THROWS_AS(idx.recursive_access(2, 3), RankError);
  check_bijection(idx);
}

TEST_CASE("split_rank boundary cases") {
  const Aggregator agg(AggregatorKind::kProduct, 4, 2);
  const u128 m[5] = {0, 2, 1, 0, 0};
  const u128 next[5] = {3, 0, 0, 0, 0};
  // Terms at l=2, shift 0: (0,2)=0, (1,1)=0, (2,0)=3.
  auto s = split_rank(agg, 0, 2, 3, m, next);
  CHECK(s.l1 == 2);
  CHECK(s.l2 == 0);
  CHECK(s.tau1 == 1);
  CHECK(s.tau2 == 3);
  // (1,0) carries 6 terms at l=1: tau=6 lands on the divisible boundary.
  s = split_rank(agg, 0, 1, 6, m, next);
  CHECK(s.tau1 == 2);
  CHECK(s.tau2 == 3);
  CHECK_THROWS_AS(split_rank(agg, 0, 1, 7, m, next), RankError);
  CHECK_THROWS_AS(split_rank(agg, 0, 1, 0, m, next), RankError);
}

TEST_CASE("score pair enumeration is lexicographic and complete") {
  for (auto kind : kAllKinds) {
    const Aggregator agg(kind, 5, 3);
    for (int shift = 0; shift <= 5; ++shift) {
      std::map<int, std::vector<std::pair<int, int>>> seen;
      for (int l = 0; l <= 5; ++l)
        for_each_score_pair(agg, shift, l, [&](int a, int b) {
          seen[l].emplace_back(a, b);
          return true;
        });
      std::size_t total = 0;
      for (auto& [l, pairs] : seen) {
        CHECK(std::is_sorted(pairs.begin(), pairs.end()));
        for (auto [a, b] : pairs) CHECK(agg.combine(shift, agg.combine(a, b)) == l);
        total += pairs.size();
      }
      if (kind != AggregatorKind::kProduct) CHECK(total == 36);
    }
  }
}

TEST_CASE("statistics equal brute-force counts on random instances") {
  std::mt19937_64 gen(4242);
  RandomInstanceOptions opt;
  opt.max_tuples = 12;
  opt.max_results = 4000;
  for (int trial = 0; trial < 40; ++trial) {
    const JoinQuery q = random_query(gen, opt);
    for (auto kind : kAllKinds) {
      const AggregatorKind k = trial % 4 == 0 ? kind : (kind == AggregatorKind::kProduct ? kind : kAllKinds[trial % 4]);
      PreprocessOptions po;
      po.reduce = trial % 2 == 0;
      po.L_override = trial % 3 == 0 ? std::optional<int>(4) : std::nullopt;
      const auto idx = StaticIndex::build(q, k, po);
      check_statistics_against_brute_force(idx);
      check_recursion_identity(idx);
      check_bijection(idx);
      u128 sum = idx.tail_size();
      for (u128 b : idx.bucket_sizes()) sum += b;
      CHECK(sum == count_join(q));
      CHECK(sum == brute_join(q).size());
    }
  }
}

TEST_CASE("prefix sums are running group sums") {
  std::mt19937_64 gen(99);
  const JoinQuery q = random_query(gen);
  const auto idx = StaticIndex::build(q, AggregatorKind::kProduct);
  const JoinQuery& rq = idx.query();
  for (std::size_t i = 0; i < rq.size(); ++i) {
    const Relation& r = rq.relation(i);
    for (std::size_t g = 0; g < r.group_count(); ++g) {
      const GroupRange range = r.group(g);
      for (int l = 0; l <= idx.L(); ++l) {
        u128 run = 0;
        for (std::size_t u = range.begin; u < range.end; ++u) {
          run += idx.w(i, 0, u)[l];
          CHECK(idx.prefix(i, l, u) == run);
        }
        if (i != rq.tree().root) CHECK(idx.m(i, g)[l] == run);
      }
    }
  }
}

TEST_CASE("fast convolution builds the same index") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 10; ++trial) {
    const JoinQuery q = random_query(gen);
    for (auto kind : kAllKinds) {
      PreprocessOptions fast;
      fast.convolution = ConvolutionMode::kFast;
      const auto a = StaticIndex::build(q, kind);
      const auto b = StaticIndex::build(q, kind, fast);
      CHECK(a.data().w == b.data().w);
      CHECK(a.data().m == b.data().m);
    }
  }
}

TEST_CASE("tail bucket is materialized once on demand") {
  std::vector<Relation> rels{make_relation("R1", {"A", "B"}, {{{"1", "1"}, 0.01}, {{"2", "1"}, 1.0}}),
                             make_relation("R2", {"B", "C"}, {{{"1", "1"}, 0.01}, {{"1", "2"}, 0.5}})};
  PreprocessOptions po;
  po.L_override = 3;
  const auto idx = StaticIndex::build(JoinQuery::from_relations(rels), AggregatorKind::kProduct, po);
  CHECK(idx.tail_size() == 3);
  CHECK_FALSE(idx.tail_materialized());
  const auto& tail = idx.tail_results();
  CHECK(idx.tail_materialized());
  CHECK(tail.size() == 3);
  for (const auto& r : tail) CHECK(r.score >= 3);
  CHECK(&idx.tail_results() == &tail);
  CHECK_THROWS_AS(idx.tail_access(4), RankError);
}

TEST_CASE("query on degenerate weights") {
  auto all = [](double w) {
    return std::vector<Relation>{
        make_relation("R1", {"A", "B"}, {{{"1", "1"}, w}, {{"2", "1"}, w}, {{"3", "2"}, w}}),
        make_relation("R2", {"B", "C"}, {{{"1", "1"}, w}, {{"1", "2"}, w}, {{"2", "5"}, w}})};
  };
  const auto ones = StaticIndex::build(JoinQuery::from_relations(all(1.0)), AggregatorKind::kProduct);
  const auto zeros = StaticIndex::build(JoinQuery::from_relations(all(0.0)), AggregatorKind::kProduct);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    auto s = ones.query_sample(rng);
    CHECK(s.size() == 5);
    CHECK(std::set<JoinResult>(s.begin(), s.end()).size() == 5);
    CHECK(zeros.query_sample(rng).empty());
  }
}

TEST_CASE("query distribution on the canonical instance") {
  const auto idx = StaticIndex::build(canonical_query(), AggregatorKind::kProduct);
  const auto results = materialize_join(idx.query(), idx.aggregator());
  std::vector<double> expected;
  std::map<std::vector<std::size_t>, std::size_t> pos;
  for (const auto& r : results) {
    pos[r.rows] = expected.size();
    expected.push_back(r.probability);
  }
  FrequencyAccumulator acc(expected);
  Rng rng(20240601);
  for (int t = 0; t < 200000; ++t) {
    std::vector<std::size_t> ids;
    for (const auto& r : idx.query_sample(rng)) ids.push_back(pos.at(r.rows));
    acc.add_trial(ids);
  }
  const auto report = acc.report();
  CHECK(report.expected_mean == doctest::Approx(1.125));
  CHECK(report.z_ok());
  CHECK(report.relative_mean_error() < 0.02);
  CHECK(report.correlation_ok());
  CHECK(report.size_ok());
}

TEST_CASE("query distribution on random instances with every aggregator") {
  std::mt19937_64 gen(555);
  RandomInstanceOptions opt;
  opt.max_results = 300;
  for (auto kind : kAllKinds) {
    const JoinQuery q = random_query(gen, opt);
    PreprocessOptions po;
    po.L_override = 6;
    const auto idx = StaticIndex::build(q, kind, po);
    const auto results = materialize_join(idx.query(), idx.aggregator());
    if (results.empty()) continue;
    std::vector<double> expected;
    std::map<std::vector<std::size_t>, std::size_t> pos;
    for (const auto& r : results) {
      pos[r.rows] = expected.size();
      expected.push_back(r.probability);
    }
    FrequencyAccumulator acc(expected);
    Rng rng(11);
    for (int t = 0; t < 20000; ++t) {
      std::vector<std::size_t> ids;
      for (const auto& r : idx.query_sample(rng)) ids.push_back(pos.at(r.rows));
      acc.add_trial(ids);
    }
    const auto report = acc.report();
    // Many results: allow the Bonferroni-sized tail of the normal.
    CHECK(report.exact_failures == 0);
    CHECK(report.max_abs_z <= 5.0);
    CHECK(report.size_ok());
  }
}
