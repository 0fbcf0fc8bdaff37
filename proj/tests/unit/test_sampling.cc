#include <doctest.h>

#include <cmath>
#include <set>

#include "joinss/oracle.h"
#include "joinss/sampling.h"

using namespace joinss;

namespace {

double binomial_z(double observed, double trials, double p) {
  return (observed - trials * p) / std::sqrt(trials * p * (1.0 - p));
}

}  // namespace

TEST_CASE("rng is deterministic and splittable") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng d(42);
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= d.next_u64() != c.next_u64();
  CHECK(differs);
  Rng parent(7);
  Rng x = parent.derive_child(1), y = parent.derive_child(1), z = parent.derive_child(2);
  CHECK(x.next_u64() == y.next_u64());
  CHECK(x.next_u64() != z.next_u64());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("geometric jump from a fixed uniform") {
  CHECK(geometric_from_uniform(1.0, 0.123) == 0);
  CHECK(geometric_from_uniform(0.5, 0.5) == 1);
  CHECK(geometric_from_uniform(0.5, 0.3) == 1);
  CHECK(geometric_from_uniform(0.5, 0.24) == 2);
  CHECK_THROWS_AS(geometric_from_uniform(0.0, 0.5), InvalidProbability);
  CHECK_THROWS_AS(geometric_from_uniform(-0.1, 0.5), InvalidProbability);
  Rng rng(1);
  CHECK_THROWS_AS(sample_geometric(rng, 0.0), InvalidProbability);
}

TEST_CASE("truncated geometric jump") {
  CHECK(truncated_geometric_from_uniform(0.3, 1, 0.99) == 0);
  CHECK(truncated_geometric_from_uniform(1.0, 5, 0.7) == 0);
  CHECK(truncated_geometric_from_uniform(0.5, 2, 0.9) == 1);
  CHECK_THROWS_AS(truncated_geometric_from_uniform(0.5, 0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(truncated_geometric_from_uniform(0.0, 3, 0.5), InvalidProbability);
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) CHECK(sample_truncated_geometric(rng, 1e-6, 17) < 17);
}

TEST_CASE("nonempty probability") {
  CHECK(nonempty_probability(0.5, 2) == doctest::Approx(0.75));
  CHECK(nonempty_probability(0.5, 0) == 0.0);
  CHECK(nonempty_probability(0.0, 10) == 0.0);
  const auto inst = make_uniform_instance(100, 0.1);
  CHECK(inst.nonempty_prob == doctest::Approx(1.0 - std::pow(0.9, 100)).epsilon(1e-15));
}

TEST_CASE("tiny probabilities are clamped to zero") {
  CHECK(sanitize_probability(0x1p-1001) == 0.0);
  CHECK(sanitize_probability(0x1p-999) == 0x1p-999);
  CHECK_THROWS_AS(sanitize_probability(1.5), InvalidProbability);
}

TEST_CASE("uniform samplers on trivial instances") {
  Rng rng(3);
  auto identity = [](u128 pos) { return static_cast<int>(pos); };
  CHECK(uss_vanilla(make_uniform_instance(3, 1.0), identity, rng) == std::vector<int>{1, 2, 3});
  CHECK(uss_vanilla(make_uniform_instance(3, 0.0), identity, rng).empty());
  CHECK(uss_advanced(make_uniform_instance(3, 1.0), identity, rng) == std::vector<int>{1, 2, 3});
  CHECK(uss_advanced(make_uniform_instance(5, 0.0), identity, rng).empty());
}

TEST_CASE("uniform samplers only touch included positions") {
  Rng rng(11);
  const auto inst = make_uniform_instance(1000, 0.01);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t calls = 0;
    auto counting = [&](u128 pos) {
      ++calls;
      return pos;
    };
    const auto a = uss_vanilla(inst, counting, rng);
    CHECK(calls == a.size());
    calls = 0;
    const auto b = uss_advanced(inst, counting, rng);
    CHECK(calls == b.size());
    CHECK(std::set<u128>(b.begin(), b.end()).size() == b.size());
    for (u128 pos : b) CHECK((pos >= 1 && pos <= 1000));
  }
}

TEST_CASE("uniform samplers: per-position frequency and size law") {
  constexpr int kTrials = 100000;
  const auto inst = make_uniform_instance(100, 0.1);
  std::vector<double> pos_v(101, 0), pos_a(101, 0), size_v(101, 0), size_a(101, 0);
  Rng rv(2024), ra(2025);
  auto identity = [](u128 pos) { return static_cast<int>(pos); };
  for (int t = 0; t < kTrials; ++t) {
    const auto v = uss_vanilla(inst, identity, rv);
    const auto a = uss_advanced(inst, identity, ra);
    for (int p : v) pos_v[p] += 1;
    for (int p : a) pos_a[p] += 1;
    size_v[v.size()] += 1;
    size_a[a.size()] += 1;
  }
  double worst_v = 0, worst_a = 0;
  for (int p = 1; p <= 100; ++p) {
    worst_v = std::max(worst_v, std::abs(binomial_z(pos_v[p], kTrials, 0.1)));
    worst_a = std::max(worst_a, std::abs(binomial_z(pos_a[p], kTrials, 0.1)));
  }
  CHECK(worst_v <= 4.0);
  CHECK(worst_a <= 4.0);
  const auto two = chi_square_two_sample(size_v, size_a);
  CHECK(two.p_value >= 1e-3);
  CHECK(two.dof > 5);
  const auto law = poisson_binomial(std::vector<double>(100, 0.1));
  CHECK(chi_square_goodness(size_a, law, kTrials).p_value >= 1e-3);
}

TEST_CASE("singleton instance inclusion frequency") {
  constexpr int kTrials = 100000;
  Rng rng(77);
  int hits = 0;
  const auto inst = make_uniform_instance(1, 0.3);
  for (int t = 0; t < kTrials; ++t) hits += static_cast<int>(uss_advanced(inst, [](u128 p) { return p; }, rng).size());
  CHECK(std::abs(binomial_z(hits, kTrials, 0.3)) <= 4.0);
}

namespace {

SubInstanceSpec<int> spec_over(std::vector<double> weights, double p_upper, int offset = 0) {
  SubInstanceSpec<int> s;
  s.size = weights.size();
  s.p_upper = p_upper;
  s.access = [offset](u128 pos) { return std::optional<int>(offset + static_cast<int>(pos) - 1); };
  s.weight_of = [weights, offset](const int& e) { return weights[e - offset]; };
  return s;
}

}  // namespace

TEST_CASE("rejection sampler edge cases") {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    CHECK(ss_rejected(spec_over({1.0}, 1.0), rng) == std::vector<int>{0});
    CHECK(ss_rejected(spec_over({0.0}, 1.0), rng).empty());
  }
  CHECK_THROWS_AS(rejection_keep(0.9, 0.5, rng), ContractViolation);
  CHECK_THROWS_AS(ss_rejected(spec_over(std::vector<double>(64, 0.9), 0.5), rng), ContractViolation);
}

TEST_CASE("rejection sampler frequencies") {
  constexpr int kTrials = 100000;
  std::vector<double> weights(50);
  for (int i = 0; i < 50; ++i) weights[i] = 0.25 + 0.25 * (i + 1) / 50.0;
  const auto spec = spec_over(weights, 0.5);
  std::vector<double> hits(50, 0);
  Rng rng(31);
  for (int t = 0; t < kTrials; ++t)
    for (int e : ss_rejected(spec, rng)) hits[e] += 1;
  double worst = 0;
  for (int i = 0; i < 50; ++i) worst = std::max(worst, std::abs(binomial_z(hits[i], kTrials, weights[i])));
  CHECK(worst <= 4.0);
}

TEST_CASE("meta index nonempty probabilities") {
  CHECK(build_meta_index<int>({spec_over({1.0}, 1.0)}).q == std::vector<double>{1.0});
  CHECK(build_meta_index<int>({spec_over({0.5, 0.5}, 0.5)}).q[0] == doctest::Approx(0.75));
  const auto meta = build_meta_index<int>({spec_over({0.5, 0.5, 0.5}, 0.5), spec_over({}, 0.5)});
  CHECK(meta.q[0] == doctest::Approx(0.875));
  CHECK(meta.q[1] == 0.0);
}

TEST_CASE("batched sampler edge cases") {
  Rng rng(4);
  const auto one = build_meta_index<int>({spec_over({1.0}, 1.0)});
  const auto zero = build_meta_index<int>({spec_over({0.0, 0.0}, 0.0), spec_over({0.0}, 0.0)});
  for (int t = 0; t < 100; ++t) {
    CHECK(ss_rejected_batch(one, rng) == std::vector<int>{0});
    CHECK(ss_rejected_batch(zero, rng).empty());
  }
}

TEST_CASE("batched sampler over four sub-instances") {
  constexpr int kTrials = 100000;
  std::vector<double> weights(40);
  std::vector<SubInstanceSpec<int>> specs;
  for (int b = 0; b < 4; ++b) {
    const double upper = std::ldexp(1.0, -b);
    std::vector<double> part;
    for (int i = 0; i < 10; ++i) {
      weights[b * 10 + i] = upper * (0.55 + 0.045 * i);
      part.push_back(weights[b * 10 + i]);
    }
    specs.push_back(spec_over(part, upper, b * 10));
  }
  const auto meta = build_meta_index(specs);
  FrequencyAccumulator acc(weights);
  std::vector<double> fired(4, 0);
  Rng rng(555);
  for (int t = 0; t < kTrials; ++t) {
    const auto sample = ss_rejected_batch(meta, rng);
    acc.add_trial(std::vector<std::size_t>(sample.begin(), sample.end()));
  }
  const auto report = acc.report();
  CHECK(report.max_abs_z <= 4.0);
  CHECK(report.max_abs_correlation < 0.02);
  CHECK(report.size_ok());

  // Stage-1 frequency: a sub-instance contributes an intermediate element
  // exactly when its coin fires.
  Rng coins(777);
  for (int t = 0; t < kTrials; ++t) {
    std::set<std::size_t> hit;
    for (const auto& d : draw_batch_positions(meta, coins)) hit.insert(d.instance);
    for (auto i : hit) fired[i] += 1;
  }
  CHECK(meta.q[0] == 1.0);
  CHECK(fired[0] == kTrials);
  for (int i = 1; i < 4; ++i) CHECK(std::abs(binomial_z(fired[i], kTrials, meta.q[i])) <= 4.0);
}

TEST_CASE("batched sampler counts dummies") {
  SubInstanceSpec<int> s;
  s.size = 10;
  s.p_upper = 1.0;
  s.access = [](u128 pos) { return pos % 2 == 0 ? std::optional<int>(static_cast<int>(pos)) : std::nullopt; };
  s.weight_of = [](const int&) { return 1.0; };
  Rng rng(8);
  BatchStats stats;
  const auto out = ss_rejected_batch(build_meta_index<int>({s}), rng, &stats);
  CHECK(out == std::vector<int>{2, 4, 6, 8, 10});
  CHECK(stats.accesses == 10);
  CHECK(stats.dummies == 5);
  CHECK(stats.accepted == 5);
}
