// src/sampling.cc

#include "joinss/sampling.h"

#include <atomic>
#include <cmath>
#include <string>

#include "joinss/log.h"

namespace joinss {

double sanitize_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidProbability("probability outside [0,1]: " + std::to_string(p));
  if (p > 0.0 && p < kMinProbability) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) log().warn("probability {} below 2^-1000 clamped to 0", p);
    return 0.0;
  }
  return p;
}

u128 geometric_from_uniform(double p, double u) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidProbability("geometric parameter must lie in (0,1]: " + std::to_string(p));
  if (p == 1.0) return 0;
  return u128_from_double(std::floor(std::log(u) / std::log1p(-p)));
}

u128 sample_geometric(Rng& rng, double p) { return geometric_from_uniform(p, rng.uniform()); }

double nonempty_probability(double p, u128 n) {
  if (n == 0 || p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  return -std::expm1(to_double(n) * std::log1p(-p));
}

u128 truncated_geometric_from_uniform(double p, u128 n, double u) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidProbability("geometric parameter must lie in (0,1]: " + std::to_string(p));
  if (n == 0) throw InvalidArgument("truncated geometric needs n >= 1");
  if (p == 1.0 || n == 1) return 0;
  const double q = nonempty_probability(p, n);
  const u128 x = u128_from_double(std::floor(std::log1p(-q * u) / std::log1p(-p)));
  return x < n ? x : n - 1;
}

u128 sample_truncated_geometric(Rng& rng, double p, u128 n) {
  return truncated_geometric_from_uniform(p, n, rng.uniform());
}

UniformInstance make_uniform_instance(u128 size, double p) {
  UniformInstance inst;
  inst.size = size;
  inst.p = sanitize_probability(p);
  inst.nonempty_prob = nonempty_probability(inst.p, size);
  return inst;
}

void draw_positions_given_nonempty(u128 size, double p, Rng& rng, std::vector<u128>& out) {
  u128 i = detail::saturating_add(1, sample_truncated_geometric(rng, p, size));
  out.push_back(i);
  while (i < size) {
    i = detail::saturating_add(i, detail::saturating_add(1, sample_geometric(rng, p)));
    if (i <= size) out.push_back(i);
  }
}

std::vector<BatchDraw> draw_batch_positions(const std::vector<u128>& sizes, const std::vector<double>& p_upper,
                                            const std::vector<double>& q, Rng& rng) {
  std::vector<BatchDraw> draws;
  std::vector<u128> positions;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    // One coin per sub-instance; the number of sub-instances is O(log N).
    if (sizes[i] == 0 || p_upper[i] <= 0.0) continue;
    if (!(rng.uniform() <= q[i])) continue;
    positions.clear();
    draw_positions_given_nonempty(sizes[i], p_upper[i], rng, positions);
    for (u128 pos : positions) draws.push_back({i, pos});
  }
  return draws;
}

bool rejection_keep(double weight, double p_upper, Rng& rng) {
  if (weight > p_upper) {
    throw ContractViolation("element probability " + std::to_string(weight) + " exceeds sub-instance bound " +
                            std::to_string(p_upper));
  }
  const double u = rng.uniform();
  return weight > 0.0 && u * p_upper < weight;
}

}  // namespace joinss
