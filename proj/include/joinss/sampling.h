// include/joinss/sampling.h
//
// Classic subset-sampling primitives over an element-access oracle:
// geometric jumps, the perfect-uniform samplers, rejection wrappers and the
// batched two-stage sampler over disjoint sub-instances.
//
// Positions handed to access oracles are 1-based.

#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "joinss/rng.h"
#include "joinss/types.h"

namespace joinss {

// Probabilities strictly below this are treated as zero.
inline constexpr double kMinProbability = 0x1p-1000;

// Maps p < 2^-1000 to 0 (logging a warning once); throws on p outside [0,1].
double sanitize_probability(double p);

// floor(log(u) / log(1 - p)) for u in (0,1); 0 when p == 1. Saturates at 2^128-1.
u128 geometric_from_uniform(double p, double u);
u128 sample_geometric(Rng& rng, double p);

// floor(log(1 - q*u) / log(1 - p)) with q = 1 - (1-p)^n, clamped into [0, n-1].
u128 truncated_geometric_from_uniform(double p, u128 n, double u);
u128 sample_truncated_geometric(Rng& rng, double p, u128 n);

// 1 - (1-p)^n.
double nonempty_probability(double p, u128 n);

struct UniformInstance {
  u128 size = 0;
  double p = 0.0;
  double nonempty_prob = 0.0;
};

UniformInstance make_uniform_instance(u128 size, double p);

// Positions of a perfect-uniform sample conditioned on being nonempty:
// truncated first jump, then ordinary geometric jumps.
void draw_positions_given_nonempty(u128 size, double p, Rng& rng, std::vector<u128>& out);

namespace detail {
inline u128 saturating_add(u128 a, u128 b) {
  u128 out;
  return __builtin_add_overflow(a, b, &out) ? kU128Max : out;
}
}  // namespace detail

// Geometric-jump sampler. Calls access only on included positions.
template <typename Access>
auto uss_vanilla(const UniformInstance& inst, Access&& access, Rng& rng)
    -> std::vector<decltype(access(u128{1}))> {
  std::vector<decltype(access(u128{1}))> out;
  if (inst.size == 0 || inst.p <= 0.0) return out;
  u128 i = 0;
  while (i < inst.size) {
    i = detail::saturating_add(i, detail::saturating_add(1, sample_geometric(rng, inst.p)));
    if (i <= inst.size) out.push_back(access(i));
  }
  return out;
}

// Flips the nonempty coin first, then runs the conditioned jumps.
template <typename Access>
auto uss_advanced(const UniformInstance& inst, Access&& access, Rng& rng)
    -> std::vector<decltype(access(u128{1}))> {
  std::vector<decltype(access(u128{1}))> out;
  if (inst.size == 0 || inst.p <= 0.0) return out;
  if (!(rng.uniform() <= inst.nonempty_prob)) return out;
  std::vector<u128> positions;
  draw_positions_given_nonempty(inst.size, inst.p, rng, positions);
  out.reserve(positions.size());
  for (u128 pos : positions) out.push_back(access(pos));
  return out;
}

// One sub-instance of a partitioned subset-sampling problem. access returns
// std::nullopt for a dummy position (always rejected).
template <typename E>
struct SubInstanceSpec {
  u128 size = 0;
  double p_upper = 0.0;
  std::function<std::optional<E>(u128)> access;
  std::function<double(const E&)> weight_of;
};

template <typename E>
struct MetaIndex {
  std::vector<SubInstanceSpec<E>> specs;
  std::vector<double> q;
};

template <typename E>
MetaIndex<E> build_meta_index(std::vector<SubInstanceSpec<E>> specs) {
  MetaIndex<E> meta;
  meta.q.reserve(specs.size());
  for (auto& s : specs) {
    s.p_upper = sanitize_probability(s.p_upper);
    meta.q.push_back(nonempty_probability(s.p_upper, s.size));
  }
  meta.specs = std::move(specs);
  return meta;
}

struct BatchDraw {
  std::size_t instance = 0;
  u128 position = 0;
};

// Stage 1 and 2 of the batched sampler: one coin per sub-instance with
// probability q[i], then conditioned jumps inside every selected one.
std::vector<BatchDraw> draw_batch_positions(const std::vector<u128>& sizes, const std::vector<double>& p_upper,
                                            const std::vector<double>& q, Rng& rng);

template <typename E>
std::vector<BatchDraw> draw_batch_positions(const MetaIndex<E>& meta, Rng& rng) {
  std::vector<u128> sizes;
  std::vector<double> p_upper;
  sizes.reserve(meta.specs.size());
  p_upper.reserve(meta.specs.size());
  for (const auto& s : meta.specs) {
    sizes.push_back(s.size);
    p_upper.push_back(s.p_upper);
  }
  return draw_batch_positions(sizes, p_upper, meta.q, rng);
}

// Keeps e with probability weight/p_upper, consuming exactly one uniform draw.
bool rejection_keep(double weight, double p_upper, Rng& rng);

// Independent position and rejection streams split off a query stream.
struct QueryStreams {
  Rng positions;
  Rng rejection;
};

inline QueryStreams split_query_streams(Rng& rng) {
  Rng positions(Rng::mix(rng.next_u64()));
  Rng rejection(Rng::mix(rng.next_u64()));
  return {positions, rejection};
}

// Counters reported by the batched samplers.
struct BatchStats {
  std::size_t accesses = 0;
  std::size_t dummies = 0;
  std::size_t accepted = 0;
};

// Two-stage sampler over disjoint sub-instances. The position stream and the
// rejection stream are split off rng so that callers resolving positions in a
// different order (batched access) reproduce the same sample.
template <typename E>
std::vector<E> ss_rejected_batch(const MetaIndex<E>& meta, Rng& rng, BatchStats* stats = nullptr) {
  auto [positions, rejection] = split_query_streams(rng);
  const auto draws = draw_batch_positions(meta, positions);
  std::vector<E> out;
  for (const auto& d : draws) {
    const auto& spec = meta.specs[d.instance];
    std::optional<E> e = spec.access(d.position);
    if (stats) ++stats->accesses;
    if (!e) {
      if (stats) ++stats->dummies;
      continue;
    }
    const double w = spec.weight_of(*e);
    if (rejection_keep(w, spec.p_upper, rejection)) {
      out.push_back(std::move(*e));
      if (stats) ++stats->accepted;
    }
  }
  return out;
}

// Rejection sampler for a single sub-instance bounded by p_upper.
template <typename E>
std::vector<E> ss_rejected(const SubInstanceSpec<E>& spec, Rng& rng) {
  std::vector<SubInstanceSpec<E>> one{spec};
  return ss_rejected_batch(build_meta_index(std::move(one)), rng);
}

}  // namespace joinss
