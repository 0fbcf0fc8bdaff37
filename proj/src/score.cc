// src/score.cc

#include "joinss/score.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace joinss {

std::string to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::kProduct: return "product";
    case AggregatorKind::kMin: return "min";
    case AggregatorKind::kMax: return "max";
    case AggregatorKind::kSum: return "sum";
  }
  return "?";
}

AggregatorKind parse_aggregator(const std::string& name) {
  if (name == "product") return AggregatorKind::kProduct;
  if (name == "min") return AggregatorKind::kMin;
  if (name == "max") return AggregatorKind::kMax;
  if (name == "sum") return AggregatorKind::kSum;
  throw InvalidArgument("unknown aggregator '" + name + "' (expected product|min|max|sum)");
}

int tuple_score(double p, int L) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidProbability("probability outside [0,1]: " + std::to_string(p));
  if (p == 0.0) return L;
  int exp = 0;
  const double mantissa = std::frexp(p, &exp);  // p = mantissa * 2^exp, mantissa in [0.5, 1)
  // p == 2^(exp-1) exactly sits on the closed upper end of bucket 1-exp.
  const long score = mantissa == 0.5 ? 1L - exp : -static_cast<long>(exp);
  return score >= L ? L : static_cast<int>(score);
}

Aggregator::Aggregator(AggregatorKind kind, int L, int k) : kind_(kind), L_(L), k_(k) {
  if (L < 1) throw InvalidArgument("L must be positive");
  if (k < 1) throw InvalidArgument("aggregator needs at least one relation");
}

double Aggregator::probability(std::span<const double> weights) const {
  switch (kind_) {
    case AggregatorKind::kProduct: {
      double p = 1.0;
      for (double w : weights) p *= w;
      return p;
    }
    case AggregatorKind::kMin: return weights.empty() ? 0.0 : *std::min_element(weights.begin(), weights.end());
    case AggregatorKind::kMax: return weights.empty() ? 0.0 : *std::max_element(weights.begin(), weights.end());
    case AggregatorKind::kSum: {
      double s = 0.0;
      for (double w : weights) s += w;
      return std::min(1.0, s);
    }
  }
  return 0.0;
}

double Aggregator::bucket_upper(int score) const {
  const int s = std::min(score, L_);
  if (kind_ == AggregatorKind::kSum) return std::min(1.0, std::ldexp(static_cast<double>(k_), -s));
  return std::ldexp(1.0, -s);
}

double Aggregator::bucket_lower(int score) const {
  if (kind_ == AggregatorKind::kProduct) return std::ldexp(1.0, -score - k_);
  return std::ldexp(1.0, -score - 1);
}

double Aggregator::uniformity_ratio() const {
  switch (kind_) {
    case AggregatorKind::kProduct: return std::ldexp(1.0, k_);
    case AggregatorKind::kMin:
    case AggregatorKind::kMax: return 2.0;
    case AggregatorKind::kSum: return 2.0 * k_;
  }
  return 1.0;
}

int result_score(std::span<const int> component_scores, const Aggregator& agg) {
  if (component_scores.empty()) throw InvalidArgument("result_score needs at least one component");
  int s = agg.identity();
  for (int c : component_scores) s = agg.combine(s, std::min(c, agg.L()));
  return s;
}

SubInstanceClass classify_subinstance(std::span<const int> bucket_indices, int L, AggregatorKind kind) {
  SubInstanceClass out;
  if (bucket_indices.empty()) return out;
  const int k = static_cast<int>(bucket_indices.size());
  const auto [lo, hi] = std::minmax_element(bucket_indices.begin(), bucket_indices.end());
  switch (kind) {
    case AggregatorKind::kProduct: {
      long sum = 0;
      for (int j : bucket_indices) sum += j;
      out.light = sum >= L;
      out.beta = std::ldexp(1.0, k);
      break;
    }
    case AggregatorKind::kMin:
      out.light = *hi >= L;
      out.beta = 2.0;
      break;
    case AggregatorKind::kMax:
      out.light = *lo >= L;
      out.beta = 2.0;
      break;
    case AggregatorKind::kSum:
      out.light = *lo >= L;
      out.beta = 2.0 * k;
      break;
  }
  if (out.light) out.beta = 1.0;
  return out;
}

int min_edge_cover(const std::vector<std::vector<std::string>>& schemas) {
  const std::size_t k = schemas.size();
  if (k == 0) return 0;
  if (k > 20) throw InvalidArgument("edge cover search supports at most 20 relations");
  std::set<std::string> all;
  for (const auto& s : schemas) all.insert(s.begin(), s.end());
  std::vector<std::string> attrs(all.begin(), all.end());
  std::vector<u64> masks(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    for (const auto& a : schemas[i]) {
      const auto pos = std::lower_bound(attrs.begin(), attrs.end(), a) - attrs.begin();
      masks[i] |= u64{1} << pos;
    }
  }
  if (attrs.size() > 64) throw InvalidArgument("edge cover search supports at most 64 attributes");
  const u64 full = attrs.size() == 64 ? ~u64{0} : (u64{1} << attrs.size()) - 1;
  int best = static_cast<int>(k);
  for (u64 subset = 1; subset < (u64{1} << k); ++subset) {
    const int count = __builtin_popcountll(subset);
    if (count >= best) continue;
    u64 covered = 0;
    for (std::size_t i = 0; i < k; ++i)
      if (subset >> i & 1) covered |= masks[i];
    if (covered == full) best = count;
  }
  return best;
}

ScoreParams compute_score_params(const std::vector<std::vector<std::string>>& schemas, u64 n,
                                 std::optional<int> L_override) {
  ScoreParams params;
  params.n = n;
  params.rho = std::max(1, min_edge_cover(schemas));
  const double log_bound = n > 1 ? params.rho * std::log2(static_cast<double>(n)) : 0.0;
  if (log_bound >= 127.0) throw CapacityError("join size bound N^rho exceeds 2^127");
  if (L_override) {
    if (*L_override < 1) throw InvalidArgument("L override must be positive");
    params.L = *L_override;
  } else {
    params.L = std::max(1, static_cast<int>(std::ceil(2.0 * log_bound)));
  }
  return params;
}

}  // namespace joinss
