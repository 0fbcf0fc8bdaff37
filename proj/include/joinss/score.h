// include/joinss/score.h
//
// Scores and aggregators.
//
// A tuple with probability p has score floor(-log2 p). Scores live in [0, L]
// where L is the tail slot: every score >= L (and every p == 0) collapses onto
// L. A join result's score folds the component scores with the aggregator's
// combiner, which saturates at L.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "joinss/types.h"

namespace joinss {

enum class AggregatorKind { kProduct, kMin, kMax, kSum };

std::string to_string(AggregatorKind kind);
AggregatorKind parse_aggregator(const std::string& name);

// Exact floor(-log2 p) read from the IEEE-754 exponent, capped at L.
// p == 0 maps to L. Throws InvalidProbability outside [0,1].
int tuple_score(double p, int L);

class Aggregator {
 public:
  Aggregator(AggregatorKind kind, int L, int k);

  AggregatorKind kind() const { return kind_; }
  int L() const { return L_; }
  int k() const { return k_; }
  bool is_tail(int score) const { return score >= L_; }

  // Combines two scores in [0, L]. PRODUCT adds, MIN takes the larger score,
  // MAX and SUM take the smaller score.
  int combine(int a, int b) const {
    switch (kind_) {
      case AggregatorKind::kProduct: return a + b >= L_ ? L_ : a + b;
      case AggregatorKind::kMin: return a > b ? a : b;
      case AggregatorKind::kMax:
      case AggregatorKind::kSum: return a < b ? a : b;
    }
    return L_;
  }

  // Neutral element of combine: score of the empty fragment.
  int identity() const { return combines_by_min() ? L_ : 0; }
  bool combines_by_min() const { return kind_ == AggregatorKind::kMax || kind_ == AggregatorKind::kSum; }

  // F applied to component probabilities; SUM is capped at 1.
  double probability(std::span<const double> weights) const;

  // Upper bound on p(u) over results with this score (score == L: tail).
  double bucket_upper(int score) const;
  // Strict lower bound on p(u) over results with a non-tail score.
  double bucket_lower(int score) const;
  // max/min probability ratio inside a non-tail bucket.
  double uniformity_ratio() const;

 private:
  AggregatorKind kind_;
  int L_;
  int k_;
};

// Folds component scores; throws InvalidArgument on an empty list.
int result_score(std::span<const int> component_scores, const Aggregator& agg);

struct SubInstanceClass {
  bool light = false;
  double beta = 1.0;  // uniformity ratio when not light
};

// Classifies the sub-join picked by one bucket index per relation.
SubInstanceClass classify_subinstance(std::span<const int> bucket_indices, int L, AggregatorKind kind);

struct ScoreParams {
  int L = 1;
  int rho = 1;
  u64 n = 0;
};

// Size of a minimum integral edge cover of the schema hypergraph
// (exhaustive search; at most 20 relations).
int min_edge_cover(const std::vector<std::vector<std::string>>& schemas);

// L = ceil(2 * rho * log2 n), at least 1, unless overridden.
ScoreParams compute_score_params(const std::vector<std::vector<std::string>>& schemas, u64 n,
                                 std::optional<int> L_override = std::nullopt);

}  // namespace joinss
