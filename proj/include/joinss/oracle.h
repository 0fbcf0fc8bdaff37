// include/joinss/oracle.h
//
// Brute-force ground truth and the statistics used to judge samplers: naive
// Bernoulli sampling over materialized results, bucket enumeration, per-result
// z-scores, a chi-square test of the sample-size law and pairwise indicator
// correlations.

#pragma once

#include <cstddef>
#include <vector>

#include "joinss/relation.h"
#include "joinss/rng.h"
#include "joinss/score.h"

namespace joinss {

// Includes each result independently with its probability.
std::vector<JoinResult> naive_subset_sample(const std::vector<JoinResult>& results, Rng& rng);

// Stable filter by score; score == L selects the tail.
std::vector<JoinResult> enumerate_bucket(const std::vector<JoinResult>& results, int score, const Aggregator& agg);

// Law of the number of successes among independent Bernoulli(p_i).
std::vector<double> poisson_binomial(const std::vector<double>& probs);

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Goodness of fit of observed counts against a probability law over the same
// bins. Adjacent bins are merged until each expected count is at least 5.
ChiSquare chi_square_goodness(const std::vector<double>& observed, const std::vector<double>& law, double trials);

// Homogeneity test of two count histograms; sparse bins are merged.
ChiSquare chi_square_two_sample(const std::vector<double>& a, const std::vector<double>& b);

struct ResultFrequency {
  double expected = 0.0;
  u64 observed = 0;
  double z = 0.0;
  bool exact = false;   // expected in {0,1}: checked exactly, no z-score
  bool failed = false;  // exact check violated
};

struct FrequencyThresholds {
  double max_abs_z = 4.0;
  double alpha = 1e-3;
  double max_abs_correlation = 0.02;
};

struct FrequencyReport {
  u64 trials = 0;
  std::vector<ResultFrequency> results;
  ChiSquare size_test;
  double max_abs_z = 0.0;
  std::size_t exact_failures = 0;
  bool correlations_tracked = false;
  double max_abs_correlation = 0.0;
  double mean_size = 0.0;
  double expected_mean = 0.0;
  FrequencyThresholds thresholds;

  double relative_mean_error() const;
  bool z_ok() const { return exact_failures == 0 && max_abs_z <= thresholds.max_abs_z; }
  bool size_ok() const { return size_test.p_value >= thresholds.alpha; }
  bool correlation_ok() const {
    return !correlations_tracked || max_abs_correlation < thresholds.max_abs_correlation;
  }
  bool passed() const { return z_ok() && size_ok() && correlation_ok(); }
};

// Streams trials (index sets into the expected list) and summarizes them.
class FrequencyAccumulator {
 public:
  // Pairwise co-occurrence counts are kept when there are at most pair_limit
  // results.
  explicit FrequencyAccumulator(std::vector<double> expected, std::size_t pair_limit = 2000);

  // Throws InvalidArgument on an out-of-range or repeated index.
  void add_trial(const std::vector<std::size_t>& included);
  u64 trials() const { return trials_; }
  const std::vector<u64>& counts() const { return counts_; }
  const std::vector<double>& size_histogram() const { return sizes_; }

  FrequencyReport report(FrequencyThresholds thresholds = {}) const;

 private:
  std::vector<double> expected_;
  std::vector<u64> counts_;
  std::vector<double> sizes_;
  bool track_pairs_;
  std::vector<u64> pairs_;  // upper triangle, row-major
  u64 trials_ = 0;
  std::vector<unsigned char> seen_;
};

FrequencyReport compare_frequencies(const std::vector<std::vector<std::size_t>>& trials,
                                    const std::vector<double>& expected, FrequencyThresholds thresholds = {});

}  // namespace joinss
