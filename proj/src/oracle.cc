// src/oracle.cc

#include "joinss/oracle.h"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

namespace joinss {

std::vector<JoinResult> naive_subset_sample(const std::vector<JoinResult>& results, Rng& rng) {
  std::vector<JoinResult> out;
  for (const auto& r : results)
    if (rng.bernoulli(r.probability)) out.push_back(r);
  return out;
}

std::vector<JoinResult> enumerate_bucket(const std::vector<JoinResult>& results, int score, const Aggregator& agg) {
  std::vector<JoinResult> out;
  const int target = std::min(score, agg.L());
  std::copy_if(results.begin(), results.end(), std::back_inserter(out),
               [&](const JoinResult& r) { return std::min(r.score, agg.L()) == target; });
  return out;
}

std::vector<double> poisson_binomial(const std::vector<double>& probs) {
  std::vector<double> law{1.0};
  law.reserve(probs.size() + 1);
  for (double p : probs) {
    law.push_back(0.0);
    for (std::size_t s = law.size() - 1; s > 0; --s) law[s] = law[s] * (1.0 - p) + law[s - 1] * p;
    law[0] *= 1.0 - p;
  }
  return law;
}

namespace {

double chi_square_tail(double statistic, int dof) {
  if (dof <= 0) return 1.0;
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, std::max(0.0, statistic)));
}

}  // namespace

ChiSquare chi_square_goodness(const std::vector<double>& observed, const std::vector<double>& law, double trials) {
  const std::size_t n = std::max(observed.size(), law.size());
  std::vector<double> obs_bins, exp_bins;
  double obs_acc = 0.0, exp_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    obs_acc += i < observed.size() ? observed[i] : 0.0;
    exp_acc += i < law.size() ? law[i] * trials : 0.0;
    if (exp_acc >= 5.0) {
      obs_bins.push_back(obs_acc);
      exp_bins.push_back(exp_acc);
      obs_acc = exp_acc = 0.0;
    }
  }
  if (obs_acc > 0.0 || exp_acc > 0.0) {
    if (exp_bins.empty()) {
      obs_bins.push_back(obs_acc);
      exp_bins.push_back(exp_acc);
    } else {
      obs_bins.back() += obs_acc;
      exp_bins.back() += exp_acc;
    }
  }
  ChiSquare out;
  for (std::size_t b = 0; b < exp_bins.size(); ++b) {
    if (exp_bins[b] <= 0.0) {
      if (obs_bins[b] > 0.0) out.statistic = INFINITY;
      continue;
    }
    const double d = obs_bins[b] - exp_bins[b];
    out.statistic += d * d / exp_bins[b];
  }
  out.dof = static_cast<int>(exp_bins.size()) - 1;
  out.p_value = std::isinf(out.statistic) ? 0.0 : chi_square_tail(out.statistic, out.dof);
  return out;
}

ChiSquare chi_square_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::max(a.size(), b.size());
  double total_a = 0.0, total_b = 0.0;
  for (double x : a) total_a += x;
  for (double x : b) total_b += x;
  ChiSquare out;
  if (total_a <= 0.0 || total_b <= 0.0) return out;
  std::vector<std::pair<double, double>> bins;
  double acc_a = 0.0, acc_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc_a += i < a.size() ? a[i] : 0.0;
    acc_b += i < b.size() ? b[i] : 0.0;
    if (acc_a + acc_b >= 10.0) {
      bins.emplace_back(acc_a, acc_b);
      acc_a = acc_b = 0.0;
    }
  }
  if (acc_a + acc_b > 0.0) {
    if (bins.empty()) {
      bins.emplace_back(acc_a, acc_b);
    } else {
      bins.back().first += acc_a;
      bins.back().second += acc_b;
    }
  }
  const double total = total_a + total_b;
  for (const auto& [x, y] : bins) {
    const double ea = total_a * (x + y) / total;
    const double eb = total_b * (x + y) / total;
    out.statistic += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
  }
  out.dof = static_cast<int>(bins.size()) - 1;
  out.p_value = chi_square_tail(out.statistic, out.dof);
  return out;
}

double FrequencyReport::relative_mean_error() const {
  if (expected_mean == 0.0) return mean_size == 0.0 ? 0.0 : INFINITY;
  return std::abs(mean_size - expected_mean) / expected_mean;
}

FrequencyAccumulator::FrequencyAccumulator(std::vector<double> expected, std::size_t pair_limit)
    : expected_(std::move(expected)),
      counts_(expected_.size(), 0),
      sizes_(expected_.size() + 1, 0.0),
      track_pairs_(expected_.size() <= pair_limit),
      seen_(expected_.size(), 0) {
  if (expected_.empty()) throw InvalidArgument("frequency comparison needs at least one expected result");
  if (track_pairs_) pairs_.assign(expected_.size() * (expected_.size() + 1) / 2, 0);
}

void FrequencyAccumulator::add_trial(const std::vector<std::size_t>& included) {
  const std::size_t n = expected_.size();
  for (std::size_t idx : included) {
    if (idx >= n) throw InvalidArgument("sampled result not in the expected set");
    if (seen_[idx]) {
      for (std::size_t j : included) seen_[j] = 0;
      throw InvalidArgument("sample contains a result twice");
    }
    seen_[idx] = 1;
  }
  for (std::size_t idx : included) {
    seen_[idx] = 0;
    ++counts_[idx];
  }
  sizes_[included.size()] += 1.0;
  if (track_pairs_) {
    std::vector<std::size_t> sorted(included);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t x = 0; x < sorted.size(); ++x)
      for (std::size_t y = x + 1; y < sorted.size(); ++y) {
        const std::size_t a = sorted[x], b = sorted[y];
        ++pairs_[a * n - a * (a + 1) / 2 + b];
      }
  }
  ++trials_;
}

FrequencyReport FrequencyAccumulator::report(FrequencyThresholds thresholds) const {
  FrequencyReport rep;
  rep.thresholds = thresholds;
  rep.trials = trials_;
  const double T = static_cast<double>(trials_);
  const std::size_t n = expected_.size();
  rep.results.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rep.results[i];
    r.expected = expected_[i];
    r.observed = counts_[i];
    rep.expected_mean += r.expected;
    rep.mean_size += static_cast<double>(r.observed);
    if (r.expected <= 0.0 || r.expected >= 1.0) {
      r.exact = true;
      r.failed = r.expected <= 0.0 ? r.observed != 0 : r.observed != trials_;
      rep.exact_failures += r.failed;
      continue;
    }
    r.z = (static_cast<double>(r.observed) - T * r.expected) / std::sqrt(T * r.expected * (1.0 - r.expected));
    rep.max_abs_z = std::max(rep.max_abs_z, std::abs(r.z));
  }
  if (trials_ > 0) rep.mean_size /= T;
  rep.size_test = chi_square_goodness(sizes_, poisson_binomial(expected_), T);

  rep.correlations_tracked = track_pairs_ && trials_ > 0;
  if (rep.correlations_tracked) {
    for (std::size_t a = 0; a < n; ++a) {
      const double pa = static_cast<double>(counts_[a]) / T;
      const double va = pa * (1.0 - pa);
      if (va <= 0.0) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        const double pb = static_cast<double>(counts_[b]) / T;
        const double vb = pb * (1.0 - pb);
        if (vb <= 0.0) continue;
        const double pab = static_cast<double>(pairs_[a * n - a * (a + 1) / 2 + b]) / T;
        const double r = (pab - pa * pb) / std::sqrt(va * vb);
        rep.max_abs_correlation = std::max(rep.max_abs_correlation, std::abs(r));
      }
    }
  }
  return rep;
}

FrequencyReport compare_frequencies(const std::vector<std::vector<std::size_t>>& trials,
                                    const std::vector<double>& expected, FrequencyThresholds thresholds) {
  FrequencyAccumulator acc(expected);
  for (const auto& t : trials) acc.add_trial(t);
  return acc.report(thresholds);
}

}  // namespace joinss
