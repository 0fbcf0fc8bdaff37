// include/joinss/convolution.h
//
// Score-histogram convolution.
//
// A histogram has L+1 slots; slot L holds every score >= L. convolve computes
//   out[combine(shift, combine(l1, l2))] += a[l1] * b[l2]
// over all pairs, in exact 128-bit arithmetic. For PRODUCT this is the
// additive convolution shifted by `shift` and saturated at L.

#pragma once

#include <complex>
#include <vector>

#include "joinss/score.h"
#include "joinss/types.h"

namespace joinss {

using Histogram = std::vector<u128>;

enum class ConvolutionMode {
  kExact,  // schoolbook over nonzero entries
  kFast,   // FFT over 16-bit limbs (PRODUCT) or prefix/suffix sums (other combiners)
};

Histogram convolve_exact(const Histogram& a, const Histogram& b, int shift, const Aggregator& agg);
Histogram convolve_fast(const Histogram& a, const Histogram& b, int shift, const Aggregator& agg);
Histogram convolve(const Histogram& a, const Histogram& b, int shift, const Aggregator& agg,
                   ConvolutionMode mode = ConvolutionMode::kExact);

// Histogram of length L+1 with a single 1 at `slot`.
Histogram indicator(int slot, int L);

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& data, bool inverse);

}  // namespace joinss
