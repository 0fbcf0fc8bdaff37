// src/convolution.cc

#include "joinss/convolution.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace joinss {

namespace {

void check_inputs(const Histogram& a, const Histogram& b, int shift, const Aggregator& agg) {
  const std::size_t len = static_cast<std::size_t>(agg.L()) + 1;
  if (a.size() != len || b.size() != len)
    throw InvalidArgument("convolve: histograms must have L+1 = " + std::to_string(len) + " slots");
  if (shift < 0 || shift > agg.L()) throw InvalidArgument("convolve: shift outside [0, L]");
}

constexpr int kLimbBits = 16;
constexpr u64 kLimbMask = (u64{1} << kLimbBits) - 1;

int limb_count(const Histogram& h) {
  int bits = 0;
  for (u128 x : h) bits = std::max(bits, bit_width(x));
  return std::max(1, (bits + kLimbBits - 1) / kLimbBits);
}

u128 shifted_checked(u128 value, int shift_bits) {
  if (value == 0) return 0;
  if (bit_width(value) + shift_bits > 128) throw CapacityError("128-bit counter overflow in convolution");
  return value << shift_bits;
}

// Full linear convolution of a and b (length 2L+1) through limb-split FFTs.
std::vector<u128> linear_convolution_fft(const Histogram& a, const Histogram& b) {
  const std::size_t out_len = a.size() + b.size() - 1;
  std::size_t n = 1;
  while (n < out_len) n <<= 1;
  const int la = limb_count(a);
  const int lb = limb_count(b);

  auto transform_limbs = [n](const Histogram& h, int limbs) {
    std::vector<std::vector<std::complex<double>>> out(limbs, std::vector<std::complex<double>>(n));
    for (int p = 0; p < limbs; ++p) {
      for (std::size_t i = 0; i < h.size(); ++i)
        out[p][i] = static_cast<double>(static_cast<u64>(h[i] >> (p * kLimbBits)) & kLimbMask);
      fft(out[p], false);
    }
    return out;
  };
  const auto fa = transform_limbs(a, la);
  const auto fb = transform_limbs(b, lb);

  std::vector<u128> result(out_len, 0);
  std::vector<std::complex<double>> acc(n);
  for (int s = 0; s <= la + lb - 2; ++s) {
    std::fill(acc.begin(), acc.end(), std::complex<double>{});
    bool any = false;
    for (int p = std::max(0, s - (lb - 1)); p <= std::min(s, la - 1); ++p) {
      const int q = s - p;
      for (std::size_t i = 0; i < n; ++i) acc[i] += fa[p][i] * fb[q][i];
      any = true;
    }
    if (!any) continue;
    fft(acc, true);
    for (std::size_t m = 0; m < out_len; ++m) {
      const double x = acc[m].real();
      const double r = std::nearbyint(x);
      if (std::abs(x - r) > 0.25 || r < -0.5) throw Error("FFT convolution lost precision");
      const u128 term = shifted_checked(static_cast<u128>(static_cast<u64>(r)), s * kLimbBits);
      result[m] = checked_add(result[m], term);
    }
  }
  return result;
}

}  // namespace

Histogram indicator(int slot, int L) {
  Histogram h(static_cast<std::size_t>(L) + 1, 0);
  h[std::min(slot, L)] = 1;
  return h;
}

void fft(std::vector<std::complex<double>>& data, bool inverse) {
  const std::size_t n = data.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> step(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto x = data[i + k];
        const auto y = data[i + k + len / 2] * w;
        data[i + k] = x + y;
        data[i + k + len / 2] = x - y;
        w *= step;
      }
    }
  }
  if (inverse)
    for (auto& x : data) x /= static_cast<double>(n);
}

Histogram convolve_exact(const Histogram& a, const Histogram& b, int shift, const Aggregator& agg) {
  check_inputs(a, b, shift, agg);
  const int L = agg.L();
  Histogram out(a.size(), 0);
  for (int l1 = 0; l1 <= L; ++l1) {
    if (a[l1] == 0) continue;
    for (int l2 = 0; l2 <= L; ++l2) {
      if (b[l2] == 0) continue;
      const int slot = agg.combine(shift, agg.combine(l1, l2));
      out[slot] = checked_add(out[slot], checked_mul(a[l1], b[l2]));
    }
  }
  return out;
}

Histogram convolve_fast(const Histogram& a, const Histogram& b, int shift, const Aggregator& agg) {
  check_inputs(a, b, shift, agg);
  const int L = agg.L();
  Histogram out(a.size(), 0);
  if (agg.kind() == AggregatorKind::kProduct) {
    const auto full = linear_convolution_fft(a, b);
    for (std::size_t m = 0; m < full.size(); ++m) {
      if (full[m] == 0) continue;
      const int slot = agg.combine(shift, static_cast<int>(std::min<std::size_t>(m, L)));
      out[slot] = checked_add(out[slot], full[m]);
    }
    return out;
  }
  // combine is max (MIN) or min (MAX, SUM): pairs meeting at m split into
  // (m, below-or-at m) and (strictly below m, m), with "below" in the
  // combiner's order.
  const bool by_max = agg.kind() == AggregatorKind::kMin;
  std::vector<int> order(L + 1);
  for (int i = 0; i <= L; ++i) order[i] = by_max ? i : L - i;
  u128 sum_a = 0, sum_b = 0;
  for (int idx = 0; idx <= L; ++idx) {
    const int m = order[idx];
    // sum_a, sum_b hold the mass strictly before m.
    const u128 pairs = checked_add(checked_mul(a[m], checked_add(sum_b, b[m])), checked_mul(sum_a, b[m]));
    if (pairs != 0) {
      const int slot = agg.combine(shift, m);
      out[slot] = checked_add(out[slot], pairs);
    }
    sum_a = checked_add(sum_a, a[m]);
    sum_b = checked_add(sum_b, b[m]);
  }
  return out;
}

Histogram convolve(const Histogram& a, const Histogram& b, int shift, const Aggregator& agg, ConvolutionMode mode) {
  return mode == ConvolutionMode::kFast ? convolve_fast(a, b, shift, agg) : convolve_exact(a, b, shift, agg);
}

}  // namespace joinss
