// include/joinss/types.h
//
// Shared scalar types, checked 128-bit counter arithmetic, and the library's
// exception hierarchy.

#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace joinss {

using u64 = std::uint64_t;
using i64 = std::int64_t;
using u128 = unsigned __int128;

inline constexpr u128 kU128Max = ~static_cast<u128>(0);

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidProbability : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A counter exceeded the 128-bit capacity.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Materialization exceeded the configured result cap.
class MemoryGuardError : public Error {
 public:
  using Error::Error;
};

class CyclicQueryError : public Error {
 public:
  using Error::Error;
};

// A rank outside the addressed range; signals internal inconsistency.
class RankError : public Error {
 public:
  using Error::Error;
};

// An element-access oracle broke the p(e) <= p_upper promise.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

inline u128 checked_add(u128 a, u128 b) {
  u128 out;
  if (__builtin_add_overflow(a, b, &out)) throw CapacityError("128-bit counter overflow in addition");
  return out;
}

inline u128 checked_mul(u128 a, u128 b) {
  u128 out;
  if (__builtin_mul_overflow(a, b, &out)) throw CapacityError("128-bit counter overflow in multiplication");
  return out;
}

inline int bit_width(u128 x) {
  const u64 hi = static_cast<u64>(x >> 64);
  if (hi != 0) return 128 - __builtin_clzll(hi);
  const u64 lo = static_cast<u64>(x);
  return lo == 0 ? 0 : 64 - __builtin_clzll(lo);
}

std::string to_string(u128 x);
u128 parse_u128(const std::string& s);

// Saturating conversion from a nonnegative double.
inline u128 u128_from_double(double x) {
  if (!(x > 0.0)) return 0;
  if (x >= 0x1p128) return kU128Max;
  return static_cast<u128>(x);
}

inline double to_double(u128 x) { return static_cast<double>(x); }

}  // namespace joinss
