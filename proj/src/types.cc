// src/types.cc

#include "joinss/types.h"

#include <algorithm>

namespace joinss {

std::string to_string(u128 x) {
  if (x == 0) return "0";
  std::string s;
  while (x > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(x % 10)));
    x /= 10;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

u128 parse_u128(const std::string& s) {
  if (s.empty()) throw ParseError("empty integer");
  u128 out = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw ParseError("not an unsigned integer: " + s);
    out = checked_add(checked_mul(out, 10), static_cast<u128>(c - '0'));
  }
  return out;
}

}  // namespace joinss
