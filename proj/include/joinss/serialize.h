// include/joinss/serialize.h
//
// Versioned binary file for a built StaticIndex. Layout: the magic "JSSI1",
// then little-endian fields; every array is prefixed by its u64 length.
// Relations are stored in their keyed order and re-keyed on load, which
// reproduces the same order because the tuple order is total.

#pragma once

#include <iosfwd>
#include <string>

#include "joinss/static_index.h"

namespace joinss {

inline constexpr char kIndexMagic[] = "JSSI1";

void serialize_index(const StaticIndex& idx, std::ostream& out);
StaticIndex deserialize_index(std::istream& in);

void save_index(const StaticIndex& idx, const std::string& path);
StaticIndex load_index(const std::string& path);

}  // namespace joinss
