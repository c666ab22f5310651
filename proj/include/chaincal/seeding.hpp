#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace chaincal {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Stable seed from a master seed and any number of coordinates.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts);

/// Stable 64-bit code for a label (FNV-1a), for use as a derive_seed part.
std::uint64_t label_code(std::string_view label);

/// Bit pattern of a double, for use as a derive_seed part.
std::uint64_t value_code(double v);

}  // namespace chaincal
