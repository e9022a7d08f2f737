#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bb84 {

/// Unpacked bit string, one element (0 or 1) per bit.
using Bits = std::vector<std::uint8_t>;

/// MSB-first packing, 8 bits per byte, zero padding in the last byte.
std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits);

/// Inverse of pack_bits. Throws std::invalid_argument when `bytes` has the
/// wrong size for `bit_count` or non-zero padding.
Bits unpack_bits(std::span<const std::uint8_t> bytes, std::size_t bit_count);

/// Little-endian 64-bit word packing (bit i in word i/64, position i%64).
std::vector<std::uint64_t> pack_words(std::span<const std::uint8_t> bits);

std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Lower-case hex of the MSB-first packed bytes.
std::string to_hex(std::span<const std::uint8_t> bits);

} // namespace bb84
