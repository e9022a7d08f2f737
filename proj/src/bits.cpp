#include "bb84/bits.hpp"

#include <stdexcept>

namespace bb84 {

std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits) {
    std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80U >> (i % 8));
    return out;
}

Bits unpack_bits(std::span<const std::uint8_t> bytes, std::size_t bit_count) {
    if (bytes.size() != (bit_count + 7) / 8) throw std::invalid_argument("unpack_bits: byte count mismatch");
    Bits out(bit_count);
    for (std::size_t i = 0; i < bit_count; ++i) out[i] = (bytes[i / 8] >> (7 - i % 8)) & 1U;
    if (bit_count % 8 != 0) {
        const auto pad_mask = static_cast<std::uint8_t>(0xFFU >> (bit_count % 8));
        if (bytes.back() & pad_mask) throw std::invalid_argument("unpack_bits: non-zero padding");
    }
    return out;
}

std::vector<std::uint64_t> pack_words(std::span<const std::uint8_t> bits) {
    std::vector<std::uint64_t> out((bits.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out[i / 64] |= std::uint64_t{1} << (i % 64);
    return out;
}

std::size_t hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw std::invalid_argument("hamming_distance: length mismatch");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] != b[i]);
    return d;
}

std::string to_hex(std::span<const std::uint8_t> bits) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (std::uint8_t byte : pack_bits(bits)) {
        s.push_back(digits[byte >> 4]);
        s.push_back(digits[byte & 0x0F]);
    }
    return s;
}

} // namespace bb84
