#include "bb84/lfsr.hpp"

#include "bb84/error.hpp"

namespace bb84 {

FibonacciLfsr::FibonacciLfsr(std::uint32_t seed) : state_(seed) {
    if (seed == 0) throw DomainError("lfsr: the all-zero state is a fixed point");
    if (seed > kMask) throw DomainError("lfsr: seed wider than 20 bits");
}

AliceBitStream::AliceBitStream(std::uint32_t seed_data, std::uint32_t seed_basis)
    : data_(seed_data), basis_(seed_basis) {}

std::vector<AliceSymbol> alice_bit_stream(std::uint32_t seed_data, std::uint32_t seed_basis, std::uint64_t count) {
    AliceBitStream stream(seed_data, seed_basis);
    std::vector<AliceSymbol> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(stream.next());
    return out;
}

} // namespace bb84
