#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace bb84 {

/// 20-stage Fibonacci LFSR with feedback polynomial x^20 + x^3 + 1.
///
/// Stage k (1-based) is held in bit k-1 of the state. Each step outputs
/// stage 20, shifts every stage up by one and loads stage 1 with
/// stage20 XOR stage3. The first 20 outputs are therefore the seed bits
/// read from bit 19 down to bit 0.
class FibonacciLfsr {
public:
    static constexpr int kWidth = 20;
    static constexpr std::uint32_t kMask = (1U << kWidth) - 1;
    static constexpr std::uint32_t kPeriod = kMask;  // 2^20 - 1
    static constexpr int kTapHigh = 20;
    static constexpr int kTapLow = 3;

    /// Throws DomainError for a zero seed or one wider than 20 bits.
    explicit FibonacciLfsr(std::uint32_t seed);

    std::uint32_t state() const { return state_; }

    int next_bit() {
        const int out = static_cast<int>((state_ >> (kTapHigh - 1)) & 1U);
        const std::uint32_t fb = (state_ >> (kTapHigh - 1)) ^ (state_ >> (kTapLow - 1));
        state_ = ((state_ << 1) | (fb & 1U)) & kMask;
        return out;
    }

    /// Value-semantics form of next_bit.
    [[nodiscard]] std::pair<int, FibonacciLfsr> step() const {
        FibonacciLfsr next = *this;
        const int bit = next.next_bit();
        return {bit, next};
    }

    friend bool operator==(const FibonacciLfsr&, const FibonacciLfsr&) = default;

private:
    std::uint32_t state_;
};

/// One encoded pulse: data bit and basis bit (0 linear, 1 circular).
struct AliceSymbol {
    std::uint8_t bit = 0;
    std::uint8_t basis = 0;

    friend bool operator==(const AliceSymbol&, const AliceSymbol&) = default;
};

/// Alice's hardware sequence: register A supplies data bits, register B
/// basis bits.
class AliceBitStream {
public:
    AliceBitStream(std::uint32_t seed_data, std::uint32_t seed_basis);

    AliceSymbol next() {
        const auto bit = static_cast<std::uint8_t>(data_.next_bit());
        const auto basis = static_cast<std::uint8_t>(basis_.next_bit());
        return {bit, basis};
    }

private:
    FibonacciLfsr data_;
    FibonacciLfsr basis_;
};

/// The first `count` symbols of a session (one full period by default).
std::vector<AliceSymbol> alice_bit_stream(std::uint32_t seed_data, std::uint32_t seed_basis,
                                          std::uint64_t count = FibonacciLfsr::kPeriod);

} // namespace bb84
