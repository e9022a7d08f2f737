#include <bit>
#include <cmath>

#include "bb84/error.hpp"
#include "bb84/reconcile.hpp"

namespace bb84 {

Bits toeplitz_hash(std::span<const std::uint8_t> input, std::size_t out_bits, std::uint64_t seed) {
    const std::size_t n = input.size();
    Bits out(out_bits, 0);
    if (n == 0 || out_bits == 0) return out;

    // Diagonal-constant matrix T[i][j] = r[j - i + out_bits - 1] from
    // n + out_bits - 1 random bits; row i sees r starting at out_bits-1-i.
    const std::size_t r_bits = n + out_bits - 1;
    std::vector<std::uint64_t> r((r_bits + 63) / 64 + 1, 0);
    Rng rng = make_stream(seed, 0x70E91172);
    for (std::size_t w = 0; w + 1 < r.size(); ++w) r[w] = rng();
    if (r_bits % 64 != 0) r[r.size() - 2] &= (std::uint64_t{1} << (r_bits % 64)) - 1;

    const std::vector<std::uint64_t> x = pack_words(input);
    for (std::size_t i = 0; i < out_bits; ++i) {
        const std::size_t start = out_bits - 1 - i;
        std::uint64_t acc = 0;
        for (std::size_t w = 0; w < x.size(); ++w) {
            const std::size_t bit = start + 64 * w;
            const std::size_t q = bit / 64;
            const unsigned o = static_cast<unsigned>(bit % 64);
            std::uint64_t window = r[q] >> o;
            if (o != 0 && q + 1 < r.size()) window |= r[q + 1] << (64 - o);
            acc ^= window & x[w];
        }
        out[i] = static_cast<std::uint8_t>(std::popcount(acc) & 1);
    }
    return out;
}

std::int64_t final_key_length(std::size_t n, const GainInputs& gain, const ReconciliationTranscript& transcript,
                              const PrivacyOptions& options) {
    const double sized = std::floor(static_cast<double>(n) * extractable_fraction(gain));
    const double leaked = static_cast<double>(transcript.disclosed_parity_bits + transcript.verification_bits +
                                              options.sample_disclosures + options.safety_margin);
    return static_cast<std::int64_t>(sized - leaked);
}

SecretKey compress_key(std::span<const std::uint8_t> key, std::size_t length, std::uint64_t seed,
                       const PrivacyOptions& options) {
    if (length > key.size()) throw DomainError("compress_key: output longer than input");
    SecretKey out;
    out.bits = toeplitz_hash(key, length, seed);
    out.session_id = options.session_id;
    out.gain_achieved = options.pulses > 0 ? static_cast<double>(length) / static_cast<double>(options.pulses) : 0.0;
    return out;
}

PrivacyResult privacy_amplify(std::span<const std::uint8_t> key, const ReconciliationTranscript& transcript,
                              const GainInputs& gain, const PrivacyOptions& options, std::uint64_t seed) {
    PrivacyResult result;
    result.computed_length = final_key_length(key.size(), gain, transcript, options);
    if (result.computed_length <= 0) {
        result.key.session_id = options.session_id;
        result.diagnostic = "leakage exceeds extractable secrecy (final length " +
                            std::to_string(result.computed_length) + ")";
        return result;
    }
    result.key = compress_key(key, static_cast<std::size_t>(result.computed_length), seed, options);
    return result;
}

} // namespace bb84
