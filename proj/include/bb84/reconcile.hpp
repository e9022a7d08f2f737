#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "bb84/bits.hpp"
#include "bb84/optics.hpp"
#include "bb84/random.hpp"
#include "bb84/sources.hpp"

namespace bb84 {

// ---------------------------------------------------------------------------
// Entropy and secure gain
// ---------------------------------------------------------------------------

/// h(e) = -e log2 e - (1-e) log2(1-e). Throws DomainError outside [0, 1].
double binary_entropy(double e);

/// Leakage of practical error correction relative to the Shannon limit,
/// as used in the secure-gain formula.
inline constexpr double kReconciliationInefficiency = 1.1;

/// Inputs of the secure gain under individual (photon-number-splitting)
/// attacks: detection probability per slot, multiphoton emission probability
/// per pulse, and QBER.
struct GainInputs {
    double p_exp = 0.0;
    double s_m = 0.0;
    double e = 0.0;
};

struct GainEstimate {
    double bits_per_pulse = 0.0;
    /// The unclamped value was <= 0 or every detection may be multiphoton.
    bool insecure = false;
};

/// beta * (1 - log2[1 + 4e' - 4e'^2]) with beta = (p_exp - s_m)/p_exp and
/// e' = e/beta: fraction of a sifted key that survives privacy amplification
/// before error-correction leakage is subtracted. 0 when s_m >= p_exp or
/// e' >= 1/2.
double extractable_fraction(const GainInputs& g);

/// G = p_exp/2 * (extractable_fraction - 1.1 h(e)), clamped at 0.
GainEstimate secure_gain(const GainInputs& g);

/// Analytic link: calibrated efficiency plus the linear QBER model.
struct AnalyticModel {
    double link_efficiency = 0.0;
    QberModel qber;

    static AnalyticModel reference();
};

/// p_exp and e from the QBER model, s_m from the source statistics.
GainInputs analytic_gain_inputs(const SourceModel& source, double transmission, const AnalyticModel& model);

struct MuOptimum {
    double mu = 0.0;
    double gain = 0.0;
};

/// Mean photon number in (0, max_mu] maximising the WCP secure gain at the
/// given transmission; nullopt when no mu gives a positive gain.
std::optional<MuOptimum> optimize_mu_wcp(double transmission, const AnalyticModel& model,
                                         double rel_tol = 1e-10, double max_mu = 0.5);

// ---------------------------------------------------------------------------
// Cascade
// ---------------------------------------------------------------------------

struct CascadeParams {
    int passes = 6;
    /// First-pass block size is block_coefficient / e.
    double block_coefficient = 0.6;
    /// Round the first-pass block size up to a power of two.
    bool power_of_two_blocks = true;
    /// Later passes double the block size up to n / min_blocks_per_pass.
    std::size_t min_blocks_per_pass = 3;
};

/// First-pass block size for an estimated error rate; e <= 0 is floored at 0.5/n.
std::size_t first_block_size(double e_estimate, std::size_t n, const CascadeParams& params);

/// Block size of pass `pass` (0-based).
std::size_t pass_block_size(std::size_t first, int pass, std::size_t n, const CascadeParams& params);

/// Positions [begin, end) of the permuted order used by pass `pass`.
struct BlockRange {
    std::uint8_t pass = 0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;

    friend auto operator<=>(const BlockRange&, const BlockRange&) = default;
};

/// Order of key indices visited by a pass: entry i is the key index at
/// position i. Pass 0 uses the identity; later passes draw a Fisher-Yates
/// shuffle from the announced seed.
std::vector<std::uint32_t> cascade_permutation(std::size_t n, std::uint64_t seed);

struct PassRecord {
    std::size_t block_size = 0;
    std::uint64_t seed = 0;
};

struct ReconciliationTranscript {
    /// One per parity value Alice revealed.
    std::uint64_t disclosed_parity_bits = 0;
    std::vector<PassRecord> passes;
    /// Key indices Bob flipped, in order of correction.
    std::vector<std::uint32_t> corrected_positions;
    /// Bits revealed by the final verification hash.
    std::uint64_t verification_bits = 0;
    bool verified = false;
};

/// Bob's view of the public channel during Cascade.
class CascadeChannel {
public:
    virtual ~CascadeChannel() = default;
    virtual void announce_permutation(std::uint8_t pass, std::uint64_t seed) = 0;
    /// Alice's parities of the requested blocks, one bit each.
    virtual Bits request_parities(std::span<const BlockRange> blocks) = 0;
};

/// Alice's side of Cascade: parities of her key over announced orders.
class CascadeResponder {
public:
    explicit CascadeResponder(Bits key);

    /// Passes must be announced in order 1, 2, ... (pass 0 is implicit).
    /// Throws ProtocolError otherwise.
    void set_permutation(std::uint8_t pass, std::uint64_t seed);

    /// Throws ProtocolError for an unannounced pass or an invalid range.
    Bits answer(std::span<const BlockRange> blocks);

    std::uint64_t disclosed() const { return disclosed_; }
    const Bits& key() const { return key_; }

private:
    Bits key_;
    std::vector<std::vector<std::uint32_t>> orders_;
    std::uint64_t disclosed_ = 0;
};

/// Connects Bob's driver to a responder in the same process.
class LocalCascadeChannel final : public CascadeChannel {
public:
    explicit LocalCascadeChannel(CascadeResponder& alice) : alice_(alice) {}
    void announce_permutation(std::uint8_t pass, std::uint64_t seed) override { alice_.set_permutation(pass, seed); }
    Bits request_parities(std::span<const BlockRange> blocks) override { return alice_.answer(blocks); }

private:
    CascadeResponder& alice_;
};

struct CascadeResult {
    Bits corrected;
    ReconciliationTranscript transcript;
};

/// Bob's side of Cascade. Permutation seeds are drawn from `seed`.
/// Corrects `bob_key` towards Alice's key using only parities obtained over
/// `channel`; does not run the verification step.
CascadeResult cascade_correct(Bits bob_key, double e_estimate, const CascadeParams& params, std::uint64_t seed,
                              CascadeChannel& channel);

/// Both sides in-process, followed by the verification hash
/// (`transcript.verified` reports the outcome).
CascadeResult cascade(const Bits& alice_key, Bits bob_key, double e_estimate, const CascadeParams& params,
                      std::uint64_t seed, std::size_t verification_bits = 32);

// ---------------------------------------------------------------------------
// Privacy amplification
// ---------------------------------------------------------------------------

/// Product of a random binary Toeplitz matrix (out_bits x input.size(),
/// generated from `seed`) with the input over GF(2).
Bits toeplitz_hash(std::span<const std::uint8_t> input, std::size_t out_bits, std::uint64_t seed);

struct SecretKey {
    Bits bits;
    std::uint64_t session_id = 0;
    /// Secure bits per emitted pulse.
    double gain_achieved = 0.0;

    friend bool operator==(const SecretKey&, const SecretKey&) = default;
};

struct PrivacyOptions {
    /// Bits disclosed for QBER estimation (already removed from the key).
    std::uint64_t sample_disclosures = 0;
    /// Finite-size cushion subtracted from the final length.
    std::uint64_t safety_margin = 30;
    std::uint64_t pulses = 0;
    std::uint64_t session_id = 0;
};

/// floor(n * extractable_fraction - parities - verification - sample - margin),
/// may be <= 0. Sample disclosures are subtracted after the compression is
/// sized.
std::int64_t final_key_length(std::size_t n, const GainInputs& gain, const ReconciliationTranscript& transcript,
                              const PrivacyOptions& options);

/// Compresses `key` to exactly `length` bits (length <= key.size()).
SecretKey compress_key(std::span<const std::uint8_t> key, std::size_t length, std::uint64_t seed,
                       const PrivacyOptions& options);

struct PrivacyResult {
    SecretKey key;
    std::int64_t computed_length = 0;
    /// Non-empty when the key is empty because leakage exceeded secrecy.
    std::string diagnostic;
};

PrivacyResult privacy_amplify(std::span<const std::uint8_t> key, const ReconciliationTranscript& transcript,
                              const GainInputs& gain, const PrivacyOptions& options, std::uint64_t seed);

} // namespace bb84
