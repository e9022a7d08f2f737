#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bb84/bits.hpp"
#include "bb84/lfsr.hpp"
#include "bb84/optics.hpp"
#include "bb84/reconcile.hpp"
#include "bb84/sources.hpp"
#include "bb84/wire.hpp"

namespace bb84 {

struct SessionSeeds {
    /// Alice's two 20-bit registers (data and basis), both non-zero.
    std::uint32_t lfsr_data = 0xACE1;
    std::uint32_t lfsr_basis = 0x5B3D7;
    /// Losses, routing and background clicks in the simulated link.
    std::uint64_t simulation = 1;
    /// Bob's classical choices: QBER sample, Cascade shuffles, hash seeds.
    std::uint64_t classical = 2;
};

struct SessionConfig {
    std::uint64_t pulses_per_session = reference::kPulsesPerSession;
    double qber_sample_fraction = 0.01;
    double qber_abort_threshold = 0.125;
    /// Smallest number of sampled bits, whatever the key length.
    std::size_t min_sample_bits = 30;
    /// Sifted keys shorter than this are not worth estimating from.
    std::size_t min_sifted_bits = 200;
    /// Abort when more than this fraction of detections fired several detectors.
    double max_ambiguous_fraction = 0.01;
    std::size_t verification_bits = 32;
    std::uint64_t safety_margin = 30;
    CascadeParams cascade;

    SourceModel source = reference::source();
    LinkParams link;
    DetectorParams detector = reference::detector();
    /// QBER model used for the Cascade block-size prior.
    QberModel qber_model = reference::qber_model();
    SessionSeeds seeds;
    std::uint64_t session_id = 1;
    std::chrono::milliseconds message_timeout{30000};

    /// Reference parameters at transmission t.
    static SessionConfig reference(double transmission = 1.0);

    /// Throws ConfigError or DomainError.
    void validate() const;
};

/// Everything recorded during the quantum phase. `alice` holds one symbol
/// per pulse; `bob` only the slots in which at least one detector fired,
/// in increasing slot order.
struct QuantumLogs {
    std::vector<AliceSymbol> alice;
    std::vector<DetectionRecord> bob;
};

/// Simulates every pulse of a session. The result depends only on the
/// configuration and seeds, not on `threads` (0 = hardware concurrency).
QuantumLogs run_quantum_phase(const SessionConfig& cfg, unsigned threads = 0);

struct SiftedKey {
    Bits bits;
    std::vector<std::uint32_t> slot_indices;
    double estimated_qber = -1.0;  // < 0 until estimated
    std::uint64_t session_id = 0;

    std::size_t size() const { return bits.size(); }
};

/// Bob's public announcement: slot and basis of every detection. The basis
/// is that of the arm whose detector fired; multi-detector slots are marked
/// ambiguous and carry basis 0.
wire::DetectionAnnounce bob_announcement(const std::vector<DetectionRecord>& bob_log);

/// Bob's raw bit for each entry of his log (0 for ambiguous slots).
Bits bob_raw_bits(const std::vector<DetectionRecord>& bob_log);

/// Alice's answer: keep entries that are unambiguous and measured in the
/// basis she prepared. Throws ProtocolError for slots out of range or not
/// strictly increasing.
wire::SiftReply alice_sift_reply(const std::vector<AliceSymbol>& alice_log, const wire::DetectionAnnounce& announce);

/// Alice's key after sifting.
SiftedKey alice_sifted_key(const std::vector<AliceSymbol>& alice_log, const wire::DetectionAnnounce& announce,
                           const wire::SiftReply& reply, std::uint64_t session_id);

/// Bob's key after sifting. Throws ProtocolError when the reply length does
/// not match the announcement.
SiftedKey bob_sifted_key(const std::vector<DetectionRecord>& bob_log, const wire::SiftReply& reply,
                         std::uint64_t session_id);

/// Both sides of sifting in one step.
std::pair<SiftedKey, SiftedKey> sift(const std::vector<AliceSymbol>& alice_log,
                                     const std::vector<DetectionRecord>& bob_log, std::uint64_t session_id = 0);

/// max(min_bits, ceil(fraction * n)) distinct positions, sorted, at most n.
std::vector<std::uint32_t> choose_sample_positions(std::size_t n, double fraction, std::size_t min_bits, Rng& rng);

/// Removes the given sorted positions from a key.
void remove_positions(SiftedKey& key, const std::vector<std::uint32_t>& positions);

struct QberEstimate {
    double qber = 0.0;
    bool abort = false;
    std::size_t sampled = 0;
    std::size_t mismatches = 0;
    std::vector<std::uint32_t> positions;
};

/// Discloses a random sample, measures the mismatch fraction and deletes
/// the sample from both keys. `abort` is set when e exceeds the threshold.
/// Throws DomainError when the keys differ in length or are shorter than
/// the sample.
QberEstimate estimate_and_gate_qber(SiftedKey& alice, SiftedKey& bob, double fraction, double threshold,
                                    std::size_t min_bits, Rng& rng);

/// One line per bit: slot index, basis, bit.
void write_sifted_log(std::ostream& os, const SiftedKey& key, const std::vector<AliceSymbol>& alice_log);

/// Counts, pass structure and seeds of a reconciliation.
void write_reconciliation_log(std::ostream& os, const ReconciliationTranscript& t);

// ---------------------------------------------------------------------------
// Networked session
// ---------------------------------------------------------------------------

struct SessionReport {
    std::uint64_t pulses = 0;
    std::uint64_t raw_detections = 0;
    std::uint64_t ambiguous = 0;
    std::uint64_t sifted = 0;
    std::uint64_t sample_bits = 0;
    double qber_sample = 0.0;
    std::uint64_t reconciled_bits = 0;
    std::uint64_t disclosed_parity_bits = 0;
    std::uint64_t verification_bits = 0;
    std::uint64_t corrected_bits = 0;
    std::int64_t final_length = 0;
    double wall_time_s = 0.0;
};

struct SessionOutcome {
    bool success = false;
    wire::AbortReason reason = wire::AbortReason::ProtocolViolation;
    std::string diagnostic;
    SessionReport report;
    SecretKey key;
    ReconciliationTranscript transcript;
};

/// Digest of every parameter both peers must agree on, exchanged in HELLO.
std::uint64_t config_digest(const SessionConfig& cfg);

/// Alice's state machine. Only her own log is used; every classical step
/// goes through `channel`.
SessionOutcome run_alice(const SessionConfig& cfg, const std::vector<AliceSymbol>& alice_log,
                         wire::Channel& channel);

/// Bob's state machine; he drives sifting, sampling, Cascade and the
/// privacy-amplification seed.
SessionOutcome run_bob(const SessionConfig& cfg, const std::vector<DetectionRecord>& bob_log,
                       wire::Channel& channel);

struct LocalExchange {
    SessionOutcome alice;
    SessionOutcome bob;
    QuantumLogs logs;
    /// Frames seen by Bob, in order ('>' sent, '<' received).
    std::vector<std::uint8_t> transcript;
};

/// Quantum phase plus both state machines over an in-memory pipe.
LocalExchange run_local_exchange(const SessionConfig& cfg, unsigned threads = 0);

} // namespace bb84
