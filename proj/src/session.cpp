#include <algorithm>
#include <cstring>
#include <sstream>
#include <thread>

#include "bb84/error.hpp"
#include "bb84/protocol.hpp"

namespace bb84 {

namespace {

using wire::AbortReason;
using Clock = std::chrono::steady_clock;

// Substreams of the classical seed.
constexpr std::uint64_t kSampleStream = 1;
constexpr std::uint64_t kCascadeStream = 2;
constexpr std::uint64_t kHashStream = 3;

struct PeerAbort {
    AbortReason reason;
};

struct LocalAbort {
    AbortReason reason;
    std::string diagnostic;
    /// False when the peer reaches the same verdict from what it has seen.
    bool notify = true;
};

template <class T>
T expect(wire::Channel& ch, std::chrono::milliseconds timeout) {
    wire::Message m = ch.receive(timeout);
    if (auto* a = std::get_if<wire::Abort>(&m)) throw PeerAbort{a->reason};
    if (auto* v = std::get_if<T>(&m)) return std::move(*v);
    throw ProtocolError(std::string("unexpected ") + wire::name_of(wire::tag_of(m)));
}

void handshake(const SessionConfig& cfg, wire::Role self, wire::Channel& ch) {
    wire::Hello hello{wire::kProtocolVersion, self, cfg.session_id, config_digest(cfg)};
    ch.send(hello);
    const auto peer = expect<wire::Hello>(ch, cfg.message_timeout);
    if (peer.version != wire::kProtocolVersion) throw LocalAbort{AbortReason::ParameterMismatch, "protocol version"};
    if (peer.role == self) throw LocalAbort{AbortReason::ParameterMismatch, "both peers claim the same role"};
    if (peer.session_id != cfg.session_id) throw LocalAbort{AbortReason::ParameterMismatch, "session id differs"};
    if (peer.config_digest != hello.config_digest)
        throw LocalAbort{AbortReason::ParameterMismatch, "session parameters differ"};
}

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

GainInputs pa_inputs(const SessionConfig& cfg, std::uint64_t detections, double e) {
    const double p_exp = static_cast<double>(detections) / static_cast<double>(cfg.pulses_per_session);
    return {p_exp, multiphoton_prob(cfg.source), e};
}

PrivacyOptions pa_options(const SessionConfig& cfg, std::uint64_t sample_bits) {
    return {sample_bits, cfg.safety_margin, cfg.pulses_per_session, cfg.session_id};
}

// Runs `body`, turning every failure into an abort outcome and telling the
// peer when the failure is ours.
template <class Body>
SessionOutcome guarded(const SessionConfig& cfg, wire::Channel& ch, Body body) {
    const auto start = Clock::now();
    SessionOutcome out;
    auto fail = [&](AbortReason reason, std::string diagnostic, bool notify) {
        out.success = false;
        out.reason = reason;
        out.diagnostic = std::move(diagnostic);
        if (notify) {
            try {
                ch.send(wire::Abort{reason});
            } catch (const std::exception&) {
            }
        }
    };
    try {
        body(out);
    } catch (const PeerAbort& a) {
        fail(a.reason, std::string("peer aborted: ") + wire::to_string(a.reason), false);
    } catch (const LocalAbort& a) {
        fail(a.reason, a.diagnostic, a.notify);
    } catch (const wire::TimeoutError& e) {
        fail(AbortReason::Timeout, e.what(), true);
    } catch (const wire::TransportError& e) {
        fail(AbortReason::TransportFailure, e.what(), false);
    } catch (const wire::WireError& e) {
        fail(AbortReason::ProtocolViolation, e.what(), true);
    } catch (const ProtocolError& e) {
        fail(AbortReason::ProtocolViolation, e.what(), true);
    }
    (void)cfg;
    out.report.wall_time_s = elapsed(start);
    return out;
}

/// Bob's Cascade requests carried over the session channel.
class WireCascadeChannel final : public CascadeChannel {
public:
    WireCascadeChannel(wire::Channel& ch, std::chrono::milliseconds timeout) : ch_(ch), timeout_(timeout) {}

    void announce_permutation(std::uint8_t pass, std::uint64_t seed) override {
        ch_.send(wire::ShuffleSeed{pass, seed});
    }

    Bits request_parities(std::span<const BlockRange> blocks) override {
        ch_.send(wire::CascadeParityReq{{blocks.begin(), blocks.end()}});
        auto resp = expect<wire::CascadeParityResp>(ch_, timeout_);
        if (resp.parities.size() != blocks.size()) throw ProtocolError("parity response has wrong length");
        return std::move(resp.parities);
    }

private:
    wire::Channel& ch_;
    std::chrono::milliseconds timeout_;
};

}  // namespace

std::uint64_t config_digest(const SessionConfig& cfg) {
    // FNV-1a over the canonical binary form of the shared parameters.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001B3ULL;
    };
    auto u64 = [&](std::uint64_t v) { mix(&v, sizeof v); };
    auto f64 = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    };
    u64(cfg.pulses_per_session);
    f64(cfg.qber_sample_fraction);
    f64(cfg.qber_abort_threshold);
    u64(cfg.min_sample_bits);
    u64(cfg.min_sifted_bits);
    f64(cfg.max_ambiguous_fraction);
    u64(cfg.verification_bits);
    u64(cfg.safety_margin);
    u64(static_cast<std::uint64_t>(cfg.cascade.passes));
    f64(cfg.cascade.block_coefficient);
    u64(cfg.cascade.power_of_two_blocks);
    u64(cfg.cascade.min_blocks_per_pass);
    u64(static_cast<std::uint64_t>(cfg.source.kind));
    f64(cfg.source.mu);
    f64(cfg.source.reduction_factor);
    f64(cfg.link.transmission);
    f64(cfg.link.link_efficiency);
    for (double r : cfg.detector.dark_rates) f64(r);
    f64(cfg.detector.gate_width);
    f64(cfg.detector.repetition_rate);
    f64(cfg.detector.signal_gate_fraction);
    f64(cfg.detector.dark_gate_fraction);
    f64(cfg.detector.stray_probability);
    f64(cfg.detector.optical_error);
    f64(cfg.qber_model.alpha);
    f64(cfg.qber_model.p_dark);
    u64(cfg.seeds.lfsr_data);
    u64(cfg.seeds.lfsr_basis);
    u64(cfg.seeds.simulation);
    u64(cfg.seeds.classical);
    u64(cfg.session_id);
    return h;
}

SessionOutcome run_alice(const SessionConfig& cfg, const std::vector<AliceSymbol>& alice_log,
                         wire::Channel& ch) {
    return guarded(cfg, ch, [&](SessionOutcome& out) {
        const auto timeout = cfg.message_timeout;
        SessionReport& rep = out.report;
        rep.pulses = cfg.pulses_per_session;
        handshake(cfg, wire::Role::Alice, ch);

        const auto announce = expect<wire::DetectionAnnounce>(ch, timeout);
        rep.raw_detections = announce.slots.size();
        rep.ambiguous = static_cast<std::uint64_t>(std::count(announce.ambiguous.begin(), announce.ambiguous.end(), 1));
        const wire::SiftReply reply = alice_sift_reply(alice_log, announce);
        ch.send(reply);
        SiftedKey key = alice_sifted_key(alice_log, announce, reply, cfg.session_id);
        rep.sifted = key.size();

        const auto sample = expect<wire::QberSample>(ch, timeout);
        if (sample.positions.size() > key.size()) throw ProtocolError("QBER sample larger than the key");
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < sample.positions.size(); ++i) {
            const std::uint32_t p = sample.positions[i];
            if (p >= key.size() || (i > 0 && p <= sample.positions[i - 1]))
                throw ProtocolError("QBER sample positions invalid");
            mismatches += key.bits[p] != sample.bits[i];
        }
        rep.sample_bits = sample.positions.size();
        const double e = sample.positions.empty()
                             ? 0.0
                             : static_cast<double>(mismatches) / static_cast<double>(sample.positions.size());
        rep.qber_sample = e;
        const bool abort = e > cfg.qber_abort_threshold;
        ch.send(wire::QberResult{e, abort});
        if (abort) throw LocalAbort{AbortReason::QberExceeded, "sampled QBER above threshold", false};
        remove_positions(key, sample.positions);
        key.estimated_qber = e;
        rep.reconciled_bits = key.size();

        // Cascade responder until Bob sends his verification hash.
        CascadeResponder responder(key.bits);
        wire::VerifyHash bob_hash;
        for (;;) {
            wire::Message m = ch.receive(timeout);
            if (auto* a = std::get_if<wire::Abort>(&m)) throw PeerAbort{a->reason};
            if (auto* s = std::get_if<wire::ShuffleSeed>(&m)) {
                responder.set_permutation(s->pass, s->seed);
                out.transcript.passes.push_back({0, s->seed});
            } else if (auto* r = std::get_if<wire::CascadeParityReq>(&m)) {
                ch.send(wire::CascadeParityResp{responder.answer(r->blocks)});
            } else if (auto* v = std::get_if<wire::VerifyHash>(&m)) {
                bob_hash = std::move(*v);
                break;
            } else {
                throw ProtocolError(std::string("unexpected ") + wire::name_of(wire::tag_of(m)));
            }
        }
        out.transcript.disclosed_parity_bits = responder.disclosed();
        rep.disclosed_parity_bits = responder.disclosed();
        const Bits mine = toeplitz_hash(key.bits, bob_hash.hash.size(), bob_hash.seed);
        ch.send(wire::VerifyHash{bob_hash.seed, mine});
        out.transcript.verification_bits = mine.size();
        rep.verification_bits = mine.size();
        out.transcript.verified = mine == bob_hash.hash;
        if (!out.transcript.verified)
            throw LocalAbort{AbortReason::ReconciliationFailed, "verification hash mismatch", false};

        const auto pa = expect<wire::PaSeed>(ch, timeout);
        if (pa.length == 0 || pa.length > key.size()) throw ProtocolError("PA_SEED length out of range");
        out.key = compress_key(key.bits, pa.length, pa.seed, pa_options(cfg, rep.sample_bits));
        rep.final_length = pa.length;
        ch.send(wire::Done{});
        out.success = true;
    });
}

SessionOutcome run_bob(const SessionConfig& cfg, const std::vector<DetectionRecord>& bob_log, wire::Channel& ch) {
    return guarded(cfg, ch, [&](SessionOutcome& out) {
        const auto timeout = cfg.message_timeout;
        SessionReport& rep = out.report;
        rep.pulses = cfg.pulses_per_session;
        handshake(cfg, wire::Role::Bob, ch);

        const wire::DetectionAnnounce announce = bob_announcement(bob_log);
        rep.raw_detections = announce.slots.size();
        rep.ambiguous = static_cast<std::uint64_t>(std::count(announce.ambiguous.begin(), announce.ambiguous.end(), 1));
        if (static_cast<double>(rep.ambiguous) > cfg.max_ambiguous_fraction * static_cast<double>(rep.raw_detections))
            throw LocalAbort{AbortReason::TooManyAmbiguous, "ambiguous detections above the configured bound"};
        ch.send(announce);
        const auto reply = expect<wire::SiftReply>(ch, timeout);
        SiftedKey key = bob_sifted_key(bob_log, reply, cfg.session_id);
        rep.sifted = key.size();
        if (key.size() < cfg.min_sifted_bits)
            throw LocalAbort{AbortReason::InsufficientKey, "sifted key shorter than " +
                                                               std::to_string(cfg.min_sifted_bits) + " bits"};

        Rng sample_rng = make_stream(cfg.seeds.classical, kSampleStream);
        const auto positions =
            choose_sample_positions(key.size(), cfg.qber_sample_fraction, cfg.min_sample_bits, sample_rng);
        wire::QberSample sample{positions, {}};
        for (std::uint32_t p : positions) sample.bits.push_back(key.bits[p]);
        ch.send(sample);
        rep.sample_bits = positions.size();
        const auto result = expect<wire::QberResult>(ch, timeout);
        rep.qber_sample = result.qber;
        if (result.abort) throw LocalAbort{AbortReason::QberExceeded, "sampled QBER above threshold", false};
        remove_positions(key, positions);
        key.estimated_qber = result.qber;
        rep.reconciled_bits = key.size();

        // The sample is small, so Cascade sizes its blocks from the larger of
        // the measured rate and the link model's prediction.
        const double p_exp = static_cast<double>(rep.raw_detections) / static_cast<double>(cfg.pulses_per_session);
        const double p_signal = std::max(0.0, (p_exp - cfg.qber_model.p_dark) / (1.0 - cfg.qber_model.p_dark));
        const double e_model = p_exp > 0.0 ? qber_at_detection_probability(p_signal, p_exp, cfg.qber_model) : 0.0;
        const double e_cascade = std::max(result.qber, std::min(e_model, 0.5));

        WireCascadeChannel cascade_ch(ch, timeout);
        CascadeResult rec =
            cascade_correct(key.bits, e_cascade, cfg.cascade, splitmix64(cfg.seeds.classical ^ kCascadeStream),
                            cascade_ch);
        out.transcript = rec.transcript;
        rep.disclosed_parity_bits = rec.transcript.disclosed_parity_bits;
        rep.corrected_bits = rec.transcript.corrected_positions.size();

        Rng hash_rng = make_stream(cfg.seeds.classical, kHashStream);
        const std::uint64_t hash_seed = hash_rng();
        const Bits mine = toeplitz_hash(rec.corrected, cfg.verification_bits, hash_seed);
        ch.send(wire::VerifyHash{hash_seed, mine});
        const auto theirs = expect<wire::VerifyHash>(ch, timeout);
        out.transcript.verification_bits = mine.size();
        rep.verification_bits = mine.size();
        out.transcript.verified = theirs.seed == hash_seed && theirs.hash == mine;
        if (!out.transcript.verified)
            throw LocalAbort{AbortReason::ReconciliationFailed, "verification hash mismatch", false};

        // Errors found by Cascade bound the true error rate from below.
        const double corrected_rate =
            key.size() ? static_cast<double>(rep.corrected_bits) / static_cast<double>(key.size()) : 0.0;
        const double e_pa = std::max(result.qber, corrected_rate);
        const PrivacyOptions opts = pa_options(cfg, rep.sample_bits);
        const GainInputs gain = pa_inputs(cfg, rep.raw_detections, std::min(e_pa, 0.4999));
        const std::int64_t m = final_key_length(rec.corrected.size(), gain, out.transcript, opts);
        rep.final_length = m;
        if (m <= 0)
            throw LocalAbort{AbortReason::NoSecureRate,
                             "leakage exceeds extractable secrecy (final length " + std::to_string(m) + ")"};
        const std::uint64_t pa_seed = hash_rng();
        ch.send(wire::PaSeed{static_cast<std::uint32_t>(m), pa_seed});
        out.key = compress_key(rec.corrected, static_cast<std::size_t>(m), pa_seed, opts);
        expect<wire::Done>(ch, timeout);
        out.success = true;
    });
}

LocalExchange run_local_exchange(const SessionConfig& cfg, unsigned threads) {
    LocalExchange ex;
    ex.logs = run_quantum_phase(cfg, threads);
    auto [a, b] = wire::make_memory_pipe();
    wire::RecordingChannel recorder(*b);
    std::jthread alice([&] { ex.alice = run_alice(cfg, ex.logs.alice, *a); });
    ex.bob = run_bob(cfg, ex.logs.bob, recorder);
    alice.join();
    ex.transcript = recorder.bytes();
    return ex;
}

} // namespace bb84
