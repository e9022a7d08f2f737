#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include "bb84/error.hpp"
#include "bb84/protocol.hpp"

namespace bb84 {

namespace {

constexpr std::uint64_t kChunkSlots = 1U << 16;

}  // namespace

SessionConfig SessionConfig::reference(double transmission) {
    SessionConfig cfg;
    cfg.link.transmission = transmission;
    cfg.link.link_efficiency = reference::simulated_link_efficiency(cfg.detector);
    return cfg;
}

void SessionConfig::validate() const {
    if (pulses_per_session == 0) throw ConfigError("session: pulses_per_session must be > 0");
    if (pulses_per_session > 0xFFFFFFFFULL) throw ConfigError("session: pulses_per_session exceeds 32-bit slot indices");
    if (!(qber_sample_fraction > 0.0 && qber_sample_fraction < 1.0))
        throw ConfigError("session: qber_sample_fraction must lie in (0, 1)");
    if (!(qber_abort_threshold > 0.0 && qber_abort_threshold < 0.5))
        throw ConfigError("session: qber_abort_threshold must lie in (0, 0.5)");
    if (!(max_ambiguous_fraction >= 0.0 && max_ambiguous_fraction <= 1.0))
        throw ConfigError("session: max_ambiguous_fraction must lie in [0, 1]");
    if (min_sample_bits == 0) throw ConfigError("session: min_sample_bits must be > 0");
    if (cascade.passes < 1 || cascade.passes > 255) throw ConfigError("session: cascade passes must lie in [1, 255]");
    if (!(cascade.block_coefficient > 0.0)) throw ConfigError("session: cascade block coefficient must be > 0");
    source.validate();
    link.validate();
    detector.validate();
    pulse_distribution(source);
    // Constructing the registers validates the seeds.
    FibonacciLfsr{seeds.lfsr_data};
    FibonacciLfsr{seeds.lfsr_basis};
}

QuantumLogs run_quantum_phase(const SessionConfig& cfg, unsigned threads) {
    cfg.validate();
    QuantumLogs logs;
    logs.alice = alice_bit_stream(cfg.seeds.lfsr_data, cfg.seeds.lfsr_basis, cfg.pulses_per_session);

    const std::uint64_t n = cfg.pulses_per_session;
    const std::uint64_t chunks = (n + kChunkSlots - 1) / kChunkSlots;
    const PhotonSampler sampler(cfg.source);
    const Receiver receiver(cfg.link, cfg.detector);
    const double t = cfg.link.transmission;

    // Each chunk of slots owns a substream, so the outcome does not depend
    // on how chunks are spread over threads.
    std::vector<std::vector<DetectionRecord>> per_chunk(chunks);
    auto work = [&](std::uint64_t first_chunk, std::uint64_t stride) {
        for (std::uint64_t c = first_chunk; c < chunks; c += stride) {
            Rng rng = make_stream(cfg.seeds.simulation, c);
            const std::uint64_t begin = c * kChunkSlots;
            const std::uint64_t end = std::min(n, begin + kChunkSlots);
            auto& out = per_chunk[c];
            for (std::uint64_t s = begin; s < end; ++s) {
                const AliceSymbol sym = logs.alice[s];
                const int emitted = sampler(rng);
                const int arriving = transmit(emitted, t, rng);
                const DetectionRecord rec =
                    receiver(encode(sym.bit, static_cast<Basis>(sym.basis)), arriving, rng, s);
                if (rec.fired) out.push_back(rec);
            }
        }
    };

    if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, chunks));
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work, i, threads);
    }

    for (auto& chunk : per_chunk) logs.bob.insert(logs.bob.end(), chunk.begin(), chunk.end());
    return logs;
}

wire::DetectionAnnounce bob_announcement(const std::vector<DetectionRecord>& bob_log) {
    wire::DetectionAnnounce a;
    a.slots.reserve(bob_log.size());
    a.bases.reserve(bob_log.size());
    a.ambiguous.reserve(bob_log.size());
    for (const auto& rec : bob_log) {
        a.slots.push_back(static_cast<std::uint32_t>(rec.slot));
        const auto det = rec.single();
        a.bases.push_back(det ? static_cast<std::uint8_t>(basis_of(*det)) : 0);
        a.ambiguous.push_back(det ? 0 : 1);
    }
    return a;
}

Bits bob_raw_bits(const std::vector<DetectionRecord>& bob_log) {
    Bits out;
    out.reserve(bob_log.size());
    for (const auto& rec : bob_log) {
        const auto det = rec.single();
        out.push_back(det ? static_cast<std::uint8_t>(bit_of(*det)) : 0);
    }
    return out;
}

wire::SiftReply alice_sift_reply(const std::vector<AliceSymbol>& alice_log, const wire::DetectionAnnounce& announce) {
    if (announce.bases.size() != announce.slots.size() || announce.ambiguous.size() != announce.slots.size())
        throw ProtocolError("sift: announcement fields differ in length");
    wire::SiftReply reply;
    reply.keep.reserve(announce.slots.size());
    for (std::size_t i = 0; i < announce.slots.size(); ++i) {
        const std::uint32_t slot = announce.slots[i];
        if (slot >= alice_log.size()) throw ProtocolError("sift: slot index out of range");
        if (i > 0 && slot <= announce.slots[i - 1]) throw ProtocolError("sift: slot indices not strictly increasing");
        const bool keep = !announce.ambiguous[i] && announce.bases[i] == alice_log[slot].basis;
        reply.keep.push_back(keep ? 1 : 0);
    }
    return reply;
}

SiftedKey alice_sifted_key(const std::vector<AliceSymbol>& alice_log, const wire::DetectionAnnounce& announce,
                           const wire::SiftReply& reply, std::uint64_t session_id) {
    if (reply.keep.size() != announce.slots.size()) throw ProtocolError("sift: reply length mismatch");
    SiftedKey key;
    key.session_id = session_id;
    for (std::size_t i = 0; i < reply.keep.size(); ++i) {
        if (!reply.keep[i]) continue;
        key.bits.push_back(alice_log.at(announce.slots[i]).bit);
        key.slot_indices.push_back(announce.slots[i]);
    }
    return key;
}

SiftedKey bob_sifted_key(const std::vector<DetectionRecord>& bob_log, const wire::SiftReply& reply,
                         std::uint64_t session_id) {
    if (reply.keep.size() != bob_log.size()) throw ProtocolError("sift: reply length mismatch");
    SiftedKey key;
    key.session_id = session_id;
    for (std::size_t i = 0; i < bob_log.size(); ++i) {
        if (!reply.keep[i]) continue;
        const auto det = bob_log[i].single();
        if (!det) throw ProtocolError("sift: ambiguous slot kept");
        key.bits.push_back(static_cast<std::uint8_t>(bit_of(*det)));
        key.slot_indices.push_back(static_cast<std::uint32_t>(bob_log[i].slot));
    }
    return key;
}

std::pair<SiftedKey, SiftedKey> sift(const std::vector<AliceSymbol>& alice_log,
                                     const std::vector<DetectionRecord>& bob_log, std::uint64_t session_id) {
    const wire::DetectionAnnounce announce = bob_announcement(bob_log);
    const wire::SiftReply reply = alice_sift_reply(alice_log, announce);
    return {alice_sifted_key(alice_log, announce, reply, session_id), bob_sifted_key(bob_log, reply, session_id)};
}

std::vector<std::uint32_t> choose_sample_positions(std::size_t n, double fraction, std::size_t min_bits, Rng& rng) {
    const auto by_fraction = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    const std::size_t k = std::min(n, std::max(min_bits, by_fraction));
    // Partial Fisher-Yates over an index vector.
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_index(rng, n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

void remove_positions(SiftedKey& key, const std::vector<std::uint32_t>& positions) {
    std::size_t out = 0, p = 0;
    for (std::size_t i = 0; i < key.bits.size(); ++i) {
        if (p < positions.size() && positions[p] == i) {
            ++p;
            continue;
        }
        key.bits[out] = key.bits[i];
        key.slot_indices[out] = key.slot_indices[i];
        ++out;
    }
    if (p != positions.size()) throw DomainError("remove_positions: positions unsorted or out of range");
    key.bits.resize(out);
    key.slot_indices.resize(out);
}

QberEstimate estimate_and_gate_qber(SiftedKey& alice, SiftedKey& bob, double fraction, double threshold,
                                    std::size_t min_bits, Rng& rng) {
    if (alice.size() != bob.size()) throw DomainError("qber: keys differ in length");
    if (alice.size() < min_bits) throw DomainError("qber: key shorter than the minimum sample");
    QberEstimate est;
    est.positions = choose_sample_positions(alice.size(), fraction, min_bits, rng);
    est.sampled = est.positions.size();
    for (std::uint32_t p : est.positions) est.mismatches += alice.bits[p] != bob.bits[p];
    est.qber = est.sampled ? static_cast<double>(est.mismatches) / static_cast<double>(est.sampled) : 0.0;
    est.abort = est.qber > threshold;
    remove_positions(alice, est.positions);
    remove_positions(bob, est.positions);
    alice.estimated_qber = bob.estimated_qber = est.qber;
    return est;
}

void write_sifted_log(std::ostream& os, const SiftedKey& key, const std::vector<AliceSymbol>& alice_log) {
    os << "# slot basis bit\n";
    for (std::size_t i = 0; i < key.size(); ++i) {
        const std::uint32_t slot = key.slot_indices[i];
        os << slot << ' ' << (alice_log.at(slot).basis ? 'C' : 'L') << ' ' << int{key.bits[i]} << '\n';
    }
}

void write_reconciliation_log(std::ostream& os, const ReconciliationTranscript& t) {
    os << "disclosed_parity_bits " << t.disclosed_parity_bits << '\n';
    os << "verification_bits " << t.verification_bits << '\n';
    os << "verified " << (t.verified ? 1 : 0) << '\n';
    os << "corrected " << t.corrected_positions.size() << '\n';
    for (std::size_t p = 0; p < t.passes.size(); ++p)
        os << "pass " << p << " block_size " << t.passes[p].block_size << " seed " << t.passes[p].seed << '\n';
}

} // namespace bb84
