#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>

#include "bb84/error.hpp"
#include "bb84/reconcile.hpp"

namespace bb84 {

std::size_t first_block_size(double e_estimate, std::size_t n, const CascadeParams& params) {
    if (n == 0) return 1;
    const double e = e_estimate > 0.0 ? e_estimate : 0.5 / static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(params.block_coefficient / e));
    k = std::clamp<std::size_t>(k, 1, n);
    if (params.power_of_two_blocks) k = std::bit_ceil(k);
    return std::max<std::size_t>(k, 1);
}

std::size_t pass_block_size(std::size_t first, int pass, std::size_t n, const CascadeParams& params) {
    std::size_t k = first;
    for (int p = 0; p < pass && k < n; ++p) k *= 2;
    const std::size_t blocks = std::max<std::size_t>(params.min_blocks_per_pass, 1);
    const std::size_t cap = std::max<std::size_t>(first, (n + blocks - 1) / blocks);
    return std::max<std::size_t>(std::min(k, cap), 1);
}

std::vector<std::uint32_t> cascade_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0U);
    Rng rng = make_stream(seed, 0xCA5CADE);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

CascadeResponder::CascadeResponder(Bits key) : key_(std::move(key)) {
    std::vector<std::uint32_t> identity(key_.size());
    std::iota(identity.begin(), identity.end(), 0U);
    orders_.push_back(std::move(identity));
}

void CascadeResponder::set_permutation(std::uint8_t pass, std::uint64_t seed) {
    if (pass != orders_.size()) throw ProtocolError("cascade: permutation announced out of order");
    orders_.push_back(cascade_permutation(key_.size(), seed));
}

Bits CascadeResponder::answer(std::span<const BlockRange> blocks) {
    Bits out;
    out.reserve(blocks.size());
    for (const BlockRange& b : blocks) {
        if (b.pass >= orders_.size()) throw ProtocolError("cascade: parity requested for an unannounced pass");
        if (b.begin >= b.end || b.end > key_.size()) throw ProtocolError("cascade: invalid block range");
        const auto& order = orders_[b.pass];
        std::uint8_t parity = 0;
        for (std::uint32_t i = b.begin; i < b.end; ++i) parity ^= key_[order[i]];
        out.push_back(parity);
    }
    disclosed_ += blocks.size();
    return out;
}

namespace {

// Bob's bookkeeping for one pass.
struct PassState {
    std::size_t block_size = 0;
    std::vector<std::uint32_t> order;     // position -> key index
    std::vector<std::uint32_t> position;  // key index -> position
    std::size_t blocks = 0;

    std::uint32_t block_of(std::uint32_t key_index) const {
        return static_cast<std::uint32_t>(position[key_index] / block_size);
    }
    BlockRange range(std::uint8_t pass, std::size_t block) const {
        const auto begin = static_cast<std::uint32_t>(block * block_size);
        const auto end = static_cast<std::uint32_t>(std::min(order.size(), (block + 1) * block_size));
        return {pass, begin, end};
    }
};

class BobDriver {
public:
    BobDriver(Bits key, CascadeChannel& channel) : key_(std::move(key)), channel_(channel) {}

    CascadeResult run(double e_estimate, const CascadeParams& params, std::uint64_t seed) {
        const std::size_t n = key_.size();
        if (n == 0) return {key_, transcript_};
        Rng seeds = make_stream(seed, 0x5EED);
        const std::size_t first = first_block_size(e_estimate, n, params);
        std::uint8_t whole_parity = 0;

        for (int p = 0; p < params.passes; ++p) {
            const auto pass = static_cast<std::uint8_t>(p);
            PassState st;
            st.block_size = pass_block_size(first, p, n, params);
            std::uint64_t pass_seed = 0;
            if (p == 0) {
                st.order.resize(n);
                std::iota(st.order.begin(), st.order.end(), 0U);
            } else {
                pass_seed = seeds();
                channel_.announce_permutation(pass, pass_seed);
                st.order = cascade_permutation(n, pass_seed);
            }
            st.position.resize(n);
            for (std::size_t i = 0; i < n; ++i) st.position[st.order[i]] = static_cast<std::uint32_t>(i);
            st.blocks = (n + st.block_size - 1) / st.block_size;
            passes_.push_back(std::move(st));
            transcript_.passes.push_back({passes_.back().block_size, pass_seed});

            // Top-level parities. After the first pass the parity of the whole
            // key is known, so the last block of every later pass is inferred.
            const PassState& cur = passes_.back();
            std::vector<BlockRange> ask;
            for (std::size_t b = 0; b < cur.blocks; ++b)
                if (p == 0 || b + 1 < cur.blocks) ask.push_back(cur.range(pass, b));
            const Bits answers = fetch(ask);
            std::uint8_t acc = 0;
            for (std::uint8_t a : answers) acc ^= a;
            if (p == 0) {
                whole_parity = acc;
            } else {
                known_[cur.range(pass, cur.blocks - 1)] = static_cast<std::uint8_t>(whole_parity ^ acc);
            }

            for (std::size_t b = 0; b < cur.blocks; ++b)
                if (block_differs(pass, b)) queue_.insert(key_for(pass, b));
            drain();
        }
        return {key_, transcript_};
    }

private:
    using QueueKey = std::tuple<std::size_t, std::uint8_t, std::size_t>;  // (size, pass, block)

    QueueKey key_for(std::uint8_t pass, std::size_t block) const {
        const BlockRange r = passes_[pass].range(pass, block);
        return {r.end - r.begin, pass, block};
    }

    std::uint8_t bob_parity(const BlockRange& r) const {
        const auto& order = passes_[r.pass].order;
        std::uint8_t parity = 0;
        for (std::uint32_t i = r.begin; i < r.end; ++i) parity ^= key_[order[i]];
        return parity;
    }

    // Alice's parities for ranges, requesting only those not yet known.
    Bits fetch(const std::vector<BlockRange>& ranges) {
        std::vector<BlockRange> missing;
        for (const auto& r : ranges)
            if (!known_.contains(r)) missing.push_back(r);
        if (!missing.empty()) {
            const Bits got = channel_.request_parities(missing);
            if (got.size() != missing.size()) throw ProtocolError("cascade: parity response has wrong length");
            transcript_.disclosed_parity_bits += got.size();
            for (std::size_t i = 0; i < missing.size(); ++i) known_[missing[i]] = got[i] & 1U;
        }
        Bits out;
        out.reserve(ranges.size());
        for (const auto& r : ranges) out.push_back(known_.at(r));
        return out;
    }

    std::uint8_t alice_parity(const BlockRange& r) { return fetch({r}).front(); }

    bool block_differs(std::uint8_t pass, std::size_t block) {
        const BlockRange r = passes_[pass].range(pass, block);
        return alice_parity(r) != bob_parity(r);
    }

    // Bisective search for one error in a block of odd relative parity.
    std::uint32_t locate(BlockRange r) {
        while (r.end - r.begin > 1) {
            const std::uint32_t mid = r.begin + (r.end - r.begin) / 2;
            const BlockRange left{r.pass, r.begin, mid};
            if (alice_parity(left) != bob_parity(left)) {
                r.end = mid;
            } else {
                r.begin = mid;
            }
        }
        return passes_[r.pass].order[r.begin];
    }

    void drain() {
        while (!queue_.empty()) {
            const auto [size, pass, block] = *queue_.begin();
            queue_.erase(queue_.begin());
            const BlockRange r = passes_[pass].range(pass, block);
            if (known_.at(r) == bob_parity(r)) continue;
            const std::uint32_t index = locate(r);
            key_[index] ^= 1U;
            transcript_.corrected_positions.push_back(index);
            // Every block containing the flipped bit changes relative parity.
            for (std::size_t q = 0; q < passes_.size(); ++q) {
                const QueueKey k = key_for(static_cast<std::uint8_t>(q), passes_[q].block_of(index));
                if (!queue_.erase(k)) queue_.insert(k);
            }
        }
    }

    Bits key_;
    CascadeChannel& channel_;
    ReconciliationTranscript transcript_;
    std::vector<PassState> passes_;
    std::map<BlockRange, std::uint8_t> known_;
    std::set<QueueKey> queue_;
};

}  // namespace

CascadeResult cascade_correct(Bits bob_key, double e_estimate, const CascadeParams& params, std::uint64_t seed,
                              CascadeChannel& channel) {
    if (params.passes < 1) throw ConfigError("cascade: at least one pass is required");
    return BobDriver(std::move(bob_key), channel).run(e_estimate, params, seed);
}

CascadeResult cascade(const Bits& alice_key, Bits bob_key, double e_estimate, const CascadeParams& params,
                      std::uint64_t seed, std::size_t verification_bits) {
    if (alice_key.size() != bob_key.size()) throw DomainError("cascade: keys differ in length");
    CascadeResponder alice(alice_key);
    LocalCascadeChannel channel(alice);
    CascadeResult result = cascade_correct(std::move(bob_key), e_estimate, params, seed, channel);
    if (verification_bits > 0) {
        const std::uint64_t hash_seed = splitmix64(seed ^ 0x7E41F1CA7104ULL);
        result.transcript.verification_bits = verification_bits;
        result.transcript.verified = toeplitz_hash(alice_key, verification_bits, hash_seed) ==
                                     toeplitz_hash(result.corrected, verification_bits, hash_seed);
    } else {
        result.transcript.verified = true;
    }
    return result;
}

} // namespace bb84
