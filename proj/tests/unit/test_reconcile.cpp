#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "bb84/error.hpp"
#include "bb84/protocol.hpp"
#include "bb84/reconcile.hpp"

using namespace bb84;

namespace {

Bits random_bits(std::size_t n, Rng& rng) {
    Bits b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng() >> 63);
    return b;
}

Bits with_errors(Bits b, std::size_t errors, Rng& rng) {
    std::vector<std::uint32_t> idx(b.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < errors; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
        b[idx[i]] ^= 1;
    }
    return b;
}

Bits with_error_rate(Bits b, double e, Rng& rng) {
    for (auto& x : b)
        if (bernoulli(rng, e)) x ^= 1;
    return b;
}

double entropy_oracle(double e) {
    // Series-free check: log2 via natural logs.
    return -(e * std::log(e) + (1 - e) * std::log(1 - e)) / std::log(2.0);
}

// Brute-force bisection over an 8-bit key with one flipped position:
// whole-block parity plus one parity per halving.
int bisection_parities(int block) {
    int count = 1;
    for (int size = block; size > 1; size /= 2) ++count;
    return count;
}

// Counts CASCADE_PARITY_RESP parity bits in a recorded transcript.
std::uint64_t parity_bits_in(const std::vector<std::uint8_t>& transcript) {
    std::uint64_t total = 0;
    std::size_t i = 0;
    while (i < transcript.size()) {
        const bool incoming = transcript[i] == '<';
        ++i;
        const auto d = wire::decode_frame(std::span(transcript).subspan(i));
        REQUIRE(d.status == wire::Decoded::Status::Complete);
        if (incoming)
            if (const auto* r = std::get_if<wire::CascadeParityResp>(&*d.message)) total += r->parities.size();
        i += d.consumed;
    }
    return total;
}

}  // namespace

TEST_CASE("binary entropy") {
    CHECK(binary_entropy(0.5) == 1.0);
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(std::abs(binary_entropy(0.0165) - 0.1213) <= 1e-4);
    for (double e = 0.01; e < 1.0; e += 0.01) {
        CHECK(binary_entropy(e) == doctest::Approx(entropy_oracle(e)).epsilon(1e-12));
        CHECK(binary_entropy(e) == doctest::Approx(binary_entropy(1 - e)).epsilon(1e-12));
        CHECK(binary_entropy(e) <= 1.0);
    }
    CHECK_THROWS_AS(binary_entropy(-0.01), DomainError);
    CHECK_THROWS_AS(binary_entropy(1.01), DomainError);
}

TEST_CASE("block sizes") {
    CascadeParams p;
    p.power_of_two_blocks = false;
    p.block_coefficient = 0.73;
    CHECK(first_block_size(0.0165, 4000, p) == 45);
    CHECK(first_block_size(0.0, 4000, p) == 4000);
    p.power_of_two_blocks = true;
    CHECK(first_block_size(0.0165, 4000, p) == 64);
    CHECK(pass_block_size(64, 1, 4000, p) == 128);
    CHECK(pass_block_size(64, 10, 4000, p) == 1334);
}

TEST_CASE("permutations are bijections") {
    for (std::uint64_t seed : {1ULL, 2ULL, 77ULL}) {
        auto perm = cascade_permutation(1000, seed);
        std::sort(perm.begin(), perm.end());
        for (std::uint32_t i = 0; i < 1000; ++i) REQUIRE(perm[i] == i);
    }
    CHECK(cascade_permutation(1000, 1) != cascade_permutation(1000, 2));
}

TEST_CASE("identical keys need only top-level parities") {
    Rng rng = make_stream(1);
    const Bits key = random_bits(1024, rng);
    const CascadeParams params;
    const double e = 0.03;
    const auto r = cascade(key, key, e, params, 5);
    CHECK(r.corrected == key);
    CHECK(r.transcript.corrected_positions.empty());
    const std::size_t first = first_block_size(e, key.size(), params);
    std::uint64_t expected = 0;
    for (int p = 0; p < params.passes; ++p) {
        const std::size_t k = pass_block_size(first, p, key.size(), params);
        const std::size_t blocks = (key.size() + k - 1) / k;
        expected += p == 0 ? blocks : blocks - 1;
        CHECK(r.transcript.passes[static_cast<std::size_t>(p)].block_size == k);
    }
    CHECK(r.transcript.disclosed_parity_bits == expected);
    CHECK(r.transcript.verified);
}

TEST_CASE("single error in an 8-bit key") {
    CascadeParams params;
    params.passes = 1;
    params.block_coefficient = 8 * 0.5;  // k = 8 at e = 0.5
    Rng rng = make_stream(2);
    for (int pos = 0; pos < 8; ++pos) {
        CAPTURE(pos);
        const Bits alice = random_bits(8, rng);
        Bits bob = alice;
        bob[static_cast<std::size_t>(pos)] ^= 1;
        const auto r = cascade(alice, bob, 0.5, params, 3, 0);
        REQUIRE(r.transcript.passes.front().block_size == 8);
        CHECK(r.transcript.disclosed_parity_bits == static_cast<std::uint64_t>(bisection_parities(8)));
        CHECK(r.transcript.disclosed_parity_bits == 4);
        CHECK(r.transcript.corrected_positions == std::vector<std::uint32_t>{static_cast<std::uint32_t>(pos)});
        CHECK(r.corrected == alice);
    }
}

TEST_CASE("disclosure stays within 10% of the Shannon limit") {
    const std::size_t n = 4000;
    const double e = 0.0165;
    const double limit = 1.10 * double(n) * binary_entropy(e);
    const auto errors = static_cast<std::size_t>(std::lround(e * double(n)));
    Rng rng = make_stream(3);
    const int trials = 300;
    int within = 0;
    for (int i = 0; i < trials; ++i) {
        const Bits a = random_bits(n, rng);
        const auto r = cascade(a, with_errors(a, errors, rng), e, CascadeParams{}, rng());
        REQUIRE(r.transcript.verified);
        within += double(r.transcript.disclosed_parity_bits) <= limit;
    }
    CHECK(double(within) / trials >= 0.95);
}

TEST_CASE("cascade corrects all errors with high probability" * doctest::timeout(600)) {
    const std::size_t n = 1024;
    for (double e : {0.01, 0.03, 0.05}) {
        CAPTURE(e);
        Rng rng = make_stream(4, static_cast<std::uint64_t>(e * 1000));
        const int trials = 10'000;
        int equal = 0, failures = 0, caught = 0;
        for (int i = 0; i < trials; ++i) {
            const Bits a = random_bits(n, rng);
            const auto r = cascade(a, with_error_rate(a, e, rng), e, CascadeParams{}, rng());
            const std::set<std::uint32_t> distinct(r.transcript.corrected_positions.begin(),
                                                   r.transcript.corrected_positions.end());
            REQUIRE(distinct.size() == r.transcript.corrected_positions.size());
            if (r.corrected == a) {
                ++equal;
                REQUIRE(r.transcript.verified);
            } else {
                ++failures;
                caught += !r.transcript.verified;
            }
        }
        CHECK(double(equal) / trials >= 0.99);
        CHECK(caught == failures);
    }
}

TEST_CASE("verification catches injected residual errors") {
    Rng rng = make_stream(5);
    CascadeParams one_pass;
    one_pass.passes = 1;
    int failures = 0, caught = 0;
    for (int i = 0; i < 2000; ++i) {
        const Bits a = random_bits(1024, rng);
        // A single pass leaves even-weight error patterns inside blocks.
        const auto r = cascade(a, with_error_rate(a, 0.05, rng), 0.05, one_pass, rng());
        if (r.corrected != a) {
            ++failures;
            caught += !r.transcript.verified;
        }
    }
    CHECK(failures > 100);
    CHECK(caught == failures);
}

TEST_CASE("responder rejects out-of-order announcements") {
    CascadeResponder r(Bits(16, 0));
    CHECK_THROWS_AS(r.set_permutation(2, 1), ProtocolError);
    const std::vector<BlockRange> bad = {{1, 0, 4}};
    CHECK_THROWS_AS(r.answer(bad), ProtocolError);
    const std::vector<BlockRange> empty = {{0, 4, 4}};
    CHECK_THROWS_AS(r.answer(empty), ProtocolError);
}

TEST_CASE("secure gain") {
    SUBCASE("reference point") {
        const auto g = secure_gain({7.6e-3, 4.1e-5, 0.0165});
        CHECK(g.bits_per_pulse == doctest::Approx(2.9e-3).epsilon(0.05));
        CHECK(std::abs(g.bits_per_pulse * 1048575 - 3200) <= 320);
    }
    SUBCASE("no errors and no multiphoton pulses") {
        CHECK(secure_gain({7.6e-3, 0.0, 0.0}).bits_per_pulse == doctest::Approx(7.6e-3 / 2).epsilon(1e-15));
    }
    SUBCASE("every detection may be multiphoton") {
        const auto g = secure_gain({7.6e-3, 7.6e-3, 0.01});
        CHECK(g.bits_per_pulse == 0.0);
        CHECK(g.insecure);
    }
    SUBCASE("negative interior is clamped") {
        const auto g = secure_gain({7.6e-3, 0.0, 0.2});
        CHECK(g.bits_per_pulse == 0.0);
        CHECK(g.insecure);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(secure_gain({0.0, 0.0, 0.01}), DomainError);
        CHECK_THROWS_AS(secure_gain({0.01, -1e-6, 0.01}), DomainError);
        CHECK_THROWS_AS(secure_gain({0.01, 0.0, 0.5}), DomainError);
    }
}

TEST_CASE("secure gain is non-increasing in e and s_m") {
    const double p_exp = 7.6e-3;
    for (int i = 0; i <= 50; ++i) {
        const double s_m = p_exp * 0.5 * i / 50.0;
        double prev = secure_gain({p_exp, s_m, 0.0}).bits_per_pulse;
        for (int j = 1; j <= 100; ++j) {
            const double g = secure_gain({p_exp, s_m, 0.2 * j / 100.0}).bits_per_pulse;
            REQUIRE(g <= prev);
            prev = g;
        }
    }
    for (int j = 0; j <= 50; ++j) {
        const double e = 0.15 * j / 50.0;
        double prev = secure_gain({p_exp, 0.0, e}).bits_per_pulse;
        for (int i = 1; i <= 100; ++i) {
            const double g = secure_gain({p_exp, p_exp * i / 100.0, e}).bits_per_pulse;
            REQUIRE(g <= prev);
            prev = g;
        }
    }
}

TEST_CASE("optimize_mu_wcp beats a 1000-point grid") {
    const AnalyticModel model = AnalyticModel::reference();
    for (double t : {1.0, 0.498, 0.25, 0.128, 0.057}) {
        CAPTURE(t);
        const auto opt = optimize_mu_wcp(t, model);
        // No secure rate means no grid point may have a positive gain.
        const double best = opt ? opt->gain : 0.0;
        if (opt) {
            CHECK(opt->mu > 0.0);
            CHECK(opt->mu <= 0.5);
        }
        for (int i = 1; i <= 1000; ++i) {
            const double mu = 0.5 * i / 1000.0;
            const auto g = analytic_gain_inputs(SourceModel::weak_coherent(mu), t, model);
            const double G = g.e < 0.5 ? secure_gain(g).bits_per_pulse : 0.0;
            REQUIRE(best >= G);
        }
    }
}

TEST_CASE("no secure rate beyond the cutoff") {
    CHECK_FALSE(optimize_mu_wcp(1e-4, AnalyticModel::reference()).has_value());
    CHECK_THROWS_AS(optimize_mu_wcp(0.0, AnalyticModel::reference()), DomainError);
}

TEST_CASE("single photons beat the optimised weak coherent source at t = 0.1") {
    const AnalyticModel model = AnalyticModel::reference();
    const double sps = secure_gain(analytic_gain_inputs(reference::source(), 0.1, model)).bits_per_pulse;
    const auto wcp = optimize_mu_wcp(0.1, model);
    REQUIRE(wcp.has_value());
    CHECK(sps > wcp->gain);
}

TEST_CASE("toeplitz hash") {
    Rng rng = make_stream(6);
    const Bits x = random_bits(1000, rng);
    SUBCASE("linear over GF(2)") {
        const Bits y = random_bits(1000, rng);
        Bits xy(1000);
        for (std::size_t i = 0; i < 1000; ++i) xy[i] = x[i] ^ y[i];
        const Bits hx = toeplitz_hash(x, 77, 9), hy = toeplitz_hash(y, 77, 9), hxy = toeplitz_hash(xy, 77, 9);
        for (std::size_t i = 0; i < 77; ++i) CHECK(hxy[i] == (hx[i] ^ hy[i]));
    }
    SUBCASE("diagonal-constant matrix") {
        // Column j of the matrix is the hash of the unit vector e_j; a
        // Toeplitz matrix satisfies T[i+1][j+1] = T[i][j].
        const std::size_t n = 70, m = 20;
        std::vector<Bits> cols;
        for (std::size_t j = 0; j < n; ++j) {
            Bits e(n, 0);
            e[j] = 1;
            cols.push_back(toeplitz_hash(e, m, 11));
        }
        for (std::size_t i = 0; i + 1 < m; ++i)
            for (std::size_t j = 0; j + 1 < n; ++j) REQUIRE(cols[j + 1][i + 1] == cols[j][i]);
    }
    SUBCASE("seed dependence") { CHECK(toeplitz_hash(x, 64, 1) != toeplitz_hash(x, 64, 2)); }
}

TEST_CASE("privacy amplification") {
    Rng rng = make_stream(7);
    const Bits key = random_bits(4000, rng);
    SUBCASE("identity bound") {
        const auto r = privacy_amplify(key, ReconciliationTranscript{}, GainInputs{0.01, 0.0, 0.0},
                                       PrivacyOptions{0, 0, 1048575, 1}, 3);
        CHECK(r.computed_length == 4000);
        CHECK(r.key.bits.size() == 4000);
    }
    SUBCASE("two sides agree and seeds matter") {
        const GainInputs g{7.6e-3, 4.1e-5, 0.0165};
        ReconciliationTranscript t;
        t.disclosed_parity_bits = 520;
        t.verification_bits = 32;
        const PrivacyOptions o{40, 30, 1048575, 9};
        const auto a = privacy_amplify(key, t, g, o, 42);
        const auto b = privacy_amplify(Bits(key), t, g, o, 42);
        const auto c = privacy_amplify(key, t, g, o, 43);
        CHECK(a.key == b.key);
        CHECK(a.key.bits.size() == c.key.bits.size());
        CHECK(a.key.bits != c.key.bits);
        CHECK(a.key.session_id == 9);
        CHECK(a.key.gain_achieved == doctest::Approx(double(a.computed_length) / 1048575));
    }
    SUBCASE("final length agrees with the secure gain") {
        const std::size_t n = 4000;
        const double e = 0.0165;
        const GainInputs g{7.6e-3, 4.1e-5, e};
        const Bits a = random_bits(n, rng);
        const auto rec = cascade(a, with_errors(a, 66, rng), e, CascadeParams{}, 8);
        const auto sample = static_cast<std::uint64_t>(std::ceil(0.01 * n));
        const std::int64_t m =
            final_key_length(n, g, rec.transcript, PrivacyOptions{sample, 30, 1048575, 0});
        const double G = secure_gain(g).bits_per_pulse;
        CHECK(std::abs(double(m) / 1048575 - G) <= 0.10 * G);
    }
    SUBCASE("leakage beyond secrecy gives an empty key") {
        ReconciliationTranscript t;
        t.disclosed_parity_bits = 5000;
        const auto r = privacy_amplify(key, t, GainInputs{7.6e-3, 4.1e-5, 0.0165}, PrivacyOptions{}, 1);
        CHECK(r.computed_length <= 0);
        CHECK(r.key.bits.empty());
        CHECK_FALSE(r.diagnostic.empty());
    }
}

TEST_CASE("disclosed parities match the wire transcript") {
    SessionConfig cfg = SessionConfig::reference(1.0);
    for (std::uint64_t s : {1ULL, 2ULL, 3ULL}) {
        cfg.seeds.simulation = s;
        cfg.seeds.classical = s + 100;
        const LocalExchange ex = run_local_exchange(cfg);
        REQUIRE(ex.bob.success);
        CHECK(parity_bits_in(ex.transcript) == ex.bob.transcript.disclosed_parity_bits);
        CHECK(ex.alice.transcript.disclosed_parity_bits == ex.bob.transcript.disclosed_parity_bits);
    }
}
