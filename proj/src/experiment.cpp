#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "bb84/error.hpp"
#include "bb84/experiment.hpp"

namespace bb84 {

double db_to_transmission(double db) {
    if (!(db >= 0.0)) throw DomainError("attenuation must be >= 0 dB");
    return std::pow(10.0, -db / 10.0);
}

double transmission_to_db(double t) {
    if (!(t > 0.0 && t <= 1.0)) throw DomainError("transmission must lie in (0, 1]");
    return 10.0 * std::log10(1.0 / t);
}

namespace {

GainEstimate gain_for(const SourceModel& src, double t, const AnalyticModel& model) {
    const GainInputs g = analytic_gain_inputs(src, t, model);
    if (!(g.e < 0.5)) return {0.0, true};
    return secure_gain(g);
}

double g_sps_at(const ExperimentParams& p, double db) {
    return gain_for(p.session.source, db_to_transmission(db), p.analytic).bits_per_pulse;
}

double g_wcp_opt_at(const ExperimentParams& p, double db) {
    const auto opt = optimize_mu_wcp(db_to_transmission(db), p.analytic, 1e-10, p.wcp_max_mu);
    return opt ? opt->gain : 0.0;
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9e", x);
    return buf;
}

}  // namespace

GainRow gain_row(const ExperimentParams& p, double attenuation_db) {
    GainRow r;
    r.attenuation_db = attenuation_db;
    r.transmission = db_to_transmission(attenuation_db);
    const GainEstimate sps = gain_for(p.session.source, r.transmission, p.analytic);
    const GainEstimate fixed = gain_for(SourceModel::weak_coherent(p.wcp_fixed_mu), r.transmission, p.analytic);
    r.g_sps = sps.bits_per_pulse;
    r.insecure_sps = sps.insecure;
    r.g_wcp_fixed = fixed.bits_per_pulse;
    r.insecure_wcp_fixed = fixed.insecure;
    if (const auto opt = optimize_mu_wcp(r.transmission, p.analytic, 1e-10, p.wcp_max_mu)) {
        r.g_wcp_opt = opt->gain;
        r.mu_opt = opt->mu;
    } else {
        r.insecure_wcp_opt = true;
    }
    return r;
}

std::vector<GainRow> simulate_gain(const ExperimentParams& p, const std::vector<double>& attenuation_db) {
    std::vector<GainRow> rows;
    rows.reserve(attenuation_db.size());
    for (double db : attenuation_db) rows.push_back(gain_row(p, db));
    return rows;
}

void write_gain_csv(std::ostream& os, const std::vector<GainRow>& rows) {
    os << "attenuation_dB,transmission,G_sps_bits_per_pulse,G_wcp_fixed_mu_bits_per_pulse,"
          "G_wcp_opt_bits_per_pulse,mu_opt_photons_per_pulse,insecure_sps,insecure_wcp_fixed,insecure_wcp_opt\n";
    for (const auto& r : rows) {
        char db[32];
        std::snprintf(db, sizeof db, "%.3f", r.attenuation_db);
        os << db << ',' << sci(r.transmission) << ',' << sci(r.g_sps) << ',' << sci(r.g_wcp_fixed) << ','
           << sci(r.g_wcp_opt) << ',' << sci(r.mu_opt) << ',' << int{r.insecure_sps} << ','
           << int{r.insecure_wcp_fixed} << ',' << int{r.insecure_wcp_opt} << '\n';
    }
}

double crossover_db(const ExperimentParams& p, double lo_db, double hi_db, double step_db) {
    auto sps_ahead = [&](double db) {
        const double g = g_sps_at(p, db);
        return g > 0.0 && g > g_wcp_opt_at(p, db);
    };
    if (sps_ahead(lo_db)) return lo_db;
    const double coarse = 0.05;
    for (double prev = lo_db, db = lo_db + coarse; db <= hi_db + 1e-12; prev = db, db += coarse) {
        if (!sps_ahead(db)) continue;
        double a = prev, b = db;  // !ahead(a), ahead(b)
        while (b - a > step_db) {
            const double m = 0.5 * (a + b);
            (sps_ahead(m) ? b : a) = m;
        }
        return b;
    }
    return -1.0;
}

double sps_cutoff_db(const ExperimentParams& p, double lo_db, double hi_db, double step_db) {
    double a = lo_db, b = hi_db;
    if (!(g_sps_at(p, a) > 0.0)) return lo_db;
    if (g_sps_at(p, b) > 0.0) return hi_db;
    while (b - a > step_db) {
        const double m = 0.5 * (a + b);
        (g_sps_at(p, m) > 0.0 ? a : b) = m;
    }
    return 0.5 * (a + b);
}

MeanSe mean_se(const std::vector<double>& xs) {
    if (xs.empty()) return {};
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double var = ss / static_cast<double>(xs.size() - 1);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

double sifted_qber(const QuantumLogs& logs) {
    const auto [alice, bob] = sift(logs.alice, logs.bob);
    if (alice.size() == 0) return 0.0;
    return static_cast<double>(hamming_distance(alice.bits, bob.bits)) / static_cast<double>(alice.size());
}

Table1Row table1_row(const ExperimentParams& p, double transmission, int trials, std::uint64_t seed,
                     unsigned threads) {
    if (trials < 1) throw ConfigError("table1: trial count must be >= 1");
    SessionConfig cfg = p.session;
    cfg.link.transmission = transmission;
    std::vector<double> raw, pexp, qber, sifted;
    for (int i = 0; i < trials; ++i) {
        cfg.seeds.simulation = splitmix64(seed + static_cast<std::uint64_t>(i));
        const QuantumLogs logs = run_quantum_phase(cfg, threads);
        const auto [alice, bob] = sift(logs.alice, logs.bob);
        const double n = static_cast<double>(logs.bob.size());
        raw.push_back(n);
        pexp.push_back(n / static_cast<double>(cfg.pulses_per_session));
        sifted.push_back(static_cast<double>(alice.size()));
        qber.push_back(alice.size() ? static_cast<double>(hamming_distance(alice.bits, bob.bits)) /
                                          static_cast<double>(alice.size())
                                    : 0.0);
    }
    Table1Row row;
    row.transmission = transmission;
    row.attenuation_db = transmission_to_db(transmission);
    row.trials = trials;
    row.raw = mean_se(raw);
    row.p_exp = mean_se(pexp);
    row.qber = mean_se(qber);
    row.sifted = mean_se(sifted);
    return row;
}

std::vector<double> table1_transmissions() { return {1.0, 0.498, 0.25, 0.128, 0.057}; }

std::vector<Table1Row> table1(const ExperimentParams& p, const std::vector<double>& transmissions, int trials,
                              std::uint64_t seed, unsigned threads) {
    std::vector<Table1Row> rows;
    for (std::size_t i = 0; i < transmissions.size(); ++i)
        rows.push_back(table1_row(p, transmissions[i], trials, splitmix64(seed ^ (0x7AB1E1ULL + i)), threads));
    return rows;
}

void write_table1_csv(std::ostream& os, const std::vector<Table1Row>& rows) {
    os << "transmission,attenuation_dB,trials,raw_bits_mean,raw_bits_se,p_exp_per_slot_mean,p_exp_per_slot_se,"
          "qber_mean,qber_se,sifted_bits_mean,sifted_bits_se\n";
    for (const auto& r : rows) {
        char buf[512];
        std::snprintf(buf, sizeof buf, "%.6g,%.3f,%d,%.2f,%.2f,%.6e,%.3e,%.6f,%.6f,%.2f,%.2f\n", r.transmission,
                      r.attenuation_db, r.trials, r.raw.mean, r.raw.se, r.p_exp.mean, r.p_exp.se, r.qber.mean,
                      r.qber.se, r.sifted.mean, r.sifted.se);
        os << buf;
    }
}

} // namespace bb84
