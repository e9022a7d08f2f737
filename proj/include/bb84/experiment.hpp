#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bb84/protocol.hpp"
#include "bb84/reconcile.hpp"

namespace bb84 {

/// Every tunable of the experiments, loaded from a flat key=value file.
///
/// `session` drives the Monte Carlo link and the key-exchange protocol;
/// `analytic` drives the secure-gain curves. Both are derived from the same
/// source, receiver and QBER-fit values.
struct ExperimentParams {
    SessionConfig session;
    AnalyticModel analytic;
    /// Mean photon number of the fixed-mu weak coherent curve.
    double wcp_fixed_mu = reference::kMu;
    /// Upper end of the mean photon number search.
    double wcp_max_mu = 0.5;
    /// Detection probability at t = 1 used to calibrate the link efficiency.
    double p_exp_reference = reference::kPExp;
};

/// Parameters of the reference setup.
ExperimentParams reference_params();

/// Reads key=value lines over the reference values. Blank lines and lines
/// starting with '#' are ignored. Throws ConfigError for unknown keys,
/// malformed values or inconsistent parameters.
ExperimentParams parse_params(std::istream& in, const std::string& origin = "<config>");
ExperimentParams load_params(const std::string& path);

/// Writes every key with its current value in the format parse_params reads.
void write_params(std::ostream& os, const ExperimentParams& p);

/// Recomputes link efficiencies and the stray-light term after the source,
/// receiver or QBER-fit values changed.
void derive_params(ExperimentParams& p, const std::map<std::string, std::string>& explicit_keys = {});

double db_to_transmission(double db);
double transmission_to_db(double t);

// ---------------------------------------------------------------------------
// Secure gain sweep
// ---------------------------------------------------------------------------

struct GainRow {
    double attenuation_db = 0.0;
    double transmission = 1.0;
    double g_sps = 0.0;
    double g_wcp_fixed = 0.0;
    double g_wcp_opt = 0.0;
    double mu_opt = 0.0;
    bool insecure_sps = false;
    bool insecure_wcp_fixed = false;
    bool insecure_wcp_opt = false;
};

GainRow gain_row(const ExperimentParams& p, double attenuation_db);
std::vector<GainRow> simulate_gain(const ExperimentParams& p, const std::vector<double>& attenuation_db);
void write_gain_csv(std::ostream& os, const std::vector<GainRow>& rows);

/// First attenuation at which the single-photon gain is positive and exceeds
/// the optimised weak coherent gain, to `step_db`. Negative when it never does.
double crossover_db(const ExperimentParams& p, double lo_db = 0.0, double hi_db = 20.0, double step_db = 1e-3);

/// Attenuation where the single-photon gain reaches zero, to `step_db`.
double sps_cutoff_db(const ExperimentParams& p, double lo_db = 0.0, double hi_db = 30.0, double step_db = 1e-3);

// ---------------------------------------------------------------------------
// Monte Carlo link statistics
// ---------------------------------------------------------------------------

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs);

struct Table1Row {
    double transmission = 1.0;
    double attenuation_db = 0.0;
    int trials = 0;
    MeanSe raw;      // detections per session
    MeanSe p_exp;    // detections per slot
    MeanSe qber;     // full-comparison sifted error rate
    MeanSe sifted;   // sifted bits per session
};

/// `trials` sessions at transmission t, trial i using simulation seed
/// splitmix64(seed + i).
Table1Row table1_row(const ExperimentParams& p, double transmission, int trials, std::uint64_t seed,
                     unsigned threads = 0);

/// Transmissions of the five measured rows.
std::vector<double> table1_transmissions();

std::vector<Table1Row> table1(const ExperimentParams& p, const std::vector<double>& transmissions, int trials,
                              std::uint64_t seed, unsigned threads = 0);
void write_table1_csv(std::ostream& os, const std::vector<Table1Row>& rows);

/// Ground-truth sifted error rate of one simulated session.
double sifted_qber(const QuantumLogs& logs);

} // namespace bb84
