#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "bb84/error.hpp"
#include "bb84/experiment.hpp"
#include "bb84/lfsr.hpp"
#include "bb84/protocol.hpp"
#include "bb84/wire.hpp"

namespace {

using namespace bb84;

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kParameterMismatch = 2,
    kQberAbort = 3,
    kTransport = 4,
    kNoSecureRate = 5,
    kReconciliationFailed = 6,
    kProtocolViolation = 7,
    kTooManyAmbiguous = 8,
    kInsufficientKey = 9,
    kTimeout = 10,
};

int exit_code_for(wire::AbortReason r) {
    switch (r) {
    case wire::AbortReason::Timeout: return kTimeout;
    case wire::AbortReason::ParameterMismatch: return kParameterMismatch;
    case wire::AbortReason::QberExceeded: return kQberAbort;
    case wire::AbortReason::ProtocolViolation: return kProtocolViolation;
    case wire::AbortReason::ReconciliationFailed: return kReconciliationFailed;
    case wire::AbortReason::NoSecureRate: return kNoSecureRate;
    case wire::AbortReason::TooManyAmbiguous: return kTooManyAmbiguous;
    case wire::AbortReason::InsufficientKey: return kInsufficientKey;
    case wire::AbortReason::TransportFailure: return kTransport;
    }
    return kProtocolViolation;
}

// Writes to --out when given, stdout otherwise.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw ConfigError("cannot write " + path);
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

ExperimentParams params_from(const std::string& config) {
    return config.empty() ? reference_params() : load_params(config);
}

std::vector<double> default_sweep() {
    std::vector<double> db;
    for (int i = 0; i <= 40; ++i) db.push_back(0.5 * i);
    return db;
}

void write_report(std::ostream& os, const std::string& role, const SessionOutcome& out) {
    const SessionReport& r = out.report;
    os << "role " << role << '\n'
       << "status " << (out.success ? "success" : "abort") << '\n';
    if (!out.success)
        os << "abort_reason " << wire::to_string(out.reason) << '\n' << "diagnostic " << out.diagnostic << '\n';
    os << "pulses " << r.pulses << '\n'
       << "raw_detections " << r.raw_detections << '\n'
       << "ambiguous " << r.ambiguous << '\n'
       << "sifted " << r.sifted << '\n'
       << "qber_sample_bits " << r.sample_bits << '\n'
       << "qber_estimate " << r.qber_sample << '\n'
       << "reconciled_bits " << r.reconciled_bits << '\n'
       << "disclosed_parity_bits " << r.disclosed_parity_bits << '\n'
       << "verification_bits " << r.verification_bits << '\n'
       << "corrected_bits " << r.corrected_bits << '\n'
       << "final_length " << (out.success ? r.final_length : 0) << '\n'
       << "wall_time_s " << r.wall_time_s << '\n';
}

int keyexchange(const std::string& role, const std::string& listen, const std::string& connect,
                const std::string& config, std::optional<std::uint64_t> seed, const std::string& key_path,
                const std::string& report_path, std::optional<double> transmission) {
    if (role != "alice" && role != "bob") throw CLI::ValidationError("--role", "must be alice or bob");
    if (listen.empty() == connect.empty()) throw CLI::ValidationError("keyexchange", "give exactly one of --listen/--connect");
    ExperimentParams p = params_from(config);
    if (transmission) p.session.link.transmission = *transmission;
    if (seed) {
        p.session.seeds.simulation = *seed;
        p.session.seeds.classical = splitmix64(*seed);
    }
    SessionConfig& cfg = p.session;
    cfg.validate();

    std::unique_ptr<wire::Channel> channel;
    try {
        if (!listen.empty()) {
            const auto [host, port] = wire::parse_endpoint(listen);
            wire::TcpListener listener(host, port);
            std::cerr << "listening on " << host << ':' << listener.port() << '\n';
            channel = listener.accept(cfg.message_timeout);
        } else {
            const auto [host, port] = wire::parse_endpoint(connect);
            channel = wire::tcp_connect(host, port, cfg.message_timeout);
        }
    } catch (const wire::TimeoutError& e) {
        std::cerr << "keyexchange: " << e.what() << '\n';
        return kTimeout;
    } catch (const wire::TransportError& e) {
        std::cerr << "keyexchange: " << e.what() << '\n';
        return kTransport;
    }

    // Both processes replay the simulated link from the shared seeds and
    // keep only their own side of it.
    QuantumLogs logs = run_quantum_phase(cfg);
    SessionOutcome out;
    if (role == "alice") {
        logs.bob.clear();
        out = run_alice(cfg, logs.alice, *channel);
    } else {
        logs.alice.clear();
        out = run_bob(cfg, logs.bob, *channel);
    }
    channel->close();

    Output report(report_path);
    write_report(report.stream(), role, out);
    if (!out.success) {
        std::cerr << "keyexchange aborted: " << wire::to_string(out.reason) << " (" << out.diagnostic << ")\n";
        return exit_code_for(out.reason);
    }
    if (!key_path.empty()) {
        std::ofstream key(key_path);
        if (!key) throw ConfigError("cannot write " + key_path);
        key << to_hex(out.key.bits) << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BB84 single-photon QKD simulator and post-processing"};
    app.require_subcommand(1);

    std::string config, out_path;
    std::uint64_t seed = 1;
    std::vector<double> attenuation_db;
    int trials = 10;
    unsigned threads = 0;

    auto* gain = app.add_subcommand("simulate-gain", "secure gain versus attenuation (CSV)");
    gain->add_option("--config", config, "key=value parameter file");
    gain->add_option("--attenuation-db", attenuation_db, "attenuations in dB")->delimiter(',');
    gain->add_option("--out", out_path, "output CSV (default stdout)");

    std::vector<double> transmissions;
    auto* t1 = app.add_subcommand("table1", "Monte Carlo link statistics per attenuation (CSV)");
    t1->add_option("--config", config, "key=value parameter file");
    t1->add_option("--attenuation-db", attenuation_db, "attenuations in dB")->delimiter(',');
    t1->add_option("--transmission", transmissions, "transmission factors in (0, 1]")->delimiter(',');
    t1->add_option("--trials", trials, "sessions per row")->check(CLI::PositiveNumber);
    t1->add_option("--seed", seed, "master seed");
    t1->add_option("--threads", threads, "worker threads (0 = all cores)");
    t1->add_option("--out", out_path, "output CSV (default stdout)");

    std::string role, listen, connect, key_path, report_path;
    std::optional<std::uint64_t> kx_seed;
    std::optional<double> kx_transmission;
    auto* kx = app.add_subcommand("keyexchange", "run one side of a networked key exchange");
    kx->add_option("--role", role, "alice or bob")->required();
    kx->add_option("--listen", listen, "host:port to accept the peer on");
    kx->add_option("--connect", connect, "host:port of the listening peer");
    kx->add_option("--config", config, "key=value parameter file");
    kx->add_option("--seed", kx_seed, "overrides the simulation and classical seeds");
    kx->add_option("--transmission", kx_transmission, "added channel transmission in (0, 1]");
    kx->add_option("--out", key_path, "key file (hex)");
    kx->add_option("--report", report_path, "session report (default stdout)");

    std::string lfsr_seed = "0x1";
    std::uint64_t count = 64;
    auto* dump = app.add_subcommand("lfsr-dump", "print register output bits as ASCII 0/1");
    dump->add_option("--seed", lfsr_seed, "20-bit register seed (hex)");
    dump->add_option("--count", count, "number of bits");
    dump->add_option("--out", out_path, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*gain) {
            const ExperimentParams p = params_from(config);
            Output out(out_path);
            write_gain_csv(out.stream(), simulate_gain(p, attenuation_db.empty() ? default_sweep() : attenuation_db));
        } else if (*t1) {
            const ExperimentParams p = params_from(config);
            if (!attenuation_db.empty() && !transmissions.empty())
                throw CLI::ValidationError("table1", "give --attenuation-db or --transmission, not both");
            for (double db : attenuation_db) transmissions.push_back(db_to_transmission(db));
            if (transmissions.empty()) transmissions = table1_transmissions();
            Output out(out_path);
            write_table1_csv(out.stream(), table1(p, transmissions, trials, seed, threads));
        } else if (*kx) {
            return keyexchange(role, listen, connect, config, kx_seed, key_path, report_path, kx_transmission);
        } else if (*dump) {
            std::size_t used = 0;
            const unsigned long s = std::stoul(lfsr_seed, &used, 16);
            if (used != lfsr_seed.size()) throw ConfigError("--seed must be hexadecimal");
            FibonacciLfsr reg(static_cast<std::uint32_t>(s));
            Output out(out_path);
            std::string line;
            line.reserve(count + 1);
            for (std::uint64_t i = 0; i < count; ++i) line.push_back(static_cast<char>('0' + reg.next_bit()));
            out.stream() << line << '\n';
        }
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kOk;
}
