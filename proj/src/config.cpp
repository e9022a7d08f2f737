#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "bb84/error.hpp"
#include "bb84/experiment.hpp"

namespace bb84 {

namespace {

struct Key {
    const char* name;
    std::function<void(ExperimentParams&, const std::string&)> set;
    std::function<std::string(const ExperimentParams&)> get;
};

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("config: " + key + ": not a number: " + v);
    return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    int base = 10;
    std::string_view s = v;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        s.remove_prefix(2);
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x, base);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("config: " + key + ": not an unsigned integer: " + v);
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config: " + key + ": not a boolean: " + v);
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

std::string hex(std::uint64_t x) {
    std::ostringstream os;
    os << "0x" << std::hex << x;
    return os.str();
}

#define DOUBLE_KEY(name, field)                                                                   \
    Key {                                                                                         \
        name, [](ExperimentParams& p, const std::string& v) { p.field = parse_double(name, v); }, \
            [](const ExperimentParams& p) { return fmt(p.field); }                                \
    }

#define U64_KEY(name, field, type)                                                                          \
    Key {                                                                                                   \
        name, [](ExperimentParams& p, const std::string& v) { p.field = static_cast<type>(parse_u64(name, v)); }, \
            [](const ExperimentParams& p) { return std::to_string(p.field); }                               \
    }

#define HEX_KEY(name, field, type)                                                                          \
    Key {                                                                                                   \
        name, [](ExperimentParams& p, const std::string& v) { p.field = static_cast<type>(parse_u64(name, v)); }, \
            [](const ExperimentParams& p) { return hex(p.field); }                                          \
    }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        Key{"source",
            [](ExperimentParams& p, const std::string& v) {
                if (v == "sps") p.session.source.kind = SourceKind::SinglePhoton;
                else if (v == "wcp") p.session.source.kind = SourceKind::WeakCoherent;
                else throw ConfigError("config: source must be sps or wcp");
            },
            [](const ExperimentParams& p) {
                return std::string(p.session.source.kind == SourceKind::SinglePhoton ? "sps" : "wcp");
            }},
        DOUBLE_KEY("mu", session.source.mu),
        DOUBLE_KEY("reduction_factor", session.source.reduction_factor),
        DOUBLE_KEY("alpha", analytic.qber.alpha),
        DOUBLE_KEY("p_dark", analytic.qber.p_dark),
        DOUBLE_KEY("p_exp_reference", p_exp_reference),
        DOUBLE_KEY("link_efficiency", analytic.link_efficiency),
        DOUBLE_KEY("sim_link_efficiency", session.link.link_efficiency),
        DOUBLE_KEY("stray_probability", session.detector.stray_probability),
        DOUBLE_KEY("dark_rate_h", session.detector.dark_rates[0]),
        DOUBLE_KEY("dark_rate_v", session.detector.dark_rates[1]),
        DOUBLE_KEY("dark_rate_l", session.detector.dark_rates[2]),
        DOUBLE_KEY("dark_rate_r", session.detector.dark_rates[3]),
        DOUBLE_KEY("repetition_rate", session.detector.repetition_rate),
        DOUBLE_KEY("gate_width", session.detector.gate_width),
        DOUBLE_KEY("signal_gate_fraction", session.detector.signal_gate_fraction),
        DOUBLE_KEY("transmission", session.link.transmission),
        DOUBLE_KEY("wcp_fixed_mu", wcp_fixed_mu),
        DOUBLE_KEY("wcp_max_mu", wcp_max_mu),
        U64_KEY("pulses_per_session", session.pulses_per_session, std::uint64_t),
        DOUBLE_KEY("qber_sample_fraction", session.qber_sample_fraction),
        DOUBLE_KEY("qber_abort_threshold", session.qber_abort_threshold),
        U64_KEY("min_sample_bits", session.min_sample_bits, std::size_t),
        U64_KEY("min_sifted_bits", session.min_sifted_bits, std::size_t),
        DOUBLE_KEY("max_ambiguous_fraction", session.max_ambiguous_fraction),
        U64_KEY("verification_bits", session.verification_bits, std::size_t),
        U64_KEY("safety_margin", session.safety_margin, std::uint64_t),
        U64_KEY("cascade_passes", session.cascade.passes, int),
        DOUBLE_KEY("cascade_block_coefficient", session.cascade.block_coefficient),
        Key{"cascade_power_of_two",
            [](ExperimentParams& p, const std::string& v) {
                p.session.cascade.power_of_two_blocks = parse_bool("cascade_power_of_two", v);
            },
            [](const ExperimentParams& p) { return std::string(p.session.cascade.power_of_two_blocks ? "1" : "0"); }},
        U64_KEY("cascade_min_blocks", session.cascade.min_blocks_per_pass, std::size_t),
        HEX_KEY("seed_lfsr_data", session.seeds.lfsr_data, std::uint32_t),
        HEX_KEY("seed_lfsr_basis", session.seeds.lfsr_basis, std::uint32_t),
        U64_KEY("seed_simulation", session.seeds.simulation, std::uint64_t),
        U64_KEY("seed_classical", session.seeds.classical, std::uint64_t),
        U64_KEY("session_id", session.session_id, std::uint64_t),
        Key{"timeout_ms",
            [](ExperimentParams& p, const std::string& v) {
                p.session.message_timeout = std::chrono::milliseconds(parse_u64("timeout_ms", v));
            },
            [](const ExperimentParams& p) { return std::to_string(p.session.message_timeout.count()); }},
    };
    return table;
}

#undef DOUBLE_KEY
#undef U64_KEY
#undef HEX_KEY

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void derive_params(ExperimentParams& p, const std::map<std::string, std::string>& explicit_keys) {
    auto given = [&](const char* k) { return explicit_keys.contains(k); };
    SessionConfig& s = p.session;
    if (s.source.kind == SourceKind::WeakCoherent && !given("reduction_factor")) s.source.reduction_factor = 1.0;
    s.qber_model = p.analytic.qber;
    s.detector.dark_gate_fraction = s.detector.gate_width * s.detector.repetition_rate;
    s.detector.optical_error = p.analytic.qber.alpha;

    // Background clicks hit a random detector, so twice the fitted dark
    // term gives the fitted error contribution after sifting.
    if (!given("stray_probability")) {
        s.detector.stray_probability = 0.0;
        const double target = 2.0 * p.analytic.qber.p_dark;
        const double dark = s.detector.dark_probability_per_slot();
        s.detector.stray_probability = target > dark ? 1.0 - (1.0 - target) / (1.0 - dark) : 0.0;
    }
    if (!given("link_efficiency"))
        p.analytic.link_efficiency = calibrate_link(s.source.mu, p.p_exp_reference, p.analytic.qber.p_dark);
    if (!given("sim_link_efficiency"))
        s.link.link_efficiency = calibrate_link(s.source.mu, p.p_exp_reference,
                                                s.detector.background_probability_per_slot());
    s.validate();
}

ExperimentParams reference_params() {
    ExperimentParams p;
    p.session = SessionConfig::reference(1.0);
    p.analytic = AnalyticModel::reference();
    derive_params(p);
    return p;
}

ExperimentParams parse_params(std::istream& in, const std::string& origin) {
    ExperimentParams p = reference_params();
    std::map<std::string, std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const auto& table = keys();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return key == k.name; });
        if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (seen.contains(key)) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            it->set(p, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
        seen[key] = value;
    }
    try {
        derive_params(p, seen);
    } catch (const std::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return p;
}

ExperimentParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_params(in, path);
}

void write_params(std::ostream& os, const ExperimentParams& p) {
    for (const Key& k : keys()) os << k.name << " = " << k.get(p) << '\n';
}

} // namespace bb84
