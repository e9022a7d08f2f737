#include <algorithm>
#include <cmath>
#include <vector>

#include "bb84/error.hpp"
#include "bb84/reconcile.hpp"

namespace bb84 {

double binary_entropy(double e) {
    if (!(e >= 0.0 && e <= 1.0)) throw DomainError("binary_entropy: e must lie in [0, 1]");
    if (e == 0.0 || e == 1.0) return 0.0;
    return -e * std::log2(e) - (1.0 - e) * std::log2(1.0 - e);
}

double extractable_fraction(const GainInputs& g) {
    if (!(g.p_exp > 0.0 && g.p_exp <= 1.0)) throw DomainError("gain: p_exp must lie in (0, 1]");
    if (!(g.s_m >= 0.0)) throw DomainError("gain: s_m must be >= 0");
    if (!(g.e >= 0.0 && g.e < 0.5)) throw DomainError("gain: e must lie in [0, 0.5)");
    if (g.s_m >= g.p_exp) return 0.0;
    const double beta = (g.p_exp - g.s_m) / g.p_exp;
    const double ep = g.e / beta;
    if (ep >= 0.5) return 0.0;
    return std::max(0.0, beta * (1.0 - std::log2(1.0 + 4.0 * ep - 4.0 * ep * ep)));
}

GainEstimate secure_gain(const GainInputs& g) {
    const double fraction = extractable_fraction(g);
    if (g.s_m >= g.p_exp) return {0.0, true};
    const double value = 0.5 * g.p_exp * (fraction - kReconciliationInefficiency * binary_entropy(g.e));
    if (!(value > 0.0)) return {0.0, true};
    return {value, false};
}

AnalyticModel AnalyticModel::reference() { return {reference::link_efficiency(), reference::qber_model()}; }

GainInputs analytic_gain_inputs(const SourceModel& source, double transmission, const AnalyticModel& model) {
    const double p_signal = signal_detection_probability(source, transmission, model.link_efficiency);
    const QberPrediction q = predict_qber(p_signal, model.qber);
    return {q.p_exp, multiphoton_prob(source), q.qber};
}

namespace {

double wcp_gain(double mu, double transmission, const AnalyticModel& model) {
    const GainInputs g = analytic_gain_inputs(SourceModel::weak_coherent(mu), transmission, model);
    if (!(g.e < 0.5)) return 0.0;
    return secure_gain(g).bits_per_pulse;
}

}  // namespace

std::optional<MuOptimum> optimize_mu_wcp(double transmission, const AnalyticModel& model, double rel_tol,
                                         double max_mu) {
    if (!(transmission > 0.0 && transmission <= 1.0))
        throw DomainError("optimize_mu_wcp: transmission must lie in (0, 1]");
    if (!(max_mu > 0.0)) throw DomainError("optimize_mu_wcp: max_mu must be > 0");

    // Bracket on a logarithmic grid, then refine by golden-section search.
    constexpr int kGrid = 240;
    const double lo_mu = max_mu * 1e-5;
    std::vector<double> grid(kGrid);
    for (int i = 0; i < kGrid; ++i)
        grid[static_cast<std::size_t>(i)] = lo_mu * std::pow(max_mu / lo_mu, static_cast<double>(i) / (kGrid - 1));

    MuOptimum best{};
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double g = wcp_gain(grid[i], transmission, model);
        if (g > best.gain) {
            best = {grid[i], g};
            best_i = i;
        }
    }
    if (best.gain <= 0.0) return std::nullopt;

    double a = best_i == 0 ? grid.front() * 0.5 : grid[best_i - 1];
    double b = best_i + 1 == grid.size() ? max_mu : grid[best_i + 1];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = wcp_gain(c, transmission, model);
    double fd = wcp_gain(d, transmission, model);
    while (b - a > rel_tol * 0.5 * (a + b)) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = wcp_gain(c, transmission, model);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = wcp_gain(d, transmission, model);
        }
        if (fc > best.gain) best = {c, fc};
        if (fd > best.gain) best = {d, fd};
    }
    return best;
}

} // namespace bb84
