#include "bb84/sources.hpp"

#include <cmath>
#include <string>

#include "bb84/error.hpp"

namespace bb84 {

SourceModel SourceModel::single_photon(double mu, double reduction_factor) {
    SourceModel m{SourceKind::SinglePhoton, mu, reduction_factor};
    m.validate();
    return m;
}

SourceModel SourceModel::weak_coherent(double mu) {
    SourceModel m{SourceKind::WeakCoherent, mu, 1.0};
    m.validate();
    return m;
}

void SourceModel::validate() const {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("source: mu must be finite and >= 0");
    if (!(reduction_factor >= 1.0)) throw DomainError("source: reduction factor must be >= 1");
    if (kind == SourceKind::WeakCoherent && reduction_factor != 1.0)
        throw DomainError("source: weak coherent pulses have reduction factor 1");
}

double multiphoton_prob_wcp(double mu) {
    if (!(mu >= 0.0)) throw DomainError("multiphoton_prob_wcp: mu must be >= 0");
    // -expm1(-mu) - mu*exp(-mu) keeps precision for small mu.
    return -std::expm1(-mu) - mu * std::exp(-mu);
}

double multiphoton_prob_sps(double mu, double reduction_factor) {
    if (!(reduction_factor >= 1.0)) throw DomainError("multiphoton_prob_sps: reduction factor must be >= 1");
    return multiphoton_prob_wcp(mu) / reduction_factor;
}

double multiphoton_prob(const SourceModel& model) {
    model.validate();
    return model.kind == SourceKind::WeakCoherent ? multiphoton_prob_wcp(model.mu)
                                                  : multiphoton_prob_sps(model.mu, model.reduction_factor);
}

PulseCountDistribution pulse_distribution(const SourceModel& model) {
    const double p2 = multiphoton_prob(model);
    const double p1 = model.mu - 2.0 * p2;
    const double p0 = 1.0 - p1 - p2;
    if (p1 < 0.0 || p0 < 0.0)
        throw ConfigError("pulse_distribution: mu = " + std::to_string(model.mu) +
                          " is too large for the two-photon truncation");
    return {p0, p1, p2};
}

int sample_photon_number(const PulseCountDistribution& dist, Rng& rng) {
    const double u = uniform01(rng);
    if (u < dist.p0) return 0;
    if (u < dist.p0 + dist.p1) return 1;
    return 2;
}

int sample_poisson(double mu, Rng& rng) {
    if (!(mu >= 0.0)) throw DomainError("sample_poisson: mu must be >= 0");
    const double limit = std::exp(-mu);
    int n = 0;
    double prod = uniform01(rng);
    while (prod >= limit) {
        ++n;
        prod *= uniform01(rng);
    }
    return n;
}

PhotonSampler::PhotonSampler(const SourceModel& model, bool full_poisson)
    : model_(model), full_poisson_(full_poisson && model.kind == SourceKind::WeakCoherent) {
    model_.validate();
    if (!full_poisson_) dist_ = pulse_distribution(model_);
}

int PhotonSampler::operator()(Rng& rng) const {
    return full_poisson_ ? sample_poisson(model_.mu, rng) : sample_photon_number(dist_, rng);
}

std::optional<double> estimate_reduction_factor(double p_d1, double p_d2) {
    if (!(p_d1 > 0.0)) throw DomainError("estimate_reduction_factor: p_d1 must be > 0");
    if (!(p_d2 >= 0.0)) throw DomainError("estimate_reduction_factor: p_d2 must be >= 0");
    if (p_d2 == 0.0) return std::nullopt;
    return (5.0 / 8.0) * (p_d1 * p_d1 / 2.0) / p_d2;
}

} // namespace bb84
