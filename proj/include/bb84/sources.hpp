#pragma once

#include <optional>

#include "bb84/random.hpp"

namespace bb84 {

enum class SourceKind { SinglePhoton, WeakCoherent };

/// Photon-number statistics of a pulsed source.
///
/// `mu` is the mean number of photons per pulse leaving Alice. The
/// sub-Poissonian reduction factor is the ratio between the multiphoton
/// probability of a Poissonian source with the same mean and that of this
/// source; it is pinned to 1 for weak coherent pulses.
struct SourceModel {
    SourceKind kind = SourceKind::SinglePhoton;
    double mu = 0.0;
    double reduction_factor = 1.0;

    static SourceModel single_photon(double mu, double reduction_factor);
    static SourceModel weak_coherent(double mu);

    /// Throws DomainError when mu < 0, R < 1, or R != 1 for a WCP source.
    void validate() const;
};

/// Three-point photon-number distribution (n = 0, 1, 2 photons per pulse).
struct PulseCountDistribution {
    double p0 = 1.0;
    double p1 = 0.0;
    double p2 = 0.0;

    double mean() const { return p1 + 2.0 * p2; }
};

/// 1 - (1 + mu) exp(-mu): Poisson probability of two or more photons.
double multiphoton_prob_wcp(double mu);

/// Poissonian multiphoton probability divided by the reduction factor.
double multiphoton_prob_sps(double mu, double reduction_factor);

double multiphoton_prob(const SourceModel& model);

/// Distribution truncated at two photons with the model's mean and
/// multiphoton probability. Throws ConfigError when mu is too large for the
/// truncation to stay a probability distribution.
PulseCountDistribution pulse_distribution(const SourceModel& model);

int sample_photon_number(const PulseCountDistribution& dist, Rng& rng);

/// Exact Poisson sampler (Knuth's product method), for validating the
/// truncated model. Intended for small means.
int sample_poisson(double mu, Rng& rng);

/// How photon numbers are drawn for a source during simulation.
class PhotonSampler {
public:
    explicit PhotonSampler(const SourceModel& model, bool full_poisson = false);

    int operator()(Rng& rng) const;

    const PulseCountDistribution& distribution() const { return dist_; }

private:
    SourceModel model_;
    PulseCountDistribution dist_;
    bool full_poisson_;
};

/// Reduction factor from one- and two-photocount probabilities per timeslot.
///
/// Two photons reaching the four-detector receiver end on the same detector
/// with probability 3/8 and are then registered as a single count, so the
/// two-count probability is 5/8 of the two-photon arrival probability.
/// Returns nullopt when no two-count events were observed (R unbounded).
std::optional<double> estimate_reduction_factor(double p_d1, double p_d2);

} // namespace bb84
