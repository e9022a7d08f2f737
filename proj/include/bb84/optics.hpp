#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "bb84/random.hpp"
#include "bb84/sources.hpp"

namespace bb84 {

enum class Basis : std::uint8_t { Linear = 0, Circular = 1 };

/// BB84 states. The enumerator value doubles as the index of the detector
/// that registers the state in Bob's receiver.
enum class Polarization : std::uint8_t { H = 0, V = 1, L = 2, R = 3 };

inline constexpr int kDetectorCount = 4;

/// (0, linear) -> H, (1, linear) -> V, (0, circular) -> L, (1, circular) -> R.
constexpr Polarization encode(int bit, Basis basis) {
    return static_cast<Polarization>(2 * static_cast<int>(basis) + (bit & 1));
}

constexpr Basis basis_of(Polarization p) { return static_cast<Basis>(static_cast<int>(p) >> 1); }

constexpr int bit_of(Polarization p) { return static_cast<int>(p) & 1; }

/// Bit carried by `p` when read in `basis`; nullopt in the conjugate basis.
constexpr std::optional<int> decode(Polarization p, Basis basis) {
    if (basis_of(p) != basis) return std::nullopt;
    return bit_of(p);
}

/// Quantum channel and end-to-end detection efficiency.
struct LinkParams {
    // Constituent factors of the link efficiency in the reference setup.
    // Informational only: the simulation uses the calibrated `link_efficiency`.
    static constexpr double kApdEfficiency = 0.6;
    static constexpr double kModulatorTransmission = 0.90;
    static constexpr double kTelescopeTransmission = 0.94;

    /// Added channel transmission t in [0, 1].
    double transmission = 1.0;
    /// Probability that a photon entering the channel at t = 1 produces a
    /// count inside the detection gate.
    double link_efficiency = 0.0;

    void validate() const;
    double photon_detection_probability() const { return transmission * link_efficiency; }
};

/// Bob's four time-gated detectors.
///
/// The per-slot dark probability of a detector is rate * gate_width, i.e.
/// rate / repetition_rate scaled by the gate duty cycle. `stray_probability`
/// is an extra per-slot background click probability (stray light) spread
/// over the detectors in proportion to their dark rates.
struct DetectorParams {
    std::array<double, kDetectorCount> dark_rates{};  // counts/s for H, V, L, R
    double gate_width = 0.0;                          // s
    double repetition_rate = 0.0;                     // pulses/s
    double signal_gate_fraction = 1.0;                // folded into link_efficiency
    double dark_gate_fraction = 0.0;                  // = gate_width * repetition_rate
    double stray_probability = 0.0;
    /// Probability that a detected photon is sent to the wrong detector of
    /// its arm (polarization misalignment).
    double optical_error = 0.0;

    void validate() const;

    double dark_probability(int detector) const;
    /// Dark plus stray-light click probability of one detector per slot.
    double click_probability(int detector) const;
    /// Probability that at least one detector dark-fires in a slot.
    double dark_probability_per_slot() const;
    /// Probability that at least one background (dark or stray) click occurs.
    double background_probability_per_slot() const;
};

/// Outcome of one timeslot on Bob's side: bit i of `fired` is set when the
/// detector for Polarization(i) registered a count.
struct DetectionRecord {
    std::uint64_t slot = 0;
    std::uint8_t fired = 0;

    int count() const;
    bool ambiguous() const { return count() > 1; }
    bool fired_on(Polarization p) const { return (fired >> static_cast<int>(p)) & 1U; }
    /// The detector of a single-count slot.
    std::optional<Polarization> single() const;

    friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

/// Coefficients of the linear QBER model e * p_exp = alpha * p_signal + p_dark.
struct QberModel {
    double alpha = 0.0;
    double p_dark = 0.0;
};

struct QberPrediction {
    double qber = 0.0;
    double p_exp = 0.0;
};

/// Each of `n_photons` survives independently with probability t.
int transmit(int n_photons, double transmission, Rng& rng);

/// Probability that a photon prepared in `pol` reaches each detector when
/// it is detected: 1/2 to its own detector through the matching arm, 1/4 to
/// each detector of the conjugate arm.
std::array<double, kDetectorCount> routing_probabilities(Polarization pol);

/// Probability that two detected photons of the same polarization hit the
/// same detector.
double same_detector_probability(Polarization pol);

/// Bob's receiver with per-detector click probabilities precomputed.
class Receiver {
public:
    Receiver(const LinkParams& link, const DetectorParams& det);

    /// One slot with `n_arriving` photons of polarization `pol`
    /// (0, 1 or 2; larger values throw DomainError).
    DetectionRecord operator()(Polarization pol, int n_arriving, Rng& rng, std::uint64_t slot = 0) const;

private:
    double efficiency_;
    double optical_error_;
    double any_background_;
    std::array<double, kDetectorCount> click_{};
};

/// Simulates Bob's receiver for one slot; see Receiver.
DetectionRecord detect(Polarization pol, int n_arriving, const LinkParams& link,
                       const DetectorParams& det, Rng& rng, std::uint64_t slot = 0);

/// QBER and detection probability per slot predicted by the linear model.
/// Throws DomainError when p_signal < 0 or the detection probability is 0.
QberPrediction predict_qber(double p_signal, const QberModel& model);

/// Same model evaluated at an observed detection probability.
double qber_at_detection_probability(double p_signal, double p_exp, const QberModel& model);

/// Link efficiency from a measured detection probability at t = 1.
/// Throws ConfigError when measured_p_exp <= p_dark.
double calibrate_link(double mu, double measured_p_exp, double p_dark);

/// Probability per pulse that at least one signal photon is detected.
double signal_detection_probability(const SourceModel& source, double transmission,
                                    double link_efficiency);

struct PhotocountProbabilities {
    double p_d1 = 0.0;  // exactly one detector fired
    double p_d2 = 0.0;  // exactly two detectors fired
};

/// Converts detection records over `total_slots` pulses into photocount
/// probabilities for estimate_reduction_factor.
PhotocountProbabilities photocount_probabilities(std::span<const DetectionRecord> records,
                                                 std::uint64_t total_slots);

/// Reference setup values: source, receiver and QBER-fit coefficients.
namespace reference {
inline constexpr double kMu = 0.0235;
inline constexpr double kReductionFactor = 6.7;
inline constexpr double kRepetitionRate = 5.3e6;
inline constexpr double kGateWidth = 60e-9;
inline constexpr double kSignalGateFraction = 0.82;
inline constexpr std::array<double, kDetectorCount> kDarkRates{60.0, 70.0, 350.0, 150.0};
/// Detection probability per slot without added attenuation.
inline constexpr double kPExp = 7.6e-3;
inline constexpr double kAlpha = 1.3e-2;
/// Dark term of the QBER fit; used by all analytic curves.
inline constexpr double kPDarkFit = 35e-6;
/// Direct estimate from the dark rates and gate duty cycle.
inline constexpr double kPDarkDirect = 3.8e-5;
inline constexpr std::uint64_t kPulsesPerSession = 1048575;

SourceModel source();
QberModel qber_model();
/// Analytic link efficiency, calibrated with the fitted dark term.
double link_efficiency();
/// Receiver for simulation. The stray-light term makes the total background
/// click probability 2 * kPDarkFit: background clicks land on a random
/// detector, so only half of the sifted ones are errors, and the sifted
/// error contribution then equals the fitted dark term.
DetectorParams detector();
/// Link efficiency calibrated against the simulated background.
double simulated_link_efficiency(const DetectorParams& det);
}  // namespace reference

} // namespace bb84
