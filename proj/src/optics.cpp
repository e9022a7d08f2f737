#include "bb84/optics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "bb84/error.hpp"

namespace bb84 {

namespace {

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

Polarization partner(Polarization p) { return static_cast<Polarization>(static_cast<int>(p) ^ 1); }

Polarization conjugate_detector(Polarization p, int bit) {
    const Basis other = basis_of(p) == Basis::Linear ? Basis::Circular : Basis::Linear;
    return encode(bit, other);
}

}  // namespace

void LinkParams::validate() const {
    if (!in_unit_interval(transmission)) throw DomainError("link: transmission must lie in [0, 1]");
    if (!in_unit_interval(link_efficiency)) throw DomainError("link: efficiency must lie in [0, 1]");
}

void DetectorParams::validate() const {
    for (double r : dark_rates)
        if (!(r >= 0.0)) throw DomainError("detector: dark rates must be >= 0");
    if (!(repetition_rate > 0.0)) throw DomainError("detector: repetition rate must be > 0");
    if (!(gate_width >= 0.0)) throw DomainError("detector: gate width must be >= 0");
    if (!in_unit_interval(signal_gate_fraction) || !in_unit_interval(dark_gate_fraction))
        throw DomainError("detector: gate fractions must lie in [0, 1]");
    if (std::abs(gate_width * repetition_rate - dark_gate_fraction) > 1e-6)
        throw ConfigError("detector: dark gate fraction must equal gate_width * repetition_rate");
    if (!in_unit_interval(stray_probability)) throw DomainError("detector: stray probability must lie in [0, 1]");
    if (!in_unit_interval(optical_error)) throw DomainError("detector: optical error must lie in [0, 1]");
    for (int i = 0; i < kDetectorCount; ++i)
        if (dark_probability(i) > 1.0) throw ConfigError("detector: dark probability per slot exceeds 1");
}

double DetectorParams::dark_probability(int detector) const {
    return dark_rates.at(static_cast<std::size_t>(detector)) / repetition_rate * dark_gate_fraction;
}

double DetectorParams::click_probability(int detector) const {
    double total_rate = 0.0;
    for (double r : dark_rates) total_rate += r;
    const double share = total_rate > 0.0 ? dark_rates.at(static_cast<std::size_t>(detector)) / total_rate
                                          : 1.0 / kDetectorCount;
    const double stray = stray_probability * share;
    return 1.0 - (1.0 - dark_probability(detector)) * (1.0 - stray);
}

double DetectorParams::dark_probability_per_slot() const {
    double none = 1.0;
    for (int i = 0; i < kDetectorCount; ++i) none *= 1.0 - dark_probability(i);
    return 1.0 - none;
}

double DetectorParams::background_probability_per_slot() const {
    double none = 1.0;
    for (int i = 0; i < kDetectorCount; ++i) none *= 1.0 - click_probability(i);
    return 1.0 - none;
}

int DetectionRecord::count() const { return std::popcount(static_cast<unsigned>(fired & 0x0F)); }

std::optional<Polarization> DetectionRecord::single() const {
    if (count() != 1) return std::nullopt;
    return static_cast<Polarization>(std::countr_zero(static_cast<unsigned>(fired)));
}

int transmit(int n_photons, double transmission, Rng& rng) {
    if (!in_unit_interval(transmission)) throw DomainError("transmit: transmission must lie in [0, 1]");
    if (n_photons < 0) throw DomainError("transmit: negative photon count");
    if (transmission == 1.0) return n_photons;
    int survived = 0;
    for (int i = 0; i < n_photons; ++i)
        if (bernoulli(rng, transmission)) ++survived;
    return survived;
}

std::array<double, kDetectorCount> routing_probabilities(Polarization pol) {
    std::array<double, kDetectorCount> p{};
    p[static_cast<std::size_t>(pol)] += 0.5;
    p[static_cast<std::size_t>(conjugate_detector(pol, 0))] += 0.25;
    p[static_cast<std::size_t>(conjugate_detector(pol, 1))] += 0.25;
    return p;
}

double same_detector_probability(Polarization pol) {
    double same = 0.0;
    for (double p : routing_probabilities(pol)) same += p * p;
    return same;
}

Receiver::Receiver(const LinkParams& link, const DetectorParams& det)
    : efficiency_(link.link_efficiency),
      optical_error_(det.optical_error),
      any_background_(det.background_probability_per_slot()) {
    link.validate();
    det.validate();
    for (int i = 0; i < kDetectorCount; ++i) click_[static_cast<std::size_t>(i)] = det.click_probability(i);
}

DetectionRecord Receiver::operator()(Polarization pol, int n_arriving, Rng& rng, std::uint64_t slot) const {
    if (n_arriving < 0 || n_arriving > 2)
        throw DomainError("detect: at most two photons per slot are modelled");
    DetectionRecord rec{slot, 0};
    for (int i = 0; i < n_arriving; ++i) {
        if (!bernoulli(rng, efficiency_)) continue;
        Polarization hit;
        if (bernoulli(rng, 0.5)) {
            hit = bernoulli(rng, optical_error_) ? partner(pol) : pol;
        } else {
            hit = conjugate_detector(pol, static_cast<int>(rng() >> 63));
        }
        rec.fired |= static_cast<std::uint8_t>(1U << static_cast<int>(hit));
    }

    // Background clicks: one draw decides whether any detector fires; on the
    // rare positive branch the first firing detector is drawn from its
    // conditional law and later detectors fire independently.
    const double u = uniform01(rng);
    if (u < any_background_) {
        double target = u;  // uniform on [0, any_background_)
        double none_before = 1.0;
        int first = kDetectorCount - 1;
        for (int i = 0; i < kDetectorCount; ++i) {
            const double c = click_[static_cast<std::size_t>(i)];
            const double w = none_before * c;
            if (target < w) {
                first = i;
                break;
            }
            target -= w;
            none_before *= 1.0 - c;
        }
        rec.fired |= static_cast<std::uint8_t>(1U << first);
        for (int i = first + 1; i < kDetectorCount; ++i)
            if (bernoulli(rng, click_[static_cast<std::size_t>(i)]))
                rec.fired |= static_cast<std::uint8_t>(1U << i);
    }
    return rec;
}

DetectionRecord detect(Polarization pol, int n_arriving, const LinkParams& link, const DetectorParams& det,
                       Rng& rng, std::uint64_t slot) {
    return Receiver(link, det)(pol, n_arriving, rng, slot);
}

QberPrediction predict_qber(double p_signal, const QberModel& model) {
    if (!(p_signal >= 0.0)) throw DomainError("predict_qber: p_signal must be >= 0");
    const double p_exp = p_signal + model.p_dark - p_signal * model.p_dark;
    if (!(p_exp > 0.0)) throw DomainError("predict_qber: QBER undefined at zero detection probability");
    return {qber_at_detection_probability(p_signal, p_exp, model), p_exp};
}

double qber_at_detection_probability(double p_signal, double p_exp, const QberModel& model) {
    if (!(p_exp > 0.0)) throw DomainError("QBER undefined at zero detection probability");
    return model.alpha * p_signal / p_exp + model.p_dark / p_exp;
}

double calibrate_link(double mu, double measured_p_exp, double p_dark) {
    if (!(mu > 0.0)) throw ConfigError("calibrate_link: mu must be > 0");
    if (!(measured_p_exp > p_dark))
        throw ConfigError("calibrate_link: detection probability does not exceed the dark probability");
    return (measured_p_exp - p_dark) / mu;
}

double signal_detection_probability(const SourceModel& source, double transmission, double link_efficiency) {
    const double q = transmission * link_efficiency;
    if (source.kind == SourceKind::WeakCoherent) return -std::expm1(-source.mu * q);
    const PulseCountDistribution d = pulse_distribution(source);
    return d.p1 * q + d.p2 * (1.0 - (1.0 - q) * (1.0 - q));
}

PhotocountProbabilities photocount_probabilities(std::span<const DetectionRecord> records,
                                                 std::uint64_t total_slots) {
    if (total_slots == 0) throw DomainError("photocount_probabilities: no slots");
    std::uint64_t ones = 0, twos = 0;
    for (const auto& r : records) {
        const int c = r.count();
        if (c == 1) ++ones;
        else if (c == 2) ++twos;
    }
    const double n = static_cast<double>(total_slots);
    return {static_cast<double>(ones) / n, static_cast<double>(twos) / n};
}

namespace reference {

SourceModel source() { return SourceModel::single_photon(kMu, kReductionFactor); }

QberModel qber_model() { return {kAlpha, kPDarkFit}; }

double link_efficiency() { return calibrate_link(kMu, kPExp, kPDarkFit); }

DetectorParams detector() {
    DetectorParams d;
    d.dark_rates = kDarkRates;
    d.gate_width = kGateWidth;
    d.repetition_rate = kRepetitionRate;
    d.signal_gate_fraction = kSignalGateFraction;
    d.dark_gate_fraction = kGateWidth * kRepetitionRate;
    d.optical_error = kAlpha;
    const double target_background = 2.0 * kPDarkFit;
    d.stray_probability = std::max(0.0, 1.0 - (1.0 - target_background) / (1.0 - d.dark_probability_per_slot()));
    return d;
}

double simulated_link_efficiency(const DetectorParams& det) {
    return calibrate_link(kMu, kPExp, det.background_probability_per_slot());
}

}  // namespace reference

} // namespace bb84
