#pragma once

// Discrete beamsplitter model of a spinwave resonator.
//
// A coherent memory storing a fraction R = 1 - T of each incident pulse acts
// like the coupling mirror of a ring cavity: the stored collective amplitude
// S_n accumulates over successive storage events,
//
//     S_{n+1} = sqrt(T) S_n e^{-gamma tau} e^{i phi} + sqrt(R) A0,
//
// and converges to S_inf = sqrt(R) A0 / (1 - sqrt(T) e^{-gamma tau} e^{i phi}).
// |S_inf|^2 as a function of phi is the usual low-finesse Airy spectrum.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "spinwave/common.hpp"

namespace spinwave {

struct Splitting {
    double transmission = 1.0;  // T
    double reflection = 0.0;    // R = 1 - T
};

// T = e^{-2 pi beta}; the stored ("reflected") fraction is R = 1 - T.
inline Splitting transmission_from_beta(double beta) {
    if (!(beta >= 0.0))
        throw std::domain_error("transmission_from_beta: beta must be >= 0");
    const double t = std::exp(-two_pi * beta);
    return {t, 1.0 - t};
}

struct ResonatorParams {
    double beta = 0.0;    // effective optical depth, dimensionless, >= 0
    double gamma = 0.0;   // spinwave amplitude decay rate, 1/s, >= 0
    double tau = 1.0;     // interference cycle time, s, > 0
    double phi = 0.0;     // per-cycle phase, rad
    complexd a0 = 1.0;    // input mode amplitude

    double transmission() const { return transmission_from_beta(beta).transmission; }
    double reflection() const { return transmission_from_beta(beta).reflection; }

    // |sqrt(T) e^{-gamma tau}|: magnitude of the per-cycle feedback factor.
    double loop_gain() const {
        return std::sqrt(transmission()) * std::exp(-gamma * tau);
    }
    complexd cycle_factor() const {
        return std::polar(loop_gain(), reduce_phase(phi));
    }

    void validate() const {
        if (!(beta >= 0.0)) throw std::domain_error("ResonatorParams: beta must be >= 0");
        if (!(gamma >= 0.0)) throw std::domain_error("ResonatorParams: gamma must be >= 0");
        if (!(tau > 0.0)) throw std::domain_error("ResonatorParams: tau must be > 0");
    }
};

struct SpinwaveAmplitude {
    complexd value{};
    long index = 0;  // pulse count n >= 0; -1 marks the n -> inf limit
};

// One storage event: interfere the surviving spinwave with a fresh pulse.
inline SpinwaveAmplitude step_recursion(const SpinwaveAmplitude& s_prev,
                                        const ResonatorParams& p) {
    p.validate();
    const auto [t, r] = transmission_from_beta(p.beta);
    const complexd value = p.cycle_factor() * s_prev.value + std::sqrt(r) * p.a0;
    return {value, s_prev.index + 1};
}

// True when the geometric accumulation has a steady state: either the loop
// gain is below unity, or the cycle phase is off exact resonance.
inline bool converges(const ResonatorParams& p) {
    constexpr double edge = 1.0 - 1e-12;
    return p.loop_gain() < edge || std::abs(reduce_phase(p.phi)) > 1e-12;
}

// Closed-form limit of step_recursion (geometric series sum).
inline SpinwaveAmplitude steady_state(const ResonatorParams& p) {
    p.validate();
    if (!converges(p))
        throw std::domain_error(
            "steady_state: non-convergent configuration (loop gain >= 1 on exact resonance)");
    const double r = p.reflection();
    const complexd value = std::sqrt(r) * p.a0 / (1.0 - p.cycle_factor());
    return {value, -1};
}

// Field leaving the memory when a pulse A0 meets a stored amplitude s:
// the transmitted input minus the recalled spinwave (energy conservation
// fixes the sign). Zero defines impedance matching.
inline complexd transmitted_amplitude(const SpinwaveAmplitude& s, const ResonatorParams& p) {
    const auto [t, r] = transmission_from_beta(p.beta);
    return std::sqrt(t) * p.a0 - std::sqrt(r) * s.value;
}

// |S_inf(phi)|^2 on a phase grid. Periodic in 2 pi, symmetric in phi, maxima
// at phi = 0 mod 2 pi.
inline std::vector<double> airy_spectrum(const ResonatorParams& p,
                                         std::span<const double> phi_grid) {
    if (phi_grid.empty())
        throw std::invalid_argument("airy_spectrum: empty phase grid");
    std::vector<double> out;
    out.reserve(phi_grid.size());
    ResonatorParams q = p;
    for (double phi : phi_grid) {
        q.phi = phi;
        out.push_back(std::norm(steady_state(q).value));
    }
    return out;
}

// Coefficient of finesse of |1/(1 - g e^{i phi})|^2 written as an Airy
// lineshape 1/(1 + F sin^2(phi/2)).
inline double coefficient_of_finesse(double loop_gain) {
    const double d = 1.0 - loop_gain;
    return 4.0 * loop_gain / (d * d);
}

// FWHM of the Airy lineshape, in cycle phase. Valid at any finesse while the
// dip still reaches half maximum (F >= 1); NaN otherwise.
inline double airy_fwhm_phase(double loop_gain) {
    const double f = coefficient_of_finesse(loop_gain);
    if (f < 1.0) return std::numeric_limits<double>::quiet_NaN();
    return 4.0 * std::asin(1.0 / std::sqrt(f));
}

// Same linewidth expressed in Hz for a resonator with cycle time tau
// (phi = 2 pi f tau, so FSR = 1/tau).
inline double airy_fwhm_hz(double loop_gain, double tau) {
    if (!(tau > 0.0)) throw std::domain_error("airy_fwhm_hz: tau must be > 0");
    return airy_fwhm_phase(loop_gain) / (two_pi * tau);
}

struct CavityFigures {
    double fsr = 0.0;               // Hz
    double linewidth_fwhm = 0.0;    // Hz
    double finesse = 0.0;           // fsr / linewidth
    double q_factor = 0.0;          // carrier / linewidth
    double equivalent_length = 0.0; // c / fsr, m
};

inline CavityFigures figures_of_merit(double fsr, double linewidth, double carrier) {
    if (!(fsr > 0.0) || !(linewidth > 0.0) || !(carrier > 0.0))
        throw std::domain_error("figures_of_merit: fsr, linewidth, carrier must be > 0");
    return {fsr, linewidth, fsr / linewidth, carrier / linewidth, speed_of_light / fsr};
}

// Per-cycle phase picked up when successive pulses are detuned by delta_f:
// phi = 2 pi delta_f tau, reduced to (-pi, pi]. Resonances recur at integer
// multiples of 1/tau.
inline double phase_from_detuning(double delta_f, double tau) {
    if (!(tau > 0.0)) throw std::domain_error("phase_from_detuning: tau must be > 0");
    return reduce_phase(two_pi * delta_f * tau);
}

}  // namespace spinwave
