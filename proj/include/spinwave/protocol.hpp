#pragma once

// Scenario layer: assembles engine configurations for each named experiment
// (accumulation, ring-down, spectrum scan, FSR sweep, linewidth-vs-coupling
// sweep, absorption probe, closed-form model), normalizes outputs the way the
// figures are normalized, and runs sweeps as independent parallel jobs.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spinwave/cavity.hpp"
#include "spinwave/fit.hpp"
#include "spinwave/gem.hpp"

namespace spinwave::protocol {

enum class ScenarioKind {
    closed_form,
    accumulate,
    ringdown,
    spectrum,
    fsr_sweep,
    linewidth_sweep,
    absorption,
};

enum class Normalization { none, first_echo, input_energy };

inline const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::closed_form: return "closed_form";
        case ScenarioKind::accumulate: return "accumulate";
        case ScenarioKind::ringdown: return "ringdown";
        case ScenarioKind::spectrum: return "spectrum";
        case ScenarioKind::fsr_sweep: return "fsr_sweep";
        case ScenarioKind::linewidth_sweep: return "linewidth_sweep";
        case ScenarioKind::absorption: return "absorption";
    }
    return "?";
}

inline const char* to_string(Normalization n) {
    switch (n) {
        case Normalization::none: return "none";
        case Normalization::first_echo: return "first_echo";
        case Normalization::input_energy: return "input_energy";
    }
    return "?";
}

struct SweepAxis {
    std::string parameter;       // kappa | beta | gamma_s | delta_hz | period | power
    std::vector<double> values;  // finite, strictly monotone
};

// Optional control-power calibration: kappa^2 = kappa2_per_power * P and
// gamma_s = gamma_floor + gamma_per_power * P. The constants are inputs, not
// claims; they let a sweep be expressed on a power axis.
struct PowerMap {
    double kappa2_per_power = 0.0;
    double gamma_per_power = 0.0;
    double gamma_floor = 0.0;
};

struct Scenario {
    ScenarioKind kind = ScenarioKind::accumulate;
    std::string name;
    gem::GemConfig engine;
    ResonatorParams model;          // closed_form kind
    std::vector<double> phi_grid;   // closed_form: optional Airy spectrum output
    Normalization normalization = Normalization::none;

    // spectrum / absorption scans: explicit offsets, or a generated grid
    std::vector<double> offsets_hz;
    double scan_halfwidth_hz = 0.0;
    double scan_step_hz = 0.0;

    int ringdown_fill = 5;
    int ringdown_decay_cycles = 20;
    bool ringdown_gate_off = false;

    std::optional<SweepAxis> sweep;
    std::optional<PowerMap> power_map;

    unsigned threads = 0;  // 0 = hardware concurrency
};

inline std::vector<double> resolved_offsets(const Scenario& s) {
    if (!s.offsets_hz.empty()) return s.offsets_hz;
    if (s.scan_step_hz > 0.0 && s.scan_halfwidth_hz > 0.0) {
        std::vector<double> offs;
        const long n = static_cast<long>(std::round(s.scan_halfwidth_hz / s.scan_step_hz));
        for (long k = -n; k <= n; ++k)
            offs.push_back(s.scan_step_hz * static_cast<double>(k));
        return offs;
    }
    return {};
}

// Applies one sweep-axis value to a copy of the scenario's engine config.
inline void apply_parameter(gem::GemConfig& cfg, const std::string& parameter, double value,
                            const std::optional<PowerMap>& pm) {
    if (parameter == "kappa") {
        cfg.kappa = value;
    } else if (parameter == "beta") {
        cfg.kappa = std::sqrt(value * cfg.eta0);
    } else if (parameter == "gamma_s") {
        cfg.gamma_s = value;
    } else if (parameter == "delta_hz") {
        cfg.delta = two_pi * value;
    } else if (parameter == "period") {
        cfg.pulses.period = value;
        cfg.schedule.half_period = value / 2.0;
    } else if (parameter == "power") {
        if (!pm)
            throw std::invalid_argument(
                "sweep.parameter=power requires a power_map (kappa2_per_power, ...)");
        cfg.kappa = std::sqrt(std::max(0.0, pm->kappa2_per_power * value));
        cfg.gamma_s = pm->gamma_floor + pm->gamma_per_power * value;
    } else {
        throw std::invalid_argument("unknown sweep parameter: " + parameter);
    }
}

inline void validate(const Scenario& s) {
    const auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };

    if (s.kind == ScenarioKind::closed_form) {
        s.model.validate();
        return;
    }

    // The protocol couples pulses to every second recall: one pulse per full
    // gradient cycle.
    if (s.kind != ScenarioKind::absorption) {
        const double period = s.engine.pulses.period;
        const double half = s.engine.schedule.half_period;
        if (std::abs(period - 2.0 * half) > 1e-9 * period) {
            std::ostringstream os;
            os << "pulses.period (" << period << " s) must equal 2 * schedule.half_period ("
               << half << " s): one input per full gradient cycle";
            fail(os.str());
        }
    }

    if (s.sweep) {
        if (s.sweep->values.empty()) fail("sweep.values: must be non-empty");
        bool inc = true, dec = true;
        for (std::size_t i = 0; i < s.sweep->values.size(); ++i) {
            if (!std::isfinite(s.sweep->values[i])) fail("sweep.values: must be finite");
            if (i > 0) {
                inc = inc && s.sweep->values[i] > s.sweep->values[i - 1];
                dec = dec && s.sweep->values[i] < s.sweep->values[i - 1];
            }
        }
        if (s.sweep->values.size() > 1 && !inc && !dec)
            fail("sweep.values: must be strictly monotone");
    }

    switch (s.kind) {
        case ScenarioKind::accumulate:
            if (s.engine.pulses.count < 1) fail("pulses.count: must be >= 1");
            break;
        case ScenarioKind::ringdown:
            if (s.ringdown_fill < 0) fail("ringdown.fill: must be >= 0");
            if (s.ringdown_decay_cycles < 1) fail("ringdown.decay_cycles: must be >= 1");
            break;
        case ScenarioKind::spectrum:
            if (resolved_offsets(s).empty())
                fail("scan: provide offsets_hz or (halfwidth_hz, step_hz)");
            break;
        case ScenarioKind::fsr_sweep:
            if (!s.sweep || s.sweep->parameter != "period")
                fail("fsr_sweep: sweep.parameter must be 'period'");
            break;
        case ScenarioKind::linewidth_sweep:
            if (!s.sweep || (s.sweep->parameter != "kappa" && s.sweep->parameter != "beta" &&
                             s.sweep->parameter != "power"))
                fail("linewidth_sweep: sweep.parameter must be kappa, beta, or power");
            if (s.sweep->values.size() < 3) fail("linewidth_sweep: need >= 3 sweep values");
            break;
        case ScenarioKind::absorption:
            if (resolved_offsets(s).empty())
                fail("scan: provide offsets_hz or (halfwidth_hz, step_hz)");
            break;
        default:
            break;
    }
}

// ---------------------------------------------------------------------------
// Timeline plan
// ---------------------------------------------------------------------------

struct PlanWindow {
    double t_start = 0.0, t_end = 0.0;
    gem::WindowKind kind = gem::WindowKind::echo;
};

struct TimelinePlan {
    std::vector<double> flip_times;     // gradient sign flips
    std::vector<double> pulse_slots;    // schedule ticks, k * period
    std::vector<double> pulse_centers;  // Gaussian centers, slot + half_period/2
    std::vector<PlanWindow> windows;
    double t_end = 0.0;
};

inline TimelinePlan build_timeline(const Scenario& s) {
    validate(s);
    TimelinePlan plan;
    const gem::GemConfig& cfg = s.engine;
    const double h = cfg.schedule.half_period;
    const double period = cfg.pulses.period;

    int n_pulses = 0;
    double t_end = 0.0;
    switch (s.kind) {
        case ScenarioKind::accumulate:
        case ScenarioKind::spectrum:
            n_pulses = cfg.pulses.count;
            t_end = period * n_pulses;
            break;
        case ScenarioKind::ringdown:
            n_pulses = s.ringdown_fill;
            t_end = period * (s.ringdown_fill + s.ringdown_decay_cycles);
            break;
        case ScenarioKind::absorption: {
            const double probe_end = 16.0 * cfg.pulses.width;
            plan.windows.push_back({0.0, probe_end, gem::WindowKind::input_leak});
            plan.t_end = probe_end;
            return plan;
        }
        case ScenarioKind::closed_form:
            return plan;
        case ScenarioKind::fsr_sweep:
        case ScenarioKind::linewidth_sweep: {
            Scenario base = s;
            base.kind = ScenarioKind::accumulate;
            base.sweep.reset();
            return build_timeline(base);
        }
    }

    for (int k = 0; k < n_pulses; ++k) {
        plan.pulse_slots.push_back(period * k);
        plan.pulse_centers.push_back(period * k + cfg.pulse_center_offset());
    }
    const std::size_t n_windows = static_cast<std::size_t>(std::round(t_end / h));
    for (std::size_t w = 0; w < n_windows; ++w) {
        PlanWindow win;
        win.t_start = h * static_cast<double>(w);
        win.t_end = h * static_cast<double>(w + 1);
        win.kind = gem::WindowKind::echo;
        for (double c : plan.pulse_centers)
            if (c >= win.t_start && c < win.t_end) win.kind = gem::WindowKind::input_leak;
        plan.windows.push_back(win);
        plan.flip_times.push_back(win.t_end);
    }
    plan.t_end = t_end;
    return plan;
}

// ---------------------------------------------------------------------------
// Output conditioning
// ---------------------------------------------------------------------------

struct EquilibriumEcho {
    double energy = 0.0;     // mean of the last 3 echo windows
    double amplitude = 0.0;  // mean peak amplitude of the last 3 echo windows
    double spread = 0.0;     // relative spread of those energies
    bool flagged = false;    // true when the spread exceeds 2%
};

inline EquilibriumEcho equilibrium_echo(const gem::EchoSeries& series) {
    const auto idx = series.echo_indices();
    if (idx.empty()) throw std::invalid_argument("equilibrium_echo: no echo windows");
    const std::size_t n = std::min<std::size_t>(3, idx.size());
    EquilibriumEcho eq;
    double emin = std::numeric_limits<double>::infinity(), emax = 0.0;
    for (std::size_t i = idx.size() - n; i < idx.size(); ++i) {
        const auto& w = series.windows[idx[i]];
        eq.energy += w.energy;
        eq.amplitude += w.peak_amplitude;
        emin = std::min(emin, w.energy);
        emax = std::max(emax, w.energy);
    }
    eq.energy /= static_cast<double>(n);
    eq.amplitude /= static_cast<double>(n);
    eq.spread = eq.energy > 0.0 ? (emax - emin) / eq.energy : 0.0;
    eq.flagged = eq.spread > 0.02;
    return eq;
}

inline std::vector<double> normalized_echo_energies(const gem::EchoSeries& series,
                                                    Normalization norm) {
    const auto energies = series.echo_energies();
    std::vector<double> out = energies;
    switch (norm) {
        case Normalization::none:
            break;
        case Normalization::first_echo: {
            if (energies.empty() || energies.front() <= 0.0)
                throw std::invalid_argument(
                    "normalization=first_echo requires at least one echo window");
            for (auto& e : out) e /= energies.front();
            break;
        }
        case Normalization::input_energy: {
            if (series.input_energy <= 0.0)
                throw std::invalid_argument("normalization=input_energy requires input energy > 0");
            for (auto& e : out) e /= series.input_energy;
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepPoint {
    double axis_value = 0.0;
    bool ok = false;
    std::string error;  // per-point failures are recorded, never dropped
    double equilibrium_echo_energy = std::numeric_limits<double>::quiet_NaN();
    double equilibrium_echo_amplitude = std::numeric_limits<double>::quiet_NaN();
    double fitted_fsr_hz = std::numeric_limits<double>::quiet_NaN();
    double fitted_fsr_sigma_hz = std::numeric_limits<double>::quiet_NaN();
    double fitted_linewidth_hz = std::numeric_limits<double>::quiet_NaN();
    double fitted_linewidth_sigma_hz = std::numeric_limits<double>::quiet_NaN();
    std::vector<gem::SpectrumPoint> scan;  // raw per-point scan, when applicable
};

struct SweepResult {
    std::string parameter;
    std::vector<SweepPoint> points;
};

inline unsigned resolve_threads(unsigned requested) {
    return requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
}

// Predicted per-cycle amplitude multiplier of the engine protocol: two recall
// events per period (x T single-pass) plus coherence decay.
inline double predicted_cycle_multiplier(const gem::GemConfig& cfg) {
    return std::exp(-two_pi * cfg.beta()) * std::exp(-cfg.gamma_s * cfg.pulses.period);
}

inline int equilibrium_pulse_count(const gem::GemConfig& cfg, int lo = 15, int hi = 120) {
    const double m = predicted_cycle_multiplier(cfg);
    const int n = static_cast<int>(std::ceil(6.0 / std::max(1e-6, 1.0 - m)));
    return std::clamp(n, lo, hi);
}

// Central-peak spectrum scan and single-peak Airy fit; the linewidth arm of
// Fig. 3D. Scan width defaults to ~3.2x the closed-form FWHM prediction.
inline fit::FitResult central_peak_linewidth(const gem::GemConfig& base, unsigned threads = 0,
                                             int n_offsets = 21) {
    const double fsr = 1.0 / base.pulses.period;
    const double m = predicted_cycle_multiplier(base);

    fit::FitResult res;
    res.model = "airy";
    if (!(m > 0.0) || coefficient_of_finesse(m) < 1.0) {
        res.detail = "no measurable resonance at this coupling (contrast below half maximum)";
        return res;
    }
    const double fwhm_pred = airy_fwhm_hz(m, base.pulses.period);
    const double half_span = std::min(1.6 * fwhm_pred, 0.45 * fsr);

    gem::GemConfig cfg = base;
    cfg.pulses.count = equilibrium_pulse_count(base);
    std::vector<double> offs;
    for (int i = 0; i < n_offsets; ++i)
        offs.push_back(-half_span + 2.0 * half_span * i / (n_offsets - 1));

    const auto scan = gem::run_spectrum_scan(cfg, offs, resolve_threads(threads));
    std::vector<double> fs, amps;
    double peak = 0.0;
    for (const auto& p : scan) {
        if (!p.ok) {
            res.detail = "scan point failed: " + p.error;
            return res;
        }
        fs.push_back(p.offset_hz);
        amps.push_back(p.amplitude);
        peak = std::max(peak, p.amplitude);
    }
    if (!(peak > 0.0)) {
        res.detail = "no echo signal at this coupling";
        return res;
    }
    fit::AiryOptions opt;
    opt.amplitude_data = true;
    opt.fixed_fsr = fsr;
    try {
        res = fit_airy(fs, amps, opt);
    } catch (const std::exception& e) {
        res.converged = false;
        res.detail = e.what();
    }
    return res;
}

// Full-bandwidth spectrum scan for one engine config; offsets centered on 0.
inline std::vector<gem::SpectrumPoint> spectrum_scan(const Scenario& s) {
    Scenario v = s;
    v.kind = ScenarioKind::spectrum;
    validate(v);
    const auto offs = resolved_offsets(s);
    return gem::run_spectrum_scan(s.engine, offs, resolve_threads(s.threads));
}

// FSR vs repetition period: one spectrum scan per period, peak-spacing fit.
// The scan spans +-halfwidth_fsr free spectral ranges with FSR/step_divisor
// sampling (the default shows ~5 peaks).
inline SweepResult fsr_sweep(const Scenario& base, std::span<const double> periods,
                             double halfwidth_fsr = 2.2, int step_divisor = 40) {
    SweepResult result;
    result.parameter = "period";
    result.points.resize(periods.size());
    for (std::size_t i = 0; i < periods.size(); ++i) {
        SweepPoint& pt = result.points[i];
        pt.axis_value = periods[i];
        try {
            gem::GemConfig cfg = base.engine;
            apply_parameter(cfg, "period", periods[i], base.power_map);
            const double fsr_nominal = 1.0 / periods[i];
            std::vector<double> offs;
            const double step = fsr_nominal / step_divisor;
            const long n = static_cast<long>(std::ceil(halfwidth_fsr * fsr_nominal / step));
            for (long k = -n; k <= n; ++k) offs.push_back(step * static_cast<double>(k));
            const auto scan = gem::run_spectrum_scan(cfg, offs, resolve_threads(base.threads));
            std::vector<double> fs, amps;
            for (const auto& p : scan) {
                if (!p.ok) throw std::runtime_error("scan point failed: " + p.error);
                fs.push_back(p.offset_hz);
                amps.push_back(p.amplitude);
            }
            const fit::FitResult fr = fit::peak_spacing_fsr(fs, amps);
            if (!fr.converged) throw std::runtime_error("peak-spacing fit did not converge");
            pt.fitted_fsr_hz = fr.value("fsr");
            pt.fitted_fsr_sigma_hz = fr.sigma("fsr");
            pt.scan = scan;
            pt.ok = true;
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
    }
    return result;
}

// Linewidth of the central resonance for each coupling value; fit failures
// are recorded per point and the sweep continues.
inline SweepResult linewidth_sweep(const Scenario& base, std::span<const double> axis_values,
                                   const std::string& parameter = "kappa") {
    SweepResult result;
    result.parameter = parameter;
    result.points.resize(axis_values.size());
    for (std::size_t i = 0; i < axis_values.size(); ++i) {
        SweepPoint& pt = result.points[i];
        pt.axis_value = axis_values[i];
        try {
            gem::GemConfig cfg = base.engine;
            apply_parameter(cfg, parameter, axis_values[i], base.power_map);
            const fit::FitResult fr = central_peak_linewidth(cfg, base.threads);
            if (!fr.converged) {
                pt.error = fr.detail.empty() ? "linewidth fit did not converge" : fr.detail;
                continue;
            }
            pt.fitted_linewidth_hz = fr.value("linewidth_fwhm");
            pt.fitted_linewidth_sigma_hz = fr.sigma("linewidth_fwhm");
            pt.ok = true;
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
    }
    return result;
}

// Equilibrium echo vs a swept parameter (e.g. control power, Fig. 2E).
inline SweepResult equilibrium_sweep(const Scenario& base, const SweepAxis& axis) {
    SweepResult result;
    result.parameter = axis.parameter;
    result.points.resize(axis.values.size());
    gem::detail::parallel_for(
        axis.values.size(), resolve_threads(base.threads), [&](std::size_t i) {
            SweepPoint& pt = result.points[i];
            pt.axis_value = axis.values[i];
            try {
                gem::GemConfig cfg = base.engine;
                apply_parameter(cfg, axis.parameter, axis.values[i], base.power_map);
                gem::RunOptions opt;
                opt.keep_samples = false;
                opt.coherence_stride = 64;
                const auto series = gem::run_accumulation(cfg, opt);
                const auto eq = equilibrium_echo(series);
                double scale = 1.0;
                if (base.normalization == Normalization::first_echo)
                    scale = series.echo_energies().front();
                else if (base.normalization == Normalization::input_energy)
                    scale = series.input_energy;
                if (!(scale > 0.0)) throw std::runtime_error("normalization scale is zero");
                pt.equilibrium_echo_energy = eq.energy / scale;
                pt.equilibrium_echo_amplitude = eq.amplitude;
                pt.ok = true;
            } catch (const std::exception& e) {
                pt.error = e.what();
            }
        });
    return result;
}

}  // namespace spinwave::protocol
