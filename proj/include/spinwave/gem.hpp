#pragma once

// 1D + time integrator of the gradient-echo-memory pair
//
//     d sigma / dt = -(gamma_s + i (delta + eta(t) z)) sigma + i kappa E
//     d E / dz     =  i kappa sigma
//
// in the co-moving frame on z in [-1/2, 1/2], with the optical envelope E
// slaved to the boundary condition E(z_in, t) = input(t). The switchable
// gradient eta(t) = +-eta0 writes each pulse's spectrum onto position and
// rephases it once per half-period; pulses injected once per full period
// interfere with the re-emitted spinwave, which is what makes the medium act
// as the coupling mirror of an effective cavity.
//
// The derived optical depth is beta = kappa^2 / eta0: a spectrally narrow
// component crossing its resonance position is attenuated by e^{-pi beta} in
// amplitude, so a stored-and-recalled pulse reproduces T = e^{-2 pi beta}
// per pass as an emergent property, not an input.
//
// Numerics: method of lines. Each RK4 stage slaves E by trapezoidal
// accumulation from the input boundary, then advances sigma; time steps are
// aligned to the gradient segments so every half-period carries an identical
// sample grid (this keeps echo windows bit-comparable across a run).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spinwave/common.hpp"

namespace spinwave::gem {

struct GradientSchedule {
    double half_period = 6e-6;  // s between sign flips
    int initial_sign = +1;
    bool hold = false;          // static gradient (no switching), e.g. absorption probes
    std::vector<int> sign_overrides;  // optional per-segment sign; 0 = alternating default

    int sign_at(std::size_t segment) const {
        if (hold) return initial_sign;
        if (segment < sign_overrides.size() && sign_overrides[segment] != 0)
            return sign_overrides[segment] > 0 ? +1 : -1;
        return (segment % 2 == 0) ? initial_sign : -initial_sign;
    }
};

struct PulseTrain {
    double period = 12e-6;       // s, one pulse per full gradient cycle
    complexd amplitude = 1.0;
    double width = 1e-6;         // Gaussian 1/e^2 intensity half-width in time, s
    int count = 1;
    double carrier_offset_hz = 0.0;  // probe carrier offset; phase-coherent across pulses
    double center_offset = -1.0;     // s from cycle start; < 0 selects half_period/2
};

struct GemConfig {
    int n_z = 512;              // grid points, >= 64
    double cell_length = 0.2;   // m; informational (core math uses normalized z)
    double kappa = 0.0;         // coupling; beta = kappa^2 / eta0
    double eta0 = two_pi * 1e6; // gradient magnitude, rad/s per unit normalized length
    double gamma_s = 0.0;       // coherence amplitude decay rate, 1/s
    double delta = 0.0;         // uniform two-photon detuning offset, rad/s
    double dt = 0.0;            // time step, s; 0 selects the default below
    GradientSchedule schedule;
    PulseTrain pulses;

    double beta() const { return eta0 > 0.0 ? kappa * kappa / eta0 : 0.0; }
    double bandwidth_hz() const { return eta0 / two_pi; }  // full absorption band, L = 1
    double pulse_center_offset() const {
        return pulses.center_offset >= 0.0 ? pulses.center_offset : 0.5 * schedule.half_period;
    }
    // Fastest phase rotation the stepper must resolve.
    double max_rotation_rate() const {
        return 0.5 * eta0 + std::abs(delta) + two_pi * std::abs(pulses.carrier_offset_hz);
    }
    double auto_dt() const {
        const double rate = max_rotation_rate();
        return rate > 0.0 ? 0.1 / rate : schedule.half_period / 256.0;
    }
    double step() const { return dt > 0.0 ? dt : auto_dt(); }

    // Throws std::invalid_argument before any stepping when the grid cannot
    // support the run. t_end bounds the gradient dwell time for held runs.
    void validate(double t_end) const {
        if (n_z < 64) throw std::invalid_argument("GemConfig: n_z must be >= 64");
        if (!(kappa >= 0.0)) throw std::invalid_argument("GemConfig: kappa must be >= 0");
        if (!(eta0 > 0.0)) throw std::invalid_argument("GemConfig: eta0 must be > 0");
        if (!(gamma_s >= 0.0)) throw std::invalid_argument("GemConfig: gamma_s must be >= 0");
        if (!(schedule.half_period > 0.0) && !schedule.hold)
            throw std::invalid_argument("GemConfig: schedule.half_period must be > 0");
        if (!(pulses.width > 0.0)) throw std::invalid_argument("GemConfig: pulses.width must be > 0");
        const double h = step();
        if (!(h > 0.0)) throw std::invalid_argument("GemConfig: dt must be > 0");
        if (h * max_rotation_rate() >= 0.5)
            throw std::invalid_argument(
                "GemConfig: dt too large, dt * (eta0/2 + |delta| + |2 pi carrier|) must be < 0.5");
        const double dz = 1.0 / (n_z - 1);
        // The stored profile (spectral width mapped to position, ~1/(width eta0))
        // must be resolved by the grid.
        if (kappa > 0.0 && pulses.count > 0 && 2.0 * pulses.width * eta0 > (n_z - 1))
            throw std::invalid_argument(
                "GemConfig: n_z too small to resolve the stored profile, need "
                "n_z - 1 >= 2 * width * eta0");
        // Spatial-phase aliasing: with a switching gradient the coherence
        // wavenumber is bounded by the dwell time between flips. Under a held
        // gradient the wavenumber grows without bound, but components only
        // alias long after they stop radiating (suppressed by the resolved
        // profile width), so no dwell bound applies there.
        if (!schedule.hold && eta0 * schedule.half_period * dz >= pi)
            throw std::invalid_argument(
                "GemConfig: n_z too small, eta0 * half_period * dz must stay below pi "
                "(coherence phase would alias between grid points)");
        (void)t_end;
    }
};

struct FieldState {
    std::vector<complexd> sigma;   // atomic coherence on the z grid
    std::vector<complexd> e_field; // slaved optical envelope at time t
    double t = 0.0;

    static FieldState zero(const GemConfig& cfg) {
        FieldState st;
        st.sigma.assign(static_cast<std::size_t>(cfg.n_z), complexd{});
        st.e_field.assign(static_cast<std::size_t>(cfg.n_z), complexd{});
        return st;
    }
};

// Prescribed boundary waveform E(z_in, t): the Gaussian pulse train with a
// phase-coherent carrier offset.
inline complexd input_waveform(const GemConfig& cfg, double t) {
    const PulseTrain& p = cfg.pulses;
    if (p.count <= 0) return {};
    const double c0 = cfg.pulse_center_offset();
    const double w = p.width;
    const double span = 8.5 * w;
    long k_lo = 0, k_hi = static_cast<long>(p.count) - 1;
    if (p.period > 0.0) {
        k_lo = std::max<long>(0, static_cast<long>(std::floor((t - c0 - span) / p.period)));
        k_hi = std::min<long>(k_hi, static_cast<long>(std::ceil((t - c0 + span) / p.period)));
    }
    complexd acc{};
    for (long k = k_lo; k <= k_hi; ++k) {
        const double u = (t - (c0 + p.period * static_cast<double>(k))) / w;
        if (std::abs(u) > 8.5) continue;
        acc += p.amplitude * std::exp(-u * u);
    }
    if (p.carrier_offset_hz != 0.0) acc *= std::polar(1.0, two_pi * p.carrier_offset_hz * t);
    return acc;
}

enum class WindowKind { input_leak, echo };

struct EchoWindow {
    double t_start = 0.0, t_end = 0.0;
    WindowKind kind = WindowKind::echo;
    double energy = 0.0;          // integral |E_out|^2 dt over the window
    double peak_amplitude = 0.0;  // max |E_out|
    double peak_time = 0.0;
    std::vector<complexd> samples;  // E_out on the step grid (when recorded)
    double sample_dt = 0.0;
};

struct EchoSeries {
    std::vector<EchoWindow> windows;
    double input_energy = 0.0;          // integral |E_in|^2 dt over the run
    double output_energy = 0.0;         // integral |E_out|^2 dt over the run
    std::vector<std::pair<double, double>> coherence;  // (t, ||sigma||_2)
    std::vector<double> window_end_coherence;          // ||sigma|| at each window end
    double dt = 0.0;

    std::vector<std::size_t> echo_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < windows.size(); ++i)
            if (windows[i].kind == WindowKind::echo) idx.push_back(i);
        return idx;
    }
    std::vector<double> echo_energies() const {
        std::vector<double> e;
        for (const auto& w : windows)
            if (w.kind == WindowKind::echo) e.push_back(w.energy);
        return e;
    }
};

// Complex overlap of two recorded windows on their common sample range;
// arg() of the result is the phase advance between the two echoes.
inline complexd window_overlap(const EchoWindow& a, const EchoWindow& b) {
    const std::size_t n = std::min(a.samples.size(), b.samples.size());
    complexd acc{};
    for (std::size_t i = 0; i < n; ++i) acc += a.samples[i] * std::conj(b.samples[i]);
    return acc;
}

namespace detail {

class Integrator {
public:
    Integrator(const GemConfig& cfg, double t_end) : cfg_(cfg), t_end_(t_end) {
        cfg.validate(t_end);
        n_ = static_cast<std::size_t>(cfg.n_z);
        dz_ = 1.0 / static_cast<double>(cfg.n_z - 1);
        z_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) z_[i] = -0.5 + dz_ * static_cast<double>(i);
        coeff_.resize(n_);
        for (auto* v : {&k1_, &k2_, &k3_, &k4_, &tmp_}) v->assign(n_, complexd{});
        if (cfg.schedule.hold) {
            seg_len_ = t_end;
            steps_per_seg_ = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(seg_len_ / cfg.step())));
        } else {
            seg_len_ = cfg.schedule.half_period;
            steps_per_seg_ = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(seg_len_ / cfg.step())));
        }
        h_ = seg_len_ / static_cast<double>(steps_per_seg_);
    }

    double step_size() const { return h_; }

    // Zero the coupling from gate_time on (ring-down with the control gated
    // off). Snapped a quarter step early so the boundary sample is gated even
    // after accumulated clock drift.
    void set_kappa_gate(double gate_time) {
        gate_time_ = std::isfinite(gate_time) ? gate_time - 0.25 * h_ : gate_time;
    }

    complexd input(double t) const { return input_waveform(cfg_, t); }

    // Advance from st.t to t_end. After every step the sink receives
    // (t, E_in(t), E_out(t), ||sigma||_2(t)), including the initial instant.
    template <class Sink>
    void run(FieldState& st, Sink&& sink) {
        double t = st.t;
        std::size_t seg = cfg_.schedule.hold
                              ? 0
                              : static_cast<std::size_t>(std::floor(t / seg_len_ + 1e-9));
        enter_segment(seg, t);
        emit(st, t, sink);
        while (t < t_end_ - 1e-9 * h_) {
            if (!cfg_.schedule.hold) {
                const std::size_t seg_now =
                    static_cast<std::size_t>(std::floor((t + 0.5 * h_) / seg_len_));
                if (seg_now != seg) {
                    seg = seg_now;
                    enter_segment(seg, t);
                }
            }
            // land exactly on t_end; the final step may stretch to 1.5 h
            const double remaining = t_end_ - t;
            const double hstep = remaining < 1.5 * h_ ? remaining : h_;
            rk4(st.sigma, t, hstep);
            t += hstep;
            emit(st, t, sink);
        }
        st.t = t;
        slave_field(st.sigma, t, st.e_field);
    }

    // Fill e with the slaved field for coherence sigma at time t.
    void slave_field(const std::vector<complexd>& sigma, double t,
                     std::vector<complexd>& e) const {
        e.resize(n_);
        const double kap = kappa_at(t);
        complexd acc = input(t);
        e[0] = acc;
        const double half = 0.5 * dz_ * kap;
        for (std::size_t i = 1; i < n_; ++i) {
            const complexd s = sigma[i - 1] + sigma[i];
            acc += complexd(-half * s.imag(), half * s.real());  // += i kap dz/2 (s_prev+s_i)
            e[i] = acc;
        }
    }

    double sigma_norm_sq(const std::vector<complexd>& sigma) const {
        double acc = 0.0;
        for (const auto& s : sigma) acc += std::norm(s);
        acc -= 0.5 * (std::norm(sigma.front()) + std::norm(sigma.back()));
        return acc * dz_;
    }

private:
    double kappa_at(double t) const { return t >= gate_time_ ? 0.0 : cfg_.kappa; }

    void enter_segment(std::size_t seg, double t) {
        const int sign = cfg_.schedule.sign_at(seg);
        const double eta = cfg_.eta0 * static_cast<double>(sign);
        for (std::size_t i = 0; i < n_; ++i)
            coeff_[i] = complexd(-cfg_.gamma_s, -(cfg_.delta + eta * z_[i]));
        (void)t;
    }

    // One derivative evaluation: slave E from the boundary, then
    // k_i = coeff_i sigma_i + i kappa E_i. Returns E at the output face.
    complexd deriv(const std::vector<complexd>& s, double t, std::vector<complexd>& k) const {
        const double kap = kappa_at(t);
        const double half = 0.5 * dz_ * kap;
        complexd e = input(t);
        {
            const complexd& s0 = s[0];
            k[0] = complexd(coeff_[0].real() * s0.real() - coeff_[0].imag() * s0.imag(),
                            coeff_[0].real() * s0.imag() + coeff_[0].imag() * s0.real()) +
                   complexd(-kap * e.imag(), kap * e.real());
        }
        for (std::size_t i = 1; i < n_; ++i) {
            const complexd su = s[i - 1] + s[i];
            e += complexd(-half * su.imag(), half * su.real());
            const complexd& si = s[i];
            k[i] = complexd(coeff_[i].real() * si.real() - coeff_[i].imag() * si.imag(),
                            coeff_[i].real() * si.imag() + coeff_[i].imag() * si.real()) +
                   complexd(-kap * e.imag(), kap * e.real());
        }
        return e;
    }

    void rk4(std::vector<complexd>& s, double t, double h) {
        deriv(s, t, k1_);
        for (std::size_t i = 0; i < n_; ++i) tmp_[i] = s[i] + 0.5 * h * k1_[i];
        deriv(tmp_, t + 0.5 * h, k2_);
        for (std::size_t i = 0; i < n_; ++i) tmp_[i] = s[i] + 0.5 * h * k2_[i];
        deriv(tmp_, t + 0.5 * h, k3_);
        for (std::size_t i = 0; i < n_; ++i) tmp_[i] = s[i] + h * k3_[i];
        deriv(tmp_, t + h, k4_);
        const double w = h / 6.0;
        for (std::size_t i = 0; i < n_; ++i)
            s[i] += w * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }

    template <class Sink>
    void emit(FieldState& st, double t, Sink&& sink) {
        const complexd e_out = deriv(st.sigma, t, k1_);
        sink(t, input(t), e_out, std::sqrt(sigma_norm_sq(st.sigma)));
    }

    const GemConfig cfg_;
    double t_end_;
    std::size_t n_ = 0;
    double dz_ = 0.0;
    double seg_len_ = 0.0;
    std::size_t steps_per_seg_ = 0;
    double h_ = 0.0;
    double gate_time_ = std::numeric_limits<double>::infinity();
    std::vector<double> z_;
    std::vector<complexd> coeff_, k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace detail

// Options controlling what a run records.
struct RunOptions {
    bool keep_samples = true;          // store E_out samples inside each window
    std::size_t coherence_stride = 1;  // thin the (t, ||sigma||) trace
    std::vector<double> snapshot_times;
};

struct RunOutput {
    EchoSeries series;
    FieldState final_state;
    std::vector<FieldState> snapshots;  // at the first step boundary >= each requested time
};

// Integrate the configured protocol from state.t to t_end. Pure function of
// (state, config); deterministic.
inline FieldState evolve(FieldState state, const GemConfig& cfg, double t_end) {
    if (t_end < state.t) throw std::invalid_argument("evolve: t_end must be >= state.t");
    if (state.sigma.size() != static_cast<std::size_t>(cfg.n_z))
        throw std::invalid_argument("evolve: state grid does not match config n_z");
    detail::Integrator integ(cfg, t_end);
    integ.run(state, [](double, complexd, complexd, double) {});
    return state;
}

namespace detail {

inline RunOutput run_windowed(const GemConfig& cfg, double t_end, double gate_time,
                              const RunOptions& opt) {
    Integrator integ(cfg, t_end);
    integ.set_kappa_gate(gate_time);

    RunOutput out;
    EchoSeries& series = out.series;
    series.dt = integ.step_size();

    // Windows tile the run with the gradient half-periods; a window counts as
    // input-leak when a pulse center falls inside it.
    const double h = cfg.schedule.hold ? t_end : cfg.schedule.half_period;
    const std::size_t n_windows =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::round(t_end / h)));
    series.windows.resize(n_windows);
    for (std::size_t w = 0; w < n_windows; ++w) {
        auto& win = series.windows[w];
        win.t_start = h * static_cast<double>(w);
        win.t_end = std::min(t_end, h * static_cast<double>(w + 1));
        win.kind = WindowKind::echo;
        win.sample_dt = integ.step_size();
    }
    const double c0 = cfg.pulse_center_offset();
    for (int k = 0; k < cfg.pulses.count; ++k) {
        const double tc = c0 + cfg.pulses.period * static_cast<double>(k);
        const std::size_t w = static_cast<std::size_t>(tc / h);
        if (w < n_windows) series.windows[w].kind = WindowKind::input_leak;
    }
    series.window_end_coherence.assign(n_windows, 0.0);

    FieldState st = FieldState::zero(cfg);

    std::size_t snap_next = 0;
    std::vector<double> snap_times = opt.snapshot_times;
    std::sort(snap_times.begin(), snap_times.end());

    double prev_t = 0.0;
    double prev_in = 0.0, prev_out = 0.0;
    bool first = true;
    std::size_t step_count = 0;

    integ.run(st, [&](double t, complexd e_in, complexd e_out, double norm) {
        const double in2 = std::norm(e_in);
        const double out2 = std::norm(e_out);
        const std::size_t w = std::min<std::size_t>(
            n_windows - 1, static_cast<std::size_t>((first ? t : 0.5 * (prev_t + t)) / h));
        auto& win = series.windows[w];
        if (!first) {
            const double seg = 0.5 * (t - prev_t);
            series.input_energy += seg * (prev_in + in2);
            series.output_energy += seg * (prev_out + out2);
            win.energy += seg * (prev_out + out2);
        }
        const double amp = std::sqrt(out2);
        if (amp >= win.peak_amplitude) {
            win.peak_amplitude = amp;
            win.peak_time = t;
        }
        if (opt.keep_samples) win.samples.push_back(e_out);
        if (step_count % opt.coherence_stride == 0) series.coherence.emplace_back(t, norm);
        // Window-end coherence: last write into slot w happens at t = (w+1) h.
        const double u = t / h - 1e-9;
        const std::size_t w_end = std::min<std::size_t>(
            n_windows - 1, static_cast<std::size_t>(std::max(0.0, std::floor(u))));
        series.window_end_coherence[w_end] = norm;
        if (snap_next < snap_times.size() && t >= snap_times[snap_next] - 1e-15) {
            FieldState snap;
            snap.sigma = st.sigma;
            snap.t = t;
            integ.slave_field(snap.sigma, t, snap.e_field);
            out.snapshots.push_back(std::move(snap));
            ++snap_next;
        }
        prev_t = t;
        prev_in = in2;
        prev_out = out2;
        first = false;
        ++step_count;
    });

    out.final_state = std::move(st);
    return out;
}

}  // namespace detail

// Full pulse-train protocol: `count` pulses, one per gradient cycle, echoes
// read out in the alternate half-periods.
inline RunOutput run_accumulation_full(const GemConfig& cfg, const RunOptions& opt = {}) {
    if (cfg.pulses.count < 1)
        throw std::invalid_argument("run_accumulation: pulses.count must be >= 1");
    const double t_end = cfg.pulses.period * static_cast<double>(cfg.pulses.count);
    return detail::run_windowed(cfg, t_end, std::numeric_limits<double>::infinity(), opt);
}

inline EchoSeries run_accumulation(const GemConfig& cfg, const RunOptions& opt = {}) {
    return run_accumulation_full(cfg, opt).series;
}

// Fill with n_fill pulses, then keep switching the gradient with no input for
// n_decay further cycles. gate_coupling_off zeroes kappa during the decay
// phase, leaving the bare coherence decay exp(-gamma_s t).
inline EchoSeries run_ringdown(const GemConfig& cfg, int n_fill, int n_decay,
                               bool gate_coupling_off = false, const RunOptions& opt = {}) {
    if (n_fill < 0 || n_decay < 1)
        throw std::invalid_argument("run_ringdown: need n_fill >= 0 and n_decay >= 1");
    GemConfig c = cfg;
    c.pulses.count = n_fill;
    const double fill_end = c.pulses.period * static_cast<double>(n_fill);
    const double t_end = c.pulses.period * static_cast<double>(n_fill + n_decay);
    const double gate =
        gate_coupling_off ? fill_end : std::numeric_limits<double>::infinity();
    return detail::run_windowed(c, t_end, gate, opt).series;
}

struct SpectrumPoint {
    double offset_hz = 0.0;
    double amplitude = 0.0;  // peak |E_out| of the last echo window
    double energy = 0.0;     // energy of the last echo window
    bool ok = false;
    std::string error;
};

namespace detail {

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const unsigned used = std::min<unsigned>(threads, static_cast<unsigned>(n));
    pool.reserve(used);
    for (unsigned t = 0; t < used; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

// One accumulation run per control-frequency offset; the offset enters as the
// two-photon detuning delta = 2 pi f (which both shifts the storage position
// and advances the per-cycle phase, as in the experiment's control scan).
inline std::vector<SpectrumPoint> run_spectrum_scan(const GemConfig& cfg,
                                                    std::span<const double> offsets_hz,
                                                    unsigned threads = 0) {
    if (offsets_hz.empty())
        throw std::invalid_argument("run_spectrum_scan: offsets must be non-empty");
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<SpectrumPoint> points(offsets_hz.size());
    detail::parallel_for(offsets_hz.size(), threads, [&](std::size_t i) {
        SpectrumPoint& pt = points[i];
        pt.offset_hz = offsets_hz[i];
        try {
            GemConfig c = cfg;
            c.delta = cfg.delta + two_pi * offsets_hz[i];
            RunOptions opt;
            opt.keep_samples = false;
            opt.coherence_stride = 64;
            const EchoSeries s = run_accumulation(c, opt);
            const auto idx = s.echo_indices();
            if (idx.empty()) throw std::runtime_error("no echo windows");
            const EchoWindow& last = s.windows[idx.back()];
            pt.amplitude = last.peak_amplitude;
            pt.energy = last.energy;
            pt.ok = true;
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
    });
    return points;
}

struct AbsorptionPoint {
    double offset_hz = 0.0;
    double transmission = 1.0;  // output energy / input energy
    bool ok = false;
    std::string error;
};

// Static-gradient transmission probe: a narrowband pulse at each offset, held
// gradient, no recall. The dip is ~eta0/2pi wide and e^{-2 pi beta} deep.
inline std::vector<AbsorptionPoint> absorption_spectrum(const GemConfig& cfg,
                                                        std::span<const double> probe_offsets_hz,
                                                        unsigned threads = 0) {
    if (probe_offsets_hz.empty())
        throw std::invalid_argument("absorption_spectrum: offsets must be non-empty");
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<AbsorptionPoint> points(probe_offsets_hz.size());
    detail::parallel_for(probe_offsets_hz.size(), threads, [&](std::size_t i) {
        AbsorptionPoint& pt = points[i];
        pt.offset_hz = probe_offsets_hz[i];
        try {
            GemConfig c = cfg;
            c.schedule.hold = true;
            c.pulses.count = 1;
            c.pulses.carrier_offset_hz = probe_offsets_hz[i];
            c.pulses.center_offset = 6.0 * c.pulses.width;
            const double t_end = c.pulses.center_offset + 10.0 * c.pulses.width;
            RunOptions opt;
            opt.keep_samples = false;
            opt.coherence_stride = 64;
            const RunOutput out = detail::run_windowed(
                c, t_end, std::numeric_limits<double>::infinity(), opt);
            pt.transmission = out.series.input_energy > 0.0
                                  ? out.series.output_energy / out.series.input_energy
                                  : 1.0;
            pt.ok = true;
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
    });
    return points;
}

}  // namespace spinwave::gem
