#pragma once

// Least-squares extraction layer: exponential ring-down fits, low-finesse
// Airy spectrum fits (no high-finesse approximation), and peak-spacing FSR
// estimation. Parameter uncertainties come from the residual statistics,
// sigma^2 = RSS/(n-p) * (J^T J)^-1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spinwave/cavity.hpp"
#include "spinwave/common.hpp"

namespace spinwave::fit {

struct FitParam {
    std::string name;
    double value = 0.0;
    double sigma = 0.0;  // 1-sigma uncertainty
};

struct FitResult {
    std::string model;
    std::vector<FitParam> params;
    double residual_rms = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    std::size_t n_points = 0;
    std::string detail;  // fitted data domain, or the failure reason

    const FitParam* find(std::string_view name) const {
        for (const auto& p : params)
            if (p.name == name) return &p;
        return nullptr;
    }
    double value(std::string_view name) const {
        const FitParam* p = find(name);
        if (!p) throw std::invalid_argument("FitResult: no parameter named " + std::string(name));
        return p->value;
    }
    double sigma(std::string_view name) const {
        const FitParam* p = find(name);
        if (!p) throw std::invalid_argument("FitResult: no parameter named " + std::string(name));
        return p->sigma;
    }
};

namespace detail {

// Gaussian elimination with partial pivoting; solves a x = b for one rhs.
// a is n x n row-major and is consumed. Returns false when singular.
inline bool solve_linear(std::vector<double> a, std::vector<double> b, std::size_t n,
                         std::vector<double>& x) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < 1e-300) return false;
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
            std::swap(b[piv], b[col]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return true;
}

// Inverse via column-by-column solves; used for the covariance at optimum.
inline bool invert(const std::vector<double>& a, std::size_t n, std::vector<double>& inv) {
    inv.assign(n * n, 0.0);
    std::vector<double> e(n), col;
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        if (!solve_linear(a, e, n, col)) return false;
        for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
    }
    return true;
}

}  // namespace detail

// y(x; p) with the gradient d y / d p written into grad.
using CurveModel =
    std::function<double(double x, const std::vector<double>& p, std::span<double> grad)>;

struct LmOptions {
    int max_iterations = 400;
    double ftol = 1e-14;       // relative RSS improvement considered converged
    double lambda_init = 1e-3;
};

struct LmOutcome {
    bool converged = false;
    double rss = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    std::vector<double> covariance;  // n_free x n_free, scaled by RSS/(n-p)
    std::vector<std::size_t> free_indices;
    std::string reason;
};

// Damped normal-equation least squares. free_mask marks which parameters vary
// (empty = all free). Never throws on numerical failure; reports instead.
inline LmOutcome levenberg_marquardt(std::span<const double> xs, std::span<const double> ys,
                                     std::vector<double>& p, const CurveModel& model,
                                     std::vector<bool> free_mask = {},
                                     const LmOptions& opt = {}) {
    LmOutcome out;
    const std::size_t n = xs.size();
    const std::size_t np = p.size();
    if (free_mask.empty()) free_mask.assign(np, true);
    for (std::size_t i = 0; i < np; ++i)
        if (free_mask[i]) out.free_indices.push_back(i);
    const std::size_t nf = out.free_indices.size();
    if (n < nf) {
        out.reason = "fewer points than free parameters";
        return out;
    }

    std::vector<double> grad(np), jtj(nf * nf), jtr(nf), delta;
    std::vector<double> resid(n);

    auto evaluate = [&](const std::vector<double>& q, bool with_jac) {
        double rss = 0.0;
        if (with_jac) {
            std::fill(jtj.begin(), jtj.end(), 0.0);
            std::fill(jtr.begin(), jtr.end(), 0.0);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double f = model(xs[i], q, grad);
            const double r = ys[i] - f;
            resid[i] = r;
            rss += r * r;
            if (with_jac) {
                for (std::size_t a = 0; a < nf; ++a) {
                    const double ga = grad[out.free_indices[a]];
                    jtr[a] += ga * r;
                    for (std::size_t b = a; b < nf; ++b)
                        jtj[a * nf + b] += ga * grad[out.free_indices[b]];
                }
            }
        }
        if (with_jac)
            for (std::size_t a = 0; a < nf; ++a)
                for (std::size_t b = 0; b < a; ++b) jtj[a * nf + b] = jtj[b * nf + a];
        return rss;
    };

    double rss = evaluate(p, true);
    if (!std::isfinite(rss)) {
        out.reason = "non-finite model at start";
        return out;
    }
    double lambda = opt.lambda_init;
    std::vector<double> trial(p);

    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        std::vector<double> damped = jtj;
        for (std::size_t a = 0; a < nf; ++a) {
            double d = jtj[a * nf + a];
            if (d <= 0.0) d = 1e-12;
            damped[a * nf + a] = d * (1.0 + lambda);
        }
        if (!detail::solve_linear(damped, jtr, nf, delta)) {
            out.reason = "singular normal equations";
            out.rss = rss;
            out.iterations = it;
            return out;
        }
        trial = p;
        for (std::size_t a = 0; a < nf; ++a) trial[out.free_indices[a]] += delta[a];
        const double rss_trial = evaluate(trial, false);
        if (std::isfinite(rss_trial) && rss_trial <= rss) {
            const double gain = rss - rss_trial;
            p = trial;
            rss = evaluate(p, true);
            lambda = std::max(lambda / 3.0, 1e-14);
            if (gain <= opt.ftol * std::max(rss, 1e-300)) {
                ++it;
                break;
            }
        } else {
            lambda *= 4.0;
            if (lambda > 1e12) break;
            // restore J at current p for next solve (jtj/jtr already current)
        }
    }

    out.iterations = it;
    out.rss = rss;

    // Covariance from the undamped normal matrix at the optimum.
    const std::size_t dof = n > nf ? n - nf : 1;
    std::vector<double> inv;
    if (detail::invert(jtj, nf, inv)) {
        const double s2 = rss / static_cast<double>(dof);
        for (double& v : inv) v *= s2;
        out.covariance = std::move(inv);
        out.converged = true;
    } else {
        out.reason = "singular covariance";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Peak detection
// ---------------------------------------------------------------------------

struct Peak {
    std::size_t index = 0;
    double x = 0.0;          // refined position (parabolic through 3 samples)
    double y = 0.0;
    double prominence = 0.0;
};

// Local maxima over a +-2 sample window, kept when their prominence exceeds
// prominence_sigmas times the RMS of the trend-subtracted data. Ties inside
// a window resolve toward lower x.
inline std::vector<Peak> detect_peaks(std::span<const double> xs, std::span<const double> ys,
                                      double prominence_sigmas = 3.0) {
    const std::size_t n = xs.size();
    std::vector<Peak> peaks;
    if (n < 5) return peaks;

    // Trend = centered moving average; its residual RMS estimates the noise.
    const std::size_t half = std::max<std::size_t>(2, n / 20);
    double rms = 0.0;
    {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i > half ? i - half : 0;
            const std::size_t hi = std::min(n - 1, i + half);
            double m = 0.0;
            for (std::size_t j = lo; j <= hi; ++j) m += ys[j];
            m /= static_cast<double>(hi - lo + 1);
            const double r = ys[i] - m;
            acc += r * r;
        }
        rms = std::sqrt(acc / static_cast<double>(n));
    }

    std::vector<std::size_t> candidates;
    for (std::size_t i = 2; i + 2 < n; ++i) {
        bool is_max = true;
        for (std::size_t j = i - 2; j <= i + 2; ++j) {
            if (j == i) continue;
            if (ys[j] > ys[i] || (ys[j] == ys[i] && j < i)) {
                is_max = false;
                break;
            }
        }
        if (is_max) candidates.push_back(i);
    }

    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const std::size_t i = candidates[c];
        // Contour prominence: lowest point on each side before reaching
        // higher ground (or the data edge).
        double left_min = ys[i];
        for (std::size_t j = i; j-- > 0;) {
            if (ys[j] > ys[i]) break;
            left_min = std::min(left_min, ys[j]);
        }
        double right_min = ys[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (ys[j] > ys[i]) break;
            right_min = std::min(right_min, ys[j]);
        }
        const double prom = ys[i] - std::max(left_min, right_min);
        if (prom < prominence_sigmas * rms) continue;

        Peak p;
        p.index = i;
        p.y = ys[i];
        p.prominence = prom;
        // Parabolic refinement on a locally uniform grid.
        const double y0 = ys[i - 1], y1 = ys[i], y2 = ys[i + 1];
        const double denom = y0 - 2.0 * y1 + y2;
        double shift = 0.0;
        if (denom < 0.0) shift = 0.5 * (y0 - y2) / denom;
        shift = std::clamp(shift, -0.5, 0.5);
        const double dx = 0.5 * (xs[i + 1] - xs[i - 1]);
        p.x = xs[i] + shift * dx;
        peaks.push_back(p);
    }
    return peaks;
}

// ---------------------------------------------------------------------------
// Exponential decay fit: y = a exp(-t / lifetime)
// ---------------------------------------------------------------------------

inline FitResult fit_exponential(std::span<const double> ts, std::span<const double> ys) {
    FitResult res;
    res.model = "exponential";
    res.n_points = ts.size();
    if (ts.size() != ys.size() || ts.size() < 3) {
        res.detail = "need >= 3 (t, y) points";
        return res;
    }
    for (double y : ys)
        if (!(y > 0.0) || !std::isfinite(y)) {
            res.detail = "non-positive or non-finite data";
            return res;
        }

    // Log-linear regression for the starting point.
    const std::size_t n = ts.size();
    double st = 0, sl = 0, stt = 0, stl = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = std::log(ys[i]);
        st += ts[i];
        sl += l;
        stt += ts[i] * ts[i];
        stl += ts[i] * l;
    }
    const double det = n * stt - st * st;
    if (std::abs(det) < 1e-300) {
        res.detail = "degenerate time axis";
        return res;
    }
    const double slope = (n * stl - st * sl) / det;
    const double intercept = (sl - slope * st) / n;
    if (!(slope < 0.0)) {
        res.detail = "non-decaying data (lifetime -> inf)";
        return res;
    }

    std::vector<double> p = {std::exp(intercept), -1.0 / slope};
    const CurveModel model = [](double t, const std::vector<double>& q, std::span<double> g) {
        const double e = std::exp(-t / q[1]);
        g[0] = e;
        g[1] = q[0] * t / (q[1] * q[1]) * e;
        return q[0] * e;
    };
    const LmOutcome lm = levenberg_marquardt(ts, ys, p, model);
    if (!lm.converged || !(p[1] > 0.0)) {
        res.detail = lm.reason.empty() ? "non-physical lifetime" : lm.reason;
        return res;
    }
    res.converged = true;
    res.residual_rms = std::sqrt(lm.rss / static_cast<double>(n));
    res.params = {{"amplitude", p[0], std::sqrt(std::max(0.0, lm.covariance[0]))},
                  {"lifetime", p[1], std::sqrt(std::max(0.0, lm.covariance[3]))}};
    return res;
}

// ---------------------------------------------------------------------------
// Airy spectrum fit
// ---------------------------------------------------------------------------

// I(f) = background + envelope(f) * i0 / (1 + F sin^2(pi (f - center) / fsr))
// FWHM = (2 fsr / pi) asin(1 / sqrt(F)), valid at any finesse while F >= 1.
struct SpectrumModel {
    double i0 = 1.0;
    double fsr = 1.0;                     // Hz
    double coefficient_of_finesse = 10.0; // F
    double center = 0.0;                  // Hz
    double background = 0.0;
    std::optional<std::pair<double, double>> envelope;  // Gaussian (center, width)

    double operator()(double f) const {
        const double s = std::sin(pi * (f - center) / fsr);
        double v = i0 / (1.0 + coefficient_of_finesse * s * s);
        if (envelope) {
            const double u = (f - envelope->first) / envelope->second;
            v *= std::exp(-0.5 * u * u);
        }
        return background + v;
    }
    double fwhm() const {
        if (coefficient_of_finesse < 1.0) return std::numeric_limits<double>::quiet_NaN();
        return (2.0 * fsr / pi) * std::asin(1.0 / std::sqrt(coefficient_of_finesse));
    }
};

struct AiryOptions {
    bool amplitude_data = false;   // square the ordinates before fitting
    bool envelope = false;         // fit a multiplicative Gaussian envelope
    std::optional<double> fixed_fsr;  // single-peak mode: fsr held at this value
};

inline FitResult fit_airy(std::span<const double> fs, std::span<const double> ys_in,
                          const AiryOptions& opt = {}) {
    if (fs.size() != ys_in.size() || fs.size() < 7)
        throw std::invalid_argument("fit_airy: need >= 7 (f, y) points");

    std::vector<double> ys(ys_in.begin(), ys_in.end());
    if (opt.amplitude_data)
        for (double& y : ys) y = y * y;

    {
        const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
        if (!std::isfinite(*lo) || !std::isfinite(*hi) || !(*hi > *lo)) {
            FitResult res;
            res.model = "airy";
            res.n_points = fs.size();
            res.detail = "flat or non-finite data, nothing to fit";
            return res;
        }
    }

    const auto peaks = detect_peaks(fs, ys);
    if (!opt.fixed_fsr && peaks.size() < 2)
        throw std::invalid_argument(
            "fit_airy: FSR fitting requires >= 2 visible peaks (use single-peak mode)");

    // Initial guesses from the data.
    double background = *std::min_element(ys.begin(), ys.end());
    std::size_t imax = 0;
    for (std::size_t i = 1; i < ys.size(); ++i)
        if (ys[i] > ys[imax]) imax = i;
    double center = fs[imax];
    double i0 = ys[imax] - background;
    double fsr;
    if (opt.fixed_fsr) {
        fsr = *opt.fixed_fsr;
    } else {
        std::vector<double> spacings;
        for (std::size_t i = 1; i < peaks.size(); ++i)
            spacings.push_back(peaks[i].x - peaks[i - 1].x);
        std::nth_element(spacings.begin(), spacings.begin() + spacings.size() / 2,
                         spacings.end());
        fsr = spacings[spacings.size() / 2];
        for (const auto& pk : peaks)
            if (pk.y > ys[imax] - 1e-12) center = pk.x;
    }
    // Width guess from the half-maximum crossing nearest the main peak.
    double hwhm = fsr / 8.0;
    {
        const double half = background + 0.5 * i0;
        for (std::size_t i = imax; i + 1 < ys.size(); ++i) {
            if (ys[i + 1] < half) {
                const double t = (ys[i] - half) / (ys[i] - ys[i + 1]);
                hwhm = (fs[i] + t * (fs[i + 1] - fs[i])) - center;
                break;
            }
            if (fs[i] - center > 0.45 * fsr) break;
        }
    }
    const double s0 = std::sin(std::min(pi * hwhm / fsr, 0.49 * pi));
    double f_init = 1.0 / (s0 * s0);

    std::vector<double> p = {i0, fsr, f_init, center, background};
    std::vector<bool> free_mask = {true, !opt.fixed_fsr.has_value(), true, true, true};
    if (opt.envelope) {
        p.push_back(center);
        p.push_back(std::max(fsr, (fs.back() - fs.front()) / 4.0));
        free_mask.push_back(true);
        free_mask.push_back(true);
    }

    const bool with_env = opt.envelope;
    const CurveModel model = [with_env](double f, const std::vector<double>& q,
                                        std::span<double> g) {
        const double th = pi * (f - q[3]) / q[1];
        const double s = std::sin(th), c = std::cos(th);
        const double d = 1.0 + q[2] * s * s;
        double env = 1.0, denv_dc = 0.0, denv_dw = 0.0;
        if (with_env) {
            const double u = (f - q[5]) / q[6];
            env = std::exp(-0.5 * u * u);
            denv_dc = env * u / q[6];
            denv_dw = env * u * u / q[6];
        }
        const double lor = q[0] / d;
        const double dd_dth = q[2] * 2.0 * s * c;
        g[0] = env / d;
        g[1] = env * lor / d * dd_dth * th / q[1];   // d th/d fsr = -th/fsr
        g[2] = -env * lor / d * s * s;
        g[3] = env * lor / d * dd_dth * pi / q[1];   // d th/d center = -pi/fsr
        g[4] = 1.0;
        if (with_env) {
            g[5] = lor * denv_dc;
            g[6] = lor * denv_dw;
        }
        return q[4] + env * lor;
    };

    FitResult res;
    res.model = "airy";
    res.detail = opt.amplitude_data ? "fitted intensity = amplitude^2" : "fitted intensity";
    res.n_points = fs.size();
    const LmOutcome lm = levenberg_marquardt(fs, ys, p, model, free_mask);
    if (!lm.converged) {
        res.detail = lm.reason;
        return res;
    }

    auto cov = [&](std::size_t a, std::size_t b) -> double {
        // covariance between parameters a, b (0 for fixed parameters)
        std::size_t ia = lm.free_indices.size(), ib = ia;
        for (std::size_t k = 0; k < lm.free_indices.size(); ++k) {
            if (lm.free_indices[k] == a) ia = k;
            if (lm.free_indices[k] == b) ib = k;
        }
        if (ia == lm.free_indices.size() || ib == lm.free_indices.size()) return 0.0;
        return lm.covariance[ia * lm.free_indices.size() + ib];
    };

    res.converged = p[2] >= 0.0 && p[1] > 0.0;
    res.residual_rms = std::sqrt(lm.rss / static_cast<double>(fs.size()));
    res.params = {{"i0", p[0], std::sqrt(std::max(0.0, cov(0, 0)))},
                  {"fsr", p[1], std::sqrt(std::max(0.0, cov(1, 1)))},
                  {"coefficient_of_finesse", p[2], std::sqrt(std::max(0.0, cov(2, 2)))},
                  {"center", p[3], std::sqrt(std::max(0.0, cov(3, 3)))},
                  {"background", p[4], std::sqrt(std::max(0.0, cov(4, 4)))}};
    if (opt.envelope) {
        res.params.push_back({"envelope_center", p[5], std::sqrt(std::max(0.0, cov(5, 5)))});
        res.params.push_back({"envelope_width", p[6], std::sqrt(std::max(0.0, cov(6, 6)))});
    }

    // Derived FWHM linewidth with first-order error propagation over (fsr, F).
    if (p[2] >= 1.0) {
        const double fwhm = (2.0 * p[1] / pi) * std::asin(1.0 / std::sqrt(p[2]));
        const double d_fsr = fwhm / p[1];
        const double d_f = -(p[1] / pi) / (p[2] * std::sqrt(std::max(p[2] - 1.0, 1e-12)));
        const double var = d_fsr * d_fsr * cov(1, 1) + d_f * d_f * cov(2, 2) +
                           2.0 * d_fsr * d_f * cov(1, 2);
        res.params.push_back({"linewidth_fwhm", fwhm, std::sqrt(std::max(0.0, var))});
    } else {
        res.converged = false;
        res.detail += "; contrast too low for a half-maximum linewidth (F < 1)";
    }
    return res;
}

// ---------------------------------------------------------------------------
// FSR from least-squares peak spacing
// ---------------------------------------------------------------------------

inline FitResult peak_spacing_fsr(std::span<const double> fs, std::span<const double> ys) {
    const auto peaks = detect_peaks(fs, ys);
    if (peaks.size() < 3)
        throw std::invalid_argument("peak_spacing_fsr: need >= 3 detected peaks");

    std::vector<double> spacings;
    for (std::size_t i = 1; i < peaks.size(); ++i)
        spacings.push_back(peaks[i].x - peaks[i - 1].x);
    std::nth_element(spacings.begin(), spacings.begin() + spacings.size() / 2, spacings.end());
    const double spacing = spacings[spacings.size() / 2];

    // Integer peak order relative to the first peak; robust to skipped peaks.
    std::vector<double> ks, xs;
    for (const auto& pk : peaks) {
        ks.push_back(std::round((pk.x - peaks.front().x) / spacing));
        xs.push_back(pk.x);
    }
    const std::size_t n = ks.size();
    double sk = 0, sx = 0, skk = 0, skx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sk += ks[i];
        sx += xs[i];
        skk += ks[i] * ks[i];
        skx += ks[i] * xs[i];
    }
    const double det = n * skk - sk * sk;
    FitResult res;
    res.model = "linear_peak_spacing";
    res.n_points = n;
    if (std::abs(det) < 1e-300) {
        res.detail = "degenerate peak ordering";
        return res;
    }
    const double slope = (n * skx - sk * sx) / det;
    const double intercept = (sx - slope * sk) / n;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = xs[i] - (intercept + slope * ks[i]);
        rss += r * r;
    }
    const double s2 = rss / static_cast<double>(n > 2 ? n - 2 : 1);
    const double kbar = sk / n;
    double skk_c = 0.0;
    for (double k : ks) skk_c += (k - kbar) * (k - kbar);
    res.converged = true;
    res.residual_rms = std::sqrt(rss / static_cast<double>(n));
    res.params = {{"fsr", slope, std::sqrt(s2 / std::max(skk_c, 1e-300))},
                  {"intercept", intercept, std::sqrt(s2 * (1.0 / n + kbar * kbar / std::max(skk_c, 1e-300)))}};
    return res;
}

// ---------------------------------------------------------------------------
// Figures of merit with uncertainty propagation
// ---------------------------------------------------------------------------

struct FiguresWithUncertainty {
    CavityFigures value;
    CavityFigures sigma;  // 1-sigma on each figure (quadrature propagation)
};

inline FiguresWithUncertainty q_and_finesse(const FitResult& fit, double carrier) {
    if (!fit.converged)
        throw std::invalid_argument("q_and_finesse: fit did not converge");
    const FitParam* fsr = fit.find("fsr");
    const FitParam* lw = fit.find("linewidth_fwhm");
    if (!fsr || !lw)
        throw std::invalid_argument("q_and_finesse: fit lacks fsr or linewidth_fwhm");

    FiguresWithUncertainty out;
    out.value = figures_of_merit(fsr->value, lw->value, carrier);
    const double rf = fsr->sigma / fsr->value;
    const double rl = lw->sigma / lw->value;
    out.sigma.fsr = fsr->sigma;
    out.sigma.linewidth_fwhm = lw->sigma;
    out.sigma.finesse = out.value.finesse * std::hypot(rf, rl);
    out.sigma.q_factor = out.value.q_factor * rl;
    out.sigma.equivalent_length = out.value.equivalent_length * rf;
    return out;
}

}  // namespace spinwave::fit
