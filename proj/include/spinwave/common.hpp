#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string_view>

namespace spinwave {

inline constexpr std::string_view version = "0.1.0";

inline constexpr double speed_of_light = 299'792'458.0;  // m/s
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

using complexd = std::complex<double>;

// Canonical phase representative in (-pi, pi].
inline double reduce_phase(double phi) {
    double x = std::fmod(phi, two_pi);
    if (x > pi) x -= two_pi;
    if (x <= -pi) x += two_pi;
    return x;
}

}  // namespace spinwave
