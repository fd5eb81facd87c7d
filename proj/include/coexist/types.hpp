#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace coexist {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;
using rvec = std::vector<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kSpeedOfLight = 299792458.0;

inline double to_db(double linear) { return 10.0 * std::log10(linear); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

inline double energy(const cvec& v) {
    double e = 0.0;
    for (const auto& z : v) e += std::norm(z);
    return e;
}

}  // namespace coexist
