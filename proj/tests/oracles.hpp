#pragma once

// Slow, direct reference computations. Test-only; deliberately share no code
// with the library's fast paths.

#include <complex>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

inline constexpr double kPi = 3.14159265358979323846;

/// r(k) = sum_n a[n] conj(b[n+k]) by the defining double loop, lags -(N-1)..N-1.
inline cplx correlation_at(const cvec& a, const cvec& b, long k) {
    cplx acc{};
    const long n = static_cast<long>(a.size());
    for (long i = 0; i < n; ++i) {
        const long j = i + k;
        if (j < 0 || j >= n) continue;
        acc += a[i] * std::conj(b[j]);
    }
    return acc;
}

/// Brute-force ISL + cross-correlation energy.
inline double correlation_cost(const std::vector<cvec>& rows) {
    double total = 0.0;
    const long n = static_cast<long>(rows.front().size());
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < rows.size(); ++b)
            for (long k = -(n - 1); k <= n - 1; ++k) {
                if (a == b && k == 0) continue;
                total += std::norm(correlation_at(rows[a], rows[b], k));
            }
    return total;
}

/// Direct DFT bin p of an nf-point transform of x (zero-padded).
inline cplx dft_bin(const cvec& x, std::size_t p, std::size_t nf) {
    cplx acc{};
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double ph = -2.0 * kPi * static_cast<double>((p * n) % nf) / static_cast<double>(nf);
        acc += x[n] * cplx(std::cos(ph), std::sin(ph));
    }
    return acc;
}

inline double band_energy(const std::vector<cvec>& rows, const std::vector<std::size_t>& bins, std::size_t nf) {
    double total = 0.0;
    for (const auto& r : rows)
        for (auto p : bins) total += std::norm(dft_bin(r, p, nf));
    return total;
}

inline cvec random_polyphase(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
    cvec x(n);
    for (auto& z : x) z = std::polar(1.0, u(rng));
    return x;
}

/// Linear correlation of a record against a code, lags 0..len-1.
inline cvec matched_filter(const cvec& record, const cvec& code) {
    cvec out(record.size());
    for (std::size_t k = 0; k < record.size(); ++k) {
        cplx acc{};
        for (std::size_t n = 0; n < code.size() && k + n < record.size(); ++n)
            acc += record[k + n] * std::conj(code[n]);
        out[k] = acc;
    }
    return out;
}

inline double max_abs(const cvec& v) {
    double m = 0.0;
    for (const auto& z : v) m = std::max(m, std::abs(z));
    return m;
}

}  // namespace oracle
