#pragma once

// Correlation and spectral cost functions of the waveform design problem.

#include <optional>
#include <span>

#include "coexist/error.hpp"
#include "coexist/fft.hpp"
#include "coexist/sequence.hpp"
#include "coexist/spectral_mask.hpp"
#include "coexist/types.hpp"

namespace coexist {

/// Aperiodic cross-correlation r(k) = sum_n a[n] conj(b[n+k]) for
/// k = -(N-1)..(N-1); element k+N-1 of the result holds lag k.
inline cvec cross_correlation(std::span<const cplx> a, std::span<const cplx> b) {
    if (a.size() != b.size()) throw LengthMismatchError("cross_correlation: sequences differ in length");
    const auto n = static_cast<std::ptrdiff_t>(a.size());
    if (n == 0) return {};
    cvec r(static_cast<std::size_t>(2 * n - 1));
    for (std::ptrdiff_t k = -(n - 1); k <= n - 1; ++k) {
        cplx acc{};
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -k);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - k);
        for (std::ptrdiff_t i = lo; i < hi; ++i) acc += a[i] * std::conj(b[i + k]);
        r[static_cast<std::size_t>(k + n - 1)] = acc;
    }
    return r;
}

/// Correlation cost: integrated auto-correlation sidelobes of every row plus
/// the full cross-correlation energy of every ordered pair of distinct rows.
/// Evaluated in the frequency domain: sum_k |r_ab(k)|^2 = (1/F) sum_p |A_p|^2 |B_p|^2
/// for any F >= 2N-1.
inline double correlation_cost(const SequenceSet& x) {
    const std::size_t n = x.length();
    const std::size_t f = fft::good_size(2 * n - 1);
    std::vector<rvec> psd(x.rows(), rvec(f));
    for (std::size_t m = 0; m < x.rows(); ++m) {
        const cvec spec = fft::forward(x.row(m), f);
        for (std::size_t p = 0; p < f; ++p) psd[m][p] = std::norm(spec[p]);
    }
    const double inv_f = 1.0 / static_cast<double>(f);
    const double mainlobe = static_cast<double>(n) * static_cast<double>(n);
    double total = 0.0;
    for (std::size_t a = 0; a < x.rows(); ++a) {
        for (std::size_t b = 0; b < x.rows(); ++b) {
            double e = 0.0;
            for (std::size_t p = 0; p < f; ++p) e += psd[a][p] * psd[b][p];
            e *= inv_f;
            if (a == b) e -= mainlobe;
            total += e;
        }
    }
    return std::max(total, 0.0);
}

/// Spectral cost: energy of every row in the mask's stopband bins of an
/// N_f = oversampling * N point DFT.
inline double spectral_cost(const SequenceSet& x, const SpectralMask& mask) {
    const std::size_t nf = mask.transform_length(x.length());
    if (nf < x.length()) throw ConfigurationError("spectral_cost: transform shorter than sequence");
    const auto bins = mask.stopband_bins(nf);
    if (bins.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t m = 0; m < x.rows(); ++m) {
        const cvec spec = fft::forward(x.row(m), nf);
        for (auto p : bins) total += std::norm(spec[p]);
    }
    return total;
}

struct DesignConfig {
    double theta = 0.0;
    PhaseAlphabet alphabet = PhaseAlphabet::continuous();
    std::size_t max_sweeps = 200;
    double tolerance = 1e-4;
    // Normalization of each cost; unset means "use the value at the start point".
    std::optional<double> spectral_scale;
    std::optional<double> correlation_scale;

    void validate() const {
        if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigurationError("theta must lie in [0, 1]");
        if (!(tolerance > 0.0)) throw ConfigurationError("tolerance must be > 0");
        if (spectral_scale && !(*spectral_scale > 0.0)) throw ConfigurationError("spectral scale must be > 0");
        if (correlation_scale && !(*correlation_scale > 0.0))
            throw ConfigurationError("correlation scale must be > 0");
        alphabet.validate();
    }
};

struct ObjectiveReport {
    double spectral = 0.0;     // g_s
    double correlation = 0.0;  // g_c
    double scalarized = 0.0;   // g
    std::size_t sweep = 0;
    // Incremented whenever the mask or theta changes mid-run; descent is only
    // guaranteed between reports of the same epoch.
    std::size_t epoch = 0;
};

/// Normalization pair actually in effect.
struct CostScales {
    double spectral = 1.0;
    double correlation = 1.0;
};

inline CostScales resolve_scales(const SequenceSet& x, const SpectralMask& mask, const DesignConfig& cfg) {
    CostScales s;
    if (cfg.spectral_scale) {
        s.spectral = *cfg.spectral_scale;
    } else {
        const double v = spectral_cost(x, mask);
        s.spectral = v > 0.0 ? v : 1.0;
    }
    if (cfg.correlation_scale) {
        s.correlation = *cfg.correlation_scale;
    } else {
        const double v = correlation_cost(x);
        s.correlation = v > 0.0 ? v : 1.0;
    }
    return s;
}

inline double combine(double theta, double gs, double gc, const CostScales& s) {
    return theta * (gs / s.spectral) + (1.0 - theta) * (gc / s.correlation);
}

/// g = theta * g_s / s_s + (1 - theta) * g_c / s_c with explicit scales.
inline ObjectiveReport scalarized_objective(const SequenceSet& x, const SpectralMask& mask, double theta,
                                            const CostScales& scales, std::size_t sweep = 0) {
    if (!(scales.spectral > 0.0 && scales.correlation > 0.0))
        throw ConfigurationError("normalization scales must be > 0");
    ObjectiveReport r;
    r.spectral = spectral_cost(x, mask);
    r.correlation = correlation_cost(x);
    r.scalarized = combine(theta, r.spectral, r.correlation, scales);
    r.sweep = sweep;
    return r;
}

inline ObjectiveReport scalarized_objective(const SequenceSet& x, const SpectralMask& mask, const DesignConfig& cfg) {
    cfg.validate();
    return scalarized_objective(x, mask, cfg.theta, resolve_scales(x, mask, cfg));
}

}  // namespace coexist
