#pragma once

// Cyclic coordinate descent for the scalarized constant-modulus design problem.
//
// With every chip except x[m][n] = z held fixed, each correlation lag and each
// stopband DFT bin is affine in z and conj(z), so the objective restricted to
// one chip is K + 2 Re(T1 z) + 2 Re(T2 z^2). T1 and T2 are assembled from the
// incrementally maintained correlations and stopband spectra in O(M N + |S|),
// and the minimizing phase is found exactly over a discrete alphabet or on a
// fine grid (plus bisection on the derivative) for the continuous one.

#include <atomic>
#include <mutex>
#include <optional>
#include <vector>

#include "coexist/costs.hpp"
#include "coexist/fft.hpp"
#include "coexist/sequence.hpp"
#include "coexist/spectral_mask.hpp"

namespace coexist {

/// Cross-thread control of a running design: mask/theta updates are applied
/// between sweeps, a stop request ends the run after the current sweep.
class DesignControl {
public:
    void update_mask(SpectralMask mask) {
        std::lock_guard lock(mutex_);
        mask_ = std::move(mask);
    }
    void update_theta(double theta) {
        std::lock_guard lock(mutex_);
        theta_ = theta;
    }
    void request_stop() { stop_.store(true); }
    bool stop_requested() const { return stop_.load(); }

    struct Pending {
        std::optional<SpectralMask> mask;
        std::optional<double> theta;
    };

    Pending take() {
        std::lock_guard lock(mutex_);
        Pending p{std::move(mask_), theta_};
        mask_.reset();
        theta_.reset();
        return p;
    }

private:
    std::mutex mutex_;
    std::optional<SpectralMask> mask_;
    std::optional<double> theta_;
    std::atomic<bool> stop_{false};
};

class CoordinateDescent {
public:
    static constexpr std::size_t kPhaseGrid = 1024;

    CoordinateDescent(SequenceSet x0, SpectralMask mask, DesignConfig cfg)
        : x_(std::move(x0)), mask_(std::move(mask)), cfg_(std::move(cfg)) {
        cfg_.validate();
        if (!x_.satisfies(cfg_.alphabet))
            throw ConfigurationError("start point is not on the phase alphabet " + cfg_.alphabet.describe());
        scales_ = resolve_scales(x_, mask_, cfg_);
        rebuild_tables();
        trace_.push_back(evaluate());
    }

    const SequenceSet& current() const { return x_; }
    const SpectralMask& mask() const { return mask_; }
    double theta() const { return cfg_.theta; }
    const CostScales& scales() const { return scales_; }
    const std::vector<ObjectiveReport>& trace() const { return trace_; }
    const ObjectiveReport& last() const { return trace_.back(); }
    bool converged() const { return converged_; }
    std::size_t sweeps() const { return sweeps_; }

    /// New stopband; re-normalizes the spectral cost and starts a new epoch.
    void set_mask(SpectralMask mask) {
        mask_ = std::move(mask);
        if (!cfg_.spectral_scale) {
            // White-spectrum reference: a unit-modulus row puts on average N
            // into every bin of the oversampled grid.
            const std::size_t nf = mask_.transform_length(x_.length());
            const double ref = static_cast<double>(x_.rows() * x_.length() * mask_.stopband_bins(nf).size());
            scales_.spectral = ref > 0.0 ? ref : 1.0;
        }
        rebuild_tables();
        restart();
    }

    void set_theta(double theta) {
        if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigurationError("theta must lie in [0, 1]");
        cfg_.theta = theta;
        restart();
    }

    void apply(DesignControl::Pending pending) {
        if (pending.mask) set_mask(std::move(*pending.mask));
        if (pending.theta) set_theta(*pending.theta);
    }

    /// One full cyclic pass over every (m, n). Returns the recomputed report.
    const ObjectiveReport& sweep() {
        build_state();
        const double g_start = trace_.back().scalarized;
        const double threshold = 1e-12 * g_start;
        const double wc = (1.0 - cfg_.theta) / scales_.correlation;
        const double ws = cfg_.theta / scales_.spectral;
        if (g_start > 0.0) {
            for (std::size_t m = 0; m < x_.rows(); ++m)
                for (std::size_t n = 0; n < x_.length(); ++n) update_chip(m, n, wc, ws, threshold);
        }
        ++sweeps_;
        auto report = evaluate();
        const double prev = trace_.back().scalarized;
        converged_ = prev <= 0.0 || (prev - report.scalarized) / prev < cfg_.tolerance;
        trace_.push_back(report);
        return trace_.back();
    }

private:
    void restart() {
        ++epoch_;
        converged_ = false;
        trace_.push_back(evaluate());
    }

    ObjectiveReport evaluate() const {
        auto r = scalarized_objective(x_, mask_, cfg_.theta, scales_, sweeps_);
        r.epoch = epoch_;
        return r;
    }

    void rebuild_tables() {
        nf_ = mask_.transform_length(x_.length());
        stop_bins_ = mask_.stopband_bins(nf_);
        twiddle_.resize(nf_);
        for (std::size_t q = 0; q < nf_; ++q)
            twiddle_[q] = std::polar(1.0, -kTwoPi * static_cast<double>(q) / static_cast<double>(nf_));
        if (!cfg_.alphabet.is_discrete()) {
            grid1_.resize(kPhaseGrid);
            grid2_.resize(kPhaseGrid);
            for (std::size_t i = 0; i < kPhaseGrid; ++i) {
                const double ph = kTwoPi * static_cast<double>(i) / kPhaseGrid;
                grid1_[i] = std::polar(1.0, ph);
                grid2_[i] = std::polar(1.0, 2.0 * ph);
            }
        } else {
            grid1_.resize(cfg_.alphabet.levels);
            grid2_.resize(cfg_.alphabet.levels);
            for (std::uint32_t l = 0; l < cfg_.alphabet.levels; ++l) {
                grid1_[l] = cfg_.alphabet.level_value(l);
                grid2_[l] = grid1_[l] * grid1_[l];
            }
        }
    }

    std::size_t lag_index(std::ptrdiff_t k) const {
        return static_cast<std::size_t>(k + static_cast<std::ptrdiff_t>(x_.length()) - 1);
    }
    cvec& corr(std::size_t a, std::size_t b) { return corr_[a * x_.rows() + b]; }

    /// Correlations of every ordered row pair and stopband spectra of every row.
    void build_state() {
        const std::size_t m_count = x_.rows();
        const std::size_t n = x_.length();
        const std::size_t f = fft::good_size(2 * n - 1);
        std::vector<cvec> spec(m_count);
        for (std::size_t m = 0; m < m_count; ++m) spec[m] = fft::forward(x_.row(m), f);
        corr_.assign(m_count * m_count, cvec(2 * n - 1));
        cvec prod(f);
        for (std::size_t a = 0; a < m_count; ++a) {
            for (std::size_t b = 0; b < m_count; ++b) {
                // sum_i a_i conj(b_{i+k}) = conj(IDFT(conj(A) B)[k])
                for (std::size_t p = 0; p < f; ++p) prod[p] = std::conj(spec[a][p]) * spec[b][p];
                const cvec c = fft::inverse(prod);
                auto& r = corr(a, b);
                for (std::ptrdiff_t k = -static_cast<std::ptrdiff_t>(n - 1); k <= static_cast<std::ptrdiff_t>(n - 1); ++k) {
                    const std::size_t idx = k >= 0 ? static_cast<std::size_t>(k) : f - static_cast<std::size_t>(-k);
                    r[lag_index(k)] = std::conj(c[idx]);
                }
            }
        }
        stop_spec_.assign(m_count, cvec(stop_bins_.size()));
        for (std::size_t m = 0; m < m_count; ++m) {
            if (stop_bins_.empty()) break;
            const cvec s = fft::forward(x_.row(m), nf_);
            for (std::size_t i = 0; i < stop_bins_.size(); ++i) stop_spec_[m][i] = s[stop_bins_[i]];
        }
    }

    cplx chip(std::size_t m, std::ptrdiff_t n) const {
        if (n < 0 || n >= static_cast<std::ptrdiff_t>(x_.length())) return {};
        return x_(m, static_cast<std::size_t>(n));
    }

    void update_chip(std::size_t m, std::size_t n_u, double wc, double ws, double threshold) {
        const auto n = static_cast<std::ptrdiff_t>(n_u);
        const auto len = static_cast<std::ptrdiff_t>(x_.length());
        const cplx z0 = x_(m, n_u);

        cplx c1{}, c2{}, s1{};
        if (wc > 0.0) {
            // Auto-correlation sidelobes; lags k and -k contribute equally.
            const auto& r = corr(m, m);
            for (std::ptrdiff_t k = 1; k < len; ++k) {
                const cplx alpha = std::conj(chip(m, n + k));
                const cplx beta = chip(m, n - k);
                const cplx c = r[lag_index(k)] - alpha * z0 - beta * std::conj(z0);
                c1 += std::conj(c) * alpha + c * std::conj(beta);
                c2 += alpha * std::conj(beta);
            }
            // Cross-correlations with every other row; r_bm mirrors r_mb.
            for (std::size_t b = 0; b < x_.rows(); ++b) {
                if (b == m) continue;
                const auto& rmb = corr(m, b);
                for (std::ptrdiff_t k = -n; k < len - n; ++k) {
                    const cplx alpha = std::conj(x_(b, static_cast<std::size_t>(n + k)));
                    const cplx c = rmb[lag_index(k)] - alpha * z0;
                    c1 += std::conj(c) * alpha;
                }
            }
            c1 *= 2.0 * wc;
            c2 *= 2.0 * wc;
        }
        if (ws > 0.0 && !stop_bins_.empty()) {
            const auto& fs = stop_spec_[m];
            for (std::size_t i = 0; i < stop_bins_.size(); ++i) {
                const cplx w = twiddle_[(stop_bins_[i] * n_u) % nf_];
                const cplx c = fs[i] - w * z0;
                s1 += std::conj(c) * w;
            }
            s1 *= ws;
        }
        const cplx t1 = c1 + s1;
        const cplx t2 = c2;
        if (t1 == cplx{} && t2 == cplx{}) return;

        auto h = [&](cplx z, cplx z2) { return 2.0 * (t1 * z).real() + 2.0 * (t2 * z2).real(); };
        const double h0 = h(z0, z0 * z0);
        std::size_t best = 0;
        double h_best = h(grid1_[0], grid2_[0]);
        for (std::size_t i = 1; i < grid1_.size(); ++i) {
            const double v = h(grid1_[i], grid2_[i]);
            if (v < h_best) {
                h_best = v;
                best = i;
            }
        }
        cplx z_best = grid1_[best];
        if (!cfg_.alphabet.is_discrete()) {
            // Bisection on dh/dphi inside the neighbouring grid cells.
            auto dh = [&](double ph) {
                return -2.0 * (t1 * std::polar(1.0, ph)).imag() - 4.0 * (t2 * std::polar(1.0, 2.0 * ph)).imag();
            };
            const double step = kTwoPi / kPhaseGrid;
            const double centre = step * static_cast<double>(best);
            double lo = centre - step, hi = centre + step;
            if (dh(lo) < 0.0 && dh(hi) > 0.0) {
                for (int it = 0; it < 48; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (dh(mid) < 0.0 ? lo : hi) = mid;
                }
                const cplx zr = std::polar(1.0, 0.5 * (lo + hi));
                const double vr = h(zr, zr * zr);
                if (vr < h_best) {
                    h_best = vr;
                    z_best = zr;
                }
            }
        }
        // Ties and sub-rounding gains keep the current chip.
        if (!(h_best < h0 - threshold)) return;

        const cplx d = z_best - z0;
        const cplx dc = std::conj(d);
        auto& r = corr(m, m);
        for (std::ptrdiff_t k = -(len - 1); k < len; ++k) {
            if (k == 0) continue;
            r[lag_index(k)] += d * std::conj(chip(m, n + k)) + chip(m, n - k) * dc;
        }
        for (std::size_t b = 0; b < x_.rows(); ++b) {
            if (b == m) continue;
            auto& rmb = corr(m, b);
            auto& rbm = corr(b, m);
            for (std::ptrdiff_t k = -(len - 1); k < len; ++k) {
                rmb[lag_index(k)] += d * std::conj(chip(b, n + k));
                rbm[lag_index(k)] += chip(b, n - k) * dc;
            }
        }
        for (std::size_t i = 0; i < stop_bins_.size(); ++i)
            stop_spec_[m][i] += twiddle_[(stop_bins_[i] * n_u) % nf_] * d;
        x_.set(m, n_u, z_best);
    }

    SequenceSet x_;
    SpectralMask mask_;
    DesignConfig cfg_;
    CostScales scales_;
    std::vector<ObjectiveReport> trace_;
    std::size_t sweeps_ = 0;
    std::size_t epoch_ = 0;
    bool converged_ = false;

    std::size_t nf_ = 0;
    std::vector<std::size_t> stop_bins_;
    cvec twiddle_;
    cvec grid1_, grid2_;
    std::vector<cvec> corr_;
    std::vector<cvec> stop_spec_;
};

struct DesignResult {
    SequenceSet sequences;
    std::vector<ObjectiveReport> trace;
    bool interrupted = false;
};

/// Runs sweeps until the relative decrease drops below the tolerance, the
/// sweep budget is spent, or a stop is requested. Pending control updates are
/// consumed before every sweep.
inline DesignResult optimize(const SequenceSet& x0, const SpectralMask& mask, const DesignConfig& cfg,
                             DesignControl* control = nullptr) {
    CoordinateDescent cd(x0, mask, cfg);
    bool interrupted = false;
    while (cd.sweeps() < cfg.max_sweeps) {
        if (control) {
            if (control->stop_requested()) {
                interrupted = true;
                break;
            }
            cd.apply(control->take());
        }
        cd.sweep();
        if (cd.converged()) break;
    }
    return {cd.current(), cd.trace(), interrupted};
}

}  // namespace coexist
