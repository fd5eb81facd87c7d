#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "coexist/error.hpp"

namespace coexist {

/// Normalized-frequency band [lo, hi) with a stopband flag (weight 1 =
/// occupied, to be notched).
struct MaskBand {
    double lo = 0.0;
    double hi = 0.0;
    int weight = 1;

    bool operator==(const MaskBand&) const = default;
};

/// Stopband description consumed by the spectral cost. Frequencies are
/// normalized to the radar sample rate and live in [0, 1).
class SpectralMask {
public:
    SpectralMask() = default;

    explicit SpectralMask(std::vector<MaskBand> bands, unsigned oversampling = 2)
        : bands_(std::move(bands)), oversampling_(oversampling) {
        validate();
    }

    const std::vector<MaskBand>& bands() const { return bands_; }
    unsigned oversampling() const { return oversampling_; }
    bool empty() const {
        return std::none_of(bands_.begin(), bands_.end(), [](const MaskBand& b) { return b.weight != 0; });
    }

    std::size_t transform_length(std::size_t n) const { return oversampling_ * n; }

    /// Occupied DFT bins for an nf-point grid. Band edges round to the nearest
    /// bin boundary; a band that rounds to zero width contributes nothing.
    std::vector<std::size_t> stopband_bins(std::size_t nf) const {
        std::vector<std::size_t> bins;
        for (const auto& b : bands_) {
            if (b.weight == 0) continue;
            const auto lo = static_cast<std::size_t>(std::llround(b.lo * static_cast<double>(nf)));
            const auto hi = static_cast<std::size_t>(std::llround(b.hi * static_cast<double>(nf)));
            for (std::size_t p = lo; p < std::min(hi, nf); ++p) bins.push_back(p);
        }
        std::sort(bins.begin(), bins.end());
        bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
        return bins;
    }

    /// Complement of stopband_bins on the same grid.
    std::vector<std::size_t> passband_bins(std::size_t nf) const {
        auto stop = stopband_bins(nf);
        std::vector<std::size_t> pass;
        std::size_t j = 0;
        for (std::size_t p = 0; p < nf; ++p) {
            if (j < stop.size() && stop[j] == p) {
                ++j;
                continue;
            }
            pass.push_back(p);
        }
        return pass;
    }

    bool operator==(const SpectralMask&) const = default;

private:
    void validate() const {
        if (oversampling_ < 1) throw ConfigurationError("mask oversampling must be >= 1");
        for (std::size_t i = 0; i < bands_.size(); ++i) {
            const auto& b = bands_[i];
            if (!(b.lo >= 0.0 && b.hi <= 1.0 && b.lo <= b.hi))
                throw ConfigurationError("mask band outside [0, 1) or inverted");
            if (b.weight != 0 && b.weight != 1) throw ConfigurationError("mask weight must be 0 or 1");
            if (i > 0 && bands_[i - 1].hi > b.lo)
                throw ConfigurationError("mask bands must be sorted and disjoint");
        }
    }

    std::vector<MaskBand> bands_;
    unsigned oversampling_ = 2;
};

}  // namespace coexist
