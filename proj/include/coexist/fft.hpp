#pragma once

// Thin FFTW wrapper. Plans are created once per (size, direction) with
// FFTW_ESTIMATE | FFTW_UNALIGNED and shared; planning is serialized behind a
// mutex, execution uses the thread-safe new-array interface.

#include <fftw3.h>

#include <map>
#include <mutex>
#include <span>
#include <tuple>

#include "coexist/error.hpp"
#include "coexist/types.hpp"

namespace coexist::fft {

enum class Direction { Forward, Inverse };

namespace detail {

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(std::size_t n, Direction dir, bool in_place) {
        std::lock_guard lock(mutex_);
        auto key = std::make_tuple(n, dir == Direction::Forward, in_place);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        auto* in = fftw_alloc_complex(n);
        auto* out = in_place ? in : fftw_alloc_complex(n);
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), in, out,
                                       dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        if (!in_place) fftw_free(out);
        if (p == nullptr) throw Error("fftw planning failed");
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [_, p] : plans_) fftw_destroy_plan(p);
    }

    std::mutex mutex_;
    std::map<std::tuple<std::size_t, bool, bool>, fftw_plan> plans_;
};

}  // namespace detail

/// Unnormalized transform of `in` into `out` (may alias). Sizes must match.
inline void transform(std::span<const cplx> in, std::span<cplx> out, Direction dir) {
    if (in.size() != out.size()) throw LengthMismatchError("fft: input/output size mismatch");
    if (in.empty()) return;
    fftw_plan p = detail::PlanCache::instance().get(in.size(), dir, in.data() == out.data());
    // fftw_complex is layout-compatible with std::complex<double>.
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                     reinterpret_cast<fftw_complex*>(out.data()));
}

inline cvec forward(std::span<const cplx> in) {
    cvec out(in.size());
    transform(in, out, Direction::Forward);
    return out;
}

/// Forward transform of `in` zero-padded (or truncated) to `n` points.
inline cvec forward(std::span<const cplx> in, std::size_t n) {
    cvec buf(n, cplx{});
    for (std::size_t i = 0; i < std::min(n, in.size()); ++i) buf[i] = in[i];
    transform(buf, buf, Direction::Forward);
    return buf;
}

/// Inverse transform scaled by 1/n.
inline cvec inverse(std::span<const cplx> in) {
    cvec out(in.size());
    transform(in, out, Direction::Inverse);
    const double s = 1.0 / static_cast<double>(in.size());
    for (auto& z : out) z *= s;
    return out;
}

/// Smallest 2^a 3^b 5^c that is >= n.
inline std::size_t good_size(std::size_t n) {
    if (n <= 1) return 1;
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t f : {2u, 3u, 5u})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

/// Band-limited resampling of a block by spectral zero-padding/truncation.
/// The block is treated as one period; `out_len` sets the new length.
inline cvec resample(std::span<const cplx> in, std::size_t out_len) {
    const std::size_t n = in.size();
    if (n == 0 || out_len == 0) return cvec(out_len);
    cvec spec = forward(in);
    cvec dst(out_len, cplx{});
    const std::size_t keep = std::min(n, out_len);
    // Positive frequencies [0, keep/2), negative [-(keep - keep/2), 0).
    const std::size_t pos = (keep + 1) / 2;
    const std::size_t neg = keep - pos;
    for (std::size_t k = 0; k < pos; ++k) dst[k] = spec[k];
    for (std::size_t k = 1; k <= neg; ++k) dst[out_len - k] = spec[n - k];
    transform(dst, dst, Direction::Inverse);
    const double s = 1.0 / static_cast<double>(n);
    for (auto& z : dst) z *= s;
    return dst;
}

}  // namespace coexist::fft
