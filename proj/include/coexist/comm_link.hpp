#pragma once

// Link-level OFDM downlink: PRB-bitmap allocation, three MCS presets,
// zero-forcing equalization and effective-SINR ACK/NACK decisions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coexist/error.hpp"
#include "coexist/fft.hpp"
#include "coexist/types.hpp"

namespace coexist {

namespace lte {
inline constexpr std::size_t kFftSize = 2048;
inline constexpr double kSampleRate = 30.72e6;
inline constexpr double kSubcarrierSpacing = 15e3;
inline constexpr std::size_t kPrbs = 100;
inline constexpr std::size_t kSubcarriersPerPrb = 12;
inline constexpr std::size_t kSubcarriers = kPrbs * kSubcarriersPerPrb;
inline constexpr std::size_t kSymbolsPerSubframe = 14;
inline constexpr std::size_t kSubframeSamples = 30720;
inline constexpr double kSubframeSeconds = 1e-3;
inline constexpr std::size_t kPrbsPerBit = 4;
inline constexpr std::size_t kBitmapLength = kPrbs / kPrbsPerBit;

/// Normal cyclic prefix: 160 samples on the first symbol of each slot, 144 otherwise.
inline constexpr std::size_t cp_length(std::size_t symbol) { return symbol % 7 == 0 ? 160 : 144; }

/// FFT bin of logical subcarrier i in [0, 1200): lower half maps to -600..-1,
/// upper half to +1..+600; DC stays empty.
inline constexpr std::size_t subcarrier_bin(std::size_t i) {
    return i < kSubcarriers / 2 ? kFftSize - kSubcarriers / 2 + i : i - kSubcarriers / 2 + 1;
}

/// Baseband frequency of logical subcarrier i.
inline constexpr double subcarrier_frequency(std::size_t i) {
    const long k = i < kSubcarriers / 2 ? static_cast<long>(i) - static_cast<long>(kSubcarriers / 2)
                                        : static_cast<long>(i - kSubcarriers / 2 + 1);
    return static_cast<double>(k) * kSubcarrierSpacing;
}
}  // namespace lte

/// 25-bit PRB allocation, 4 PRBs per bit, bit 0 covers the lowest PRBs.
class AllocationBitmap {
public:
    AllocationBitmap() : bits_(lte::kBitmapLength, '1') {}
    explicit AllocationBitmap(std::string bits) : bits_(std::move(bits)) {
        if (bits_.size() != lte::kBitmapLength)
            throw ConfigurationError("allocation bitmap must have " + std::to_string(lte::kBitmapLength) + " bits");
        for (char c : bits_)
            if (c != '0' && c != '1') throw ConfigurationError("allocation bitmap may only contain 0 and 1");
    }
    static AllocationBitmap full() { return AllocationBitmap(std::string(lte::kBitmapLength, '1')); }
    static AllocationBitmap empty() { return AllocationBitmap(std::string(lte::kBitmapLength, '0')); }

    const std::string& str() const { return bits_; }
    bool prb(std::size_t r) const { return bits_[r / lte::kPrbsPerBit] == '1'; }
    std::size_t allocated_prbs() const {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), '1')) * lte::kPrbsPerBit;
    }
    double fraction() const { return static_cast<double>(allocated_prbs()) / static_cast<double>(lte::kPrbs); }
    bool subcarrier(std::size_t i) const { return prb(i / lte::kSubcarriersPerPrb); }
    bool operator==(const AllocationBitmap&) const = default;

private:
    std::string bits_;
};

enum class Modulation { QPSK = 2, QAM16 = 4, QAM64 = 6 };

/// Guarded Shannon-gap threshold: 10 log10(2^eta - 1) + 3 dB, floored at -30 dB.
inline double decode_threshold_db(double eta) {
    if (eta <= 0.0) return -30.0;
    return std::max(-30.0, to_db(std::exp2(eta) - 1.0) + 3.0);
}

struct McsPreset {
    int index = 0;
    Modulation modulation = Modulation::QPSK;
    double code_rate = 0.12;

    int bits_per_symbol() const { return static_cast<int>(modulation); }
    double efficiency() const { return bits_per_symbol() * code_rate; }
    double threshold_db() const { return decode_threshold_db(efficiency()); }
};

inline constexpr std::array<int, 3> kMcsIndices = {0, 10, 17};

inline McsPreset mcs_preset(int index) {
    switch (index) {
        case 0: return {0, Modulation::QPSK, 0.12};
        case 10: return {10, Modulation::QAM16, 0.33};
        case 17: return {17, Modulation::QAM64, 0.43};
        default: throw UnsupportedParameterError("MCS " + std::to_string(index) + " is not a preset (0, 10, 17)");
    }
}

inline std::vector<std::pair<int, double>> decode_thresholds() {
    std::vector<std::pair<int, double>> t;
    for (int i : kMcsIndices) t.emplace_back(i, mcs_preset(i).threshold_db());
    return t;
}

/// Square QAM/QPSK points scaled to unit mean power.
inline cvec constellation(Modulation m) {
    const int side = 1 << (static_cast<int>(m) / 2);
    double e = 0.0;
    cvec pts;
    for (int i = 0; i < side; ++i)
        for (int q = 0; q < side; ++q) {
            const cplx p(2.0 * i - (side - 1), 2.0 * q - (side - 1));
            pts.push_back(p);
            e += std::norm(p);
        }
    const double s = 1.0 / std::sqrt(e / static_cast<double>(pts.size()));
    for (auto& p : pts) p *= s;
    return pts;
}

struct DownlinkGrid {
    AllocationBitmap bitmap;
    McsPreset mcs;
    double power_dbm = 20.0;
    double full_scale_dbm = 20.0;
    std::size_t subframes = 0;
    double re_amplitude = 0.0;
    /// Transmitted unit-power constellation points per subframe, in
    /// (symbol, allocated subcarrier) order.
    std::vector<cvec> symbols;

    std::size_t res_per_subframe() const {
        return bitmap.allocated_prbs() * lte::kSubcarriersPerPrb * lte::kSymbolsPerSubframe;
    }
    std::size_t samples() const { return subframes * lte::kSubframeSamples; }
};

struct Downlink {
    DownlinkGrid grid;
    cvec signal;  // 30.72 MS/s
};

/// Per-RE amplitude such that a full allocation has mean sample power
/// 10^((power - full_scale)/10) after the 1/N inverse transform.
inline double re_amplitude(double power_dbm, double full_scale_dbm) {
    return static_cast<double>(lte::kFftSize) *
           std::sqrt(from_db(power_dbm - full_scale_dbm) / static_cast<double>(lte::kSubcarriers));
}

inline Downlink build_downlink(const AllocationBitmap& alloc, const McsPreset& mcs, double power_dbm,
                               std::size_t subframes, std::uint64_t seed, double full_scale_dbm = 20.0) {
    Downlink dl;
    auto& g = dl.grid;
    g.bitmap = alloc;
    g.mcs = mcs;
    g.power_dbm = power_dbm;
    g.full_scale_dbm = full_scale_dbm;
    g.subframes = subframes;
    g.re_amplitude = re_amplitude(power_dbm, full_scale_dbm);
    dl.signal.assign(g.samples(), cplx{});

    const cvec points = constellation(mcs.modulation);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    const double inv_n = 1.0 / static_cast<double>(lte::kFftSize);
    cvec freq(lte::kFftSize);
    std::size_t pos = 0;
    for (std::size_t sf = 0; sf < subframes; ++sf) {
        cvec data;
        data.reserve(g.res_per_subframe());
        for (std::size_t l = 0; l < lte::kSymbolsPerSubframe; ++l) {
            std::fill(freq.begin(), freq.end(), cplx{});
            for (std::size_t i = 0; i < lte::kSubcarriers; ++i) {
                if (!alloc.subcarrier(i)) continue;
                const cplx s = points[pick(rng)];
                data.push_back(s);
                freq[lte::subcarrier_bin(i)] = g.re_amplitude * s;
            }
            fft::transform(freq, freq, fft::Direction::Inverse);
            const std::size_t cp = lte::cp_length(l);
            for (std::size_t n = 0; n < cp; ++n) dl.signal[pos + n] = freq[lte::kFftSize - cp + n] * inv_n;
            for (std::size_t n = 0; n < lte::kFftSize; ++n) dl.signal[pos + cp + n] = freq[n] * inv_n;
            pos += cp + lte::kFftSize;
        }
        g.symbols.push_back(std::move(data));
    }
    return dl;
}

/// Strips cyclic prefixes, transforms, and zero-forcing equalizes with the
/// known flat channel. Returns equalized allocated REs per subframe, scaled
/// back to unit-power constellation units.
inline std::vector<cvec> demodulate(const DownlinkGrid& grid, std::span<const cplx> rx, cplx channel = 1.0) {
    if (rx.size() != grid.samples())
        throw SynchronizationError("received " + std::to_string(rx.size()) + " samples, framing expects " +
                                   std::to_string(grid.samples()));
    std::vector<cvec> out;
    cvec buf(lte::kFftSize);
    std::size_t pos = 0;
    const cplx zf = grid.re_amplitude > 0.0 ? 1.0 / (channel * grid.re_amplitude) : cplx{};
    for (std::size_t sf = 0; sf < grid.subframes; ++sf) {
        cvec res;
        res.reserve(grid.res_per_subframe());
        for (std::size_t l = 0; l < lte::kSymbolsPerSubframe; ++l) {
            pos += lte::cp_length(l);
            std::copy_n(rx.begin() + static_cast<std::ptrdiff_t>(pos), lte::kFftSize, buf.begin());
            fft::transform(buf, buf, fft::Direction::Forward);
            for (std::size_t i = 0; i < lte::kSubcarriers; ++i)
                if (grid.bitmap.subcarrier(i)) res.push_back(buf[lte::subcarrier_bin(i)] * zf);
            pos += lte::kFftSize;
        }
        out.push_back(std::move(res));
    }
    return out;
}

inline constexpr double kLinkSinrCapDb = 60.0;

struct LinkReport {
    int mcs = 0;
    double power_dbm = 0.0;
    std::vector<double> sinr_db;
    std::vector<bool> ack;
    std::uint64_t delivered_bits = 0;

    std::size_t subframes() const { return sinr_db.size(); }
    double elapsed_seconds() const { return static_cast<double>(subframes()) * lte::kSubframeSeconds; }
    double ack_rate() const {
        if (ack.empty()) return 0.0;
        return static_cast<double>(std::count(ack.begin(), ack.end(), true)) / static_cast<double>(ack.size());
    }
    double throughput_mbps() const {
        return subframes() ? static_cast<double>(delivered_bits) / elapsed_seconds() / 1e6 : 0.0;
    }
};

/// Bits carried by one ACKed subframe.
inline std::uint64_t subframe_bits(const DownlinkGrid& grid) {
    return static_cast<std::uint64_t>(std::floor(static_cast<double>(grid.res_per_subframe()) * grid.mcs.efficiency()));
}

inline LinkReport receive_link(const DownlinkGrid& grid, std::span<const cplx> rx, cplx channel = 1.0) {
    const auto eq = demodulate(grid, rx, channel);
    LinkReport rep;
    rep.mcs = grid.mcs.index;
    rep.power_dbm = grid.power_dbm;
    const double thr = grid.mcs.threshold_db();
    const std::uint64_t bits = subframe_bits(grid);
    for (std::size_t sf = 0; sf < grid.subframes; ++sf) {
        const auto& tx = grid.symbols[sf];
        if (tx.empty()) {
            rep.sinr_db.push_back(0.0);
            rep.ack.push_back(false);
            continue;
        }
        double sig = 0.0, err = 0.0;
        for (std::size_t i = 0; i < tx.size(); ++i) {
            sig += std::norm(tx[i]);
            err += std::norm(eq[sf][i] - tx[i]);
        }
        const double sinr = err > 0.0 ? std::min(kLinkSinrCapDb, to_db(sig / err)) : kLinkSinrCapDb;
        const bool ok = sinr >= thr;
        rep.sinr_db.push_back(sinr);
        rep.ack.push_back(ok);
        if (ok) rep.delivered_bits += bits;
    }
    return rep;
}

/// Band-limited rate change applied per 1 ms subframe block, e.g. the
/// 30.72 MS/s downlink onto a 40 MS/s radar or sensing grid.
inline cvec resample_subframes(std::span<const cplx> x, double fs_in, double fs_out) {
    const auto in_block = static_cast<std::size_t>(std::llround(fs_in * lte::kSubframeSeconds));
    const auto out_block = static_cast<std::size_t>(std::llround(fs_out * lte::kSubframeSeconds));
    if (in_block == 0 || x.size() % in_block != 0)
        throw SynchronizationError("signal is not a whole number of subframes");
    cvec out;
    out.reserve(x.size() / in_block * out_block);
    for (std::size_t b = 0; b < x.size(); b += in_block) {
        const auto y = fft::resample(x.subspan(b, in_block), out_block);
        out.insert(out.end(), y.begin(), y.end());
    }
    return out;
}

/// Adds circular complex white noise of the given mean power (dBfs).
inline void add_noise(std::span<cplx> x, double power_db, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, std::sqrt(from_db(power_db) / 2.0));
    for (auto& z : x) z += cplx(g(rng), g(rng));
}

}  // namespace coexist
