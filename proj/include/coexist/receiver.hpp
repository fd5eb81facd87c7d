#pragma once

// Adaptive receive chain: FFT matched-filter bank per (Rx, Tx), slow-time
// transform to range-Doppler maps, vicinity-ring SINR and beamscan DOA.

#include <algorithm>
#include <bit>
#include <cmath>
#include <future>
#include <optional>
#include <thread>
#include <vector>

#include "coexist/binary_io.hpp"
#include "coexist/error.hpp"
#include "coexist/fft.hpp"
#include "coexist/scene.hpp"
#include "coexist/sequence.hpp"
#include "coexist/window.hpp"

namespace coexist {

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results land by index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::future<void>> jobs;
    const std::size_t workers = std::min(threads, n);
    for (std::size_t w = 0; w < workers; ++w)
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        }));
    for (auto& j : jobs) j.get();
}

inline std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Matched-filter outputs indexed [pair = rx * tx_count + tx][pulse * range + lag].
struct FastTimeOutputs {
    std::size_t rx = 0, tx = 0, pulses = 0, range_bins = 0;
    std::vector<cvec> data;

    std::size_t pair(std::size_t p, std::size_t m) const { return p * tx + m; }
    std::span<const cplx> pulse(std::size_t p, std::size_t m, std::size_t q) const {
        return std::span<const cplx>(data[pair(p, m)]).subspan(q * range_bins, range_bins);
    }
};

/// Bank of filters matched to the current transmit set. set_waveform swaps
/// all filters at once so the next capture uses the new codes.
class MatchedFilterBank {
public:
    MatchedFilterBank() = default;
    MatchedFilterBank(const SequenceSet& x, std::size_t record_length) { set_waveform(x, record_length); }

    void set_waveform(const SequenceSet& x, std::size_t record_length) {
        if (record_length < x.length()) throw ConfigurationError("fast-time record shorter than the code");
        record_ = record_length;
        n_ = x.length();
        fft_len_ = std::bit_ceil(record_ + n_ - 1);
        filters_.clear();
        for (std::size_t m = 0; m < x.rows(); ++m) {
            auto spec = fft::forward(cvec(x.row(m).begin(), x.row(m).end()), fft_len_);
            for (auto& z : spec) z = std::conj(z);
            filters_.push_back(std::move(spec));
        }
    }

    std::size_t codes() const { return filters_.size(); }
    std::size_t record_length() const { return record_; }

    /// out[k] = sum_n y[k+n] conj(x[n]) for lags k in [0, record).
    void correlate(std::span<const cplx> y, std::size_t m, std::span<cplx> out, cvec& work) const {
        work.assign(fft_len_, cplx{});
        std::copy(y.begin(), y.end(), work.begin());
        fft::transform(work, work, fft::Direction::Forward);
        const auto& h = filters_[m];
        for (std::size_t i = 0; i < fft_len_; ++i) work[i] *= h[i];
        fft::transform(work, work, fft::Direction::Inverse);
        const double s = 1.0 / static_cast<double>(fft_len_);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = work[k] * s;
    }

    FastTimeOutputs process(const RxCapture& cap, std::size_t threads = default_threads()) const {
        if (filters_.empty()) throw ConfigurationError("matched filter bank has no waveform");
        if (cap.samples != record_) throw ConfigurationError("capture fast-time length does not match the filter bank");
        FastTimeOutputs out;
        out.rx = cap.channels;
        out.tx = filters_.size();
        out.pulses = cap.pulses;
        out.range_bins = cap.samples;
        out.data.assign(out.rx * out.tx, cvec(cap.pulses * cap.samples));
        parallel_for(out.data.size(), threads, [&](std::size_t idx) {
            const std::size_t p = idx / out.tx, m = idx % out.tx;
            cvec work;
            for (std::size_t q = 0; q < cap.pulses; ++q)
                correlate(cap.pulse(p, q), m, std::span<cplx>(out.data[idx]).subspan(q * cap.samples, cap.samples),
                          work);
        });
        return out;
    }

private:
    std::size_t record_ = 0, n_ = 0, fft_len_ = 0;
    std::vector<cvec> filters_;
};

struct RangeDopplerMap {
    std::size_t rx = 0, tx = 0;
    std::size_t doppler_bins = 0, range_bins = 0;
    double range_bin_m = 0.0;
    WindowKind window = WindowKind::Rectangle;
    cvec cells;   // [doppler][range], row-major
    rvec power;   // |cells|^2

    cplx cell(std::size_t d, std::size_t r) const { return cells[d * range_bins + r]; }
    double at(std::size_t d, std::size_t r) const { return power[d * range_bins + r]; }
    double range_m(std::size_t r) const { return range_bin_m * static_cast<double>(r); }
    /// Normalized Doppler of a bin in cycles per pulse, wrapped to [-0.5, 0.5).
    double doppler(std::size_t d) const {
        const double f = static_cast<double>(d) / static_cast<double>(doppler_bins);
        return f >= 0.5 ? f - 1.0 : f;
    }
    double total_power() const {
        double s = 0.0;
        for (double v : power) s += v;
        return s;
    }
};

/// Windowed slow-time DFT per range bin; one map per (Rx, Tx), ordered by Rx then Tx.
inline std::vector<RangeDopplerMap> range_doppler(const FastTimeOutputs& ft, WindowKind window, double range_bin_m,
                                                  std::size_t threads = default_threads()) {
    if (ft.pulses < 2) throw ConfigurationError("range-Doppler processing needs at least 2 pulses");
    const rvec w = make_window(window, ft.pulses);
    std::vector<RangeDopplerMap> maps(ft.data.size());
    parallel_for(ft.data.size(), threads, [&](std::size_t idx) {
        auto& map = maps[idx];
        map.rx = idx / ft.tx;
        map.tx = idx % ft.tx;
        map.doppler_bins = ft.pulses;
        map.range_bins = ft.range_bins;
        map.range_bin_m = range_bin_m;
        map.window = window;
        map.cells.assign(ft.pulses * ft.range_bins, cplx{});
        map.power.assign(ft.pulses * ft.range_bins, 0.0);
        cvec col(ft.pulses);
        const auto& src = ft.data[idx];
        for (std::size_t r = 0; r < ft.range_bins; ++r) {
            for (std::size_t q = 0; q < ft.pulses; ++q) col[q] = src[q * ft.range_bins + r] * w[q];
            fft::transform(col, col, fft::Direction::Forward);
            for (std::size_t d = 0; d < ft.pulses; ++d) {
                map.cells[d * ft.range_bins + r] = col[d];
                map.power[d * ft.range_bins + r] = std::norm(col[d]);
            }
        }
    });
    return maps;
}

struct Detection {
    std::size_t range_bin = 0;
    std::size_t doppler_bin = 0;
    double power = 0.0;
    double vicinity_mean = 0.0;
    double sinr_db = 0.0;
    std::optional<double> angle_deg;
};

struct DetectorConfig {
    std::size_t vicinity = 11;  // odd window edge
    std::size_t guard = 3;      // odd guard block edge
    double sinr_cap_db = 60.0;
    std::optional<std::size_t> expected;  // top-k when set
    double threshold_db = 13.0;           // otherwise keep peaks with SINR above this
};

/// Sum of map powers across all (Rx, Tx) pairs.
inline RangeDopplerMap noncoherent_sum(const std::vector<RangeDopplerMap>& maps) {
    if (maps.empty()) throw ConfigurationError("no range-Doppler maps to detect on");
    RangeDopplerMap sum = maps.front();
    sum.cells.clear();
    for (std::size_t i = 1; i < maps.size(); ++i) {
        if (maps[i].power.size() != sum.power.size()) throw ConfigurationError("range-Doppler maps differ in size");
        for (std::size_t j = 0; j < sum.power.size(); ++j) sum.power[j] += maps[i].power[j];
    }
    return sum;
}

/// Mean power over the vicinity ring around (d, r): Doppler wraps, range clips.
inline double vicinity_mean(const RangeDopplerMap& map, std::size_t d, std::size_t r, const DetectorConfig& cfg) {
    const long hv = static_cast<long>(cfg.vicinity / 2), hg = static_cast<long>(cfg.guard / 2);
    const long nd = static_cast<long>(map.doppler_bins), nr = static_cast<long>(map.range_bins);
    double sum = 0.0;
    std::size_t count = 0;
    for (long dd = -hv; dd <= hv; ++dd) {
        // A short slow-time axis cannot hold the full ring without revisiting cells.
        if (2 * hv + 1 > nd && (dd < -(nd - 1) / 2 || dd > nd / 2)) continue;
        for (long dr = -hv; dr <= hv; ++dr) {
            if (std::abs(dd) <= hg && std::abs(dr) <= hg) continue;
            const long rr = static_cast<long>(r) + dr;
            if (rr < 0 || rr >= nr) continue;
            const long d2 = ((static_cast<long>(d) + dd) % nd + nd) % nd;
            sum += map.at(static_cast<std::size_t>(d2), static_cast<std::size_t>(rr));
            ++count;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

inline double capped_sinr_db(double peak, double ring, double cap) {
    if (ring <= 0.0) return cap;
    return std::min(cap, to_db(peak / ring));
}

inline std::vector<Detection> detect(const RangeDopplerMap& sum, const DetectorConfig& cfg) {
    if (cfg.vicinity % 2 == 0 || cfg.guard % 2 == 0 || cfg.guard >= cfg.vicinity)
        throw ConfigurationError("vicinity and guard must be odd with guard < vicinity");
    const std::size_t nd = sum.doppler_bins, nr = sum.range_bins;
    struct Peak {
        std::size_t d, r;
        double p;
    };
    std::vector<Peak> peaks;
    for (std::size_t d = 0; d < nd; ++d)
        for (std::size_t r = 0; r < nr; ++r) {
            const double p = sum.at(d, r);
            if (p <= 0.0) continue;
            bool is_max = true;
            for (long dd = -1; dd <= 1 && is_max; ++dd)
                for (long dr = -1; dr <= 1; ++dr) {
                    if (dd == 0 && dr == 0) continue;
                    const long rr = static_cast<long>(r) + dr;
                    if (rr < 0 || rr >= static_cast<long>(nr)) continue;
                    const auto d2 = static_cast<std::size_t>((static_cast<long>(d + nd) + dd) % static_cast<long>(nd));
                    const double q = sum.at(d2, static_cast<std::size_t>(rr));
                    // Ties go to the earlier cell in row-major order.
                    const bool earlier = d2 * nr + static_cast<std::size_t>(rr) < d * nr + r;
                    if (q > p || (q == p && earlier)) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) peaks.push_back({d, r, p});
        }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.p > b.p; });

    const long hg = static_cast<long>(cfg.guard / 2);
    std::vector<Detection> out;
    for (const auto& pk : peaks) {
        if (cfg.expected && out.size() >= *cfg.expected) break;
        bool suppressed = false;
        for (const auto& kept : out) {
            const long dd_raw = std::abs(static_cast<long>(kept.doppler_bin) - static_cast<long>(pk.d));
            const long dd = std::min(dd_raw, static_cast<long>(nd) - dd_raw);
            const long dr = std::abs(static_cast<long>(kept.range_bin) - static_cast<long>(pk.r));
            if (dd <= hg && dr <= hg) suppressed = true;
        }
        if (suppressed) continue;
        Detection det;
        det.doppler_bin = pk.d;
        det.range_bin = pk.r;
        det.power = pk.p;
        det.vicinity_mean = vicinity_mean(sum, pk.d, pk.r, cfg);
        det.sinr_db = capped_sinr_db(pk.p, det.vicinity_mean, cfg.sinr_cap_db);
        if (!cfg.expected && det.sinr_db < cfg.threshold_db) continue;
        out.push_back(det);
    }
    return out;
}

inline std::vector<Detection> detect_and_measure(const std::vector<RangeDopplerMap>& maps, const DetectorConfig& cfg) {
    return detect(noncoherent_sum(maps), cfg);
}

/// Beamscan over the virtual array on a 0.5 degree grid in [-90, 90].
inline double estimate_angle(const std::vector<RangeDopplerMap>& maps, const ArrayGeometry& geom, std::size_t d,
                             std::size_t r, double step_deg = 0.5) {
    if (geom.virtual_elements() < 2) throw UnsupportedParameterError("angle estimation needs >= 2 virtual elements");
    if (maps.size() != geom.virtual_elements()) throw ConfigurationError("map count does not match the virtual array");
    cvec v(geom.virtual_elements());
    for (const auto& m : maps) v[m.tx * geom.rx + m.rx] = m.cell(d, r);
    double best = -1.0, best_angle = 0.0;
    const auto steps = static_cast<long>(std::llround(180.0 / step_deg));
    for (long i = 0; i <= steps; ++i) {
        const double a = -90.0 + step_deg * static_cast<double>(i);
        cplx acc{};
        for (std::size_t k = 0; k < v.size(); ++k) acc += std::conj(geom.virtual_steer(k, a)) * v[k];
        const double p = std::norm(acc);
        if (p > best + 1e-12 * std::max(best, 1.0)) {
            best = p;
            best_angle = a;
        }
    }
    return best_angle;
}

inline void estimate_doa(std::vector<Detection>& dets, const std::vector<RangeDopplerMap>& maps,
                         const ArrayGeometry& geom) {
    for (auto& d : dets) d.angle_deg = estimate_angle(maps, geom, d.doppler_bin, d.range_bin);
}

/// Full chain for one capture.
struct RadarReceiver {
    MatchedFilterBank bank;
    WindowKind window = WindowKind::Blackman;
    DetectorConfig detector;
    ArrayGeometry geometry;
    double range_bin_m = kSpeedOfLight / (2.0 * 40e6);
    std::size_t threads = default_threads();

    struct Output {
        std::vector<RangeDopplerMap> maps;
        std::vector<Detection> detections;
    };

    Output process(const RxCapture& cap) const {
        Output out;
        out.maps = range_doppler(bank.process(cap, threads), window, range_bin_m, threads);
        out.detections = detect_and_measure(out.maps, detector);
        if (geometry.virtual_elements() >= 2 && out.maps.size() == geometry.virtual_elements())
            estimate_doa(out.detections, out.maps, geometry);
        return out;
    }
};

// ---- RDMP container -------------------------------------------------------

inline io::Bytes encode_maps(const std::vector<RangeDopplerMap>& maps) {
    io::Writer w;
    w.magic("RDMP");
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(maps.size()));
    for (const auto& m : maps) {
        w.u32(static_cast<std::uint32_t>(m.tx));
        w.u32(static_cast<std::uint32_t>(m.rx));
        w.u32(static_cast<std::uint32_t>(m.doppler_bins));
        w.u32(static_cast<std::uint32_t>(m.range_bins));
        w.f64(m.range_bin_m);
        w.u8(static_cast<std::uint8_t>(m.window));
        for (double p : m.power) w.f64(p);
    }
    return std::move(w).bytes();
}

inline std::vector<RangeDopplerMap> decode_maps(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes);
    r.expect_magic("RDMP");
    if (r.u16() != 1) throw FormatError("unsupported RDMP version");
    std::vector<RangeDopplerMap> maps(r.u32());
    for (auto& m : maps) {
        m.tx = r.u32();
        m.rx = r.u32();
        m.doppler_bins = r.u32();
        m.range_bins = r.u32();
        m.range_bin_m = r.f64();
        const auto w = r.u8();
        if (w > 2) throw FormatError("unknown window code");
        m.window = static_cast<WindowKind>(w);
        if (r.remaining() < m.doppler_bins * m.range_bins * 8) throw FormatError("RDMP payload truncated");
        m.power.resize(m.doppler_bins * m.range_bins);
        for (auto& p : m.power) p = r.f64();
    }
    r.expect_end();
    return maps;
}

}  // namespace coexist
