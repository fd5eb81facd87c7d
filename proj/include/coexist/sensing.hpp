#pragma once

// Energy-detection spectrum sensing: averaged periodogram, 1 MHz occupancy
// decisions, and the OCCU wire message that carries them to the radar.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "coexist/binary_io.hpp"
#include "coexist/error.hpp"
#include "coexist/fft.hpp"
#include "coexist/spectral_mask.hpp"
#include "coexist/types.hpp"
#include "coexist/window.hpp"

namespace coexist {

/// Averaged periodogram, stored in ascending frequency order: bin i covers
/// center - span/2 + i * spacing.
struct SpectralEstimate {
    double center_hz = 0.0;
    double span_hz = 0.0;
    rvec power;  // linear, dBfs-referenced
    WindowKind window = WindowKind::Rectangle;
    std::size_t averages = 1;

    std::size_t bins() const { return power.size(); }
    double bin_spacing() const { return span_hz / static_cast<double>(power.size()); }
    double start_hz() const { return center_hz - span_hz / 2.0; }
    double frequency(std::size_t i) const { return start_hz() + bin_spacing() * static_cast<double>(i); }
    /// Index of the stored bin holding DFT bin k (k may be negative).
    std::size_t index_of_dft_bin(long k) const {
        const long n = static_cast<long>(power.size());
        return static_cast<std::size_t>(((k % n) + n + n / 2) % n);
    }
    rvec power_db() const {
        rvec out(power.size());
        for (std::size_t i = 0; i < power.size(); ++i) out[i] = to_db(std::max(power[i], 1e-30));
        return out;
    }
};

struct SensingConfig {
    WindowKind window = WindowKind::Hamming;
    std::size_t segment = 1280;
    std::size_t averages = 16;
    double threshold_db = 6.0;
    double resolution_hz = 1e6;
};

/// Welch-style estimate over non-overlapping segments. A unit-amplitude tone
/// on a bin centre reads 0 dBfs: each bin is |sum w x e|^2 / (sum w)^2.
inline SpectralEstimate estimate_spectrum(std::span<const cplx> samples, double fs, double center_hz, WindowKind window,
                                          std::size_t segment, std::size_t averages) {
    if (segment < 2 || averages < 1) throw ConfigurationError("segment must be >= 2 and averages >= 1");
    if (samples.size() < segment * averages)
        throw InsufficientDataError("capture holds " + std::to_string(samples.size()) + " samples, need " +
                                    std::to_string(segment * averages));
    const rvec w = make_window(window, segment);
    double wsum = 0.0;
    for (double v : w) wsum += v;
    const double norm = 1.0 / (wsum * wsum * static_cast<double>(averages));

    rvec acc(segment, 0.0);
    cvec buf(segment);
    for (std::size_t a = 0; a < averages; ++a) {
        const auto* seg = samples.data() + a * segment;
        for (std::size_t i = 0; i < segment; ++i) buf[i] = seg[i] * w[i];
        fft::transform(buf, buf, fft::Direction::Forward);
        for (std::size_t i = 0; i < segment; ++i) acc[i] += std::norm(buf[i]);
    }
    SpectralEstimate est;
    est.center_hz = center_hz;
    est.span_hz = fs;
    est.window = window;
    est.averages = averages;
    est.power.resize(segment);
    const std::size_t half = segment / 2;
    for (std::size_t i = 0; i < segment; ++i) est.power[(i + half) % segment] = acc[i] * norm;
    return est;
}

inline SpectralEstimate estimate_spectrum(std::span<const cplx> samples, double fs, double center_hz,
                                          const SensingConfig& cfg) {
    return estimate_spectrum(samples, fs, center_hz, cfg.window, cfg.segment, cfg.averages);
}

struct OccupancyChart {
    std::uint64_t timestamp = 0;
    double start_hz = 0.0;
    double resolution_hz = 1e6;
    std::vector<std::uint8_t> cells;  // 0 free, 1 busy

    double stop_hz() const { return start_hz + resolution_hz * static_cast<double>(cells.size()); }
    std::size_t busy_count() const { return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1)); }
    bool operator==(const OccupancyChart&) const = default;
};

inline double median(rvec v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

/// Busy iff a cell's mean bin power exceeds median-bin floor + threshold.
inline OccupancyChart threshold_occupancy(const SpectralEstimate& est, double threshold_db, double resolution_hz,
                                          std::uint64_t timestamp = 0) {
    if (est.power.empty()) throw InsufficientDataError("empty spectral estimate");
    const double ratio = resolution_hz / est.bin_spacing();
    const auto per = static_cast<std::size_t>(std::llround(ratio));
    if (per == 0 || std::abs(ratio - static_cast<double>(per)) > 1e-9 * ratio)
        throw ConfigurationError("resolution must be an integer multiple of the bin spacing");
    if (est.bins() % per != 0) throw ConfigurationError("resolution cells must tile the analyzed band exactly");

    const double limit = median(est.power) * from_db(threshold_db);
    OccupancyChart chart;
    chart.timestamp = timestamp;
    chart.start_hz = est.start_hz();
    chart.resolution_hz = resolution_hz;
    chart.cells.resize(est.bins() / per);
    for (std::size_t c = 0; c < chart.cells.size(); ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < per; ++i) sum += est.power[c * per + i];
        chart.cells[c] = sum / static_cast<double>(per) > limit ? 1 : 0;
    }
    return chart;
}

/// Joins charts from consecutive sub-band sweeps into one wider chart.
inline OccupancyChart stitch(const std::vector<OccupancyChart>& parts) {
    if (parts.empty()) throw InsufficientDataError("nothing to stitch");
    OccupancyChart out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto& p = parts[i];
        if (p.resolution_hz != out.resolution_hz) throw ConfigurationError("stitched charts differ in resolution");
        if (std::abs(p.start_hz - out.stop_hz()) > 1e-6 * out.resolution_hz)
            throw ConfigurationError("stitched charts are not contiguous");
        out.cells.insert(out.cells.end(), p.cells.begin(), p.cells.end());
        out.timestamp = std::max(out.timestamp, p.timestamp);
    }
    return out;
}

/// Busy cells inside the radar band as normalized-frequency stopbands
/// (f - fc) / fs wrapped into [0, 1). Cells outside the band are ignored.
inline SpectralMask mask_from_chart(const OccupancyChart& chart, double radar_center_hz, double radar_fs,
                                    std::size_t oversampling = 2) {
    std::vector<std::pair<double, double>> raw;
    const double band_lo = radar_center_hz - radar_fs / 2.0;
    const double band_hi = radar_center_hz + radar_fs / 2.0;
    for (std::size_t c = 0; c < chart.cells.size(); ++c) {
        if (!chart.cells[c]) continue;
        double lo = chart.start_hz + chart.resolution_hz * static_cast<double>(c);
        double hi = lo + chart.resolution_hz;
        lo = std::max(lo, band_lo);
        hi = std::min(hi, band_hi);
        if (hi <= lo) continue;
        const double nlo = (lo - radar_center_hz) / radar_fs;
        const double nhi = (hi - radar_center_hz) / radar_fs;
        if (nhi <= 0.0) {
            raw.emplace_back(1.0 + nlo, 1.0 + nhi);
        } else if (nlo >= 0.0) {
            raw.emplace_back(nlo, nhi);
        } else {
            raw.emplace_back(1.0 + nlo, 1.0);
            raw.emplace_back(0.0, nhi);
        }
    }
    std::sort(raw.begin(), raw.end());
    std::vector<MaskBand> bands;
    for (auto [lo, hi] : raw) {
        if (!bands.empty() && lo <= bands.back().hi + 1e-12) {
            bands.back().hi = std::max(bands.back().hi, hi);
        } else {
            bands.push_back({lo, hi, 1});
        }
    }
    return SpectralMask(bands, oversampling);
}

// ---- OCCU wire message --------------------------------------------------

inline constexpr std::uint16_t kOccupancyVersion = 1;
inline constexpr std::size_t kOccupancyHeaderBytes = 4 + 2 + 8 + 8 + 8 + 4;

inline io::Bytes encode_occupancy(const OccupancyChart& chart) {
    io::Writer w;
    w.magic("OCCU");
    w.u16(kOccupancyVersion);
    w.u64(chart.timestamp);
    w.f64(chart.start_hz);
    w.f64(chart.resolution_hz);
    w.u32(static_cast<std::uint32_t>(chart.cells.size()));
    for (auto c : chart.cells) w.u8(c ? 1 : 0);
    return std::move(w).bytes();
}

inline OccupancyChart decode_occupancy(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes);
    r.expect_magic("OCCU");
    if (r.u16() != kOccupancyVersion) throw FormatError("unsupported OCCU version");
    OccupancyChart chart;
    chart.timestamp = r.u64();
    chart.start_hz = r.f64();
    chart.resolution_hz = r.f64();
    const auto count = r.u32();
    if (r.remaining() != count) throw FormatError("OCCU cell count does not match payload");
    chart.cells.resize(count);
    for (auto& c : chart.cells) {
        c = r.u8();
        if (c > 1) throw FormatError("OCCU cell value must be 0 or 1");
    }
    return chart;
}

/// Prefixes a message with its u32 little-endian length for stream transports.
inline io::Bytes frame_message(const io::Bytes& payload) {
    const auto n = static_cast<std::uint32_t>(payload.size());
    io::Bytes out(4 + payload.size());
    for (std::size_t i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>((n >> (8 * i)) & 0xFFu);
    std::copy(payload.begin(), payload.end(), out.begin() + 4);
    return out;
}

// ---- delivery -------------------------------------------------------------

class MessageSink {
public:
    virtual ~MessageSink() = default;
    /// Delivers one complete message; throws DeliveryError when unavailable.
    virtual void deliver(const io::Bytes& message) = 0;
};

/// In-process sink for tests and the single-process loop.
class QueueSink : public MessageSink {
public:
    void deliver(const io::Bytes& message) override {
        if (!available) throw DeliveryError("sink unavailable");
        queue.push_back(message);
    }
    bool available = true;
    std::deque<io::Bytes> queue;
};

struct DeliveryAck {
    std::uint64_t timestamp = 0;
    std::size_t bytes = 0;
};

/// Publishes each tick's chart at most once. A failed delivery keeps the
/// chart pending; a later call delivers the newest pending chart.
class OccupancyPublisher {
public:
    std::optional<DeliveryAck> publish(const OccupancyChart& chart, MessageSink& sink) {
        if (delivered_ && chart.timestamp <= *delivered_) return std::nullopt;
        if (!pending_ || chart.timestamp >= pending_->timestamp) pending_ = chart;
        return flush(sink);
    }

    std::optional<DeliveryAck> flush(MessageSink& sink) {
        if (!pending_) return std::nullopt;
        const auto bytes = encode_occupancy(*pending_);
        sink.deliver(bytes);  // throws, leaving the chart pending
        DeliveryAck ack{pending_->timestamp, bytes.size()};
        delivered_ = pending_->timestamp;
        pending_.reset();
        return ack;
    }

    const std::optional<OccupancyChart>& pending() const { return pending_; }

private:
    std::optional<OccupancyChart> pending_;
    std::optional<std::uint64_t> delivered_;
};

/// Receiving end: decodes messages and drops any chart not newer than the
/// last accepted one.
class OccupancyReceiver {
public:
    std::optional<OccupancyChart> accept(std::span<const std::uint8_t> message) {
        auto chart = decode_occupancy(message);
        if (latest_ && chart.timestamp <= latest_->timestamp) {
            ++discarded_;
            return std::nullopt;
        }
        latest_ = chart;
        return chart;
    }
    const std::optional<OccupancyChart>& latest() const { return latest_; }
    std::size_t discarded() const { return discarded_; }

private:
    std::optional<OccupancyChart> latest_;
    std::size_t discarded_ = 0;
};

}  // namespace coexist
