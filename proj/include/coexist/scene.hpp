#pragma once

// Cabled-bench emulation at complex baseband: pulsed PMCW frames, delayed /
// Doppler-shifted / steered target echoes, interference and receiver noise.

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coexist/binary_io.hpp"
#include "coexist/error.hpp"
#include "coexist/fft.hpp"
#include "coexist/sequence.hpp"
#include "coexist/types.hpp"

namespace coexist {

struct RadarTimingConfig {
    double sample_rate = 40e6;
    double carrier = 2e9;  // bookkeeping only
    double pri = 20e-6;
    double duty_cycle = 0.5;
    std::size_t pulses = 50;
    std::size_t code_length = 400;

    void validate() const {
        if (sample_rate <= 0 || pri <= 0 || duty_cycle <= 0 || duty_cycle > 1)
            throw ConfigurationError("radar timing must be positive with duty cycle in (0, 1]");
        if (pulses < 1 || code_length < 2) throw ConfigurationError("need >= 1 pulse and >= 2 chips");
        const double active = static_cast<double>(code_length) / sample_rate;
        if (std::abs(active - pri * duty_cycle) > 1e-9 * pri * duty_cycle)
            throw ConfigurationError("code length / sample rate must equal PRI x duty cycle");
        const double spr = pri * sample_rate;
        if (std::abs(spr - std::round(spr)) > 1e-6) throw ConfigurationError("PRI must be a whole number of samples");
    }
    std::size_t samples_per_pri() const { return static_cast<std::size_t>(std::llround(pri * sample_rate)); }
    std::size_t frame_samples() const { return samples_per_pri() * pulses; }
    double range_bin_m() const { return kSpeedOfLight / (2.0 * sample_rate); }
    double cpi_seconds() const { return pri * static_cast<double>(pulses); }
};

struct TargetSpec {
    double delay_s = 0.0;
    double doppler = 0.0;  // cycles per pulse
    double angle_deg = 0.0;
    double attenuation_db = 0.0;

    void validate(const RadarTimingConfig& t) const {
        if (delay_s < 0.0 || delay_s >= t.pri) throw OutOfRangeError("target delay must lie in [0, PRI)");
        if (std::abs(doppler) > 0.5) throw OutOfRangeError("normalized Doppler must lie in [-0.5, 0.5]");
    }
    std::size_t delay_samples(const RadarTimingConfig& t) const {
        return static_cast<std::size_t>(std::llround(delay_s * t.sample_rate));
    }
};

/// Colocated MIMO array. Receive elements sit `spacing` wavelengths apart;
/// transmit elements sit rx * spacing apart so the rx*tx virtual array is
/// filled and uniform with virtual index m * rx + p.
struct ArrayGeometry {
    std::size_t tx = 2;
    std::size_t rx = 2;
    double spacing = 0.5;

    void validate() const {
        if (tx < 1 || rx < 1) throw ConfigurationError("array needs at least one Tx and one Rx element");
    }
    std::size_t virtual_elements() const { return tx * rx; }
    static cplx steer(double position_wavelengths, double angle_deg) {
        return std::polar(1.0, kTwoPi * position_wavelengths * std::sin(angle_deg * kPi / 180.0));
    }
    cplx tx_steer(std::size_t m, double angle_deg) const {
        return steer(spacing * static_cast<double>(m * rx), angle_deg);
    }
    cplx rx_steer(std::size_t p, double angle_deg) const { return steer(spacing * static_cast<double>(p), angle_deg); }
    cplx virtual_steer(std::size_t k, double angle_deg) const {
        return steer(spacing * static_cast<double>(k), angle_deg);
    }
};

/// One baseband stream per element, pulse-major.
using ChannelFrames = std::vector<cvec>;

/// Each pulse carries the code at one sample per chip, then zeros to the PRI.
inline ChannelFrames synthesize_frame(const SequenceSet& x, const RadarTimingConfig& timing) {
    timing.validate();
    if (x.length() != timing.code_length)
        throw ConfigurationError("sequence length " + std::to_string(x.length()) + " does not match timing code length " +
                                 std::to_string(timing.code_length));
    const std::size_t spr = timing.samples_per_pri();
    ChannelFrames frames(x.rows(), cvec(timing.frame_samples()));
    for (std::size_t m = 0; m < x.rows(); ++m) {
        const auto code = x.row(m);
        for (std::size_t q = 0; q < timing.pulses; ++q)
            std::copy(code.begin(), code.end(), frames[m].begin() + static_cast<std::ptrdiff_t>(q * spr));
    }
    return frames;
}

/// Echo seen by every Rx element for one point target (stop-and-hop).
inline ChannelFrames apply_target(const ChannelFrames& frames, const TargetSpec& target, const ArrayGeometry& geom,
                                  const RadarTimingConfig& timing) {
    timing.validate();
    geom.validate();
    target.validate(timing);
    if (frames.size() != geom.tx) throw ConfigurationError("frame count does not match Tx element count");
    const std::size_t len = timing.frame_samples();
    for (const auto& f : frames)
        if (f.size() != len) throw ConfigurationError("frame length does not match timing");

    const std::size_t spr = timing.samples_per_pri();
    const std::size_t d = target.delay_samples(timing);
    const double gain = std::pow(10.0, -target.attenuation_db / 20.0);

    // Transmit-side combination, then per-pulse Doppler, then receive steering.
    cvec combined(len);
    for (std::size_t m = 0; m < geom.tx; ++m) {
        const cplx a = geom.tx_steer(m, target.angle_deg) * gain;
        for (std::size_t t = 0; t < len; ++t) combined[t] += a * frames[m][t];
    }
    cvec delayed(len);
    for (std::size_t t = d; t < len; ++t) {
        const std::size_t q = (t - d) / spr;
        const cplx dop = std::polar(1.0, kTwoPi * target.doppler * static_cast<double>(q));
        delayed[t] = combined[t - d] * dop;
    }
    ChannelFrames echo(geom.rx, cvec(len));
    for (std::size_t p = 0; p < geom.rx; ++p) {
        const cplx a = geom.rx_steer(p, target.angle_deg);
        for (std::size_t t = 0; t < len; ++t) echo[p][t] = a * delayed[t];
    }
    return echo;
}

/// Trigger-aligned capture: channel-major, each channel pulse-major.
struct RxCapture {
    std::size_t channels = 0;
    std::size_t pulses = 0;
    std::size_t samples = 0;  // fast-time samples per PRI
    double sample_rate = 0.0;
    double pri = 0.0;
    std::vector<cvec> data;

    std::span<const cplx> pulse(std::size_t ch, std::size_t q) const {
        return std::span<const cplx>(data[ch]).subspan(q * samples, samples);
    }
    bool operator==(const RxCapture&) const = default;
};

struct InterferenceSpec {
    cvec samples;            // baseband stream at `sample_rate`
    double sample_rate = 0;  // resampled onto the radar grid when different
    double power_db = 0.0;   // mean power after scaling, dBfs
    std::size_t offset = 0;  // start sample on the radar grid (circular)
    double angle_deg = 0.0;  // arrival direction across the Rx elements
};

/// Sums echoes, scaled interference and seeded white noise.
inline RxCapture mix_capture(const std::vector<ChannelFrames>& echoes, const RadarTimingConfig& timing,
                             const ArrayGeometry& geom, const std::optional<InterferenceSpec>& interference,
                             std::optional<double> noise_db, std::uint64_t seed) {
    timing.validate();
    const std::size_t len = timing.frame_samples();
    RxCapture cap;
    cap.channels = geom.rx;
    cap.pulses = timing.pulses;
    cap.samples = timing.samples_per_pri();
    cap.sample_rate = timing.sample_rate;
    cap.pri = timing.pri;
    cap.data.assign(geom.rx, cvec(len));

    for (const auto& e : echoes) {
        if (e.size() != geom.rx) throw ConfigurationError("echo channel count does not match Rx element count");
        for (std::size_t p = 0; p < geom.rx; ++p) {
            if (e[p].size() != len) throw ConfigurationError("echo length does not match frame length");
            for (std::size_t t = 0; t < len; ++t) cap.data[p][t] += e[p][t];
        }
    }

    if (interference && !interference->samples.empty()) {
        const auto& spec = *interference;
        cvec src = spec.samples;
        if (spec.sample_rate > 0 && std::abs(spec.sample_rate - timing.sample_rate) > 1e-6) {
            const auto out_len = static_cast<std::size_t>(
                std::llround(static_cast<double>(src.size()) * timing.sample_rate / spec.sample_rate));
            src = fft::resample(src, out_len);
        }
        const double p_in = energy(src) / static_cast<double>(src.size());
        const double scale = p_in > 0 ? std::sqrt(from_db(spec.power_db) / p_in) : 0.0;
        for (std::size_t p = 0; p < geom.rx; ++p) {
            const cplx a = geom.rx_steer(p, spec.angle_deg) * scale;
            for (std::size_t t = 0; t < len; ++t) cap.data[p][t] += a * src[(t + spec.offset) % src.size()];
        }
    }

    if (noise_db) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, std::sqrt(from_db(*noise_db) / 2.0));
        for (auto& ch : cap.data)
            for (auto& z : ch) z += cplx(g(rng), g(rng));
    }
    return cap;
}

// ---- CAPT container -------------------------------------------------------

inline io::Bytes encode_capture(const RxCapture& cap) {
    io::Writer w;
    w.magic("CAPT");
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(cap.channels));
    w.u32(static_cast<std::uint32_t>(cap.pulses));
    w.u32(static_cast<std::uint32_t>(cap.samples));
    w.f64(cap.sample_rate);
    w.f64(cap.pri);
    for (const auto& ch : cap.data)
        for (const auto& z : ch) {
            w.f64(z.real());
            w.f64(z.imag());
        }
    return std::move(w).bytes();
}

inline RxCapture decode_capture(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes);
    r.expect_magic("CAPT");
    if (r.u16() != 1) throw FormatError("unsupported CAPT version");
    RxCapture cap;
    cap.channels = r.u32();
    cap.pulses = r.u32();
    cap.samples = r.u32();
    cap.sample_rate = r.f64();
    cap.pri = r.f64();
    const std::size_t per = cap.pulses * cap.samples;
    if (r.remaining() != cap.channels * per * 16) throw FormatError("CAPT payload size mismatch");
    cap.data.assign(cap.channels, cvec(per));
    for (auto& ch : cap.data)
        for (auto& z : ch) {
            const double re = r.f64();
            z = cplx(re, r.f64());
        }
    return cap;
}

}  // namespace coexist
