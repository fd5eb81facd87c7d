#pragma once

// Waveform exchange container (little-endian):
//
//   "WVFM"            4 bytes magic
//   u16 version       = 1
//   u8  alphabet      0 = continuous, 1 = discrete
//   u8  reserved      = 0
//   u32 levels        L (0 for continuous)
//   u32 M, u32 N
//   f64 theta
//   u32 oversampling  mask transform factor
//   u32 band count, then per band: f64 lo, f64 hi, u8 weight
//   M*N x (f64 re, f64 im), row-major
//
// Every double is copied bit-for-bit, so write/read round-trips exactly.

#include <string>

#include "coexist/binary_io.hpp"
#include "coexist/sequence.hpp"
#include "coexist/spectral_mask.hpp"

namespace coexist {

struct WaveformRecord {
    SequenceSet sequences;
    PhaseAlphabet alphabet;
    double theta = 0.0;
    SpectralMask mask;

    bool operator==(const WaveformRecord&) const = default;
};

inline constexpr std::uint16_t kWaveformFormatVersion = 1;

inline io::Bytes encode_waveform(const WaveformRecord& rec) {
    io::Writer w;
    w.magic("WVFM");
    w.u16(kWaveformFormatVersion);
    w.u8(static_cast<std::uint8_t>(rec.alphabet.kind));
    w.u8(0);
    w.u32(rec.alphabet.levels);
    w.u32(static_cast<std::uint32_t>(rec.sequences.rows()));
    w.u32(static_cast<std::uint32_t>(rec.sequences.length()));
    w.f64(rec.theta);
    w.u32(rec.mask.oversampling());
    w.u32(static_cast<std::uint32_t>(rec.mask.bands().size()));
    for (const auto& b : rec.mask.bands()) {
        w.f64(b.lo);
        w.f64(b.hi);
        w.u8(static_cast<std::uint8_t>(b.weight));
    }
    for (const auto& z : rec.sequences.entries()) {
        w.f64(z.real());
        w.f64(z.imag());
    }
    return std::move(w).bytes();
}

inline WaveformRecord decode_waveform(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes);
    r.expect_magic("WVFM");
    if (r.u16() != kWaveformFormatVersion) throw FormatError("unsupported waveform container version");
    PhaseAlphabet alphabet;
    const auto kind = r.u8();
    if (kind > 1) throw FormatError("bad alphabet kind");
    alphabet.kind = static_cast<PhaseAlphabet::Kind>(kind);
    r.u8();
    alphabet.levels = r.u32();
    const std::size_t m = r.u32();
    const std::size_t n = r.u32();
    const double theta = r.f64();
    const unsigned oversampling = r.u32();
    const std::size_t band_count = r.u32();
    std::vector<MaskBand> bands;
    for (std::size_t i = 0; i < band_count; ++i) {
        MaskBand b;
        b.lo = r.f64();
        b.hi = r.f64();
        b.weight = r.u8();
        bands.push_back(b);
    }
    if (r.remaining() != m * n * 16) throw FormatError("waveform entry count does not match M*N");
    cvec entries(m * n);
    for (auto& z : entries) {
        const double re = r.f64();
        const double im = r.f64();
        z = {re, im};
    }
    r.expect_end();
    return {SequenceSet(m, n, std::move(entries)), alphabet, theta, SpectralMask(std::move(bands), oversampling)};
}

inline void save_waveform(const std::string& path, const WaveformRecord& rec) {
    io::write_file(path, encode_waveform(rec));
}

inline WaveformRecord load_waveform(const std::string& path) { return decode_waveform(io::read_file(path)); }

}  // namespace coexist
