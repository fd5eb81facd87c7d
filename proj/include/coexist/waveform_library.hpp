#pragma once

// Baseline transmit codes: random, Barker, Frank, Golomb, LFSR families, LFM.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "coexist/error.hpp"
#include "coexist/sequence.hpp"
#include "coexist/types.hpp"

namespace coexist {

enum class WaveformKind {
    RandomPolyphase,
    RandomBinary,
    Barker,
    Frank,
    Golomb,
    MSequence,
    Gold,
    Kasami,
    UpLFM,
    DownLFM,
};

inline constexpr std::array<WaveformKind, 10> kAllWaveformKinds = {
    WaveformKind::RandomPolyphase, WaveformKind::RandomBinary, WaveformKind::Barker, WaveformKind::Frank,
    WaveformKind::Golomb,          WaveformKind::MSequence,    WaveformKind::Gold,   WaveformKind::Kasami,
    WaveformKind::UpLFM,           WaveformKind::DownLFM,
};

inline std::string to_string(WaveformKind k) {
    switch (k) {
        case WaveformKind::RandomPolyphase: return "random-polyphase";
        case WaveformKind::RandomBinary: return "random-binary";
        case WaveformKind::Barker: return "barker";
        case WaveformKind::Frank: return "frank";
        case WaveformKind::Golomb: return "golomb";
        case WaveformKind::MSequence: return "m-sequence";
        case WaveformKind::Gold: return "gold";
        case WaveformKind::Kasami: return "kasami";
        case WaveformKind::UpLFM: return "up-lfm";
        case WaveformKind::DownLFM: return "down-lfm";
    }
    return "?";
}

inline WaveformKind parse_waveform_kind(const std::string& s) {
    for (auto k : kAllWaveformKinds)
        if (to_string(k) == s) return k;
    throw UnsupportedParameterError("unknown waveform kind: " + s);
}

/// LFSR feedback polynomial as its nonzero exponents, highest first; the
/// constant term is implied. {4, 1} is x^4 + x + 1.
using Polynomial = std::vector<int>;

namespace lfsr {

inline const std::map<int, Polynomial>& primitive_table() {
    static const std::map<int, Polynomial> t = {
        {3, {3, 1}}, {4, {4, 1}},    {5, {5, 2}},          {6, {6, 1}},
        {7, {7, 1}}, {8, {8, 4, 3, 2}}, {9, {9, 4}},       {10, {10, 3}},
    };
    return t;
}

/// Preferred pairs for Gold families (degree not divisible by 4).
inline const std::map<int, std::pair<Polynomial, Polynomial>>& preferred_pairs() {
    static const std::map<int, std::pair<Polynomial, Polynomial>> t = {
        {3, {{3, 1}, {3, 2}}},
        {5, {{5, 2}, {5, 4, 3, 2}}},
        {6, {{6, 1}, {6, 5, 2, 1}}},
        {7, {{7, 3}, {7, 3, 2, 1}}},
        {9, {{9, 4}, {9, 6, 4, 3}}},
        {10, {{10, 3}, {10, 8, 3, 2}}},
    };
    return t;
}

/// One period of the maximal-length bit sequence for `poly`, register seeded all-ones.
/// Recurrence: a[n+d] = a[n] xor sum over lower taps t of a[n+t].
inline std::vector<std::uint8_t> bits(const Polynomial& poly) {
    if (poly.empty() || poly.front() < 2 || poly.front() > 20)
        throw UnsupportedParameterError("LFSR degree must be in [2, 20]");
    const int d = poly.front();
    const std::size_t period = (std::size_t{1} << d) - 1;
    std::vector<std::uint8_t> a(period + static_cast<std::size_t>(d), 1);
    for (std::size_t n = 0; n + d < a.size(); ++n) {
        std::uint8_t v = a[n];
        for (std::size_t i = 1; i < poly.size(); ++i) v ^= a[n + static_cast<std::size_t>(poly[i])];
        a[n + d] = v;
    }
    a.resize(period);
    return a;
}

inline int degree_for(std::size_t n, int min_degree = 3) {
    int d = min_degree;
    while (d < 10 && ((std::size_t{1} << d) - 1) < n) ++d;
    return d;
}

}  // namespace lfsr

struct WaveformSpec {
    WaveformSpec() = default;
    WaveformSpec(WaveformKind k, std::size_t n, std::uint64_t s = 0) : kind(k), length(n), seed(s) {}

    WaveformKind kind = WaveformKind::RandomPolyphase;
    std::size_t length = 0;
    std::uint64_t seed = 0;
    /// LFSR degree for m-sequence/Gold/Kasami; 0 picks the smallest tabulated
    /// degree whose period covers `length`.
    int degree = 0;
    /// Overrides the tabulated polynomial (m-sequence, Kasami, Gold first member).
    Polynomial polynomial;
    /// Second Gold polynomial override.
    Polynomial polynomial2;
    /// Family member for Gold/Kasami.
    std::size_t member = 0;
};

namespace detail {

inline cvec to_bipolar(const std::vector<std::uint8_t>& b) {
    cvec x(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) x[i] = b[i] ? -1.0 : 1.0;
    return x;
}

/// First n chips of the periodic extension.
inline cvec periodic_take(const cvec& period, std::size_t n) {
    cvec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = period[i % period.size()];
    return x;
}

inline std::vector<std::uint8_t> xor_shift(const std::vector<std::uint8_t>& u, const std::vector<std::uint8_t>& v,
                                           std::size_t shift) {
    std::vector<std::uint8_t> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] ^ v[(i + shift) % v.size()];
    return out;
}

inline bool is_square(std::size_t n, std::size_t& root) {
    root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    return root * root == n;
}

}  // namespace detail

/// Number of members of the Gold family for a degree: 2^d + 1.
inline std::size_t gold_family_size(int degree) { return (std::size_t{1} << degree) + 1; }
/// Number of members of the small Kasami set: 2^(d/2).
inline std::size_t kasami_family_size(int degree) { return std::size_t{1} << (degree / 2); }

/// One period of a Gold family member. Members 0 and 1 are the two preferred
/// m-sequences, member 2 + k is u xor (v shifted by k).
inline cvec gold_period(int degree, std::size_t member, const Polynomial& p1 = {}, const Polynomial& p2 = {}) {
    const auto& pairs = lfsr::preferred_pairs();
    Polynomial a = p1, b = p2;
    if (a.empty() || b.empty()) {
        auto it = pairs.find(degree);
        if (it == pairs.end()) throw UnsupportedParameterError("no preferred pair tabulated for degree " + std::to_string(degree));
        if (a.empty()) a = it->second.first;
        if (b.empty()) b = it->second.second;
    }
    if (a.front() != b.front()) throw UnsupportedParameterError("Gold polynomials must share a degree");
    if (member >= gold_family_size(a.front())) throw UnsupportedParameterError("Gold member index out of range");
    const auto u = lfsr::bits(a);
    const auto v = lfsr::bits(b);
    if (member == 0) return detail::to_bipolar(u);
    if (member == 1) return detail::to_bipolar(v);
    return detail::to_bipolar(detail::xor_shift(u, v, member - 2));
}

/// One period of a small-set Kasami member. Member 0 is the m-sequence u,
/// member 1 + k is u xor (w shifted by k), w = u decimated by 2^(d/2) + 1.
inline cvec kasami_period(int degree, std::size_t member, const Polynomial& poly = {}) {
    if (degree % 2 != 0) throw UnsupportedParameterError("Kasami small set needs an even degree");
    Polynomial p = poly;
    if (p.empty()) {
        auto it = lfsr::primitive_table().find(degree);
        if (it == lfsr::primitive_table().end()) throw UnsupportedParameterError("no primitive polynomial tabulated");
        p = it->second;
    }
    if (member >= kasami_family_size(degree)) throw UnsupportedParameterError("Kasami member index out of range");
    const auto u = lfsr::bits(p);
    if (member == 0) return detail::to_bipolar(u);
    const std::size_t q = (std::size_t{1} << (degree / 2)) + 1;
    const std::size_t wlen = (std::size_t{1} << (degree / 2)) - 1;
    std::vector<std::uint8_t> w(wlen);
    for (std::size_t i = 0; i < wlen; ++i) w[i] = u[(i * q) % u.size()];
    return detail::to_bipolar(detail::xor_shift(u, w, member - 1));
}

inline cvec generate(const WaveformSpec& spec) {
    const std::size_t n = spec.length;
    if (n < 2) throw UnsupportedParameterError("waveform length must be >= 2");
    switch (spec.kind) {
        case WaveformKind::RandomPolyphase: {
            std::mt19937_64 rng(spec.seed);
            std::uniform_real_distribution<double> u(0.0, kTwoPi);
            cvec x(n);
            for (auto& z : x) z = std::polar(1.0, u(rng));
            return x;
        }
        case WaveformKind::RandomBinary: {
            std::mt19937_64 rng(spec.seed);
            cvec x(n);
            for (auto& z : x) z = (rng() & 1u) ? -1.0 : 1.0;
            return x;
        }
        case WaveformKind::Barker: {
            static const std::map<std::size_t, std::vector<int>> codes = {
                {2, {1, -1}},
                {3, {1, 1, -1}},
                {4, {1, 1, -1, 1}},
                {5, {1, 1, 1, -1, 1}},
                {7, {1, 1, 1, -1, -1, 1, -1}},
                {11, {1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1}},
                {13, {1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1}},
            };
            auto it = codes.find(n);
            if (it == codes.end()) throw UnsupportedParameterError("no Barker code of length " + std::to_string(n));
            return cvec(it->second.begin(), it->second.end());
        }
        case WaveformKind::Frank: {
            std::size_t k = 0;
            if (!detail::is_square(n, k)) throw UnsupportedParameterError("Frank code length must be a perfect square");
            cvec x(n);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t q = 0; q < k; ++q) {
                    const std::size_t pq = (p * q) % k;
                    // Exact values on the axes keep the binary case binary.
                    if (2 * pq == k) x[p * k + q] = -1.0;
                    else if (pq == 0) x[p * k + q] = 1.0;
                    else x[p * k + q] = std::polar(1.0, kTwoPi * static_cast<double>(pq) / static_cast<double>(k));
                }
            return x;
        }
        case WaveformKind::Golomb: {
            cvec x(n);
            const double nd = static_cast<double>(n);
            for (std::size_t i = 1; i <= n; ++i) {
                // (i-1)i/2 mod n keeps the phase argument small for long codes.
                const std::size_t tri = ((i - 1) * i / 2) % n;
                x[i - 1] = std::polar(1.0, kTwoPi * static_cast<double>(tri) / nd);
            }
            return x;
        }
        case WaveformKind::MSequence: {
            Polynomial p = spec.polynomial;
            if (p.empty()) {
                const int d = spec.degree ? spec.degree : lfsr::degree_for(n);
                auto it = lfsr::primitive_table().find(d);
                if (it == lfsr::primitive_table().end())
                    throw UnsupportedParameterError("no primitive polynomial tabulated for degree " + std::to_string(d));
                p = it->second;
            }
            return detail::periodic_take(detail::to_bipolar(lfsr::bits(p)), n);
        }
        case WaveformKind::Gold: {
            int d = spec.degree;
            if (!spec.polynomial.empty()) d = spec.polynomial.front();
            if (d == 0) {
                d = lfsr::degree_for(n);
                if (d % 4 == 0) ++d;
            }
            return detail::periodic_take(gold_period(d, spec.member, spec.polynomial, spec.polynomial2), n);
        }
        case WaveformKind::Kasami: {
            int d = spec.degree;
            if (!spec.polynomial.empty()) d = spec.polynomial.front();
            if (d == 0) {
                d = lfsr::degree_for(n, 4);
                if (d % 2) ++d;
            }
            return detail::periodic_take(kasami_period(d, spec.member, spec.polynomial), n);
        }
        case WaveformKind::UpLFM:
        case WaveformKind::DownLFM: {
            const double sign = spec.kind == WaveformKind::UpLFM ? 1.0 : -1.0;
            cvec x(n);
            for (std::size_t i = 0; i < n; ++i) {
                // n^2 mod 2N is exact in integers and keeps the argument in [0, 2pi).
                const std::size_t r = (i * i) % (2 * n);
                x[i] = std::polar(1.0, sign * kPi * static_cast<double>(r) / static_cast<double>(n));
            }
            return x;
        }
    }
    throw UnsupportedParameterError("unhandled waveform kind");
}

/// M-row set for a kind. Random kinds draw consecutive rows from one seeded
/// stream, Gold/Kasami take consecutive family members, the LFM pair
/// alternates up and down chirps, fixed codes are cyclically shifted by N/M.
inline SequenceSet generate_set(const WaveformSpec& spec, std::size_t m) {
    if (m == 0) throw UnsupportedParameterError("need at least one row");
    std::vector<cvec> rows;
    switch (spec.kind) {
        case WaveformKind::RandomPolyphase:
        case WaveformKind::RandomBinary: {
            WaveformSpec s = spec;
            s.length = spec.length * m;
            const auto all = generate(s);
            for (std::size_t r = 0; r < m; ++r)
                rows.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(r * spec.length),
                                  all.begin() + static_cast<std::ptrdiff_t>((r + 1) * spec.length));
            break;
        }
        case WaveformKind::Gold:
        case WaveformKind::Kasami:
            for (std::size_t r = 0; r < m; ++r) {
                WaveformSpec s = spec;
                s.member = spec.member + r;
                rows.push_back(generate(s));
            }
            break;
        case WaveformKind::UpLFM:
        case WaveformKind::DownLFM:
            for (std::size_t r = 0; r < m; ++r) {
                WaveformSpec s = spec;
                const bool flip = r % 2 == 1;
                if (flip) s.kind = spec.kind == WaveformKind::UpLFM ? WaveformKind::DownLFM : WaveformKind::UpLFM;
                rows.push_back(generate(s));
            }
            break;
        default: {
            const auto base = generate(spec);
            for (std::size_t r = 0; r < m; ++r) {
                cvec row(base.size());
                const std::size_t shift = r * base.size() / m;
                for (std::size_t i = 0; i < base.size(); ++i) row[i] = base[(i + shift) % base.size()];
                rows.push_back(std::move(row));
            }
        }
    }
    return SequenceSet::from_rows(rows);
}

}  // namespace coexist
