#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "coexist/error.hpp"
#include "coexist/types.hpp"

namespace coexist {

/// Phase alphabet of a constant-modulus code: either the whole circle or the
/// L-ary set {0, 2pi/L, ..., 2pi(L-1)/L}.
struct PhaseAlphabet {
    enum class Kind : std::uint8_t { Continuous = 0, Discrete = 1 };

    Kind kind = Kind::Continuous;
    std::uint32_t levels = 0;  // L, Discrete only

    static PhaseAlphabet continuous() { return {}; }
    static PhaseAlphabet discrete(std::uint32_t l) { return {Kind::Discrete, l}; }

    bool is_discrete() const { return kind == Kind::Discrete; }

    void validate() const {
        if (is_discrete() && levels < 2)
            throw ConfigurationError("discrete phase alphabet needs L >= 2");
    }

    /// Phase of level l; exact grid value 2*pi*l/L.
    double level_phase(std::uint32_t l) const {
        return kTwoPi * static_cast<double>(l) / static_cast<double>(levels);
    }

    cplx level_value(std::uint32_t l) const { return std::polar(1.0, level_phase(l)); }

    /// Nearest level index of a unit-modulus value.
    std::uint32_t nearest_level(cplx z) const {
        double ph = std::arg(z);
        if (ph < 0) ph += kTwoPi;
        auto l = static_cast<std::int64_t>(std::llround(ph * levels / kTwoPi));
        return static_cast<std::uint32_t>(l % levels);
    }

    bool contains(cplx z, double tol = 1e-9) const {
        if (std::abs(std::abs(z) - 1.0) > tol) return false;
        if (!is_discrete()) return true;
        return std::abs(z - level_value(nearest_level(z))) <= tol;
    }

    /// Snaps a unit-modulus value onto the alphabet.
    cplx project(cplx z) const {
        if (!is_discrete()) return std::polar(1.0, std::arg(z));
        return level_value(nearest_level(z));
    }

    std::string describe() const {
        return is_discrete() ? "discrete(L=" + std::to_string(levels) + ")" : "continuous";
    }

    bool operator==(const PhaseAlphabet&) const = default;
};

/// M x N matrix of unit-modulus chips; row m is the code of transmitter m.
class SequenceSet {
public:
    static constexpr double kModulusTolerance = 1e-9;

    SequenceSet(std::size_t m, std::size_t n, cvec entries) : m_(m), n_(n), x_(std::move(entries)) {
        if (m_ < 1) throw ConfigurationError("SequenceSet: M must be >= 1");
        if (n_ < 2) throw ConfigurationError("SequenceSet: N must be >= 2");
        if (x_.size() != m_ * n_) throw LengthMismatchError("SequenceSet: entry count != M*N");
        for (const auto& z : x_)
            if (!(std::abs(std::abs(z) - 1.0) <= kModulusTolerance))
                throw ConfigurationError("SequenceSet: entry violates unit modulus");
    }

    /// Single-row set.
    explicit SequenceSet(const cvec& row) : SequenceSet(1, row.size(), row) {}

    static SequenceSet from_rows(const std::vector<cvec>& rows) {
        if (rows.empty()) throw ConfigurationError("SequenceSet: no rows");
        cvec all;
        for (const auto& r : rows) {
            if (r.size() != rows.front().size()) throw LengthMismatchError("SequenceSet: ragged rows");
            all.insert(all.end(), r.begin(), r.end());
        }
        return SequenceSet(rows.size(), rows.front().size(), std::move(all));
    }

    std::size_t rows() const { return m_; }
    std::size_t length() const { return n_; }

    std::span<const cplx> row(std::size_t m) const { return {x_.data() + m * n_, n_}; }
    cplx operator()(std::size_t m, std::size_t n) const { return x_[m * n_ + n]; }
    const cvec& entries() const { return x_; }

    /// Replaces one chip; the value must stay on the unit circle.
    void set(std::size_t m, std::size_t n, cplx z) {
        if (!(std::abs(std::abs(z) - 1.0) <= kModulusTolerance))
            throw ConfigurationError("SequenceSet: entry violates unit modulus");
        x_[m * n_ + n] = z;
    }

    bool satisfies(const PhaseAlphabet& a) const {
        for (const auto& z : x_)
            if (!a.contains(z)) return false;
        return true;
    }

    bool operator==(const SequenceSet&) const = default;

private:
    std::size_t m_;
    std::size_t n_;
    cvec x_;
};

}  // namespace coexist
