#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "coexist/error.hpp"
#include "coexist/types.hpp"

namespace coexist {

enum class WindowKind { Rectangle, Hamming, Blackman };

inline std::string_view to_string(WindowKind w) {
    switch (w) {
        case WindowKind::Rectangle: return "rectangle";
        case WindowKind::Hamming: return "hamming";
        case WindowKind::Blackman: return "blackman";
    }
    return "rectangle";
}

inline WindowKind parse_window(std::string_view s) {
    if (s == "rectangle" || s == "rect") return WindowKind::Rectangle;
    if (s == "hamming") return WindowKind::Hamming;
    if (s == "blackman") return WindowKind::Blackman;
    throw ConfigurationError("unknown window kind: " + std::string(s));
}

/// Symmetric window of length n.
inline rvec make_window(WindowKind kind, std::size_t n) {
    rvec w(n, 1.0);
    if (n < 2 || kind == WindowKind::Rectangle) return w;
    const double d = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = kTwoPi * static_cast<double>(i) / d;
        if (kind == WindowKind::Hamming)
            w[i] = 0.54 - 0.46 * std::cos(x);
        else
            w[i] = 0.42 - 0.5 * std::cos(x) + 0.08 * std::cos(2.0 * x);
    }
    // Blackman endpoints evaluate to ~-1e-17.
    for (auto& v : w) v = std::max(v, 0.0);
    return w;
}

}  // namespace coexist
