#pragma once

#include <random>

#include "coexist/scene.hpp"
#include "coexist/sequence.hpp"

namespace fixtures {

inline coexist::RadarTimingConfig chapter_timing() { return {}; }

inline coexist::TargetSpec target1() { return {2e-6, 0.2, 25.0, 30.0}; }
inline coexist::TargetSpec target2() { return {2.6e-6, -0.25, 15.0, 35.0}; }

inline coexist::SequenceSet polyphase(std::size_t m, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, coexist::kTwoPi);
    coexist::cvec x(m * n);
    for (auto& z : x) z = std::polar(1.0, u(rng));
    return coexist::SequenceSet(m, n, x);
}

}  // namespace fixtures
