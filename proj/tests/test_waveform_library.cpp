#include <gtest/gtest.h>

#include <set>

#include "coexist/costs.hpp"
#include "coexist/waveform_library.hpp"
#include "oracles.hpp"

using namespace coexist;

namespace {

/// Periodic correlation sum_n a[n] conj(b[(n+k) mod P]), by direct loop.
double periodic_corr(const cvec& a, const cvec& b, std::size_t k) {
    cplx acc{};
    for (std::size_t n = 0; n < a.size(); ++n) acc += a[n] * std::conj(b[(n + k) % b.size()]);
    EXPECT_NEAR(acc.imag(), 0.0, 1e-9);
    return acc.real();
}

std::set<long> cross_values(const cvec& a, const cvec& b, bool skip_zero_lag) {
    std::set<long> v;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (skip_zero_lag && k == 0) continue;
        v.insert(std::lround(periodic_corr(a, b, k)));
    }
    return v;
}

}  // namespace

TEST(WaveformLibrary, BarkerThirteenMatchesTableAndPeakSidelobe) {
    const auto x = generate({WaveformKind::Barker, 13});
    const cvec expected = {1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1};
    EXPECT_EQ(x, expected);
    for (std::size_t n : {2u, 3u, 4u, 5u, 7u, 11u, 13u}) {
        const auto b = generate({WaveformKind::Barker, n});
        for (long k = 1; k < static_cast<long>(n); ++k)
            EXPECT_LE(std::abs(oracle::correlation_at(b, b, k)), 1.0 + 1e-12) << "N=" << n << " k=" << k;
    }
    EXPECT_THROW(generate({WaveformKind::Barker, 6}), UnsupportedParameterError);
}

TEST(WaveformLibrary, FrankFourIsTwoByTwoDft) {
    EXPECT_EQ(generate({WaveformKind::Frank, 4}), (cvec{1, 1, 1, -1}));
    const auto f = generate({WaveformKind::Frank, 16});
    EXPECT_NEAR(std::abs(f[5] - cplx(0, 1)), 0.0, 1e-12);  // p = q = 1, K = 4
    EXPECT_THROW(generate({WaveformKind::Frank, 12}), UnsupportedParameterError);
}

TEST(WaveformLibrary, GolombPhases) {
    const std::size_t n = 7;
    const auto x = generate({WaveformKind::Golomb, n});
    for (std::size_t i = 1; i <= n; ++i) {
        const double phi = oracle::kPi * double((i - 1) * i) / double(n);
        EXPECT_NEAR(std::abs(x[i - 1] - std::polar(1.0, phi)), 0.0, 1e-12);
    }
    EXPECT_NO_THROW(generate({WaveformKind::Golomb, 2}));
}

TEST(WaveformLibrary, MSequenceDegreeFourIsIdealPeriodic) {
    WaveformSpec s{WaveformKind::MSequence, 15};
    s.polynomial = {4, 1};
    const auto x = generate(s);
    int sum = 0;
    for (const auto& z : x) {
        EXPECT_TRUE(z == cplx(1.0) || z == cplx(-1.0));
        sum += static_cast<int>(z.real());
    }
    EXPECT_EQ(std::abs(sum), 1);
    EXPECT_NEAR(periodic_corr(x, x, 0), 15.0, 1e-12);
    for (std::size_t k = 1; k < 15; ++k) EXPECT_NEAR(periodic_corr(x, x, k), -1.0, 1e-12) << k;
}

TEST(WaveformLibrary, TabulatedPolynomialsAreMaximalLength) {
    for (const auto& [d, poly] : lfsr::primitive_table()) {
        const auto x = detail::to_bipolar(lfsr::bits(poly));
        int sum = 0;
        for (const auto& z : x) sum += static_cast<int>(z.real());
        EXPECT_EQ(std::abs(sum), 1) << d;
        for (std::size_t k = 1; k < x.size(); k += 1 + x.size() / 50)
            EXPECT_NEAR(periodic_corr(x, x, k), -1.0, 1e-9) << d << " lag " << k;
    }
}

TEST(WaveformLibrary, PreferredPairsTakeThreeValues) {
    for (const auto& [d, pair] : lfsr::preferred_pairs()) {
        const auto u = detail::to_bipolar(lfsr::bits(pair.first));
        const auto v = detail::to_bipolar(lfsr::bits(pair.second));
        const long t = (1L << ((d + 2) / 2)) + 1;
        const std::set<long> allowed = {-1, -t, t - 2};
        for (long c : cross_values(u, v, false)) EXPECT_TRUE(allowed.count(c)) << "degree " << d << " value " << c;
    }
}

TEST(WaveformLibrary, GoldDegreeFiveExhaustive) {
    const int d = 5;
    const std::set<long> allowed = {-1, -9, 7};
    std::vector<cvec> fam;
    for (std::size_t i = 0; i < gold_family_size(d); ++i) fam.push_back(gold_period(d, i));
    ASSERT_EQ(fam.size(), 33u);
    for (std::size_t a = 0; a < fam.size(); ++a)
        for (std::size_t b = 0; b < fam.size(); ++b)
            for (long c : cross_values(fam[a], fam[b], a == b))
                EXPECT_TRUE(allowed.count(c)) << a << "," << b << " -> " << c;
}

TEST(WaveformLibrary, KasamiSmallSetDegreeSixExhaustive) {
    const int d = 6;
    const std::set<long> allowed = {-1, -9, 7};
    std::vector<cvec> fam;
    for (std::size_t i = 0; i < kasami_family_size(d); ++i) fam.push_back(kasami_period(d, i));
    ASSERT_EQ(fam.size(), 8u);
    for (std::size_t a = 0; a < fam.size(); ++a)
        for (std::size_t b = 0; b < fam.size(); ++b)
            for (long c : cross_values(fam[a], fam[b], a == b))
                EXPECT_TRUE(allowed.count(c)) << a << "," << b << " -> " << c;
    EXPECT_THROW(kasami_period(5, 0), UnsupportedParameterError);
}

TEST(WaveformLibrary, LfmChirpsAreConjugates) {
    const auto up = generate({WaveformKind::UpLFM, 64});
    const auto down = generate({WaveformKind::DownLFM, 64});
    for (std::size_t n = 0; n < 64; ++n) {
        EXPECT_NEAR(std::abs(up[n] - std::polar(1.0, oracle::kPi * double(n * n) / 64.0)), 0.0, 1e-9);
        EXPECT_NEAR(std::abs(down[n] - std::conj(up[n])), 0.0, 1e-12);
    }
}

TEST(WaveformLibrary, EveryKindIsUnitModulusAndTruncatesPeriodically) {
    for (auto kind : kAllWaveformKinds) {
        WaveformSpec s{kind, kind == WaveformKind::Barker ? 13u : (kind == WaveformKind::Frank ? 400u : 400u), 7};
        const auto x = generate(s);
        ASSERT_EQ(x.size(), s.length) << to_string(kind);
        for (const auto& z : x) EXPECT_NEAR(std::abs(z), 1.0, 1e-12) << to_string(kind);
        EXPECT_EQ(parse_waveform_kind(to_string(kind)), kind);
        EXPECT_NO_THROW(generate_set(s, 2));
    }
    WaveformSpec g{WaveformKind::Gold, 40};
    g.degree = 5;
    const auto x = generate(g);
    for (std::size_t i = 31; i < 40; ++i) EXPECT_EQ(x[i], x[i - 31]);
    EXPECT_THROW(parse_waveform_kind("zadoff-chu"), UnsupportedParameterError);
}

TEST(WaveformLibrary, RandomKindsAreSeededAndBinaryIsBipolar) {
    WaveformSpec s{WaveformKind::RandomBinary, 100, 3};
    EXPECT_EQ(generate(s), generate(s));
    for (const auto& z : generate(s)) EXPECT_TRUE(z == cplx(1.0) || z == cplx(-1.0));
    WaveformSpec p{WaveformKind::RandomPolyphase, 100, 3};
    auto q = p;
    q.seed = 4;
    EXPECT_NE(generate(p), generate(q));
    const auto set = generate_set(p, 2);
    EXPECT_NE(std::vector<cplx>(set.row(0).begin(), set.row(0).end()),
              std::vector<cplx>(set.row(1).begin(), set.row(1).end()));
}
