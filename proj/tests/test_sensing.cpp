#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "coexist/comm_link.hpp"
#include "coexist/sensing.hpp"
#include "coexist/socket_transport.hpp"
#include "oracles.hpp"

using namespace coexist;

namespace {

constexpr double kFs = 40e6;

cvec tone(std::size_t n, double cycles_per_sample, double amp = 1.0) {
    cvec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::polar(amp, 2.0 * oracle::kPi * cycles_per_sample * double(i));
    return x;
}

cvec noise(std::size_t n, double power, std::uint64_t seed) {
    cvec x(n);
    std::mt19937_64 rng(seed);
    add_noise(x, to_db(power), rng);
    return x;
}

/// Downlink resampled onto the 40 MS/s sensing grid plus receiver noise.
cvec sensed_downlink(const std::string& bits, double noise_db, std::uint64_t seed) {
    const auto dl = build_downlink(AllocationBitmap(bits), mcs_preset(10), 20.0, 1, seed);
    auto x = resample_subframes(dl.signal, lte::kSampleRate, kFs);
    std::mt19937_64 rng(seed + 1);
    add_noise(x, noise_db, rng);
    return x;
}

OccupancyChart chapter_chart() {
    OccupancyChart c;
    c.timestamp = 42;
    c.start_hz = -20e6;
    c.resolution_hz = 1e6;
    c.cells.assign(40, 0);
    for (int i = 11; i <= 19; ++i) c.cells[i] = 1;
    for (int i = 24; i <= 28; ++i) c.cells[i] = 1;
    return c;
}

std::vector<std::size_t> busy_cells(const OccupancyChart& c) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < c.cells.size(); ++i)
        if (c.cells[i]) out.push_back(i);
    return out;
}

}  // namespace

TEST(SpectralEstimate, UnitToneReadsZeroDbfsAtItsBin) {
    const std::size_t seg = 1280;
    const auto x = tone(seg, 10.0 / seg);
    const auto est = estimate_spectrum(x, kFs, 0.0, WindowKind::Rectangle, seg, 1);
    const auto db = est.power_db();
    const auto peak = static_cast<std::size_t>(std::max_element(db.begin(), db.end()) - db.begin());
    EXPECT_EQ(peak, est.index_of_dft_bin(10));
    EXPECT_NEAR(db[peak], 0.0, 0.01);
    EXPECT_NEAR(est.frequency(peak), 10 * kFs / seg, 1e-6);
    EXPECT_NEAR(est.bin_spacing(), 31250.0, 1e-9);
    // Windowed estimates also peak at 0 dBfs for an on-bin tone.
    for (auto w : {WindowKind::Hamming, WindowKind::Blackman}) {
        const auto e = estimate_spectrum(x, kFs, 0.0, w, seg, 1);
        EXPECT_NEAR(to_db(e.power[e.index_of_dft_bin(10)]), 0.0, 0.1);
    }
}

TEST(SpectralEstimate, AveragingShrinksVariance) {
    const std::size_t seg = 1024;
    const auto x = noise(seg * 100, 1.0, 77);
    auto variance = [](const rvec& p) {
        double m = 0, v = 0;
        for (double q : p) m += q;
        m /= p.size();
        for (double q : p) v += (q - m) * (q - m);
        return v / p.size();
    };
    const double v1 = variance(estimate_spectrum(x, kFs, 0, WindowKind::Rectangle, seg, 1).power);
    const double v100 = variance(estimate_spectrum(x, kFs, 0, WindowKind::Rectangle, seg, 100).power);
    EXPECT_NEAR(v1 / v100, 100.0, 20.0);
}

TEST(SpectralEstimate, BlackmanMergesTonesOneBinApartAndMatchesDirectDft) {
    const std::size_t seg = 256;
    // Quadrature tones; in-phase ones cancel on the shared bins.
    auto x = tone(seg, 10.0 / seg);
    const auto y = tone(seg, 11.0 / seg);
    for (std::size_t i = 0; i < seg; ++i) x[i] += cplx(0, 1) * y[i];
    const auto est = estimate_spectrum(x, kFs, 0, WindowKind::Blackman, seg, 1);

    const auto w = make_window(WindowKind::Blackman, seg);
    oracle::cvec xw(seg);
    double ws = 0;
    for (std::size_t i = 0; i < seg; ++i) {
        xw[i] = x[i] * w[i];
        ws += w[i];
    }
    for (long k = 0; k < 24; ++k) {
        const double direct = std::norm(oracle::dft_bin(xw, static_cast<std::size_t>(k), seg)) / (ws * ws);
        EXPECT_NEAR(est.power[est.index_of_dft_bin(k)], direct, 1e-9 * std::max(direct, 1e-6));
    }
    // Count rise-to-fall turns across the joint mainlobe, bins 7..14.
    int maxima = 0;
    int last = 0;
    for (long k = 7; k < 14; ++k) {
        const double d = est.power[est.index_of_dft_bin(k + 1)] - est.power[est.index_of_dft_bin(k)];
        const int sign = std::abs(d) < 1e-9 ? 0 : (d > 0 ? 1 : -1);
        if (sign == 0) continue;
        if (last > 0 && sign < 0) ++maxima;
        last = sign;
    }
    EXPECT_EQ(maxima, 1);
    // A single on-bin tone: Blackman mainlobe spans bins 8..12, rectangle only bin 10.
    const auto single = tone(seg, 10.0 / seg);
    const auto b = estimate_spectrum(single, kFs, 0, WindowKind::Blackman, seg, 1);
    const auto r = estimate_spectrum(single, kFs, 0, WindowKind::Rectangle, seg, 1);
    const double peak = b.power[b.index_of_dft_bin(10)];
    for (long k = 8; k <= 12; ++k) EXPECT_GT(b.power[b.index_of_dft_bin(k)], peak * 1e-3) << k;
    EXPECT_LT(r.power[r.index_of_dft_bin(9)], 1e-20);
    EXPECT_LT(r.power[r.index_of_dft_bin(11)], 1e-20);
}

TEST(SpectralEstimate, ShortCaptureIsInsufficient) {
    EXPECT_THROW(estimate_spectrum(cvec(1000), kFs, 0, WindowKind::Hamming, 1280, 1), InsufficientDataError);
    EXPECT_THROW(estimate_spectrum(cvec(1280 * 3), kFs, 0, WindowKind::Hamming, 1280, 4), InsufficientDataError);
}

TEST(Occupancy, NoiseOnlyIsFree) {
    std::size_t busy = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto est = estimate_spectrum(noise(1280 * 16, 1e-4, seed), kFs, 0, SensingConfig{});
        for (double thr : {3.0, 6.0}) {
            const auto c = threshold_occupancy(est, thr, 1e6);
            busy += c.busy_count();
            total += c.cells.size();
        }
    }
    EXPECT_LT(double(busy) / double(total), 0.01);
}

TEST(Occupancy, FullDownlinkMarksCoveredCells) {
    const auto est = estimate_spectrum(sensed_downlink(std::string(25, '1'), -40.0, 3), kFs, 0, SensingConfig{});
    const auto c = threshold_occupancy(est, 6.0, 1e6);
    ASSERT_EQ(c.cells.size(), 40u);
    EXPECT_DOUBLE_EQ(c.start_hz, -20e6);
    EXPECT_DOUBLE_EQ(c.stop_hz(), 20e6);
    // 100 PRBs cover -9..+9 MHz: cells 11..28, one edge cell of slack each side.
    const auto b = busy_cells(c);
    ASSERT_FALSE(b.empty());
    EXPECT_NEAR(double(b.front()), 11.0, 1.0);
    EXPECT_NEAR(double(b.back()), 28.0, 1.0);
    EXPECT_EQ(b.back() - b.front() + 1, b.size());
}

TEST(Occupancy, ChapterBitmapGapDetected) {
    const auto est = estimate_spectrum(sensed_downlink("1111111111110000000111111", -40.0, 5), kFs, 0, SensingConfig{});
    const auto c = threshold_occupancy(est, 6.0, 1e6);
    // Allocated spans -9..-0.36 MHz and +4.695..+9 MHz; the gap is [-0.36, 4.695).
    for (int i = 11; i <= 18; ++i) EXPECT_EQ(c.cells[i], 1) << i;
    for (int i = 25; i <= 28; ++i) EXPECT_EQ(c.cells[i], 1) << i;
    for (int i = 20; i <= 23; ++i) EXPECT_EQ(c.cells[i], 0) << i;
    for (int i : {0, 5, 9, 31, 39}) EXPECT_EQ(c.cells[i], 0) << i;
}

TEST(Occupancy, RaisingThresholdNeverAddsBusyCells) {
    const auto est = estimate_spectrum(sensed_downlink("1010110011110000000111101", -30.0, 8), kFs, 0, SensingConfig{});
    auto prev = threshold_occupancy(est, 0.0, 1e6);
    for (double thr = 1.0; thr <= 40.0; thr += 1.0) {
        const auto c = threshold_occupancy(est, thr, 1e6);
        for (std::size_t i = 0; i < c.cells.size(); ++i) EXPECT_LE(c.cells[i], prev.cells[i]);
        prev = c;
    }
}

TEST(Occupancy, DeterministicForSameCapture) {
    const auto x = sensed_downlink("1111111111110000000111111", -40.0, 11);
    const auto a = threshold_occupancy(estimate_spectrum(x, kFs, 0, SensingConfig{}), 6.0, 1e6, 3);
    const auto b = threshold_occupancy(estimate_spectrum(x, kFs, 0, SensingConfig{}), 6.0, 1e6, 3);
    EXPECT_EQ(encode_occupancy(a), encode_occupancy(b));
}

TEST(Occupancy, ResolutionMustTileBins) {
    const auto est = estimate_spectrum(noise(1280, 1, 1), kFs, 0, WindowKind::Rectangle, 1280, 1);
    EXPECT_THROW(threshold_occupancy(est, 6, 1.1e6), ConfigurationError);
    EXPECT_THROW(threshold_occupancy(est, 6, 3e6), ConfigurationError);
    EXPECT_NO_THROW(threshold_occupancy(est, 6, 2e6));
}

TEST(Occupancy, ChartToMaskUsesWrappedNormalizedFrequency) {
    const auto mask = mask_from_chart(chapter_chart(), 0.0, 40e6);
    ASSERT_EQ(mask.bands().size(), 2u);
    EXPECT_NEAR(mask.bands()[0].lo, 0.1, 1e-12);
    EXPECT_NEAR(mask.bands()[0].hi, 0.225, 1e-12);
    EXPECT_NEAR(mask.bands()[1].lo, 0.775, 1e-12);
    EXPECT_NEAR(mask.bands()[1].hi, 1.0, 1e-12);
    // Cells outside the radar band are ignored.
    OccupancyChart wide = chapter_chart();
    wide.start_hz = -30e6;
    wide.cells.assign(60, 0);
    wide.cells[0] = wide.cells[59] = 1;
    EXPECT_TRUE(mask_from_chart(wide, 0.0, 40e6).empty());
}

TEST(Occupancy, StitchJoinsContiguousSweeps) {
    auto a = chapter_chart();
    auto b = chapter_chart();
    b.start_hz = 20e6;
    b.timestamp = 43;
    const auto s = stitch({a, b});
    EXPECT_EQ(s.cells.size(), 80u);
    EXPECT_EQ(s.timestamp, 43u);
    b.start_hz = 21e6;
    EXPECT_THROW(stitch({a, b}), ConfigurationError);
}

TEST(OccupancyWire, EmptyChartRoundTrips) {
    OccupancyChart empty;
    const auto bytes = encode_occupancy(empty);
    EXPECT_EQ(bytes.size(), kOccupancyHeaderBytes);
    EXPECT_EQ(decode_occupancy(bytes), empty);
}

TEST(OccupancyWire, FortyCellChartSizeAndEquality) {
    const auto c = chapter_chart();
    const auto bytes = encode_occupancy(c);
    EXPECT_EQ(bytes.size(), 34u + 40u);
    EXPECT_EQ(decode_occupancy(bytes), c);
}

TEST(OccupancyWire, MatchesGoldenFileBitExactly) {
    std::ifstream f(COEXIST_TEST_DATA "/occupancy_golden.bin", std::ios::binary);
    ASSERT_TRUE(f.good());
    io::Bytes golden((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    EXPECT_EQ(encode_occupancy(chapter_chart()), golden);
    EXPECT_EQ(decode_occupancy(golden), chapter_chart());
}

TEST(OccupancyWire, RejectsMalformedMessages) {
    auto bytes = encode_occupancy(chapter_chart());
    auto bad = bytes;
    bad[4] = 2;
    EXPECT_THROW(decode_occupancy(bad), FormatError);
    bad = bytes;
    bad.back() = 7;
    EXPECT_THROW(decode_occupancy(bad), FormatError);
    bytes.pop_back();
    EXPECT_THROW(decode_occupancy(bytes), FormatError);
}

TEST(OccupancyDelivery, ReceiverDiscardsStaleTimestamps) {
    OccupancyReceiver rx;
    auto c = chapter_chart();
    std::vector<io::Bytes> msgs;
    for (std::uint64_t ts : {1, 3, 2, 4, 4, 0}) {
        c.timestamp = ts;
        msgs.push_back(encode_occupancy(c));
    }
    std::vector<std::uint64_t> seen;
    for (const auto& m : msgs)
        if (auto got = rx.accept(m)) seen.push_back(got->timestamp);
    EXPECT_EQ(seen, (std::vector<std::uint64_t>{1, 3, 4}));
    EXPECT_EQ(rx.discarded(), 3u);
}

TEST(OccupancyDelivery, PublisherIsAtMostOncePerTickAndRetainsOnFailure) {
    QueueSink sink;
    OccupancyPublisher pub;
    auto c = chapter_chart();
    c.timestamp = 1;
    ASSERT_TRUE(pub.publish(c, sink).has_value());
    EXPECT_FALSE(pub.publish(c, sink).has_value());  // same tick again
    EXPECT_EQ(sink.queue.size(), 1u);

    sink.available = false;
    c.timestamp = 2;
    EXPECT_THROW(pub.publish(c, sink), DeliveryError);
    ASSERT_TRUE(pub.pending().has_value());
    EXPECT_EQ(pub.pending()->timestamp, 2u);

    sink.available = true;
    const auto ack = pub.flush(sink);
    ASSERT_TRUE(ack.has_value());
    EXPECT_EQ(ack->timestamp, 2u);
    EXPECT_EQ(ack->bytes, 74u);
    EXPECT_FALSE(pub.pending().has_value());
    EXPECT_EQ(decode_occupancy(sink.queue.back()).timestamp, 2u);
}

TEST(OccupancyDelivery, TcpLoopbackDeliversInOrderAndDropsStale) {
    TcpOccupancyListener listener(0);
    TcpSink sink("127.0.0.1", listener.port());
    auto c = chapter_chart();
    for (std::uint64_t ts : {5, 3, 7}) {
        c.timestamp = ts;
        sink.deliver(encode_occupancy(c));
    }
    ASSERT_TRUE(listener.wait_for(7, std::chrono::seconds(5)));
    EXPECT_EQ(listener.latest()->timestamp, 7u);
    EXPECT_EQ(listener.latest()->cells, c.cells);
    EXPECT_EQ(listener.discarded(), 1u);
}

TEST(OccupancyDelivery, TcpSinkWithoutListenerRaisesDeliveryError) {
    std::uint16_t port;
    {
        TcpOccupancyListener probe(0);
        port = probe.port();
    }
    TcpSink sink("127.0.0.1", port);
    EXPECT_THROW(sink.deliver(encode_occupancy(chapter_chart())), DeliveryError);
}
