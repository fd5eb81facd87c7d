#pragma once

// Emulated test bench: composes the downlink, the radar emission, the target
// scene and the cross-coupling between the two systems for one trial.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <vector>

#include "coexist/comm_link.hpp"
#include "coexist/config.hpp"
#include "coexist/fft.hpp"
#include "coexist/receiver.hpp"
#include "coexist/scene.hpp"
#include "coexist/sensing.hpp"
#include "coexist/sequence.hpp"
#include "coexist/waveform_library.hpp"

namespace coexist {

/// SplitMix64 finalizer; mixes a base seed with a tuple of tags.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(base);
    for (auto t : tags) h = mix(h ^ t);
    return h;
}

/// Start point for the designer: a library family, projected onto the alphabet.
inline SequenceSet initial_waveform(const ExperimentConfig& cfg, std::uint64_t seed) {
    WaveformSpec spec(cfg.waveform.initial, cfg.radar.transmit_code_length, seed);
    auto x = generate_set(spec, cfg.radar.transmit_channels);
    if (cfg.waveform.alphabet.is_discrete()) {
        cvec e = x.entries();
        for (auto& z : e) z = cfg.waveform.alphabet.project(z);
        x = SequenceSet(x.rows(), x.length(), e);
    }
    return x;
}

/// Rotates a stream by a constant frequency offset.
inline void frequency_shift(cvec& x, double offset_hz, double fs) {
    if (offset_hz == 0.0) return;
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] *= std::polar(1.0, kTwoPi * offset_hz * static_cast<double>(i) / fs);
}

class Bench {
public:
    explicit Bench(ExperimentConfig cfg) : cfg_(std::move(cfg)), timing_(cfg_.radar.timing()), geom_(cfg_.radar.geometry()) {
        cfg_.validate();
    }

    const ExperimentConfig& config() const { return cfg_; }
    const RadarTimingConfig& timing() const { return timing_; }
    const ArrayGeometry& geometry() const { return geom_; }
    double comm_offset_hz() const { return cfg_.communication.center_frequency_hz - cfg_.radar.center_frequency_hz; }

    Downlink downlink(const AllocationBitmap& alloc, int mcs, double power_dbm, std::size_t subframes,
                      std::uint64_t seed) const {
        return build_downlink(alloc, mcs_preset(mcs), power_dbm, subframes, seed, cfg_.communication.full_scale_dbm);
    }

    /// Downlink as seen on the radar's sample grid, shifted to its carrier offset.
    cvec downlink_at_radar(const cvec& signal) const {
        cvec x = signal;
        frequency_shift(x, comm_offset_hz(), lte::kSampleRate);
        return resample_subframes(x, lte::kSampleRate, timing_.sample_rate);
    }

    /// Averaged periodogram of one subframe of downlink plus sensing noise.
    SpectralEstimate sense_spectrum(const cvec& downlink_signal, std::uint64_t seed) const {
        cvec x = downlink_at_radar(downlink_signal);
        std::mt19937_64 rng(seed);
        add_noise(x, cfg_.sensing.receiver_noise_dbfs, rng);
        return estimate_spectrum(x, timing_.sample_rate, cfg_.radar.center_frequency_hz, cfg_.sensing.estimator);
    }

    OccupancyChart occupancy(const SpectralEstimate& est, std::uint64_t timestamp) const {
        return threshold_occupancy(est, cfg_.sensing.estimator.threshold_db, cfg_.sensing.estimator.resolution_hz,
                                   timestamp);
    }

    /// Energy-detector pass over one subframe of downlink.
    OccupancyChart sense(const cvec& downlink_signal, std::uint64_t timestamp, std::uint64_t seed) const {
        return occupancy(sense_spectrum(downlink_signal, seed), timestamp);
    }

    SpectralMask mask_for(const OccupancyChart& chart) const {
        return mask_from_chart(chart, cfg_.radar.center_frequency_hz, timing_.sample_rate, cfg_.waveform.oversampling);
    }

    /// All Tx channels summed as a single-antenna observer sees them, one CPI.
    cvec radar_emission(const SequenceSet& x) const {
        const auto frames = synthesize_frame(x, timing_);
        cvec sum(timing_.frame_samples());
        for (const auto& f : frames)
            for (std::size_t t = 0; t < sum.size(); ++t) sum[t] += f[t];
        return sum;
    }

    /// One CPI of emission resampled to the downlink rate and carrier.
    cvec radar_emission_at_comm(const SequenceSet& x) const {
        const cvec sum = radar_emission(x);
        const auto out_len = static_cast<std::size_t>(
            std::llround(static_cast<double>(sum.size()) * lte::kSampleRate / timing_.sample_rate));
        cvec y = fft::resample(sum, out_len);
        frequency_shift(y, -comm_offset_hz(), lte::kSampleRate);
        return y;
    }

    /// CPI start offsets (downlink samples) of a bursty radar: bursts of
    /// radar_burst_cpis back-to-back CPIs separated by uniform random gaps.
    std::vector<std::size_t> burst_schedule(std::size_t total_samples, std::size_t cpi_samples, std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        const auto& k = cfg_.coupling;
        std::uniform_real_distribution<double> gap(k.burst_gap_min_s, k.burst_gap_max_s);
        std::uniform_real_distribution<double> lead(0.0, k.burst_gap_max_s);
        std::vector<std::size_t> starts;
        auto pos = static_cast<std::size_t>(std::llround(lead(rng) * lte::kSampleRate));
        while (pos < total_samples) {
            for (std::size_t c = 0; c < k.radar_burst_cpis && pos < total_samples; ++c) {
                starts.push_back(pos);
                pos += cpi_samples;
            }
            pos += static_cast<std::size_t>(std::llround(gap(rng) * lte::kSampleRate));
        }
        return starts;
    }

    /// Radar leakage across a downlink capture of total_samples.
    cvec radar_timeline(const cvec& cpi, std::size_t total_samples, std::uint64_t seed) const {
        cvec out(total_samples);
        const double g = std::sqrt(from_db(cfg_.coupling.radar_to_comm_db));
        for (auto s : burst_schedule(total_samples, cpi.size(), seed)) {
            const std::size_t n = std::min(cpi.size(), total_samples - s);
            for (std::size_t i = 0; i < n; ++i) out[s + i] += g * cpi[i];
        }
        return out;
    }

    /// One link measurement: downlink, optional radar leakage, UE noise. The
    /// burst schedule has its own seed so different MCS can share it.
    LinkReport link_trial(const AllocationBitmap& alloc, int mcs, double power_dbm, const cvec* radar_cpi,
                          std::uint64_t seed, std::uint64_t schedule_seed) const {
        const std::size_t sf = cfg_.communication.subframes_per_trial;
        const auto dl = downlink(alloc, mcs, power_dbm, sf, derive_seed(seed, {1}));
        cvec rx = dl.signal;
        if (radar_cpi) {
            const cvec leak = radar_timeline(*radar_cpi, rx.size(), schedule_seed);
            for (std::size_t i = 0; i < rx.size(); ++i) rx[i] += leak[i];
        }
        std::mt19937_64 rng(derive_seed(seed, {3}));
        add_noise(rx, cfg_.communication.receiver_noise_dbfs, rng);
        return receive_link(dl.grid, rx);
    }

    /// Downlink arriving at the radar receiver, scaled by the coupling gain.
    InterferenceSpec comm_interference(const cvec& downlink_signal, std::uint64_t seed) const {
        InterferenceSpec spec;
        spec.samples = downlink_at_radar(downlink_signal);
        spec.sample_rate = timing_.sample_rate;
        const double p = energy(spec.samples) / static_cast<double>(spec.samples.size());
        spec.power_db = (p > 0 ? to_db(p) : -300.0) + cfg_.coupling.comm_to_radar_db;
        std::mt19937_64 rng(seed);
        spec.offset = std::uniform_int_distribution<std::size_t>(0, spec.samples.size() - 1)(rng);
        spec.angle_deg = cfg_.coupling.interference_angle_deg;
        return spec;
    }

    RxCapture capture(const SequenceSet& x, const std::optional<InterferenceSpec>& interference, std::uint64_t seed) const {
        const auto frames = synthesize_frame(x, timing_);
        std::vector<ChannelFrames> echoes;
        for (const auto& t : cfg_.targets) echoes.push_back(apply_target(frames, t.spec(), geom_, timing_));
        return mix_capture(echoes, timing_, geom_, interference, cfg_.radar.receiver_noise_dbfs, seed);
    }

    RadarReceiver receiver(const SequenceSet& x, std::size_t threads) const {
        RadarReceiver r;
        r.bank.set_waveform(x, timing_.samples_per_pri());
        r.window = cfg_.radar.slow_time_window;
        r.detector = cfg_.radar.detector(cfg_.targets.size());
        r.geometry = geom_;
        r.range_bin_m = cfg_.radar.range_resolution_m();
        r.threads = threads ? threads : default_threads();
        return r;
    }

private:
    ExperimentConfig cfg_;
    RadarTimingConfig timing_;
    ArrayGeometry geom_;
};

/// Per-target reading of one CPI.
struct TargetReading {
    std::size_t target_id = 0;  // 1-based, in config order
    bool detected = false;
    std::size_t range_bin = 0;
    std::size_t doppler_bin = 0;
    double sinr_db = 0.0;
    std::optional<double> angle_deg;
};

/// Matches detections to the configured targets. A detection within one cell
/// of the true (range, Doppler) claims the target; otherwise the strongest cell
/// in that neighbourhood is measured and the target is marked undetected.
inline std::vector<TargetReading> read_targets(const RadarReceiver::Output& out, const ExperimentConfig& cfg) {
    std::vector<TargetReading> readings;
    if (out.maps.empty()) return readings;
    const auto sum = noncoherent_sum(out.maps);
    const auto det_cfg = cfg.radar.detector(cfg.targets.size());
    const auto t = cfg.radar.timing();
    const auto nd = static_cast<double>(sum.doppler_bins);
    for (std::size_t i = 0; i < cfg.targets.size(); ++i) {
        const auto spec = cfg.targets[i].spec();
        const auto r0 = static_cast<double>(spec.delay_samples(t));
        const double d0 = spec.doppler * nd;
        auto near = [&](double d, double r) {
            double dd = std::fmod(std::abs(d - d0), nd);
            dd = std::min(dd, nd - dd);
            return std::abs(r - r0) <= 1.0 && dd <= 1.0;
        };
        TargetReading rd;
        rd.target_id = i + 1;
        for (const auto& det : out.detections) {
            if (near(static_cast<double>(det.doppler_bin), static_cast<double>(det.range_bin))) {
                rd.detected = true;
                rd.range_bin = det.range_bin;
                rd.doppler_bin = det.doppler_bin;
                rd.sinr_db = det.sinr_db;
                rd.angle_deg = det.angle_deg;
                break;
            }
        }
        if (!rd.detected) {
            double best = -1.0;
            for (long dr = -1; dr <= 1; ++dr) {
                const long r = static_cast<long>(r0) + dr;
                if (r < 0 || r >= static_cast<long>(sum.range_bins)) continue;
                for (long dd = -2; dd <= 2; ++dd) {
                    const long d = static_cast<long>(std::floor(d0)) + dd;
                    if (!near(static_cast<double>(d), static_cast<double>(r))) continue;
                    const auto dw = static_cast<std::size_t>(((d % static_cast<long>(nd)) + static_cast<long>(nd)) %
                                                             static_cast<long>(nd));
                    if (sum.at(dw, static_cast<std::size_t>(r)) > best) {
                        best = sum.at(dw, static_cast<std::size_t>(r));
                        rd.doppler_bin = dw;
                        rd.range_bin = static_cast<std::size_t>(r);
                    }
                }
            }
            const double ring = vicinity_mean(sum, rd.doppler_bin, rd.range_bin, det_cfg);
            rd.sinr_db = best > 0.0 ? capped_sinr_db(best, ring, det_cfg.sinr_cap_db) : -det_cfg.sinr_cap_db;
        }
        readings.push_back(rd);
    }
    return readings;
}

}  // namespace coexist
