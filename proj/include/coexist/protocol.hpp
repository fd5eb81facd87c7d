#pragma once

// Four-step measurement protocol (clean link, radar alone, concurrent
// transmission with theta = 0, co-existence with the sensed mask), its result
// record and CSV / JSON persistence.

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coexist/bench.hpp"
#include "coexist/config.hpp"
#include "coexist/optimizer.hpp"

namespace coexist {

struct LinkRecord {
    std::size_t trial = 0;
    int step = 0;
    int mcs = 0;
    double power_dbm = 0.0;
    double theta = 0.0;
    double ack_rate = 0.0;
    double throughput_mbps = 0.0;
    double mean_sinr_db = 0.0;
    bool operator==(const LinkRecord&) const = default;
};

struct TargetRecord {
    std::size_t trial = 0;
    int step = 0;
    std::optional<int> mcs;  // unset for the radar-only step
    std::optional<double> power_dbm;
    double theta = 0.0;
    std::size_t target_id = 0;
    double sinr_db = 0.0;
    bool detected = false;
    std::size_t range_bin = 0;
    std::size_t doppler_bin = 0;
    std::optional<double> angle_deg;
    bool operator==(const TargetRecord&) const = default;
};

struct LinkAggregate {
    int step = 0;
    int mcs = 0;
    double power_dbm = 0.0;
    double theta = 0.0;
    std::size_t trials = 0;
    double ack_rate = 0.0;
    double throughput_mbps = 0.0;
    bool operator==(const LinkAggregate&) const = default;
};

struct TargetAggregate {
    int step = 0;
    std::optional<int> mcs;
    std::optional<double> power_dbm;
    double theta = 0.0;
    std::size_t target_id = 0;
    std::size_t trials = 0;
    double sinr_db = 0.0;         // mean of the per-trial dB values
    double sinr_linear_db = 0.0;  // dB of the mean linear ratio
    double detection_rate = 0.0;
    bool operator==(const TargetAggregate&) const = default;
};

struct DesignSummary {
    double theta = 0.0;
    std::vector<MaskBand> mask;
    ObjectiveReport start;
    ObjectiveReport final;
    std::size_t sweeps = 0;
    bool operator==(const DesignSummary& o) const {
        auto same = [](const ObjectiveReport& a, const ObjectiveReport& b) {
            return a.spectral == b.spectral && a.correlation == b.correlation && a.scalarized == b.scalarized &&
                   a.sweep == b.sweep && a.epoch == b.epoch;
        };
        return theta == o.theta && mask == o.mask && same(start, o.start) && same(final, o.final) && sweeps == o.sweeps;
    }
};

struct ExperimentRun {
    std::string id;
    std::uint64_t seed = 0;
    ExperimentConfig config;
    std::optional<OccupancyChart> sensed;  // chart behind the co-existence mask
    std::vector<DesignSummary> designs;
    std::vector<LinkRecord> links;
    std::vector<TargetRecord> targets;
    std::vector<LinkAggregate> link_aggregates;
    std::vector<TargetAggregate> target_aggregates;
    bool complete = false;
    std::optional<std::string> failure;
    bool operator==(const ExperimentRun&) const = default;

    const LinkAggregate* link(int step, int mcs, double power) const {
        for (const auto& a : link_aggregates)
            if (a.step == step && a.mcs == mcs && a.power_dbm == power) return &a;
        return nullptr;
    }
    const TargetAggregate* target(int step, std::size_t id, std::optional<int> mcs = {},
                                  std::optional<double> power = {}) const {
        for (const auto& a : target_aggregates)
            if (a.step == step && a.target_id == id && a.mcs == mcs && a.power_dbm == power) return &a;
        return nullptr;
    }
};

inline void aggregate(ExperimentRun& run) {
    run.link_aggregates.clear();
    run.target_aggregates.clear();
    for (const auto& r : run.links) {
        auto it = std::find_if(run.link_aggregates.begin(), run.link_aggregates.end(), [&](const LinkAggregate& a) {
            return a.step == r.step && a.mcs == r.mcs && a.power_dbm == r.power_dbm;
        });
        if (it == run.link_aggregates.end()) {
            run.link_aggregates.push_back({r.step, r.mcs, r.power_dbm, r.theta, 0, 0.0, 0.0});
            it = std::prev(run.link_aggregates.end());
        }
        ++it->trials;
        it->ack_rate += r.ack_rate;
        it->throughput_mbps += r.throughput_mbps;
    }
    for (auto& a : run.link_aggregates) {
        a.ack_rate /= static_cast<double>(a.trials);
        a.throughput_mbps /= static_cast<double>(a.trials);
    }
    std::vector<double> linear;
    for (const auto& r : run.targets) {
        auto it = std::find_if(run.target_aggregates.begin(), run.target_aggregates.end(), [&](const TargetAggregate& a) {
            return a.step == r.step && a.mcs == r.mcs && a.power_dbm == r.power_dbm && a.target_id == r.target_id;
        });
        if (it == run.target_aggregates.end()) {
            TargetAggregate a;
            a.step = r.step;
            a.mcs = r.mcs;
            a.power_dbm = r.power_dbm;
            a.theta = r.theta;
            a.target_id = r.target_id;
            run.target_aggregates.push_back(a);
            linear.push_back(0.0);
            it = std::prev(run.target_aggregates.end());
        }
        const auto idx = static_cast<std::size_t>(it - run.target_aggregates.begin());
        ++it->trials;
        it->sinr_db += r.sinr_db;
        linear[idx] += from_db(r.sinr_db);
        it->detection_rate += r.detected ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < run.target_aggregates.size(); ++i) {
        auto& a = run.target_aggregates[i];
        const auto n = static_cast<double>(a.trials);
        a.sinr_db /= n;
        a.sinr_linear_db = to_db(linear[i] / n);
        a.detection_rate /= n;
    }
}

/// Test and tooling hooks. before_step may throw to emulate a component
/// failure; progress receives one line per finished setting.
struct ProtocolHooks {
    std::function<void(int step)> before_step;
    std::function<void(const std::string&)> progress;
};

/// Mean of dB values; an empty list reads 0.
inline double mean_db(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

namespace detail {
enum SeedTag : std::uint64_t { kDesignSeed = 11, kLinkSeed = 12, kRadarSeed = 13, kSenseSeed = 14, kCommSeed = 15, kScheduleSeed = 16 };

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline DesignSummary summarize(double theta, const SpectralMask& mask, const DesignResult& r) {
    return {theta, mask.bands(), r.trace.front(), r.trace.back(), r.trace.back().sweep};
}
}  // namespace detail

/// Designs the theta = selfish waveform exactly as the protocol does.
inline std::pair<SequenceSet, DesignSummary> design_selfish(const ExperimentConfig& cfg) {
    const auto x0 = initial_waveform(cfg, derive_seed(cfg.protocol.seed, {detail::kDesignSeed}));
    const SpectralMask none({}, cfg.waveform.oversampling);
    auto res = optimize(x0, none, cfg.waveform.design(cfg.waveform.theta_radar_selfish));
    auto summary = detail::summarize(cfg.waveform.theta_radar_selfish, none, res);
    return {std::move(res.sequences), summary};
}

/// Sensed chart of the configured downlink, as used for the co-existence mask.
inline OccupancyChart sense_for_protocol(const Bench& bench) {
    const auto& cfg = bench.config();
    const auto& comm = cfg.communication;
    std::uint64_t seed = cfg.protocol.seed;
    cvec signal(lte::kSubframeSamples);
    if (comm.enabled && !comm.mcs.empty() && !comm.transmit_power_dbm.empty()) {
        // The weakest configured carrier is the hardest to see.
        const double p = *std::min_element(comm.transmit_power_dbm.begin(), comm.transmit_power_dbm.end());
        signal = bench.downlink(AllocationBitmap(comm.allocation_bitmap), comm.mcs.front(), p, 1,
                                derive_seed(seed, {detail::kSenseSeed, 1}))
                     .signal;
    }
    return bench.sense(signal, 0, derive_seed(seed, {detail::kSenseSeed, 2}));
}

inline ExperimentRun run_protocol(const ExperimentConfig& cfg, const ProtocolHooks& hooks = {}) {
    ExperimentRun run;
    run.config = cfg;
    run.seed = cfg.protocol.seed;
    run.id = "run-" + std::to_string(cfg.protocol.seed);
    auto note = [&](const std::string& s) {
        if (hooks.progress) hooks.progress(s);
    };
    try {
        const Bench bench(cfg);
        const std::set<int> steps(cfg.protocol.steps.begin(), cfg.protocol.steps.end());
        const auto& comm = cfg.communication;
        const AllocationBitmap alloc(comm.allocation_bitmap);
        const std::uint64_t seed = cfg.protocol.seed;
        const std::size_t trials = cfg.protocol.trials;
        const double th_sel = cfg.waveform.theta_radar_selfish;
        const double th_coex = cfg.waveform.theta_coexistence;

        auto link_seed = [&](int mcs, std::size_t pi, std::size_t trial) {
            return derive_seed(seed, {detail::kLinkSeed, static_cast<std::uint64_t>(mcs), pi, trial});
        };
        auto schedule_seed = [&](std::size_t pi, std::size_t trial) {
            return derive_seed(seed, {detail::kScheduleSeed, pi, trial});
        };
        auto radar_seed = [&](std::uint64_t setting, std::size_t trial) {
            return derive_seed(seed, {detail::kRadarSeed, setting, trial});
        };
        auto push_targets = [&](const RadarReceiver::Output& out, std::size_t trial, int step, std::optional<int> mcs,
                                std::optional<double> power, double theta) {
            for (const auto& rd : read_targets(out, cfg))
                run.targets.push_back({trial, step, mcs, power, theta, rd.target_id, rd.sinr_db, rd.detected,
                                       rd.range_bin, rd.doppler_bin, rd.angle_deg});
        };

        std::optional<SequenceSet> x_sel;
        if (steps.count(2) || steps.count(3)) {
            auto [x, summary] = design_selfish(cfg);
            x_sel = std::move(x);
            run.designs.push_back(summary);
            note("designed theta=" + detail::fmt(th_sel) + " in " + std::to_string(summary.sweeps) + " sweeps");
        }

        if (steps.count(1)) {
            if (hooks.before_step) hooks.before_step(1);
            if (comm.enabled)
                for (int mcs : comm.mcs)
                    for (std::size_t pi = 0; pi < comm.transmit_power_dbm.size(); ++pi)
                        for (std::size_t t = 0; t < trials; ++t) {
                            const double p = comm.transmit_power_dbm[pi];
                            const auto rep = bench.link_trial(alloc, mcs, p, nullptr, link_seed(mcs, pi, t), 0);
                            run.links.push_back({t, 1, mcs, p, 0.0, rep.ack_rate(), rep.throughput_mbps(),
                                                 mean_db(rep.sinr_db)});
                        }
            note("step 1 done");
        }

        if (steps.count(2)) {
            if (hooks.before_step) hooks.before_step(2);
            const auto rcv = bench.receiver(*x_sel, cfg.protocol.threads);
            for (std::size_t t = 0; t < trials; ++t)
                push_targets(rcv.process(bench.capture(*x_sel, std::nullopt, radar_seed(0, t))), t, 2, std::nullopt,
                             std::nullopt, th_sel);
            note("step 2 done");
        }

        // Steps 3 and 4 share every random draw so they differ only in the waveform.
        auto concurrent = [&](int step, const SequenceSet& x, double theta) {
            const auto rcv = bench.receiver(x, cfg.protocol.threads);
            const cvec cpi = bench.radar_emission_at_comm(x);
            for (int mcs : comm.mcs)
                for (std::size_t pi = 0; pi < comm.transmit_power_dbm.size(); ++pi) {
                    const double p = comm.transmit_power_dbm[pi];
                    for (std::size_t t = 0; t < trials; ++t) {
                        std::optional<InterferenceSpec> interf;
                        if (comm.enabled) {
                            const auto ls = link_seed(mcs, pi, t);
                            const auto rep = bench.link_trial(alloc, mcs, p, &cpi, ls, schedule_seed(pi, t));
                            run.links.push_back({t, step, mcs, p, theta, rep.ack_rate(), rep.throughput_mbps(),
                                                 mean_db(rep.sinr_db)});
                            const auto dl = bench.downlink(alloc, mcs, p, 1, derive_seed(ls, {detail::kCommSeed}));
                            interf = bench.comm_interference(dl.signal, derive_seed(ls, {detail::kCommSeed, 1}));
                        }
                        const auto setting = static_cast<std::uint64_t>(mcs) * 1000 + pi + 1;
                        push_targets(rcv.process(bench.capture(x, interf, radar_seed(setting, t))), t, step, mcs, p,
                                     theta);
                    }
                    note("step " + std::to_string(step) + " mcs " + std::to_string(mcs) + " power " +
                         detail::fmt(p) + " dBm done");
                }
        };

        if (steps.count(3)) {
            if (hooks.before_step) hooks.before_step(3);
            concurrent(3, *x_sel, th_sel);
        }

        if (steps.count(4)) {
            if (hooks.before_step) hooks.before_step(4);
            run.sensed = sense_for_protocol(bench);
            const auto mask = bench.mask_for(*run.sensed);
            const auto x0 = initial_waveform(cfg, derive_seed(seed, {detail::kDesignSeed}));
            auto res = optimize(x0, mask, cfg.waveform.design(th_coex));
            run.designs.push_back(detail::summarize(th_coex, mask, res));
            note("designed theta=" + detail::fmt(th_coex) + " against " + std::to_string(mask.bands().size()) +
                 " stopbands");
            concurrent(4, res.sequences, th_coex);
        }
        run.complete = true;
    } catch (const std::exception& e) {
        run.complete = false;
        run.failure = e.what();
    }
    aggregate(run);
    return run;
}

// ---- calibration ------------------------------------------------------------

struct CalibrationGoals {
    double target1_sinr_db = 22.0;   // radar alone, first target
    double inr_db = 10.0;            // downlink over radar noise at the strongest power
    double full_overlap_sir_db = -5.5;  // downlink over radar on allocated REs, theta = selfish
};

struct CalibrationResult {
    double radar_noise_dbfs = 0.0;
    double comm_to_radar_db = 0.0;
    double radar_to_comm_db = 0.0;
    double target1_sinr_db = 0.0;  // achieved mean over the protocol trials
};

/// Mean first-target SINR over the protocol's radar-only trials.
inline double radar_only_target_sinr(const ExperimentConfig& cfg, const SequenceSet& x, std::size_t target = 0) {
    const Bench bench(cfg);
    const auto rcv = bench.receiver(x, cfg.protocol.threads);
    double s = 0.0;
    for (std::size_t t = 0; t < cfg.protocol.trials; ++t) {
        const auto seed = derive_seed(cfg.protocol.seed, {detail::kRadarSeed, 0, t});
        s += read_targets(rcv.process(bench.capture(x, std::nullopt, seed)), cfg).at(target).sinr_db;
    }
    return s / static_cast<double>(cfg.protocol.trials);
}

/// Fits radar noise, then both coupling gains, against the selfish waveform.
inline CalibrationResult calibrate(ExperimentConfig cfg, const CalibrationGoals& goals = {}) {
    cfg.validate();
    if (cfg.targets.empty()) throw ConfigurationError("calibration needs at least one target");
    const auto x = design_selfish(cfg).first;
    CalibrationResult out;

    // Target SINR falls monotonically with noise (up to estimator jitter).
    double lo = -60.0, hi = 20.0;
    for (int it = 0; it < 24; ++it) {
        const double mid = 0.5 * (lo + hi);
        cfg.radar.receiver_noise_dbfs = mid;
        (radar_only_target_sinr(cfg, x) > goals.target1_sinr_db ? lo : hi) = mid;
    }
    out.radar_noise_dbfs = 0.5 * (lo + hi);
    cfg.radar.receiver_noise_dbfs = out.radar_noise_dbfs;
    out.target1_sinr_db = radar_only_target_sinr(cfg, x);

    const Bench bench(cfg);
    const auto& comm = cfg.communication;
    const double p_max = comm.transmit_power_dbm.empty()
                             ? comm.full_scale_dbm
                             : *std::max_element(comm.transmit_power_dbm.begin(), comm.transmit_power_dbm.end());
    const AllocationBitmap alloc(comm.allocation_bitmap);
    const int mcs = comm.mcs.empty() ? 0 : comm.mcs.front();
    const auto dl = bench.downlink(alloc, mcs, p_max, 1, derive_seed(cfg.protocol.seed, {detail::kCommSeed, 99}));
    const cvec at_radar = bench.downlink_at_radar(dl.signal);
    const double p_dl = energy(at_radar) / static_cast<double>(at_radar.size());
    out.comm_to_radar_db = out.radar_noise_dbfs + goals.inr_db - to_db(p_dl);

    // Equalized radar leakage per allocated RE, in units of the RE power.
    const cvec cpi = bench.radar_emission_at_comm(x);
    const auto eq = demodulate(dl.grid, std::span<const cplx>(cpi.data(), lte::kSubframeSamples));
    double i_re = 0.0;
    for (const auto& z : eq.front()) i_re += std::norm(z);
    i_re /= static_cast<double>(eq.front().size());
    out.radar_to_comm_db = -to_db(i_re) - goals.full_overlap_sir_db;
    return out;
}

inline void apply_calibration(ExperimentConfig& cfg, const CalibrationResult& c) {
    cfg.radar.receiver_noise_dbfs = c.radar_noise_dbfs;
    cfg.coupling.comm_to_radar_db = c.comm_to_radar_db;
    cfg.coupling.radar_to_comm_db = c.radar_to_comm_db;
}

// ---- CSV --------------------------------------------------------------------

inline constexpr const char* kCsvHeader = "trial,step,mcs,power_dBm,theta,ack_rate,throughput_mbps,target_id,sinr_db";

/// One CSV line; link rows leave the radar columns empty and vice versa.
struct CsvRow {
    std::size_t trial = 0;
    int step = 0;
    std::optional<int> mcs;
    std::optional<double> power_dbm;
    double theta = 0.0;
    std::optional<double> ack_rate;
    std::optional<double> throughput_mbps;
    std::optional<std::size_t> target_id;
    std::optional<double> sinr_db;
    bool operator==(const CsvRow&) const = default;
};

inline std::vector<CsvRow> csv_rows(const ExperimentRun& run) {
    std::vector<CsvRow> rows;
    for (const auto& r : run.links)
        rows.push_back({r.trial, r.step, r.mcs, r.power_dbm, r.theta, r.ack_rate, r.throughput_mbps, {}, {}});
    for (const auto& r : run.targets)
        rows.push_back({r.trial, r.step, r.mcs, r.power_dbm, r.theta, {}, {}, r.target_id, r.sinr_db});
    return rows;
}

namespace detail {
template <typename T>
std::string fmt_opt(const std::optional<T>& v) {
    if (!v) return {};
    if constexpr (std::is_floating_point_v<T>) return fmt(*v);
    else return std::to_string(*v);
}
template <typename T>
T parse_num(std::string_view s, int line) {
    T v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("CSV line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}
template <typename T>
std::optional<T> parse_opt(std::string_view s, int line) {
    if (s.empty()) return std::nullopt;
    return parse_num<T>(s, line);
}
}  // namespace detail

inline std::string export_csv(const ExperimentRun& run) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : csv_rows(run)) {
        out += std::to_string(r.trial) + "," + std::to_string(r.step) + "," + detail::fmt_opt(r.mcs) + "," +
               detail::fmt_opt(r.power_dbm) + "," + detail::fmt(r.theta) + "," + detail::fmt_opt(r.ack_rate) + "," +
               detail::fmt_opt(r.throughput_mbps) + "," + detail::fmt_opt(r.target_id) + "," +
               detail::fmt_opt(r.sinr_db) + "\n";
    }
    return out;
}

inline std::vector<CsvRow> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("CSV header does not match the result schema");
    std::vector<CsvRow> rows;
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (;;) {
            const auto c = rest.find(',');
            f.push_back(rest.substr(0, c));
            if (c == std::string_view::npos) break;
            rest.remove_prefix(c + 1);
        }
        if (f.size() != 9) throw FormatError("CSV line " + std::to_string(n) + ": expected 9 fields");
        CsvRow r;
        r.trial = detail::parse_num<std::size_t>(f[0], n);
        r.step = detail::parse_num<int>(f[1], n);
        r.mcs = detail::parse_opt<int>(f[2], n);
        r.power_dbm = detail::parse_opt<double>(f[3], n);
        r.theta = detail::parse_num<double>(f[4], n);
        r.ack_rate = detail::parse_opt<double>(f[5], n);
        r.throughput_mbps = detail::parse_opt<double>(f[6], n);
        r.target_id = detail::parse_opt<std::size_t>(f[7], n);
        r.sinr_db = detail::parse_opt<double>(f[8], n);
        rows.push_back(r);
    }
    return rows;
}

// ---- JSON -------------------------------------------------------------------

namespace detail {
template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}
template <typename T>
std::optional<T> opt_get(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<T>();
}
inline json report_json(const ObjectiveReport& r) {
    return {{"spectral", r.spectral},
            {"correlation", r.correlation},
            {"scalarized", r.scalarized},
            {"sweep", r.sweep},
            {"epoch", r.epoch}};
}
inline ObjectiveReport report_from(const json& j) {
    ObjectiveReport r;
    r.spectral = j.at("spectral").get<double>();
    r.correlation = j.at("correlation").get<double>();
    r.scalarized = j.at("scalarized").get<double>();
    r.sweep = j.at("sweep").get<std::size_t>();
    r.epoch = j.at("epoch").get<std::size_t>();
    return r;
}
inline json bands_json(const std::vector<MaskBand>& bands) {
    json a = json::array();
    for (const auto& b : bands) a.push_back({b.lo, b.hi, b.weight});
    return a;
}
inline std::vector<MaskBand> bands_from(const json& j) {
    std::vector<MaskBand> out;
    for (const auto& b : j) out.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<int>()});
    return out;
}
inline json chart_json(const OccupancyChart& c) {
    return {{"timestamp", c.timestamp}, {"start_hz", c.start_hz}, {"resolution_hz", c.resolution_hz}, {"cells", c.cells}};
}
inline OccupancyChart chart_from(const json& j) {
    OccupancyChart c;
    c.timestamp = j.at("timestamp").get<std::uint64_t>();
    c.start_hz = j.at("start_hz").get<double>();
    c.resolution_hz = j.at("resolution_hz").get<double>();
    c.cells = j.at("cells").get<std::vector<std::uint8_t>>();
    return c;
}
}  // namespace detail

inline json run_to_json(const ExperimentRun& run) {
    using detail::opt;
    json j;
    j["format"] = "coexist-run";
    j["version"] = 1;
    j["id"] = run.id;
    j["seed"] = run.seed;
    j["complete"] = run.complete;
    j["failure"] = opt(run.failure);
    j["config"] = to_json(run.config);
    j["sensed"] = run.sensed ? detail::chart_json(*run.sensed) : json(nullptr);
    j["designs"] = json::array();
    for (const auto& d : run.designs)
        j["designs"].push_back({{"theta", d.theta},
                                {"mask", detail::bands_json(d.mask)},
                                {"start", detail::report_json(d.start)},
                                {"final", detail::report_json(d.final)},
                                {"sweeps", d.sweeps}});
    j["links"] = json::array();
    for (const auto& r : run.links)
        j["links"].push_back({{"trial", r.trial},
                              {"step", r.step},
                              {"mcs", r.mcs},
                              {"power_dBm", r.power_dbm},
                              {"theta", r.theta},
                              {"ack_rate", r.ack_rate},
                              {"throughput_mbps", r.throughput_mbps},
                              {"mean_sinr_db", r.mean_sinr_db}});
    j["targets"] = json::array();
    for (const auto& r : run.targets)
        j["targets"].push_back({{"trial", r.trial},
                                {"step", r.step},
                                {"mcs", opt(r.mcs)},
                                {"power_dBm", opt(r.power_dbm)},
                                {"theta", r.theta},
                                {"target_id", r.target_id},
                                {"sinr_db", r.sinr_db},
                                {"detected", r.detected},
                                {"range_bin", r.range_bin},
                                {"doppler_bin", r.doppler_bin},
                                {"angle_deg", opt(r.angle_deg)}});
    j["aggregates"]["links"] = json::array();
    for (const auto& a : run.link_aggregates)
        j["aggregates"]["links"].push_back({{"step", a.step},
                                            {"mcs", a.mcs},
                                            {"power_dBm", a.power_dbm},
                                            {"theta", a.theta},
                                            {"trials", a.trials},
                                            {"ack_rate", a.ack_rate},
                                            {"throughput_mbps", a.throughput_mbps}});
    j["aggregates"]["targets"] = json::array();
    for (const auto& a : run.target_aggregates)
        j["aggregates"]["targets"].push_back({{"step", a.step},
                                              {"mcs", opt(a.mcs)},
                                              {"power_dBm", opt(a.power_dbm)},
                                              {"theta", a.theta},
                                              {"target_id", a.target_id},
                                              {"trials", a.trials},
                                              {"sinr_db", a.sinr_db},
                                              {"sinr_linear_db", a.sinr_linear_db},
                                              {"detection_rate", a.detection_rate}});
    return j;
}

inline ExperimentRun run_from_json(const json& j) {
    using detail::opt_get;
    try {
        if (j.at("format") != "coexist-run" || j.at("version") != 1) throw FormatError("not a version-1 run document");
        ExperimentRun run;
        run.id = j.at("id").get<std::string>();
        run.seed = j.at("seed").get<std::uint64_t>();
        run.complete = j.at("complete").get<bool>();
        run.failure = opt_get<std::string>(j, "failure");
        run.config = config_from_json(j.at("config"));
        if (!j.at("sensed").is_null()) run.sensed = detail::chart_from(j.at("sensed"));
        for (const auto& d : j.at("designs"))
            run.designs.push_back({d.at("theta").get<double>(), detail::bands_from(d.at("mask")),
                                   detail::report_from(d.at("start")), detail::report_from(d.at("final")),
                                   d.at("sweeps").get<std::size_t>()});
        for (const auto& r : j.at("links"))
            run.links.push_back({r.at("trial").get<std::size_t>(), r.at("step").get<int>(), r.at("mcs").get<int>(),
                                 r.at("power_dBm").get<double>(), r.at("theta").get<double>(),
                                 r.at("ack_rate").get<double>(), r.at("throughput_mbps").get<double>(),
                                 r.at("mean_sinr_db").get<double>()});
        for (const auto& r : j.at("targets"))
            run.targets.push_back({r.at("trial").get<std::size_t>(), r.at("step").get<int>(), opt_get<int>(r, "mcs"),
                                   opt_get<double>(r, "power_dBm"), r.at("theta").get<double>(),
                                   r.at("target_id").get<std::size_t>(), r.at("sinr_db").get<double>(),
                                   r.at("detected").get<bool>(), r.at("range_bin").get<std::size_t>(),
                                   r.at("doppler_bin").get<std::size_t>(), opt_get<double>(r, "angle_deg")});
        for (const auto& a : j.at("aggregates").at("links"))
            run.link_aggregates.push_back({a.at("step").get<int>(), a.at("mcs").get<int>(),
                                           a.at("power_dBm").get<double>(), a.at("theta").get<double>(),
                                           a.at("trials").get<std::size_t>(), a.at("ack_rate").get<double>(),
                                           a.at("throughput_mbps").get<double>()});
        for (const auto& a : j.at("aggregates").at("targets"))
            run.target_aggregates.push_back({a.at("step").get<int>(), opt_get<int>(a, "mcs"),
                                             opt_get<double>(a, "power_dBm"), a.at("theta").get<double>(),
                                             a.at("target_id").get<std::size_t>(), a.at("trials").get<std::size_t>(),
                                             a.at("sinr_db").get<double>(), a.at("sinr_linear_db").get<double>(),
                                             a.at("detection_rate").get<double>()});
        return run;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed run document: ") + e.what());
    }
}

inline std::string export_json(const ExperimentRun& run) { return run_to_json(run).dump(2) + "\n"; }

inline ExperimentRun parse_run(const std::string& text) {
    try {
        return run_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("run document is not valid JSON: ") + e.what());
    }
}

/// Writes text to a file, surfacing any I/O failure.
inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << text;
    out.flush();
    if (!out) throw FormatError("write failed for " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace coexist
