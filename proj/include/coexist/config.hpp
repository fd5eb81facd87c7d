#pragma once

// Experiment configuration: one JSON document whose sections follow the radar,
// target and communication parameter tables, plus coupling, sensing, design,
// protocol and live-loop settings.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coexist/comm_link.hpp"
#include "coexist/costs.hpp"
#include "coexist/receiver.hpp"
#include "coexist/scene.hpp"
#include "coexist/sensing.hpp"
#include "coexist/waveform_library.hpp"

namespace coexist {

using json = nlohmann::json;

struct RadarConfig {
    double center_frequency_hz = 2e9;
    double real_time_bandwidth_hz = 40e6;
    std::size_t transmit_channels = 2;
    std::size_t receive_channels = 2;
    double transmit_power_dbm = 10.0;  // recorded, the emulator works in dBfs
    std::size_t transmit_code_length = 400;
    double duty_cycle = 0.5;
    double pulse_repetition_interval_s = 20e-6;
    std::size_t pulses_per_cpi = 50;
    double element_spacing_wavelengths = 0.5;
    WindowKind slow_time_window = WindowKind::Blackman;
    double receiver_noise_dbfs = -11.703;  // calibrated: Target 1 reads 22 dB with no interference
    std::size_t vicinity_cells = 11;
    std::size_t guard_cells = 3;
    double sinr_cap_db = 60.0;

    RadarTimingConfig timing() const {
        RadarTimingConfig t;
        t.sample_rate = real_time_bandwidth_hz;
        t.carrier = center_frequency_hz;
        t.pri = pulse_repetition_interval_s;
        t.duty_cycle = duty_cycle;
        t.pulses = pulses_per_cpi;
        t.code_length = transmit_code_length;
        return t;
    }
    ArrayGeometry geometry() const { return {transmit_channels, receive_channels, element_spacing_wavelengths}; }
    double range_resolution_m() const { return kSpeedOfLight / (2.0 * real_time_bandwidth_hz); }
    DetectorConfig detector(std::optional<std::size_t> expected) const {
        DetectorConfig d;
        d.vicinity = vicinity_cells;
        d.guard = guard_cells;
        d.sinr_cap_db = sinr_cap_db;
        d.expected = expected;
        return d;
    }
    bool operator==(const RadarConfig&) const = default;
};

struct TargetConfig {
    std::string name;
    double range_delay_s = 0.0;
    double normalized_doppler = 0.0;
    double angle_deg = 0.0;
    double attenuation_db = 0.0;

    TargetSpec spec() const { return {range_delay_s, normalized_doppler, angle_deg, attenuation_db}; }
    bool operator==(const TargetConfig&) const = default;
};

struct CommConfig {
    bool enabled = true;
    std::vector<int> mcs{0, 10, 17};
    double center_frequency_hz = 2e9;
    double bandwidth_hz = 20e6;
    std::vector<double> transmit_power_dbm{5.0, 10.0, 15.0, 20.0};
    std::string allocation_bitmap = "1111111111110000000111111";
    double full_scale_dbm = 20.0;  // power that reaches 0 dBfs with every PRB allocated
    std::size_t subframes_per_trial = 40;
    double receiver_noise_dbfs = -50.0;
    bool operator==(const CommConfig&) const = default;
};

struct WaveformConfig {
    WaveformKind initial = WaveformKind::RandomPolyphase;
    PhaseAlphabet alphabet = PhaseAlphabet::continuous();
    double theta_radar_selfish = 0.0;
    double theta_coexistence = 0.75;
    std::size_t max_sweeps = 300;
    double tolerance = 1e-6;
    unsigned oversampling = 2;

    DesignConfig design(double theta) const {
        DesignConfig d;
        d.theta = theta;
        d.alphabet = alphabet;
        d.max_sweeps = max_sweeps;
        d.tolerance = tolerance;
        return d;
    }
    bool operator==(const WaveformConfig&) const = default;
};

struct SensingSection {
    SensingConfig estimator;
    double receiver_noise_dbfs = -40.0;
    bool operator==(const SensingSection& o) const {
        return estimator.window == o.estimator.window && estimator.segment == o.estimator.segment &&
               estimator.averages == o.estimator.averages && estimator.threshold_db == o.estimator.threshold_db &&
               estimator.resolution_hz == o.estimator.resolution_hz && receiver_noise_dbfs == o.receiver_noise_dbfs;
    }
};

/// How strongly each system leaks into the other, and when the radar keys up.
struct CouplingConfig {
    double comm_to_radar_db = -0.286;  // gain applied to the downlink at the radar receiver
    double radar_to_comm_db = 9.036;   // gain applied to the summed radar emission at the UE
    double interference_angle_deg = 0.0;
    std::size_t radar_burst_cpis = 2;
    double burst_gap_min_s = 0.5e-3;
    double burst_gap_max_s = 3e-3;
    bool operator==(const CouplingConfig&) const = default;
};

struct ProtocolConfig {
    std::size_t trials = 5;
    std::uint64_t seed = 1;
    std::vector<int> steps{1, 2, 3, 4};
    std::size_t threads = 0;  // 0 = hardware concurrency; results do not depend on it
    bool operator==(const ProtocolConfig&) const = default;
};

struct LoopConfig {
    double ticks_per_second = 10.0;
    std::uint64_t seed = 7;
    double initial_theta = 0.0;
    int initial_mcs = 17;
    double initial_power_dbm = 20.0;
    std::size_t stream_queue = 256;  // per-subscriber backlog before old frames are dropped
    bool operator==(const LoopConfig&) const = default;
};

struct ExperimentConfig {
    RadarConfig radar;
    std::vector<TargetConfig> targets{{"Target 1", 2e-6, 0.2, 25.0, 30.0}, {"Target 2", 2.6e-6, -0.25, 15.0, 35.0}};
    CommConfig communication;
    WaveformConfig waveform;
    SensingSection sensing;
    CouplingConfig coupling;
    ProtocolConfig protocol;
    LoopConfig loop;

    void validate() const {
        const auto t = radar.timing();
        t.validate();
        radar.geometry().validate();
        if (radar.guard_cells % 2 == 0 || radar.vicinity_cells % 2 == 0 || radar.guard_cells >= radar.vicinity_cells)
            throw ConfigurationError("radar vicinity and guard cells must be odd with guard < vicinity");
        for (const auto& tg : targets) tg.spec().validate(t);
        for (int m : communication.mcs) (void)mcs_preset(m);
        (void)AllocationBitmap(communication.allocation_bitmap);
        if (communication.enabled && communication.subframes_per_trial == 0)
            throw ConfigurationError("subframes_per_trial must be >= 1");
        if (!(communication.bandwidth_hz > 0)) throw ConfigurationError("communication bandwidth must be > 0");
        waveform.design(waveform.theta_radar_selfish).validate();
        waveform.design(waveform.theta_coexistence).validate();
        if (waveform.oversampling < 1) throw ConfigurationError("oversampling must be >= 1");
        if (sensing.estimator.segment * sensing.estimator.averages > t.frame_samples())
            throw ConfigurationError("sensing needs segment x averages <= one CPI of samples");
        if (coupling.radar_burst_cpis < 1) throw ConfigurationError("radar_burst_cpis must be >= 1");
        if (!(coupling.burst_gap_min_s >= 0 && coupling.burst_gap_max_s >= coupling.burst_gap_min_s))
            throw ConfigurationError("burst gaps must satisfy 0 <= min <= max");
        if (protocol.trials < 1) throw ConfigurationError("protocol needs at least one trial");
        for (int s : protocol.steps)
            if (s < 1 || s > 4) throw ConfigurationError("protocol steps are numbered 1 to 4");
        if (!(loop.ticks_per_second > 0)) throw ConfigurationError("ticks_per_second must be > 0");
        (void)mcs_preset(loop.initial_mcs);
        if (!(loop.initial_theta >= 0 && loop.initial_theta <= 1)) throw ConfigurationError("initial_theta must lie in [0, 1]");
    }
    bool operator==(const ExperimentConfig&) const = default;
};

// ---- JSON -------------------------------------------------------------------

namespace detail {

/// Reads optional keys from an object and rejects any key it was not asked for.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigurationError(name_ + " must be a JSON object");
    }
    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigurationError(name_ + "." + key + ": " + e.what());
        }
    }
    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigurationError("unknown key " + name_ + "." + it.key());
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
    json j;
    const auto& r = c.radar;
    j["radar"] = {{"center_frequency_hz", r.center_frequency_hz},
                  {"real_time_bandwidth_hz", r.real_time_bandwidth_hz},
                  {"transmit_channels", r.transmit_channels},
                  {"receive_channels", r.receive_channels},
                  {"transmit_power_dbm", r.transmit_power_dbm},
                  {"transmit_code_length", r.transmit_code_length},
                  {"duty_cycle", r.duty_cycle},
                  {"pulse_repetition_interval_s", r.pulse_repetition_interval_s},
                  {"pulses_per_cpi", r.pulses_per_cpi},
                  {"element_spacing_wavelengths", r.element_spacing_wavelengths},
                  {"slow_time_window", std::string(to_string(r.slow_time_window))},
                  {"receiver_noise_dbfs", r.receiver_noise_dbfs},
                  {"vicinity_cells", r.vicinity_cells},
                  {"guard_cells", r.guard_cells},
                  {"sinr_cap_db", r.sinr_cap_db}};
    j["targets"] = json::array();
    for (const auto& t : c.targets)
        j["targets"].push_back({{"name", t.name},
                                {"range_delay_s", t.range_delay_s},
                                {"normalized_doppler", t.normalized_doppler},
                                {"angle_deg", t.angle_deg},
                                {"attenuation_db", t.attenuation_db}});
    const auto& m = c.communication;
    j["communication"] = {{"enabled", m.enabled},
                          {"mcs", m.mcs},
                          {"center_frequency_hz", m.center_frequency_hz},
                          {"bandwidth_hz", m.bandwidth_hz},
                          {"transmit_power_dbm", m.transmit_power_dbm},
                          {"allocation_bitmap", m.allocation_bitmap},
                          {"full_scale_dbm", m.full_scale_dbm},
                          {"subframes_per_trial", m.subframes_per_trial},
                          {"receiver_noise_dbfs", m.receiver_noise_dbfs}};
    const auto& w = c.waveform;
    j["waveform"] = {{"initial", std::string(to_string(w.initial))},
                     {"alphabet_levels", w.alphabet.is_discrete() ? w.alphabet.levels : 0u},
                     {"theta_radar_selfish", w.theta_radar_selfish},
                     {"theta_coexistence", w.theta_coexistence},
                     {"max_sweeps", w.max_sweeps},
                     {"tolerance", w.tolerance},
                     {"oversampling", w.oversampling}};
    const auto& s = c.sensing;
    j["sensing"] = {{"window", std::string(to_string(s.estimator.window))},
                    {"segment", s.estimator.segment},
                    {"averages", s.estimator.averages},
                    {"threshold_db", s.estimator.threshold_db},
                    {"resolution_hz", s.estimator.resolution_hz},
                    {"receiver_noise_dbfs", s.receiver_noise_dbfs}};
    const auto& k = c.coupling;
    j["coupling"] = {{"comm_to_radar_db", k.comm_to_radar_db},
                     {"radar_to_comm_db", k.radar_to_comm_db},
                     {"interference_angle_deg", k.interference_angle_deg},
                     {"radar_burst_cpis", k.radar_burst_cpis},
                     {"burst_gap_min_s", k.burst_gap_min_s},
                     {"burst_gap_max_s", k.burst_gap_max_s}};
    const auto& p = c.protocol;
    j["protocol"] = {{"trials", p.trials}, {"seed", p.seed}, {"steps", p.steps}, {"threads", p.threads}};
    const auto& l = c.loop;
    j["loop"] = {{"ticks_per_second", l.ticks_per_second},
                 {"seed", l.seed},
                 {"initial_theta", l.initial_theta},
                 {"initial_mcs", l.initial_mcs},
                 {"initial_power_dbm", l.initial_power_dbm},
                 {"stream_queue", l.stream_queue}};
    return j;
}

/// Missing keys keep their defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    detail::Section top(j, "config");
    if (const json* s = top.child("radar")) {
        detail::Section r(*s, "radar");
        auto& o = c.radar;
        std::string window(to_string(o.slow_time_window));
        r.get("center_frequency_hz", o.center_frequency_hz);
        r.get("real_time_bandwidth_hz", o.real_time_bandwidth_hz);
        r.get("transmit_channels", o.transmit_channels);
        r.get("receive_channels", o.receive_channels);
        r.get("transmit_power_dbm", o.transmit_power_dbm);
        r.get("transmit_code_length", o.transmit_code_length);
        r.get("duty_cycle", o.duty_cycle);
        r.get("pulse_repetition_interval_s", o.pulse_repetition_interval_s);
        r.get("pulses_per_cpi", o.pulses_per_cpi);
        r.get("element_spacing_wavelengths", o.element_spacing_wavelengths);
        r.get("slow_time_window", window);
        r.get("receiver_noise_dbfs", o.receiver_noise_dbfs);
        r.get("vicinity_cells", o.vicinity_cells);
        r.get("guard_cells", o.guard_cells);
        r.get("sinr_cap_db", o.sinr_cap_db);
        r.finish();
        o.slow_time_window = parse_window(window);
    }
    if (const json* s = top.child("targets")) {
        if (!s->is_array()) throw ConfigurationError("targets must be an array");
        c.targets.clear();
        for (std::size_t i = 0; i < s->size(); ++i) {
            detail::Section t((*s)[i], "targets[" + std::to_string(i) + "]");
            TargetConfig tc;
            tc.name = "Target " + std::to_string(i + 1);
            t.get("name", tc.name);
            t.get("range_delay_s", tc.range_delay_s);
            t.get("normalized_doppler", tc.normalized_doppler);
            t.get("angle_deg", tc.angle_deg);
            t.get("attenuation_db", tc.attenuation_db);
            t.finish();
            c.targets.push_back(tc);
        }
    }
    if (const json* s = top.child("communication")) {
        detail::Section m(*s, "communication");
        auto& o = c.communication;
        m.get("enabled", o.enabled);
        m.get("mcs", o.mcs);
        m.get("center_frequency_hz", o.center_frequency_hz);
        m.get("bandwidth_hz", o.bandwidth_hz);
        m.get("transmit_power_dbm", o.transmit_power_dbm);
        m.get("allocation_bitmap", o.allocation_bitmap);
        m.get("full_scale_dbm", o.full_scale_dbm);
        m.get("subframes_per_trial", o.subframes_per_trial);
        m.get("receiver_noise_dbfs", o.receiver_noise_dbfs);
        m.finish();
    }
    if (const json* s = top.child("waveform")) {
        detail::Section w(*s, "waveform");
        auto& o = c.waveform;
        std::string initial(to_string(o.initial));
        std::uint32_t levels = o.alphabet.is_discrete() ? o.alphabet.levels : 0;
        w.get("initial", initial);
        w.get("alphabet_levels", levels);
        w.get("theta_radar_selfish", o.theta_radar_selfish);
        w.get("theta_coexistence", o.theta_coexistence);
        w.get("max_sweeps", o.max_sweeps);
        w.get("tolerance", o.tolerance);
        w.get("oversampling", o.oversampling);
        w.finish();
        o.initial = parse_waveform_kind(initial);
        o.alphabet = levels ? PhaseAlphabet::discrete(levels) : PhaseAlphabet::continuous();
    }
    if (const json* s = top.child("sensing")) {
        detail::Section e(*s, "sensing");
        auto& o = c.sensing;
        std::string window(to_string(o.estimator.window));
        e.get("window", window);
        e.get("segment", o.estimator.segment);
        e.get("averages", o.estimator.averages);
        e.get("threshold_db", o.estimator.threshold_db);
        e.get("resolution_hz", o.estimator.resolution_hz);
        e.get("receiver_noise_dbfs", o.receiver_noise_dbfs);
        e.finish();
        o.estimator.window = parse_window(window);
    }
    if (const json* s = top.child("coupling")) {
        detail::Section k(*s, "coupling");
        auto& o = c.coupling;
        k.get("comm_to_radar_db", o.comm_to_radar_db);
        k.get("radar_to_comm_db", o.radar_to_comm_db);
        k.get("interference_angle_deg", o.interference_angle_deg);
        k.get("radar_burst_cpis", o.radar_burst_cpis);
        k.get("burst_gap_min_s", o.burst_gap_min_s);
        k.get("burst_gap_max_s", o.burst_gap_max_s);
        k.finish();
    }
    if (const json* s = top.child("protocol")) {
        detail::Section p(*s, "protocol");
        auto& o = c.protocol;
        p.get("trials", o.trials);
        p.get("seed", o.seed);
        p.get("steps", o.steps);
        p.get("threads", o.threads);
        p.finish();
    }
    if (const json* s = top.child("loop")) {
        detail::Section l(*s, "loop");
        auto& o = c.loop;
        l.get("ticks_per_second", o.ticks_per_second);
        l.get("seed", o.seed);
        l.get("initial_theta", o.initial_theta);
        l.get("initial_mcs", o.initial_mcs);
        l.get("initial_power_dbm", o.initial_power_dbm);
        l.get("stream_queue", o.stream_queue);
        l.finish();
    }
    top.finish();
    c.validate();
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigurationError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigurationError("cannot write config " + path);
    out << to_json(c).dump(2) << '\n';
    if (!out) throw ConfigurationError("write failed for " + path);
}

}  // namespace coexist
