#pragma once

// Closed cognitive loop: sense -> update mask -> one optimizer sweep ->
// transmit -> receive -> measure, one CPI per tick. Commands are queued from
// any thread and applied at the start of the next tick; every tick emits a
// batch of tagged frames for the stream.

#include <cmath>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "coexist/bench.hpp"
#include "coexist/config.hpp"
#include "coexist/optimizer.hpp"
#include "coexist/sensing.hpp"

namespace coexist {

struct Command {
    std::string type;  // theta | bitmap | mcs | power | waveform | pause | resume
    json value;

    static Command from_json(const json& j) {
        if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
            throw ConfigurationError("command must be an object with a string 'type'");
        return {j["type"].get<std::string>(), j.value("value", json(nullptr))};
    }
    json to_json() const { return {{"type", type}, {"value", value}}; }
};

struct Frame {
    std::string kind;  // spectrum | occupancy | rdmap | link | objective | error
    std::uint64_t tick = 0;
    json payload;

    json to_json() const { return {{"kind", kind}, {"tick", tick}, {"payload", payload}}; }
    std::string ndjson() const { return to_json().dump() + "\n"; }
};

struct MaskUpdate {
    std::uint64_t tick = 0;
    std::uint64_t chart_timestamp = 0;
    std::vector<MaskBand> bands;
};

struct HealthFlags {
    bool sensing = true;
    bool optimizer = true;
    bool receiver = true;
    bool link = true;
};

/// Copy of the loop state that other threads may read.
struct LoopSnapshot {
    std::uint64_t tick = 0;
    double theta = 0.0;
    std::string bitmap;
    int mcs = 0;
    double power_dbm = 0.0;
    std::string waveform = "designed";
    bool paused = false;
    std::vector<MaskBand> mask;
    std::uint64_t mask_timestamp = 0;
    ObjectiveReport objective;
    bool converged = false;
    HealthFlags health;
    std::vector<MaskUpdate> mask_log;
};

namespace detail {
inline double round_to(double v, double step) { return std::round(v / step) * step; }

inline json bands_to_json(const std::vector<MaskBand>& bands) {
    json a = json::array();
    for (const auto& b : bands) a.push_back({{"lo", b.lo}, {"hi", b.hi}, {"weight", b.weight}});
    return a;
}
}  // namespace detail

inline json snapshot_json(const LoopSnapshot& s) {
    json log = json::array();
    for (const auto& m : s.mask_log)
        log.push_back({{"tick", m.tick}, {"chart_timestamp", m.chart_timestamp}, {"bands", detail::bands_to_json(m.bands)}});
    return {{"tick", s.tick},
            {"theta", s.theta},
            {"bitmap", s.bitmap},
            {"mcs", s.mcs},
            {"power_dbm", s.power_dbm},
            {"waveform", s.waveform},
            {"paused", s.paused},
            {"mask", {{"timestamp", s.mask_timestamp}, {"bands", detail::bands_to_json(s.mask)}}},
            {"objective",
             {{"spectral", s.objective.spectral},
              {"correlation", s.objective.correlation},
              {"scalarized", s.objective.scalarized},
              {"sweep", s.objective.sweep},
              {"epoch", s.objective.epoch},
              {"converged", s.converged}}},
            {"health",
             {{"sensing", s.health.sensing},
              {"optimizer", s.health.optimizer},
              {"receiver", s.health.receiver},
              {"link", s.health.link}}},
            {"mask_log", log}};
}

class CognitiveLoop {
public:
    explicit CognitiveLoop(const ExperimentConfig& cfg)
        : bench_(cfg),
          seed_(cfg.loop.seed),
          theta_(cfg.loop.initial_theta),
          bitmap_(cfg.communication.allocation_bitmap),
          mcs_(cfg.loop.initial_mcs),
          power_(cfg.loop.initial_power_dbm),
          optimizer_(initial_waveform(cfg, derive_seed(cfg.loop.seed, {kDesignTag})),
                     SpectralMask({}, cfg.waveform.oversampling), cfg.waveform.design(cfg.loop.initial_theta)) {
        publish_snapshot();
    }

    const ExperimentConfig& config() const { return bench_.config(); }

    /// Empty when the command is acceptable, otherwise the reason.
    std::optional<std::string> check(const Command& c) const {
        try {
            parse(c);
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::nullopt;
    }

    /// Thread-safe; applied at the start of the next tick.
    void enqueue(Command c) {
        std::lock_guard lock(queue_mutex_);
        queue_.push_back(std::move(c));
    }

    /// Advances one CPI unless paused. Returns the frames of this tick.
    std::vector<Frame> tick() {
        std::vector<Frame> frames;
        std::deque<Command> pending;
        {
            std::lock_guard lock(queue_mutex_);
            pending.swap(queue_);
        }
        for (const auto& c : pending) {
            try {
                apply(parse(c));
            } catch (const std::exception& e) {
                frames.push_back({"error", tick_, {{"command", c.to_json()}, {"message", e.what()}}});
            }
        }
        if (paused_) {
            publish_snapshot();
            return frames;
        }
        const std::uint64_t t = tick_;
        const AllocationBitmap alloc(bitmap_);
        const Downlink dl = bench_.downlink(alloc, mcs_, power_, 1, derive_seed(seed_, {kDownlinkTag, t}));

        // Sense and publish through the occupancy wire format.
        std::optional<SpectralEstimate> est;
        try {
            est = bench_.sense_spectrum(dl.signal, derive_seed(seed_, {kSenseTag, t}));
            const auto chart = bench_.occupancy(*est, t + 1);
            publisher_.publish(chart, sink_);
            while (!sink_.queue.empty()) {
                receiver_.accept(sink_.queue.front());
                sink_.queue.pop_front();
            }
            health_.sensing = true;
        } catch (const std::exception& e) {
            health_.sensing = false;
            frames.push_back({"error", t, {{"stage", "sensing"}, {"message", e.what()}}});
        }
        if (const auto& latest = receiver_.latest()) {
            const auto mask = bench_.mask_for(*latest);
            if (mask.bands() != optimizer_.mask().bands()) {
                optimizer_.set_mask(mask);
                mask_log_.push_back({t, latest->timestamp, mask.bands()});
            }
            mask_timestamp_ = latest->timestamp;
        }

        // One sweep per tick while the design is still moving.
        try {
            if (waveform_kind_ == "designed" && !optimizer_.converged()) optimizer_.sweep();
            health_.optimizer = true;
        } catch (const std::exception& e) {
            health_.optimizer = false;
            frames.push_back({"error", t, {{"stage", "optimizer"}, {"message", e.what()}}});
        }
        const SequenceSet& x = transmit_waveform();

        if (est) frames.push_back({"spectrum", t, spectrum_payload(*est, x)});
        if (const auto& latest = receiver_.latest()) frames.push_back({"occupancy", t, occupancy_payload(*latest)});

        json targets = json::array();
        try {
            const auto rcv = bench_.receiver(x, config().protocol.threads);
            const auto interf = bench_.comm_interference(dl.signal, derive_seed(seed_, {kInterferenceTag, t}));
            const auto out = rcv.process(bench_.capture(x, interf, derive_seed(seed_, {kRadarTag, t})));
            for (const auto& m : out.maps) frames.push_back({"rdmap", t, rdmap_payload(m)});
            for (const auto& r : read_targets(out, config())) {
                json tj = {{"target_id", r.target_id},
                           {"detected", r.detected},
                           {"range_bin", r.range_bin},
                           {"doppler_bin", r.doppler_bin},
                           {"sinr_db", r.sinr_db}};
                tj["angle_deg"] = r.angle_deg ? json(*r.angle_deg) : json(nullptr);
                targets.push_back(tj);
            }
            health_.receiver = true;
        } catch (const std::exception& e) {
            health_.receiver = false;
            frames.push_back({"error", t, {{"stage", "receiver"}, {"message", e.what()}}});
        }

        try {
            // The radar keys every CPI here, so the downlink always overlaps it.
            const cvec cpi = bench_.radar_emission_at_comm(x);
            std::mt19937_64 rng(derive_seed(seed_, {kLinkTag, t}));
            const auto shift = std::uniform_int_distribution<std::size_t>(0, cpi.size() - 1)(rng);
            const double g = std::sqrt(from_db(config().coupling.radar_to_comm_db));
            cvec rx = dl.signal;
            for (std::size_t i = 0; i < rx.size(); ++i) rx[i] += g * cpi[(i + shift) % cpi.size()];
            add_noise(rx, config().communication.receiver_noise_dbfs, rng);
            const auto rep = receive_link(dl.grid, rx);
            frames.push_back({"link",
                              t,
                              {{"comm",
                                {{"mcs", mcs_},
                                 {"power_dbm", power_},
                                 {"bitmap", bitmap_},
                                 {"sinr_db", rep.sinr_db.front()},
                                 {"ack", static_cast<bool>(rep.ack.front())},
                                 {"throughput_mbps", rep.throughput_mbps()}}},
                               {"radar", {{"targets", targets}}}}});
            health_.link = true;
        } catch (const std::exception& e) {
            health_.link = false;
            frames.push_back({"error", t, {{"stage", "link"}, {"message", e.what()}}});
        }

        const auto& obj = optimizer_.last();
        frames.push_back({"objective",
                          t,
                          {{"theta", theta_},
                           {"waveform", waveform_kind_},
                           {"spectral", obj.spectral},
                           {"correlation", obj.correlation},
                           {"scalarized", obj.scalarized},
                           {"sweep", obj.sweep},
                           {"epoch", obj.epoch},
                           {"converged", optimizer_.converged()}}});
        ++tick_;
        publish_snapshot();
        return frames;
    }

    /// Latest state; safe to call from any thread.
    LoopSnapshot snapshot() const {
        std::lock_guard lock(snapshot_mutex_);
        return snapshot_;
    }

    // Loop-thread accessors.
    std::uint64_t current_tick() const { return tick_; }
    bool paused() const { return paused_; }
    const SequenceSet& designed_waveform() const { return optimizer_.current(); }
    const SpectralMask& mask() const { return optimizer_.mask(); }
    const std::vector<ObjectiveReport>& trace() const { return optimizer_.trace(); }
    const std::vector<MaskUpdate>& mask_log() const { return mask_log_; }
    const SequenceSet& transmit_waveform() {
        if (waveform_kind_ == "designed") return optimizer_.current();
        return *library_waveform_;
    }

    /// Charts from an external sensing front end, in OCCU wire format.
    void ingest(std::span<const std::uint8_t> message) { receiver_.accept(message); }

private:
    enum Tag : std::uint64_t {
        kDesignTag = 21, kDownlinkTag, kSenseTag, kInterferenceTag, kRadarTag, kLinkTag
    };

    struct Parsed {
        std::string type;
        double number = 0.0;
        std::string text;
        std::optional<SequenceSet> library;
    };

    Parsed parse(const Command& c) const {
        Parsed p;
        p.type = c.type;
        auto number = [&]() {
            if (!c.value.is_number()) throw ConfigurationError(c.type + " needs a numeric value");
            const double v = c.value.get<double>();
            if (!std::isfinite(v)) throw ConfigurationError(c.type + " must be finite");
            return v;
        };
        if (c.type == "theta") {
            p.number = number();
            if (p.number < 0.0 || p.number > 1.0) throw ConfigurationError("theta must lie in [0, 1]");
        } else if (c.type == "bitmap") {
            if (!c.value.is_string()) throw ConfigurationError("bitmap needs a 25-character 0/1 string");
            p.text = AllocationBitmap(c.value.get<std::string>()).str();
        } else if (c.type == "mcs") {
            p.number = number();
            if (p.number != std::floor(p.number)) throw ConfigurationError("mcs must be an integer");
            (void)mcs_preset(static_cast<int>(p.number));
        } else if (c.type == "power") {
            p.number = number();
            if (p.number < -40.0 || p.number > 40.0) throw ConfigurationError("power must lie in [-40, 40] dBm");
        } else if (c.type == "waveform") {
            if (!c.value.is_string()) throw ConfigurationError("waveform needs a kind name or 'designed'");
            p.text = c.value.get<std::string>();
            if (p.text != "designed") {
                const auto& cfg = config();
                WaveformSpec spec(parse_waveform_kind(p.text), cfg.radar.transmit_code_length,
                                  derive_seed(seed_, {kDesignTag, 1}));
                p.library = generate_set(spec, cfg.radar.transmit_channels);
            }
        } else if (c.type != "pause" && c.type != "resume") {
            throw ConfigurationError("unknown command type '" + c.type + "'");
        }
        return p;
    }

    void apply(Parsed p) {
        if (p.type == "theta") {
            if (p.number != theta_) {
                theta_ = p.number;
                optimizer_.set_theta(theta_);
            }
        } else if (p.type == "bitmap") {
            bitmap_ = p.text;
        } else if (p.type == "mcs") {
            mcs_ = static_cast<int>(p.number);
        } else if (p.type == "power") {
            power_ = p.number;
        } else if (p.type == "waveform") {
            waveform_kind_ = p.text;
            if (p.library) library_waveform_ = std::move(p.library);
        } else if (p.type == "pause") {
            paused_ = true;
        } else if (p.type == "resume") {
            paused_ = false;
        }
    }

    json spectrum_payload(const SpectralEstimate& comm, const SequenceSet& x) const {
        const auto radar = estimate_spectrum(bench_.radar_emission(x), bench_.timing().sample_rate,
                                             config().radar.center_frequency_hz, config().sensing.estimator);
        json c = json::array(), r = json::array();
        for (double v : comm.power_db()) c.push_back(detail::round_to(v, 0.01));
        for (double v : radar.power_db()) r.push_back(detail::round_to(v, 0.01));
        return {{"start_hz", comm.start_hz()},
                {"bin_hz", comm.bin_spacing()},
                {"bins", comm.bins()},
                {"comm_db", c},
                {"radar_db", r}};
    }

    static json occupancy_payload(const OccupancyChart& chart) {
        return {{"timestamp", chart.timestamp},
                {"start_hz", chart.start_hz},
                {"resolution_hz", chart.resolution_hz},
                {"cells", chart.cells}};
    }

    /// Row-major [doppler][range] power in dB, normalized Doppler and metre axes.
    static json rdmap_payload(const RangeDopplerMap& m) {
        json p = json::array();
        for (double v : m.power) p.push_back(detail::round_to(to_db(std::max(v, 1e-30)), 0.01));
        return {{"rx", m.rx},
                {"tx", m.tx},
                {"doppler_bins", m.doppler_bins},
                {"range_bins", m.range_bins},
                {"range_bin_m", m.range_bin_m},
                {"doppler_axis", {{"start", m.doppler(0)}, {"step", 1.0 / static_cast<double>(m.doppler_bins)}, {"wraps_at", 0.5}}},
                {"range_axis_m", {{"start", 0.0}, {"step", m.range_bin_m}}},
                {"power_db", p}};
    }

    void publish_snapshot() {
        LoopSnapshot s;
        s.tick = tick_;
        s.theta = theta_;
        s.bitmap = bitmap_;
        s.mcs = mcs_;
        s.power_dbm = power_;
        s.waveform = waveform_kind_;
        s.paused = paused_;
        s.mask = optimizer_.mask().bands();
        s.mask_timestamp = mask_timestamp_;
        s.objective = optimizer_.last();
        s.converged = optimizer_.converged();
        s.health = health_;
        s.mask_log = mask_log_;
        std::lock_guard lock(snapshot_mutex_);
        snapshot_ = std::move(s);
    }

    Bench bench_;
    std::uint64_t seed_;
    std::uint64_t tick_ = 0;
    double theta_;
    std::string bitmap_;
    int mcs_;
    double power_;
    bool paused_ = false;
    std::string waveform_kind_ = "designed";
    std::optional<SequenceSet> library_waveform_;
    CoordinateDescent optimizer_;
    OccupancyPublisher publisher_;
    QueueSink sink_;
    OccupancyReceiver receiver_;
    std::uint64_t mask_timestamp_ = 0;
    std::vector<MaskUpdate> mask_log_;
    HealthFlags health_;

    std::mutex queue_mutex_;
    std::deque<Command> queue_;
    mutable std::mutex snapshot_mutex_;
    LoopSnapshot snapshot_;
};

}  // namespace coexist
