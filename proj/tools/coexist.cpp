// Command-line front end: one-shot design, sensing, the Step 1-4 protocol, the
// live service and scripted replays of the cognitive loop.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "coexist/protocol.hpp"
#include "coexist/service.hpp"
#include "coexist/waveform_file.hpp"

using namespace coexist;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

ExperimentConfig load_or_default(const std::string& path) { return path.empty() ? ExperimentConfig{} : load_config(path); }

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);)
        if (!item.empty()) out.push_back(item);
    return out;
}

// Interleaved little-endian I/Q; the build targets little-endian hosts only.
template <typename T>
cvec read_iq(const std::string& path) {
    const auto bytes = io::read_file(path);
    if (bytes.size() % (2 * sizeof(T)) != 0) throw FormatError(path + ": not a whole number of I/Q pairs");
    cvec out(bytes.size() / (2 * sizeof(T)));
    for (std::size_t i = 0; i < out.size(); ++i) {
        T re, im;
        std::memcpy(&re, bytes.data() + 2 * i * sizeof(T), sizeof(T));
        std::memcpy(&im, bytes.data() + (2 * i + 1) * sizeof(T), sizeof(T));
        out[i] = {static_cast<double>(re), static_cast<double>(im)};
    }
    return out;
}

template <typename T>
void write_iq(const std::string& path, const cvec& x) {
    io::Bytes bytes(x.size() * 2 * sizeof(T));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T re = static_cast<T>(x[i].real()), im = static_cast<T>(x[i].imag());
        std::memcpy(bytes.data() + 2 * i * sizeof(T), &re, sizeof(T));
        std::memcpy(bytes.data() + (2 * i + 1) * sizeof(T), &im, sizeof(T));
    }
    io::write_file(path, bytes);
}

std::string chart_string(const OccupancyChart& c) {
    std::string s;
    for (auto v : c.cells) s += v ? '1' : '0';
    return s;
}

json summary_json(const DesignSummary& d) {
    return {{"theta", d.theta},
            {"sweeps", d.sweeps},
            {"stopbands", d.mask.size()},
            {"start", {{"spectral", d.start.spectral}, {"correlation", d.start.correlation}}},
            {"final", {{"spectral", d.final.spectral}, {"correlation", d.final.correlation}}}};
}

// ---- design -----------------------------------------------------------------

struct DesignOpts {
    std::string config, occupancy, out, trace;
    std::optional<double> theta;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> sweeps;
    std::optional<unsigned> levels;
    bool no_mask = false;
};

int cmd_design(const DesignOpts& o) {
    auto cfg = load_or_default(o.config);
    if (o.seed) cfg.protocol.seed = *o.seed;
    if (o.sweeps) cfg.waveform.max_sweeps = *o.sweeps;
    if (o.levels) cfg.waveform.alphabet = *o.levels ? PhaseAlphabet::discrete(*o.levels) : PhaseAlphabet::continuous();
    const double theta = o.theta.value_or(cfg.waveform.theta_coexistence);
    const Bench bench(cfg);

    SpectralMask mask({}, cfg.waveform.oversampling);
    if (!o.occupancy.empty()) mask = bench.mask_for(decode_occupancy(io::read_file(o.occupancy)));
    else if (!o.no_mask) mask = bench.mask_for(sense_for_protocol(bench));

    const auto x0 = initial_waveform(cfg, derive_seed(cfg.protocol.seed, {detail::kDesignSeed}));
    const auto res = optimize(x0, mask, cfg.waveform.design(theta));
    io::write_file(o.out, encode_waveform({res.sequences, cfg.waveform.alphabet, theta, mask}));
    if (!o.trace.empty()) {
        std::ostringstream t;
        t << "sweep,epoch,spectral,correlation,scalarized\n";
        for (const auto& r : res.trace)
            t << r.sweep << ',' << r.epoch << ',' << detail::fmt(r.spectral) << ',' << detail::fmt(r.correlation) << ','
              << detail::fmt(r.scalarized) << '\n';
        write_text(o.trace, t.str());
    }
    std::cout << summary_json(detail::summarize(theta, mask, res)).dump(2) << '\n';
    return 0;
}

// ---- sense ------------------------------------------------------------------

struct SenseOpts {
    std::string config, input, format = "cf32", out, bitmap;
    std::optional<double> rate, center;
    std::uint64_t timestamp = 1;
    std::optional<double> threshold;
    std::optional<double> power;
};

int cmd_sense(const SenseOpts& o) {
    auto cfg = load_or_default(o.config);
    if (o.threshold) cfg.sensing.estimator.threshold_db = *o.threshold;
    if (!o.bitmap.empty()) cfg.communication.allocation_bitmap = o.bitmap;
    if (o.power) cfg.communication.transmit_power_dbm = {*o.power};
    const Bench bench(cfg);
    const double fs_radar = bench.timing().sample_rate;
    const double fc_radar = cfg.radar.center_frequency_hz;

    OccupancyChart chart;
    if (o.input.empty()) {
        // No file: sense the configured downlink the way the protocol does.
        chart = sense_for_protocol(bench);
        chart.timestamp = o.timestamp;
    } else {
        cvec x;
        double fs = o.rate.value_or(fs_radar), fc = o.center.value_or(fc_radar);
        if (o.format == "cf32") x = read_iq<float>(o.input);
        else if (o.format == "cf64") x = read_iq<double>(o.input);
        else if (o.format == "capt") {
            const auto cap = decode_capture(io::read_file(o.input));
            if (cap.channels == 0) throw FormatError("capture has no channels");
            x = cap.data.front();
            fs = o.rate.value_or(cap.sample_rate);
        } else {
            throw ConfigurationError("unknown input format " + o.format);
        }
        // Bring the samples onto the radar's grid before estimating.
        if (fc != fc_radar) frequency_shift(x, fc - fc_radar, fs);
        if (fs != fs_radar) {
            x = fft::resample(x, static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * fs_radar / fs)));
        }
        const auto est = estimate_spectrum(x, fs_radar, fc_radar, cfg.sensing.estimator);
        chart = bench.occupancy(est, o.timestamp);
    }
    if (!o.out.empty()) io::write_file(o.out, encode_occupancy(chart));
    std::cout << json{{"timestamp", chart.timestamp},
                      {"start_hz", chart.start_hz},
                      {"resolution_hz", chart.resolution_hz},
                      {"cells", chart_string(chart)}}
                     .dump(2)
              << '\n';
    return 0;
}

// ---- downlink (test signal generator) ----------------------------------------

int cmd_downlink(const std::string& config, const std::string& bitmap, int mcs, double power, std::size_t subframes,
                 std::uint64_t seed, const std::string& out) {
    const Bench bench(load_or_default(config));
    const auto dl = bench.downlink(AllocationBitmap(bitmap.empty() ? bench.config().communication.allocation_bitmap : bitmap),
                                   mcs, power, subframes, seed);
    write_iq<float>(out, dl.signal);
    std::cerr << dl.signal.size() << " samples at " << lte::kSampleRate << " Hz\n";
    return 0;
}

// ---- run-protocol -----------------------------------------------------------

struct ProtocolOpts {
    std::string config, csv, json_out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::vector<int> steps;
    bool quiet = false;
};

int cmd_protocol(const ProtocolOpts& o) {
    auto cfg = load_or_default(o.config);
    if (o.seed) cfg.protocol.seed = *o.seed;
    if (o.trials) cfg.protocol.trials = *o.trials;
    if (!o.steps.empty()) cfg.protocol.steps = o.steps;
    cfg.validate();
    ProtocolHooks hooks;
    if (!o.quiet) hooks.progress = [](const std::string& s) { std::cerr << s << '\n'; };
    const auto run = run_protocol(cfg, hooks);
    // Partial runs are written too; the failure marker travels inside the JSON.
    if (!o.csv.empty()) write_text(o.csv, export_csv(run));
    if (!o.json_out.empty()) write_text(o.json_out, export_json(run));
    if (o.csv.empty() && o.json_out.empty()) std::cout << export_csv(run);
    if (!run.complete) {
        std::cerr << "run incomplete: " << run.failure.value_or("unknown failure") << '\n';
        return 2;
    }
    return 0;
}

// ---- calibrate --------------------------------------------------------------

int cmd_calibrate(const std::string& config, const std::string& out, const CalibrationGoals& goals) {
    auto cfg = load_or_default(config);
    const auto c = calibrate(cfg, goals);
    apply_calibration(cfg, c);
    std::cout << json{{"radar_receiver_noise_dbfs", c.radar_noise_dbfs},
                      {"comm_to_radar_db", c.comm_to_radar_db},
                      {"radar_to_comm_db", c.radar_to_comm_db},
                      {"target1_sinr_db", c.target1_sinr_db}}
                     .dump(2)
              << '\n';
    if (!out.empty()) save_config(cfg, out);
    return 0;
}

// ---- serve ------------------------------------------------------------------

int cmd_serve(const std::string& config, const std::string& host, int port) {
    Service service(load_or_default(config));
    const int bound = service.start(host, port);
    std::cerr << "listening on http://" << host << ':' << bound << '\n';
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    return 0;
}

// ---- replay -----------------------------------------------------------------

struct ScriptLine {
    std::uint64_t tick;
    Command command;
};

// "<tick> <type> [json value]" per line; blank lines and '#' comments skipped.
std::vector<ScriptLine> parse_script(const std::string& text) {
    std::vector<ScriptLine> out;
    std::istringstream in(text);
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string tick, type;
        if (!(ls >> tick)) continue;
        if (!(ls >> type)) throw FormatError("script line " + std::to_string(n) + ": missing command type");
        std::string rest;
        std::getline(ls, rest);
        ScriptLine s;
        try {
            s.tick = std::stoull(tick);
            s.command.type = type;
            const auto first = rest.find_first_not_of(" \t");
            s.command.value = first == std::string::npos ? json(nullptr) : json::parse(rest.substr(first));
        } catch (const std::exception& e) {
            throw FormatError("script line " + std::to_string(n) + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.tick < b.tick; });
    return out;
}

int cmd_replay(const std::string& config, const std::string& script, std::size_t ticks, const std::string& out,
               const std::string& kinds_csv, std::optional<std::uint64_t> seed) {
    auto cfg = load_or_default(config);
    if (seed) cfg.loop.seed = *seed;
    const auto lines = script.empty() ? std::vector<ScriptLine>{} : parse_script(read_text(script));
    std::set<std::string> kinds;
    for (const auto& k : split(kinds_csv, ',')) kinds.insert(k);

    CognitiveLoop loop(cfg);
    std::ofstream file;
    if (!out.empty()) {
        file.open(out, std::ios::binary);
        if (!file) throw std::runtime_error("cannot open " + out);
    }
    std::ostream& os = out.empty() ? std::cout : file;
    std::size_t next = 0;
    // Script ticks count loop iterations, so a paused loop still consumes them.
    for (std::uint64_t i = 0; i < ticks; ++i) {
        while (next < lines.size() && lines[next].tick <= i) loop.enqueue(lines[next++].command);
        for (const auto& f : loop.tick())
            if (kinds.empty() || kinds.count(f.kind)) os << f.ndjson();
    }
    os.flush();
    std::cerr << snapshot_json(loop.snapshot()).dump() << '\n';
    return 0;
}

// ---- waveforms --------------------------------------------------------------

int cmd_waveforms_list() {
    for (auto k : kAllWaveformKinds) std::cout << to_string(k) << '\n';
    return 0;
}

int cmd_waveforms_generate(const std::string& kind, std::size_t length, std::size_t rows, std::uint64_t seed,
                           const std::string& out) {
    const auto set = generate_set(WaveformSpec(parse_waveform_kind(kind), length, seed), rows);
    const auto binary = kind != "random-polyphase" && kind != "frank" && kind != "golomb" && kind != "up-lfm" &&
                        kind != "down-lfm";
    const auto alphabet = binary ? PhaseAlphabet::discrete(2) : PhaseAlphabet::continuous();
    io::write_file(out, encode_waveform({set, set.satisfies(alphabet) ? alphabet : PhaseAlphabet::continuous(), 0.0,
                                         SpectralMask({}, 1)}));
    std::cerr << rows << " x " << length << ' ' << kind << " -> " << out << '\n';
    return 0;
}

// ---- process (radar receiver on a capture file) -------------------------------

int cmd_process(const std::string& config, const std::string& capture, const std::string& waveform,
                const std::string& out) {
    const auto cfg = load_or_default(config);
    const Bench bench(cfg);
    const auto rec = decode_waveform(io::read_file(waveform));
    const auto out_maps = bench.receiver(rec.sequences, cfg.protocol.threads).process(decode_capture(io::read_file(capture)));
    if (!out.empty()) io::write_file(out, encode_maps(out_maps.maps));
    json targets = json::array();
    for (const auto& r : read_targets(out_maps, cfg))
        targets.push_back({{"target_id", r.target_id},
                           {"detected", r.detected},
                           {"range_bin", r.range_bin},
                           {"doppler_bin", r.doppler_bin},
                           {"sinr_db", r.sinr_db}});
    std::cout << json{{"detections", out_maps.detections.size()}, {"targets", targets}}.dump(2) << '\n';
    return 0;
}

int cmd_scene(const std::string& config, const std::string& waveform, std::uint64_t seed, std::optional<int> mcs,
              double power, const std::string& out) {
    const auto cfg = load_or_default(config);
    const Bench bench(cfg);
    const auto rec = decode_waveform(io::read_file(waveform));
    std::optional<InterferenceSpec> interf;
    if (mcs) {
        const auto dl = bench.downlink(AllocationBitmap(cfg.communication.allocation_bitmap), *mcs, power, 1,
                                       derive_seed(seed, {1}));
        interf = bench.comm_interference(dl.signal, derive_seed(seed, {2}));
    }
    io::write_file(out, encode_capture(bench.capture(rec.sequences, interf, seed)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Radar/communication co-existence toolkit"};
    app.require_subcommand(1);

    DesignOpts design;
    auto* d = app.add_subcommand("design", "optimize a waveform once and write it as WVFM");
    d->add_option("-c,--config", design.config, "configuration JSON")->check(CLI::ExistingFile);
    d->add_option("-t,--theta", design.theta, "trade-off weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
    d->add_option("--occupancy", design.occupancy, "OCCU chart to build the mask from")->check(CLI::ExistingFile);
    d->add_flag("--no-mask", design.no_mask, "design without any stopband");
    d->add_option("--seed", design.seed, "seed for the initial waveform");
    d->add_option("--sweeps", design.sweeps, "sweep budget");
    d->add_option("--levels", design.levels, "phase alphabet size, 0 for continuous");
    d->add_option("-o,--out", design.out, "output WVFM file")->required();
    d->add_option("--trace", design.trace, "write the objective trace as CSV");

    SenseOpts sense;
    auto* s = app.add_subcommand("sense", "estimate spectrum occupancy and write it as OCCU");
    s->add_option("-c,--config", sense.config, "configuration JSON")->check(CLI::ExistingFile);
    s->add_option("-i,--input", sense.input, "I/Q samples; omit to sense the configured downlink")->check(CLI::ExistingFile);
    s->add_option("-f,--format", sense.format, "cf32, cf64 or capt")->check(CLI::IsMember({"cf32", "cf64", "capt"}));
    s->add_option("--rate", sense.rate, "input sample rate in Hz (default: radar rate)");
    s->add_option("--center", sense.center, "input centre frequency in Hz (default: radar carrier)");
    s->add_option("--timestamp", sense.timestamp, "chart timestamp");
    s->add_option("--threshold", sense.threshold, "detection threshold over the noise floor, dB");
    s->add_option("--bitmap", sense.bitmap, "allocation bitmap for the synthetic downlink");
    s->add_option("--power", sense.power, "transmit power for the synthetic downlink, dBm");
    s->add_option("-o,--out", sense.out, "output OCCU file");

    std::string dl_config, dl_bitmap, dl_out;
    int dl_mcs = 17;
    double dl_power = 20;
    std::size_t dl_subframes = 1;
    std::uint64_t dl_seed = 1;
    auto* g = app.add_subcommand("downlink", "write a synthetic downlink as interleaved float32 I/Q at 30.72 MHz");
    g->add_option("-c,--config", dl_config)->check(CLI::ExistingFile);
    g->add_option("--bitmap", dl_bitmap);
    g->add_option("--mcs", dl_mcs)->check(CLI::IsMember({0, 10, 17}));
    g->add_option("--power", dl_power);
    g->add_option("--subframes", dl_subframes)->check(CLI::PositiveNumber);
    g->add_option("--seed", dl_seed);
    g->add_option("-o,--out", dl_out)->required();

    ProtocolOpts proto;
    auto* p = app.add_subcommand("run-protocol", "run Steps 1-4 and export CSV/JSON");
    p->add_option("-c,--config", proto.config, "configuration JSON")->check(CLI::ExistingFile);
    p->add_option("--seed", proto.seed);
    p->add_option("--trials", proto.trials)->check(CLI::PositiveNumber);
    p->add_option("--steps", proto.steps, "subset of steps, e.g. --steps 1 2");
    p->add_option("--csv", proto.csv, "CSV output path");
    p->add_option("--json", proto.json_out, "JSON output path");
    p->add_flag("-q,--quiet", proto.quiet);

    std::string cal_config, cal_out;
    CalibrationGoals goals;
    auto* c = app.add_subcommand("calibrate", "fit noise and coupling levels to the benchmark SINR and INR");
    c->add_option("-c,--config", cal_config)->check(CLI::ExistingFile);
    c->add_option("--target1-sinr", goals.target1_sinr_db, "radar-only Target 1 SINR, dB");
    c->add_option("--inr", goals.inr_db, "downlink interference-to-noise at the radar, dB");
    c->add_option("--sir", goals.full_overlap_sir_db, "downlink SIR under full radar overlap, dB");
    c->add_option("-o,--out", cal_out, "write the calibrated configuration");

    std::string srv_config, host = "127.0.0.1";
    int port = 8080;
    auto* v = app.add_subcommand("serve", "run the cognitive loop behind the HTTP API");
    v->add_option("-c,--config", srv_config)->check(CLI::ExistingFile);
    v->add_option("--host", host);
    v->add_option("--port", port, "0 picks a free port");

    std::string rp_config, rp_script, rp_out, rp_kinds;
    std::size_t rp_ticks = 20;
    std::optional<std::uint64_t> rp_seed;
    auto* r = app.add_subcommand("replay", "drive the loop headless from a command script, NDJSON out");
    r->add_option("-c,--config", rp_config)->check(CLI::ExistingFile);
    r->add_option("-s,--script", rp_script, "lines of '<tick> <type> [json value]'")->check(CLI::ExistingFile);
    r->add_option("-n,--ticks", rp_ticks);
    r->add_option("--seed", rp_seed, "loop seed");
    r->add_option("-o,--out", rp_out, "NDJSON output (default stdout)");
    r->add_option("--kinds", rp_kinds, "comma-separated frame kinds to keep");

    std::string wf_kind = "random-polyphase", wf_out;
    std::size_t wf_length = 400, wf_rows = 2;
    std::uint64_t wf_seed = 1;
    auto* w = app.add_subcommand("waveforms", "baseline waveform library");
    w->require_subcommand(1);
    auto* wl = w->add_subcommand("list", "list waveform kinds");
    auto* wg = w->add_subcommand("generate", "write a library set as WVFM");
    wg->add_option("-k,--kind", wf_kind);
    wg->add_option("-n,--length", wf_length)->check(CLI::PositiveNumber);
    wg->add_option("-m,--rows", wf_rows)->check(CLI::PositiveNumber);
    wg->add_option("--seed", wf_seed);
    wg->add_option("-o,--out", wf_out)->required();

    std::string pr_config, pr_capture, pr_waveform, pr_out;
    auto* pc = app.add_subcommand("process", "run the radar receiver on a CAPT file");
    pc->add_option("-c,--config", pr_config)->check(CLI::ExistingFile);
    pc->add_option("--capture", pr_capture)->required()->check(CLI::ExistingFile);
    pc->add_option("--waveform", pr_waveform)->required()->check(CLI::ExistingFile);
    pc->add_option("-o,--out", pr_out, "RDMP output");

    std::string sc_config, sc_waveform, sc_out;
    std::uint64_t sc_seed = 1;
    std::optional<int> sc_mcs;
    double sc_power = 20;
    auto* sn = app.add_subcommand("scene", "emulate the configured targets and write a CAPT file");
    sn->add_option("-c,--config", sc_config)->check(CLI::ExistingFile);
    sn->add_option("--waveform", sc_waveform)->required()->check(CLI::ExistingFile);
    sn->add_option("--seed", sc_seed);
    sn->add_option("--mcs", sc_mcs, "add downlink interference at this MCS")->check(CLI::IsMember({0, 10, 17}));
    sn->add_option("--power", sc_power, "downlink power for the interference, dBm");
    sn->add_option("-o,--out", sc_out)->required();

    std::string cfg_in;
    auto* cf = app.add_subcommand("config", "print the effective configuration");
    cf->add_option("-c,--config", cfg_in)->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*d) return cmd_design(design);
        if (*s) return cmd_sense(sense);
        if (*g) return cmd_downlink(dl_config, dl_bitmap, dl_mcs, dl_power, dl_subframes, dl_seed, dl_out);
        if (*p) return cmd_protocol(proto);
        if (*c) return cmd_calibrate(cal_config, cal_out, goals);
        if (*v) return cmd_serve(srv_config, host, port);
        if (*r) return cmd_replay(rp_config, rp_script, rp_ticks, rp_out, rp_kinds, rp_seed);
        if (*wl) return cmd_waveforms_list();
        if (*wg) return cmd_waveforms_generate(wf_kind, wf_length, wf_rows, wf_seed, wf_out);
        if (*pc) return cmd_process(pr_config, pr_capture, pr_waveform, pr_out);
        if (*sn) return cmd_scene(sc_config, sc_waveform, sc_seed, sc_mcs, sc_power, sc_out);
        if (*cf) {
            std::cout << to_json(load_or_default(cfg_in)).dump(2) << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
