#pragma once

// Local HTTP service around the cognitive loop. One thread owns the loop and
// paces ticks; handlers only talk to it through the command queue, the state
// snapshot and the frame hub, so none of them can stall a tick.
//
//   GET  /state                      loop snapshot
//   POST /command {type, value}      queue a command (400 if invalid)
//   POST /experiment {config}        start a protocol run, returns {id}
//   GET  /experiment/{id}/results    ?format=json (default) or csv; 202 while running
//   GET  /stream                     NDJSON frames, chunked

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>

#include "coexist/loop.hpp"
#include "coexist/protocol.hpp"

namespace coexist {

/// Fan-out of serialized frames. Publishing never blocks: a subscriber that
/// falls behind loses its oldest lines.
class FrameHub {
public:
    class Subscription {
    public:
        explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

        /// Waits up to `timeout` for lines; returns whatever is queued.
        std::deque<std::string> pop(std::chrono::milliseconds timeout) {
            std::unique_lock lock(mutex_);
            cv_.wait_for(lock, timeout, [&] { return !lines_.empty() || closed_; });
            std::deque<std::string> out;
            out.swap(lines_);
            return out;
        }
        bool closed() const {
            std::lock_guard lock(mutex_);
            return closed_;
        }
        std::size_t dropped() const {
            std::lock_guard lock(mutex_);
            return dropped_;
        }

    private:
        friend class FrameHub;
        void push(const std::string& line) {
            {
                std::lock_guard lock(mutex_);
                if (closed_) return;
                lines_.push_back(line);
                while (lines_.size() > capacity_) {
                    lines_.pop_front();
                    ++dropped_;
                }
            }
            cv_.notify_one();
        }
        void close() {
            {
                std::lock_guard lock(mutex_);
                closed_ = true;
            }
            cv_.notify_all();
        }

        std::size_t capacity_;
        mutable std::mutex mutex_;
        std::condition_variable cv_;
        std::deque<std::string> lines_;
        std::size_t dropped_ = 0;
        bool closed_ = false;
    };

    explicit FrameHub(std::size_t capacity = 256) : capacity_(capacity) {}

    std::shared_ptr<Subscription> subscribe() {
        auto s = std::make_shared<Subscription>(capacity_);
        std::lock_guard lock(mutex_);
        if (closed_) s->close();
        subs_.push_back(s);
        return s;
    }

    void unsubscribe(const std::shared_ptr<Subscription>& s) {
        std::lock_guard lock(mutex_);
        subs_.erase(std::remove(subs_.begin(), subs_.end(), s), subs_.end());
    }

    void publish(const std::vector<Frame>& frames) {
        if (frames.empty()) return;
        std::vector<std::string> lines;
        lines.reserve(frames.size());
        for (const auto& f : frames) lines.push_back(f.ndjson());
        std::lock_guard lock(mutex_);
        for (const auto& s : subs_)
            for (const auto& l : lines) s->push(l);
    }

    std::size_t subscribers() const {
        std::lock_guard lock(mutex_);
        return subs_.size();
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        for (const auto& s : subs_) s->close();
    }

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::vector<std::shared_ptr<Subscription>> subs_;
    bool closed_ = false;
};

class Service {
public:
    explicit Service(ExperimentConfig cfg) : cfg_(std::move(cfg)), loop_(cfg_), hub_(cfg_.loop.stream_queue) {
        routes();
    }
    ~Service() { stop(); }
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds (port 0 picks a free one), starts the loop and HTTP threads and
    /// returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw ConfigurationError("cannot bind " + host + ":" + std::to_string(port));
        running_ = true;
        loop_thread_ = std::thread([this] { run_loop(); });
        http_thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    void stop() {
        if (running_.exchange(false)) {
            hub_.close();
            server_.stop();
        }
        if (http_thread_.joinable()) http_thread_.join();
        if (loop_thread_.joinable()) loop_thread_.join();
        std::lock_guard lock(exp_mutex_);
        for (auto& [id, e] : experiments_)
            if (e->worker.joinable()) e->worker.join();
    }

    /// Blocks until stop() is called from another thread or a signal handler.
    void wait() {
        if (http_thread_.joinable()) http_thread_.join();
    }

    FrameHub& hub() { return hub_; }
    LoopSnapshot state() const { return loop_.snapshot(); }

private:
    struct Experiment {
        std::thread worker;
        std::atomic<bool> done{false};
        ExperimentRun run;
    };

    void run_loop() {
        const auto period = std::chrono::duration<double>(1.0 / cfg_.loop.ticks_per_second);
        auto next = std::chrono::steady_clock::now();
        while (running_) {
            hub_.publish(loop_.tick());
            next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
            const auto now = std::chrono::steady_clock::now();
            if (next < now) next = now;  // behind schedule: don't try to catch up
            // Sleep in short slices so stop() is prompt.
            while (running_ && std::chrono::steady_clock::now() < next)
                std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
                    next - std::chrono::steady_clock::now(), std::chrono::milliseconds(20)));
        }
    }

    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void routes() {
        server_.Get("/state", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, snapshot_json(loop_.snapshot()));
        });

        server_.Post("/command", [this](const httplib::Request& req, httplib::Response& res) {
            Command c;
            try {
                c = Command::from_json(json::parse(req.body));
            } catch (const std::exception& e) {
                return reply(res, 400, {{"error", e.what()}});
            }
            if (auto why = loop_.check(c)) return reply(res, 400, {{"error", *why}, {"command", c.to_json()}});
            loop_.enqueue(c);
            reply(res, 202, {{"accepted", true}, {"command", c.to_json()}});
        });

        server_.Post("/experiment", [this](const httplib::Request& req, httplib::Response& res) {
            ExperimentConfig cfg = cfg_;
            try {
                if (!req.body.empty()) {
                    const auto j = json::parse(req.body);
                    if (j.is_object() && j.contains("config")) cfg = config_from_json(j.at("config"));
                    else if (!(j.is_object() && j.empty())) cfg = config_from_json(j);
                }
                cfg.validate();
            } catch (const std::exception& e) {
                return reply(res, 400, {{"error", e.what()}});
            }
            std::lock_guard lock(exp_mutex_);
            const std::string id = "exp-" + std::to_string(++exp_counter_);
            auto e = std::make_unique<Experiment>();
            auto* raw = e.get();
            e->worker = std::thread([raw, cfg, id] {
                auto run = run_protocol(cfg);
                run.id = id;
                raw->run = std::move(run);
                raw->done = true;
            });
            experiments_.emplace(id, std::move(e));
            reply(res, 202, {{"id", id}});
        });

        server_.Get(R"(/experiment/([^/]+)/results)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
            if (format != "json" && format != "csv") return reply(res, 400, {{"error", "format must be json or csv"}});
            std::lock_guard lock(exp_mutex_);
            auto it = experiments_.find(id);
            if (it == experiments_.end()) return reply(res, 404, {{"error", "unknown experiment " + id}});
            if (!it->second->done) return reply(res, 202, {{"id", id}, {"status", "running"}});
            const auto& run = it->second->run;
            res.status = 200;
            if (format == "csv") res.set_content(export_csv(run), "text/csv");
            else res.set_content(export_json(run), "application/json");
        });

        server_.Get("/stream", [this](const httplib::Request&, httplib::Response& res) {
            auto sub = hub_.subscribe();
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "application/x-ndjson",
                [this, sub](std::size_t, httplib::DataSink& sink) {
                    while (running_ && !sub->closed()) {
                        for (const auto& line : sub->pop(std::chrono::milliseconds(100)))
                            if (!sink.write(line.data(), line.size())) return false;
                        if (!sink.is_writable()) return false;
                    }
                    sink.done();
                    return true;
                },
                [this, sub](bool) { hub_.unsubscribe(sub); });
        });
    }

    ExperimentConfig cfg_;
    CognitiveLoop loop_;
    FrameHub hub_;
    httplib::Server server_;
    std::atomic<bool> running_{false};
    std::thread loop_thread_, http_thread_;
    std::mutex exp_mutex_;
    std::map<std::string, std::unique_ptr<Experiment>> experiments_;
    std::size_t exp_counter_ = 0;
};

}  // namespace coexist
