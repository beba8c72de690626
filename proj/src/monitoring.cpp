#include "tabsynth/monitoring.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tabsynth/error.hpp"

namespace tabsynth::monitor {

std::string to_string(EventKind kind) {
    switch (kind) {
    case EventKind::step_loss: return "step_loss";
    case EventKind::nan_detected: return "nan_detected";
    case EventKind::divergence: return "divergence";
    case EventKind::early_stop: return "early_stop";
    case EventKind::resource_sample: return "resource_sample";
    case EventKind::epoch_end: return "epoch_end";
    }
    return "unknown";
}

nlohmann::json MonitorEvent::to_json() const {
    return nlohmann::json{{"timestamp", timestamp},
                          {"model_id", model_id},
                          {"series", series},
                          {"kind", to_string(kind)},
                          {"payload", payload}};
}

ClockFn system_clock_fn() {
    return [] {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        return std::chrono::duration<double>(now).count();
    };
}

ClockFn fixed_clock_fn() {
    return [] { return 0.0; };
}

// ---------------------------------------------------------------- watching

Watcher::Watcher(const WatchPolicy& policy) : policy_(policy) {
    if (policy_.early_stop.patience <= 0) {
        throw Error(ErrorCode::ConfigInvalid, "early-stop patience must be positive");
    }
    if (policy_.early_stop.min_delta < 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "early-stop min_delta must be non-negative");
    }
    if (policy_.divergence_factor <= 1.0) {
        throw Error(ErrorCode::ConfigInvalid, "divergence factor must exceed 1");
    }
    if (policy_.divergence_epochs <= 0) {
        throw Error(ErrorCode::ConfigInvalid, "divergence epoch count must be positive");
    }
}

std::optional<WatchDecision> Watcher::observe(const TraceEvent& event) {
    if (halted_ || stopped_) {
        return std::nullopt;
    }
    if (!std::isfinite(event.value)) {
        halted_ = true;
        return WatchDecision{DecisionKind::halt_nan, event.step, event.series};
    }
    if (event.series != policy_.early_stop.monitored_loss) {
        return std::nullopt;
    }

    // Divergence is judged against the very first monitored observation; a
    // non-positive baseline (possible for adversarial objectives) disables
    // the rule rather than comparing against a meaningless threshold.
    if (!has_first_) {
        has_first_ = true;
        first_epoch_loss_ = event.value;
    } else if (first_epoch_loss_ > 0.0 &&
               event.value > policy_.divergence_factor * first_epoch_loss_) {
        ++divergence_count_;
        if (divergence_count_ >= policy_.divergence_epochs) {
            halted_ = true;
            return WatchDecision{DecisionKind::halt_divergence, event.step, event.series};
        }
    } else {
        divergence_count_ = 0;
    }

    if (!has_best_ || best_ - event.value > policy_.early_stop.min_delta) {
        has_best_ = true;
        best_ = event.value;
        stall_count_ = 0;
    } else {
        ++stall_count_;
        if (stall_count_ >= policy_.early_stop.patience) {
            stopped_ = true;
            return WatchDecision{DecisionKind::early_stop, event.step, event.series};
        }
    }
    return std::nullopt;
}

std::vector<WatchDecision> watch(const std::vector<TraceEvent>& stream,
                                 const WatchPolicy& policy) {
    Watcher watcher(policy);
    std::vector<WatchDecision> decisions;
    for (const auto& event : stream) {
        if (auto decision = watcher.observe(event)) {
            decisions.push_back(*decision);
            if (decision->kind != DecisionKind::early_stop) {
                break; // halt: later events from this source are not consumed
            }
        }
        if (watcher.halted()) {
            break;
        }
    }
    return decisions;
}

// ------------------------------------------------------------------ logging

RunLog::RunLog(ClockFn clock) : clock_(std::move(clock)) {}

void RunLog::append(const std::string& model_id, const std::string& series,
                    EventKind kind, nlohmann::json payload) {
    std::lock_guard<std::mutex> lock(mutex_);
    MonitorEvent event;
    event.timestamp = clock_();
    event.model_id = model_id;
    event.series = series;
    event.kind = kind;
    event.payload = std::move(payload);
    if (kind == EventKind::resource_sample && event.payload.contains("memory_kb")) {
        const double kb = event.payload.at("memory_kb").get<double>();
        if (kb > peak_memory_kb_) {
            peak_memory_kb_ = kb;
        }
    }
    events_.push_back(std::move(event));
}

void RunLog::record_phase(const std::string& phase, double seconds) {
    std::lock_guard<std::mutex> lock(mutex_);
    phase_seconds_[phase] += seconds;
}

std::vector<MonitorEvent> RunLog::snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return events_;
}

std::map<std::string, double> RunLog::phase_seconds() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return phase_seconds_;
}

double RunLog::peak_memory_kb() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return peak_memory_kb_;
}

bool RunLog::sampler_degraded() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return sampler_degraded_;
}

void RunLog::flag_sampler_degraded() {
    std::lock_guard<std::mutex> lock(mutex_);
    sampler_degraded_ = true;
}

void RunLog::note_memory_sample(double kb) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (kb > peak_memory_kb_) {
        peak_memory_kb_ = kb;
    }
}

std::string RunLog::to_ndjson() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::ostringstream out;
    for (const auto& event : events_) {
        out << event.to_json().dump() << '\n';
    }
    return out.str();
}

void RunLog::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::MissingFile, "cannot open log file for writing: " + path);
    }
    out << to_ndjson();
}

nlohmann::json RunLog::summary_json() const {
    std::lock_guard<std::mutex> lock(mutex_);
    nlohmann::json phases = nlohmann::json::object();
    for (const auto& [name, seconds] : phase_seconds_) {
        phases[name] = seconds;
    }
    return nlohmann::json{{"event_count", events_.size()},
                          {"peak_memory_kb", peak_memory_kb_},
                          {"phase_seconds", phases},
                          {"sampler_degraded", sampler_degraded_}};
}

std::optional<double> process_memory_kb() {
    std::ifstream status("/proc/self/status");
    if (!status) {
        return std::nullopt;
    }
    std::string line;
    while (std::getline(status, line)) {
        if (line.rfind("VmRSS:", 0) == 0) {
            std::istringstream fields(line.substr(6));
            double kb = 0.0;
            if (fields >> kb) {
                return kb;
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

ResourceSampler::ResourceSampler(RunLog& log, double interval_seconds) : log_(log) {
    if (interval_seconds <= 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "sampler interval must be positive");
    }
    if (!process_memory_kb().has_value()) {
        // No memory counter on this platform: keep wall-clock samples only
        // and mark the log so downstream readers know the peak is unusable.
        log_.flag_sampler_degraded();
        log_.append("sampler", "resources", EventKind::resource_sample,
                    {{"degraded", true}, {"reason", "SamplerUnavailable"}});
    }
    worker_ = std::thread([this, interval_seconds] {
        const auto interval =
            std::chrono::duration<double>(interval_seconds);
        const auto slice = std::chrono::milliseconds(5);
        auto next = std::chrono::steady_clock::now();
        while (!stop_.load()) {
            next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval);
            nlohmann::json payload = nlohmann::json::object();
            if (auto kb = process_memory_kb()) {
                payload["memory_kb"] = *kb;
            }
            log_.append("sampler", "resources", EventKind::resource_sample, payload);
            while (!stop_.load() && std::chrono::steady_clock::now() < next) {
                std::this_thread::sleep_for(slice);
            }
        }
    });
}

ResourceSampler::~ResourceSampler() {
    stop_.store(true);
    if (worker_.joinable()) {
        worker_.join();
    }
}

} // namespace tabsynth::monitor
