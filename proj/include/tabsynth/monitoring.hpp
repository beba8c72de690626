#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabsynth/blocks.hpp"

namespace tabsynth::monitor {

enum class EventKind {
    step_loss,
    nan_detected,
    divergence,
    early_stop,
    resource_sample,
    epoch_end
};

std::string to_string(EventKind kind);

struct MonitorEvent {
    double timestamp = 0.0;
    std::string model_id;
    std::string series;
    EventKind kind = EventKind::step_loss;
    nlohmann::json payload = nlohmann::json::object();

    nlohmann::json to_json() const;
};

// Seconds-resolution clock; the fixed clock pins timestamps to zero so two
// runs serialize identically.
using ClockFn = std::function<double()>;
ClockFn system_clock_fn();
ClockFn fixed_clock_fn();

// ---------------------------------------------------------------- watching

struct TraceEvent {
    long step = 0;
    std::string series;
    double value = 0.0;
};

enum class DecisionKind { halt_nan, halt_divergence, early_stop };

struct WatchDecision {
    DecisionKind kind;
    long step = 0;
    std::string series;
};

struct WatchPolicy {
    blocks::EarlyStopPolicy early_stop;
    double divergence_factor = 10.0;
    int divergence_epochs = 5;
};

// Incremental trainer-side watcher. Feed every loss observation; epoch-level
// rules (early stop, divergence) look only at the monitored series.
class Watcher {
public:
    explicit Watcher(const WatchPolicy& policy);

    // Returns a decision when one fires; the caller is expected to stop
    // feeding events after a halt.
    std::optional<WatchDecision> observe(const TraceEvent& event);
    bool halted() const { return halted_; }

private:
    WatchPolicy policy_;
    bool halted_ = false;
    bool stopped_ = false;
    double best_ = 0.0;
    bool has_best_ = false;
    int stall_count_ = 0;
    double first_epoch_loss_ = 0.0;
    bool has_first_ = false;
    int divergence_count_ = 0;
};

// Pure replay form: runs the stream through a Watcher and collects every
// decision in order. Processing stops after the first halt decision.
std::vector<WatchDecision> watch(const std::vector<TraceEvent>& stream,
                                 const WatchPolicy& policy);

// ------------------------------------------------------------------ logging

class RunLog {
public:
    explicit RunLog(ClockFn clock = system_clock_fn());

    void append(const std::string& model_id, const std::string& series,
                EventKind kind, nlohmann::json payload);
    void record_phase(const std::string& phase, double seconds);

    std::vector<MonitorEvent> snapshot() const;
    std::map<std::string, double> phase_seconds() const;
    double peak_memory_kb() const;
    bool sampler_degraded() const;
    void flag_sampler_degraded();
    void note_memory_sample(double kb);

    std::string to_ndjson() const;
    void save(const std::string& path) const;
    nlohmann::json summary_json() const;

private:
    mutable std::mutex mutex_;
    ClockFn clock_;
    std::vector<MonitorEvent> events_;
    std::map<std::string, double> phase_seconds_;
    double peak_memory_kb_ = 0.0;
    bool sampler_degraded_ = false;
};

// Reads VmRSS from the process status table; empty when unsupported.
std::optional<double> process_memory_kb();

// Background memory sampler; emits resource_sample events every `interval`
// seconds until destroyed. When the platform exposes no memory counter the
// log is flagged and samples carry wall-clock only.
class ResourceSampler {
public:
    ResourceSampler(RunLog& log, double interval_seconds);
    ~ResourceSampler();

    ResourceSampler(const ResourceSampler&) = delete;
    ResourceSampler& operator=(const ResourceSampler&) = delete;

private:
    RunLog& log_;
    std::atomic<bool> stop_{false};
    std::thread worker_;
};

} // namespace tabsynth::monitor
