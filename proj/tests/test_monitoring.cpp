#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>
#include <vector>

#include "tabsynth/error.hpp"
#include "tabsynth/monitoring.hpp"

using tabsynth::Error;
using tabsynth::ErrorCode;
namespace monitor = tabsynth::monitor;
using monitor::DecisionKind;
using monitor::EventKind;
using monitor::TraceEvent;
using monitor::WatchPolicy;

namespace {

std::vector<TraceEvent> loss_stream(const std::vector<double>& losses,
                                    const std::string& series = "total") {
    std::vector<TraceEvent> stream;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        stream.push_back({static_cast<long>(i + 1), series, losses[i]});
    }
    return stream;
}

WatchPolicy policy_with(int patience, double min_delta) {
    WatchPolicy policy;
    policy.early_stop.monitored_loss = "total";
    policy.early_stop.patience = patience;
    policy.early_stop.min_delta = min_delta;
    return policy;
}

} // namespace

TEST_CASE("watch halts on the first non-finite value, carrying its step") {
    WatchPolicy policy = policy_with(3, 0.01);
    for (const double bad : {std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::infinity(),
                             -std::numeric_limits<double>::infinity()}) {
        std::vector<TraceEvent> stream = loss_stream({1.0, 0.8, 0.7});
        stream.push_back({17, "total", bad});
        stream.push_back({18, "total", 0.5}); // must not be consumed
        const auto decisions = monitor::watch(stream, policy);
        REQUIRE(decisions.size() == 1);
        CHECK(decisions[0].kind == DecisionKind::halt_nan);
        CHECK(decisions[0].step == 17);
        CHECK(decisions[0].series == "total");
    }

    SUBCASE("non-finite values on unmonitored series still halt") {
        std::vector<TraceEvent> stream = {
            {1, "total", 1.0},
            {2, "reconstruction", std::numeric_limits<double>::quiet_NaN()},
        };
        const auto decisions = monitor::watch(stream, policy);
        REQUIRE(decisions.size() == 1);
        CHECK(decisions[0].kind == DecisionKind::halt_nan);
        CHECK(decisions[0].step == 2);
        CHECK(decisions[0].series == "reconstruction");
    }
}

TEST_CASE("strictly decreasing loss never triggers early stop or divergence") {
    WatchPolicy policy = policy_with(2, 0.0);
    std::vector<double> losses;
    double value = 10.0;
    for (int i = 0; i < 200; ++i) {
        losses.push_back(value);
        value *= 0.97;
    }
    CHECK(monitor::watch(loss_stream(losses), policy).empty());
}

TEST_CASE("pinned patience walk: plateau of four after one improvement") {
    // Losses (1.0, 0.9, 0.9, 0.9, 0.9) with patience 3 and min_delta 0.01:
    // the second epoch improves, the next three do not, and the stop fires
    // exactly when the final plateau epoch is observed -- not one earlier.
    WatchPolicy policy = policy_with(3, 0.01);

    const auto four = monitor::watch(loss_stream({1.0, 0.9, 0.9, 0.9}), policy);
    CHECK(four.empty());

    const auto five = monitor::watch(loss_stream({1.0, 0.9, 0.9, 0.9, 0.9}), policy);
    REQUIRE(five.size() == 1);
    CHECK(five[0].kind == DecisionKind::early_stop);
    CHECK(five[0].step == 5);

    SUBCASE("an improvement below min_delta does not reset the counter") {
        // 0.9 -> 0.895 improves by only 0.005 < 0.01.
        const auto decisions = monitor::watch(
            loss_stream({1.0, 0.9, 0.899, 0.898, 0.897}), policy);
        REQUIRE(decisions.size() == 1);
        CHECK(decisions[0].kind == DecisionKind::early_stop);
        CHECK(decisions[0].step == 5);
    }

    SUBCASE("an improvement above min_delta resets the counter") {
        const auto decisions = monitor::watch(
            loss_stream({1.0, 0.9, 0.9, 0.9, 0.8, 0.8, 0.8}), policy);
        CHECK(decisions.empty()); // reset at epoch 5; only two stalls after
    }
}

TEST_CASE("divergence rule: ten-fold blowup sustained for five epochs halts") {
    WatchPolicy policy = policy_with(50, 0.0); // patience high so it stays out of the way

    SUBCASE("five consecutive high epochs halt on the fifth") {
        std::vector<double> losses = {1.0, 11.0, 11.0, 11.0, 11.0};
        CHECK(monitor::watch(loss_stream(losses), policy).empty());
        losses.push_back(11.0); // fifth consecutive epoch above 10x
        const auto decisions = monitor::watch(loss_stream(losses), policy);
        REQUIRE(decisions.size() == 1);
        CHECK(decisions[0].kind == DecisionKind::halt_divergence);
        CHECK(decisions[0].step == 6);
    }

    SUBCASE("a dip below the threshold resets the streak") {
        const std::vector<double> losses = {1.0, 11.0, 11.0, 11.0, 11.0,
                                            2.0,  11.0, 11.0, 11.0, 11.0};
        CHECK(monitor::watch(loss_stream(losses), policy).empty());
    }

    SUBCASE("exactly 10x is not above the threshold") {
        const std::vector<double> losses = {1.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0};
        CHECK(monitor::watch(loss_stream(losses), policy).empty());
    }

    SUBCASE("a non-positive first epoch disables the rule") {
        const std::vector<double> losses = {-1.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0};
        for (const auto& decision : monitor::watch(loss_stream(losses), policy)) {
            CHECK(decision.kind != DecisionKind::halt_divergence);
        }
    }
}

TEST_CASE("watch ignores unmonitored series for epoch rules") {
    WatchPolicy policy = policy_with(2, 0.0);
    // Flat "total" plateau interleaved with a wildly growing side series:
    // only the two flat "total" stalls count.
    std::vector<TraceEvent> stream = {
        {1, "total", 1.0},          {2, "critic", 100.0},
        {3, "total", 1.0},          {4, "critic", 1000.0},
        {5, "total", 1.0},
    };
    const auto decisions = monitor::watch(stream, policy);
    REQUIRE(decisions.size() == 1);
    CHECK(decisions[0].kind == DecisionKind::early_stop);
    CHECK(decisions[0].step == 5);
    CHECK(decisions[0].series == "total");
}

TEST_CASE("watch decisions are a pure function of the stream (replay)") {
    WatchPolicy policy = policy_with(3, 0.01);
    const std::vector<double> losses = {1.0, 0.9, 0.95, 0.94, 0.93, 0.92, 0.91};
    const auto first = monitor::watch(loss_stream(losses), policy);
    const auto second = monitor::watch(loss_stream(losses), policy);
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].kind == second[i].kind);
        CHECK(first[i].step == second[i].step);
        CHECK(first[i].series == second[i].series);
    }
}

TEST_CASE("a halted watcher consumes nothing further") {
    monitor::Watcher watcher(policy_with(3, 0.0));
    CHECK_FALSE(watcher.observe({1, "total", 1.0}).has_value());
    const auto halt =
        watcher.observe({2, "total", std::numeric_limits<double>::quiet_NaN()});
    REQUIRE(halt.has_value());
    CHECK(halt->kind == DecisionKind::halt_nan);
    CHECK(watcher.halted());
    CHECK_FALSE(watcher.observe({3, "total", 0.1}).has_value());
    CHECK_FALSE(
        watcher.observe({4, "total", std::numeric_limits<double>::quiet_NaN()})
            .has_value());
}

TEST_CASE("watch policy validation") {
    CHECK_THROWS_AS(monitor::Watcher(policy_with(0, 0.0)), Error);
    CHECK_THROWS_AS(monitor::Watcher(policy_with(3, -0.1)), Error);
    WatchPolicy bad_factor = policy_with(3, 0.0);
    bad_factor.divergence_factor = 1.0;
    CHECK_THROWS_AS(monitor::Watcher{bad_factor}, Error);
    WatchPolicy bad_epochs = policy_with(3, 0.0);
    bad_epochs.divergence_epochs = 0;
    try {
        monitor::Watcher w(bad_epochs);
        FAIL("expected ConfigInvalid");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::ConfigInvalid);
    }
}

TEST_CASE("run log preserves append order and serializes as one JSON object per line") {
    monitor::RunLog log(monitor::fixed_clock_fn());
    log.append("gan", "total", EventKind::step_loss, {{"step", 1}, {"value", 0.7}});
    log.append("gan", "total", EventKind::epoch_end, {{"epoch", 1}});
    log.append("gan", "total", EventKind::nan_detected, {{"step", 17}});

    const auto events = log.snapshot();
    REQUIRE(events.size() == 3);
    CHECK(events[0].kind == EventKind::step_loss);
    CHECK(events[1].kind == EventKind::epoch_end);
    CHECK(events[2].kind == EventKind::nan_detected);
    CHECK(events[2].payload.at("step").get<int>() == 17);
    for (const auto& event : events) {
        CHECK(event.timestamp == 0.0); // fixed clock pins every stamp
        CHECK(event.model_id == "gan");
    }

    std::istringstream lines(log.to_ndjson());
    std::string line;
    int parsed = 0;
    while (std::getline(lines, line)) {
        const auto object = nlohmann::json::parse(line);
        CHECK(object.contains("timestamp"));
        CHECK(object.contains("model_id"));
        CHECK(object.contains("series"));
        CHECK(object.contains("kind"));
        CHECK(object.contains("payload"));
        ++parsed;
    }
    CHECK(parsed == 3);
}

TEST_CASE("run log timestamps are nondecreasing under the system clock") {
    monitor::RunLog log; // system clock
    for (int i = 0; i < 50; ++i) {
        log.append("m", "total", EventKind::step_loss, {{"step", i}});
    }
    const auto events = log.snapshot();
    for (std::size_t i = 1; i < events.size(); ++i) {
        CHECK(events[i].timestamp >= events[i - 1].timestamp);
    }
}

TEST_CASE("run log tracks phase wall-clock and memory peaks") {
    monitor::RunLog log(monitor::fixed_clock_fn());
    log.record_phase("fit", 1.5);
    log.record_phase("fit", 0.5);
    log.record_phase("sample", 0.25);
    const auto phases = log.phase_seconds();
    CHECK(phases.at("fit") == doctest::Approx(2.0));
    CHECK(phases.at("sample") == doctest::Approx(0.25));

    log.append("sampler", "resources", EventKind::resource_sample,
               {{"memory_kb", 1000.0}});
    log.append("sampler", "resources", EventKind::resource_sample,
               {{"memory_kb", 3000.0}});
    log.append("sampler", "resources", EventKind::resource_sample,
               {{"memory_kb", 2000.0}});
    CHECK(log.peak_memory_kb() == doctest::Approx(3000.0));

    const auto summary = log.summary_json();
    CHECK(summary.at("event_count").get<int>() == 3);
    CHECK(summary.at("peak_memory_kb").get<double>() == doctest::Approx(3000.0));
    CHECK(summary.at("phase_seconds").at("fit").get<double>() == doctest::Approx(2.0));
    CHECK_FALSE(summary.at("sampler_degraded").get<bool>());
}

TEST_CASE("process memory counter is available and positive on this platform") {
    const auto kb = monitor::process_memory_kb();
    REQUIRE(kb.has_value());
    CHECK(*kb > 0.0);
}

TEST_CASE("resource sampler emits periodic samples with peak >= every sample") {
    monitor::RunLog log;
    const double interval = 0.05;
    {
        monitor::ResourceSampler sampler(log, interval);
        // Busy phase: touch memory so the samples have something to see, and
        // serialize mid-run to check collection never pauses.
        const auto until = std::chrono::steady_clock::now() +
                           std::chrono::milliseconds(450);
        std::vector<double> ballast;
        std::size_t mid_run_lines = 0;
        while (std::chrono::steady_clock::now() < until) {
            ballast.resize(ballast.size() + 4096, 1.0);
            std::istringstream lines(log.to_ndjson());
            std::string line;
            std::size_t count = 0;
            while (std::getline(lines, line)) {
                const auto parsed = nlohmann::json::parse(line);
                CHECK(parsed.is_object());
                ++count;
            }
            mid_run_lines = std::max(mid_run_lines, count);
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        CHECK(ballast.size() > 0); // keep the allocation alive
        CHECK(mid_run_lines >= 1);
    }

    const auto events = log.snapshot();
    std::size_t samples = 0;
    for (const auto& event : events) {
        if (event.kind != EventKind::resource_sample) {
            continue;
        }
        ++samples;
        if (event.payload.contains("memory_kb")) {
            CHECK(event.payload.at("memory_kb").get<double>() <=
                  log.peak_memory_kb());
        }
    }
    // 450 ms / 50 ms = 9 scheduled ticks; allow generous scheduler slack.
    CHECK(samples >= 4);
    CHECK_FALSE(log.sampler_degraded());
    CHECK(log.peak_memory_kb() > 0.0);
}

TEST_CASE("resource sampler rejects a non-positive interval") {
    monitor::RunLog log;
    CHECK_THROWS_AS(monitor::ResourceSampler(log, 0.0), Error);
    CHECK_THROWS_AS(monitor::ResourceSampler(log, -1.0), Error);
}

TEST_CASE("run log save writes a parseable file") {
    monitor::RunLog log(monitor::fixed_clock_fn());
    log.append("vae", "kl", EventKind::step_loss, {{"step", 3}, {"value", 0.2}});
    const std::string path = "/tmp/tabsynth_test_runlog.ndjson";
    log.save(path);
    std::ifstream in(path);
    REQUIRE(static_cast<bool>(in));
    std::string line;
    REQUIRE(std::getline(in, line));
    const auto object = nlohmann::json::parse(line);
    CHECK(object.at("model_id").get<std::string>() == "vae");
    CHECK(object.at("series").get<std::string>() == "kl");

    CHECK_THROWS_AS(log.save("/nonexistent-dir/x.ndjson"), Error);
}
