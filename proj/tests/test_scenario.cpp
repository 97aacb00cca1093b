#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dig/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dig;

TEST_CASE("clean power of a bare baseline is the baseline") {
    ScenarioSpec s;
    s.name = "flat";
    s.body.baseline_power_w = 250.0;
    for (double t : {0.0, 0.123, 1.0, 17.77})
        CHECK(eval_power_clean(s, t) == doctest::Approx(250.0));
}

TEST_CASE("tone mean and RMS match closed form") {
    // oracle: baseline B plus tone A*sin -> mean B, variance A^2/2
    ScenarioSpec s;
    s.name = "tone";
    s.body.baseline_power_w = 100.0;
    s.body.tones.push_back({1000.0, 8.0, 0.4});
    const double fs = 800000.0;
    auto tr = render_trace(s, fs, 0.1, 1);  // 100 ms = 100 full periods
    double mean = std::accumulate(tr.power_w.begin(), tr.power_w.end(), 0.0) /
                  double(tr.power_w.size());
    double var = 0;
    for (double p : tr.power_w) var += (p - mean) * (p - mean);
    var /= double(tr.power_w.size());
    CHECK(mean == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(var == doctest::Approx(8.0 * 8.0 / 2.0).epsilon(1e-4));
}

TEST_CASE("pulse train spends duty fraction of time high") {
    ScenarioSpec s;
    s.name = "pulse";
    s.body.baseline_power_w = 10.0;
    s.body.pulse_trains.push_back({100.0, 0.3, 40.0, 0.0});
    auto tr = render_trace(s, 100000.0, 1.0, 1);
    std::size_t high = 0;
    for (double p : tr.power_w) {
        bool is_high = std::abs(p - 50.0) < 1e-9;
        bool is_low = std::abs(p - 10.0) < 1e-9;
        CHECK((is_high || is_low));
        if (is_high) ++high;
    }
    CHECK(double(high) / double(tr.power_w.size()) ==
          doctest::Approx(0.3).epsilon(1e-3));
}

TEST_CASE("power is the exact product of voltage and current per sample") {
    auto cat = ScenarioCatalog::builtin();
    auto tr = render_trace(cat.get("idle"), 800000.0, 0.01, 5);
    for (std::size_t k = 0; k < tr.power_w.size(); ++k)
        CHECK(tr.power_w[k] == tr.current_a[k] * tr.voltage_v[k]);
}

TEST_CASE("voltage ripple is 0.1 percent at 100 Hz around the 12 V bus") {
    auto cat = ScenarioCatalog::builtin();
    auto tr = render_trace(cat.get("idle"), 100000.0, 0.02, 1);  // 2 periods
    auto [lo, hi] = std::minmax_element(tr.voltage_v.begin(), tr.voltage_v.end());
    CHECK(*hi == doctest::Approx(12.0 * 1.001).epsilon(1e-6));
    CHECK(*lo == doctest::Approx(12.0 * 0.999).epsilon(1e-6));
}

TEST_CASE("noise is pure: same (t, seed) gives the same power") {
    auto cat = ScenarioCatalog::builtin();
    const auto& s = cat.get("idle");
    for (double t : {0.001, 0.5, 1.25})
        CHECK(eval_power(s, t, 9) == eval_power(s, t, 9));
    CHECK(eval_power(s, 0.5, 9) != eval_power(s, 0.5, 10));
}

TEST_CASE("noise sigma matches the configured level") {
    ScenarioSpec s;
    s.name = "noisy";
    s.body.baseline_power_w = 500.0;
    s.noise_sigma_w = 2.5;
    auto tr = render_trace(s, 100000.0, 1.0, 3);
    double mean = std::accumulate(tr.power_w.begin(), tr.power_w.end(), 0.0) /
                  double(tr.power_w.size());
    double var = 0;
    for (double p : tr.power_w) var += (p - mean) * (p - mean);
    var /= double(tr.power_w.size() - 1);
    CHECK(mean == doctest::Approx(500.0).epsilon(0.001));
    CHECK(std::sqrt(var) == doctest::Approx(2.5).epsilon(0.02));
}

TEST_CASE("chunked rendering with start_sample is bit-identical to one shot") {
    auto cat = ScenarioCatalog::builtin();
    const auto& s = cat.get("static_tick");
    const double fs = 800000.0;
    auto whole = render_trace(s, fs, 0.02, 7);
    auto a = render_trace(s, fs, 0.01, 7, 0);
    auto b = render_trace(s, fs, 0.01, 7, a.power_w.size());
    REQUIRE(a.power_w.size() + b.power_w.size() == whole.power_w.size());
    for (std::size_t k = 0; k < a.power_w.size(); ++k)
        CHECK(whole.power_w[k] == a.power_w[k]);
    for (std::size_t k = 0; k < b.power_w.size(); ++k)
        CHECK(whole.power_w[a.power_w.size() + k] == b.power_w[k]);
}

TEST_CASE("power never goes negative") {
    ScenarioSpec s;
    s.name = "deep";
    s.body.baseline_power_w = 1.0;
    s.noise_sigma_w = 50.0;
    auto tr = render_trace(s, 10000.0, 1.0, 11);
    for (double p : tr.power_w) CHECK(p >= 0.0);
}

TEST_CASE("segments swap the body inside their window") {
    ScenarioSpec s;
    s.name = "seg";
    s.body.baseline_power_w = 100.0;
    Segment sg;
    sg.t_start_s = 1.0;
    sg.t_end_s = 2.0;
    sg.body.baseline_power_w = 300.0;
    s.segments.push_back(sg);
    CHECK(eval_power_clean(s, 0.5) == doctest::Approx(100.0));
    CHECK(eval_power_clean(s, 1.5) == doctest::Approx(300.0));
    CHECK(eval_power_clean(s, 2.5) == doctest::Approx(100.0));
}

TEST_CASE("validation rejects bad specs") {
    ScenarioSpec s;
    s.name = "bad";
    s.body.pulse_trains.push_back({100.0, 0.0, 10.0, 0.0});
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.body.pulse_trains[0].duty = 1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.body.pulse_trains[0].duty = 0.5;
    s.bus_voltage_v = 0.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.bus_voltage_v = 12.0;
    s.body.baseline_power_w = -1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("builtin catalog has the expected presets") {
    auto cat = ScenarioCatalog::builtin();
    for (const char* nm :
         {"idle", "mem_bound", "cpu_bound", "qe_like", "short_routine_6k5",
          "short_routine_9k", "short_routine_11k", "static_tick", "scan_phase_a",
          "scan_phase_b", "duty20_100hz", "duty50_100hz", "dummy_load_idle",
          "dummy_load_mid", "dummy_load_max"})
        CHECK(cat.contains(nm));
    CHECK_THROWS_AS((void)cat.get("nope"), std::out_of_range);
    CHECK(cat.get("idle").body.baseline_power_w == doctest::Approx(180.0));
    CHECK(cat.get("mem_bound").body.tones.size() == 3);
    CHECK(cat.get("cpu_bound").body.tones.size() == 10);
}

TEST_CASE("scenario JSON round trip") {
    std::string text = R"({
        "name": "custom",
        "baseline_power": 150.0,
        "noise_sigma": 1.5,
        "bus_voltage": 12.0,
        "tones": [{"frequency": 2000.0, "amplitude": 5.0}],
        "pulse_trains": [{"frequency": 400.0, "duty": 0.25, "amplitude": 20.0}],
        "segments": [{"t_start": 0.0, "t_end": 1.0, "baseline_power": 90.0}]
    })";
    auto s = scenario_from_json_text(text);
    CHECK(s.name == "custom");
    CHECK(s.body.baseline_power_w == doctest::Approx(150.0));
    CHECK(s.body.tones.size() == 1);
    CHECK(s.body.pulse_trains[0].duty == doctest::Approx(0.25));
    CHECK(s.segments.size() == 1);
    CHECK(eval_power_clean(s, 0.5) < eval_power_clean(s, 1.5));
}

TEST_CASE("max_component_freq reflects the fastest element") {
    auto cat = ScenarioCatalog::builtin();
    CHECK(cat.get("short_routine_11k").max_component_freq_hz() ==
          doctest::Approx(11000.0));
    CHECK(cat.get("dummy_load_idle").max_component_freq_hz() ==
          doctest::Approx(100.0));  // ripple only
}
