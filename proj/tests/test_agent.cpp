#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dig/agent.hpp"
#include "dig/transport/broker.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

using namespace dig;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

struct Captured {
    std::mutex mu;
    std::vector<std::pair<std::string, std::vector<uint8_t>>> msgs;
    Agent::Sink sink() {
        return [this](const std::string& t, std::span<const uint8_t> p) {
            std::lock_guard lk(mu);
            msgs.emplace_back(t, std::vector<uint8_t>(p.begin(), p.end()));
        };
    }
    std::size_t count_suffix(const std::string& suffix) {
        std::lock_guard lk(mu);
        std::size_t n = 0;
        for (auto& [t, p] : msgs)
            if (t.ends_with(suffix)) ++n;
        return n;
    }
};

AgentConfig base_config() {
    AgentConfig cfg;
    cfg.node_id = "node07";
    cfg.org = "org";
    cfg.cluster = "east";
    cfg.scenario = "idle";
    cfg.seed = 42;
    return cfg;
}

template <class Pred>
bool eventually(Pred pred, std::chrono::milliseconds deadline = 10000ms) {
    auto t0 = std::chrono::steady_clock::now();
    while (std::chrono::steady_clock::now() - t0 < deadline) {
        if (pred()) return true;
        std::this_thread::sleep_for(5ms);
    }
    return pred();
}

} // namespace

TEST_CASE("two simulated seconds produce the documented stream counts") {
    auto cfg = base_config();
    Agent agent(cfg);
    Captured cap;
    agent.set_sink(cap.sink());
    agent.run(2.0);

    auto st = agent.stats();
    // 50 kS/s effective: 1 ms stream at 1 kHz, 1 s stream at 1 Hz
    CHECK(st.fine_published == 2000);
    CHECK(st.coarse_published == 2);
    CHECK(st.psd_published == 8);           // every 0.25 s once warmed up
    CHECK(st.counter_published == 242 + 89);  // one occ + one ipmi sweep at t=0
    CHECK(st.adc_dropped_blocks == 0);
    CHECK(st.outage_dropped == 0);

    CHECK(cap.count_suffix("/pwr/avg1ms") == 2000);
    CHECK(cap.count_suffix("/pwr/avg1s") == 2);
    CHECK(cap.count_suffix("/pwr/psd") == 8);
    CHECK(cap.count_suffix("/$health") == 2);

    // every topic carries the configured prefix
    std::lock_guard lk(cap.mu);
    for (auto& [t, p] : cap.msgs) CHECK(t.starts_with("org/east/node07/"));
}

TEST_CASE("fine and coarse streams agree: downsampling conserves energy") {
    auto cfg = base_config();
    Agent agent(cfg);
    Captured cap;
    agent.set_sink(cap.sink());
    agent.run(3.0);

    std::vector<std::pair<int64_t, double>> fine, coarse;
    {
        std::lock_guard lk(cap.mu);
        for (auto& [t, p] : cap.msgs) {
            if (t.ends_with("/pwr/avg1ms")) {
                auto s = transport::decode_sample(p);
                fine.emplace_back(int64_t(s.timestamp_ns), s.value);
            } else if (t.ends_with("/pwr/avg1s")) {
                auto s = transport::decode_sample(p);
                coarse.emplace_back(int64_t(s.timestamp_ns), s.value);
            }
        }
    }
    REQUIRE(fine.size() == 3000);
    REQUIRE(coarse.size() == 3);
    for (std::size_t c = 0; c < coarse.size(); ++c) {
        double sum = 0;
        for (std::size_t k = 0; k < 1000; ++k) sum += fine[c * 1000 + k].second;
        double from_fine = sum / 1000.0;
        CHECK(std::abs(from_fine - coarse[c].second) <=
              0.001 * std::abs(coarse[c].second));
    }
    // timestamps are monotone and centered inside each averaging window
    for (std::size_t i = 1; i < fine.size(); ++i)
        CHECK(fine[i].first > fine[i - 1].first);
    CHECK(std::abs(double(fine[1].first - fine[0].first) - 1e6) < 3e4);
    CHECK(std::abs(double(coarse[1].first - coarse[0].first) - 1e9) < 3e6);
}

TEST_CASE("counter emulation fires on its two native cadences") {
    auto cfg = base_config();
    Agent agent(cfg);
    Captured cap;
    agent.set_sink(cap.sink());
    agent.run(11.0);
    // occ sweeps at t=0 and t=10; ipmi sweeps at t=0, 5, 10
    CHECK(cap.count_suffix("/occ/m000") == 2);
    CHECK(cap.count_suffix("/ipmi/m000") == 3);
    CHECK(agent.stats().counter_published == 2 * 242 + 3 * 89);
    // all metric channels present
    std::set<std::string> occ_topics, ipmi_topics;
    {
        std::lock_guard lk(cap.mu);
        for (auto& [t, p] : cap.msgs) {
            if (t.find("/occ/") != std::string::npos) occ_topics.insert(t);
            if (t.find("/ipmi/") != std::string::npos) ipmi_topics.insert(t);
        }
    }
    CHECK(occ_topics.size() == 242);
    CHECK(ipmi_topics.size() == 89);
}

TEST_CASE("psd snapshot is not ready before 40 ms of samples") {
    auto cfg = base_config();
    Agent agent(cfg);
    agent.set_sink([](auto&, auto) {});
    CHECK_THROWS_AS(agent.snapshot_psd(), NotReady);
    agent.run(0.05);
    auto rec = agent.snapshot_psd();
    REQUIRE(rec.size() == kSpectrogramRecordSize);
    auto parsed = parse_spectrogram_record(rec);
    CHECK(parsed.fs_hz == doctest::Approx(50000.0));
    CHECK(parsed.bins_db.size() == kPsdBins);
    CHECK(parsed.t_start_ns > 0);
}

TEST_CASE("health report is valid json with the advertised fields") {
    auto cfg = base_config();
    Agent agent(cfg);
    Captured cap;
    agent.set_sink(cap.sink());
    agent.run(1.0);
    std::string body;
    {
        std::lock_guard lk(cap.mu);
        for (auto& [t, p] : cap.msgs)
            if (t.ends_with("/$health")) body.assign(p.begin(), p.end());
    }
    REQUIRE(!body.empty());
    for (const char* field :
         {"selected_rate_hz", "precision_unmet", "sigma_p_w", "cv",
          "adc_dropped_blocks", "saturations"})
        CHECK(body.find(field) != std::string::npos);
    CHECK(body.front() == '{');
    CHECK(body.back() == '}');
}

TEST_CASE("classifier output appears when a model is configured") {
    // train a tiny model from scenario windows, point the agent at it
    std::vector<LabeledWindow> train;
    auto cat = ScenarioCatalog::builtin();
    for (int w = 0; w < 6; ++w)
        for (const char* name : {"idle", "cpu_bound", "mem_bound"}) {
            auto tr = render_trace(cat.get(name), 50000.0, kPsdWindowSeconds,
                                   500 + w);
            train.push_back({name, compute_psd(tr.power_w, 50000.0)});
        }
    auto model = train_centroids(train);
    auto path = fs::temp_directory_path() / "dig_agent_centroids.bin";
    model.save(path.string());

    auto cfg = base_config();
    cfg.scenario = "cpu_bound";
    cfg.centroid_model_file = path.string();
    Agent agent(cfg);
    Captured cap;
    agent.set_sink(cap.sink());
    agent.run(0.5);
    fs::remove(path);

    std::vector<std::string> labels;
    {
        std::lock_guard lk(cap.mu);
        for (auto& [t, p] : cap.msgs)
            if (t.ends_with("/pwr/class")) labels.emplace_back(p.begin(), p.end());
    }
    REQUIRE(!labels.empty());
    for (auto& l : labels) {
        auto sp = l.find(' ');
        REQUIRE(sp != std::string::npos);
        CHECK(l.substr(0, sp) == "cpu_bound");
        CHECK(std::stod(l.substr(sp + 1)) > 0.0);
    }
}

TEST_CASE("config json round trip overrides every block") {
    auto path = fs::temp_directory_path() / "dig_agent_cfg.json";
    {
        std::ofstream out(path);
        out << R"({
            "node_id": "n42", "org": "o", "cluster": "c",
            "scenario": "cpu_bound", "seed": 9,
            "broker_port": 1234,
            "coarse_period_s": 0.5, "fine_period_s": 0.002,
            "sensor": {"transducer_kind": "shunt_mirror", "divider_ratio": 0.1},
            "adc": {"avg": 8, "watermark": 32},
            "policy": {"sigma_target": 0.25, "rate_ladder": [50000, 1000]},
            "clock": {"offset": 1.5, "jitter_sigma": 0},
            "counters": {"amester_metrics": 3, "ipmi_metrics": 2}
        })";
    }
    auto cfg = AgentConfig::from_json_file(path.string());
    fs::remove(path);
    CHECK(cfg.node_id == "n42");
    CHECK(cfg.prefix() == "o/c/n42");
    CHECK(cfg.scenario == "cpu_bound");
    CHECK(cfg.seed == 9);
    CHECK(cfg.broker_port == 1234);
    CHECK(cfg.coarse_period_s == 0.5);
    CHECK(cfg.fine_period_s == 0.002);
    CHECK(cfg.sensor.transducer_kind == TransducerKind::shunt_mirror);
    CHECK(cfg.sensor.divider_ratio == 0.1);
    CHECK(cfg.adc.avg == 8);
    CHECK(cfg.adc.watermark == 32);
    CHECK(cfg.policy.sigma_target_w == 0.25);
    CHECK(cfg.policy.rate_ladder_hz == std::vector<double>{50000, 1000});
    CHECK(cfg.clock.offset_s == 1.5);
    CHECK(cfg.clock.jitter_sigma_s == 0.0);
    CHECK(cfg.counters.amester_metrics == 3);
    CHECK(cfg.counters.ipmi_metrics == 2);
    CHECK_THROWS_AS(AgentConfig::from_json_file("/nonexistent/cfg.json"),
                    std::runtime_error);
}

TEST_CASE("stream periods must divide the effective rate") {
    auto cfg = base_config();
    cfg.fine_period_s = 0.0003;   // 15 samples; 50000 not divisible by 15
    CHECK_THROWS_AS(Agent{cfg}, std::invalid_argument);
}

TEST_CASE("agent publishes through a broker and rides out an outage") {
    transport::Broker broker;
    broker.start("127.0.0.1", 0);
    uint16_t port = broker.port();

    std::mutex mu;
    std::vector<std::pair<int64_t, double>> fine;
    transport::Client sub;
    sub.connect("127.0.0.1", port,
                {.client_id = "sub", .auto_reconnect = true,
                 .backoff_initial_s = 0.05});
    sub.subscribe("org/east/node07/pwr/avg1ms",
                  [&](const std::string&, std::span<const uint8_t> p) {
                      auto s = transport::decode_sample(p);
                      std::lock_guard lk(mu);
                      fine.emplace_back(int64_t(s.timestamp_ns), s.value);
                  });

    auto cfg = base_config();
    cfg.broker_port = port;
    Agent agent(cfg);

    agent.run(1.0);
    REQUIRE(eventually([&] {
        std::lock_guard lk(mu);
        return fine.size() >= 1000;
    }));

    // take the broker down mid-flight: the agent must buffer, not crash
    broker.stop();
    std::this_thread::sleep_for(100ms);
    agent.run(1.0);

    transport::Broker broker2;
    broker2.start("127.0.0.1", port);
    // wait for both sides to reconnect, then produce one more second
    std::this_thread::sleep_for(500ms);
    agent.run(1.0);

    // everything except what was lost in the disconnection race arrives,
    // including buffered samples from the outage window
    CHECK(eventually([&] {
        std::lock_guard lk(mu);
        return fine.size() >= 2800;
    }));
    {
        std::lock_guard lk(mu);
        std::set<int64_t> stamps;
        int outage_window = 0;
        for (auto& [t, v] : fine) {
            stamps.insert(t);
            if (t > 1'000'000'000 && t < 2'000'000'000) ++outage_window;
        }
        CHECK(stamps.size() == fine.size());   // no duplicates
        CHECK(outage_window > 800);            // outage samples were replayed
    }
    CHECK(agent.stats().outage_dropped == 0);
    sub.close();
    broker2.stop();
}
