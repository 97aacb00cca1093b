// dig: single entry point for the monitoring stack. Subcommands cover
// scenario synthesis, sensor calibration, edge agents, the pub/sub broker,
// the collector, spectral analysis, classification, broker benchmarking,
// store export and the accelerated multi-rack replay demo.
//
// Exit codes: 0 success, 1 operational error, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include "dig/agent.hpp"
#include "dig/calib.hpp"
#include "dig/collector.hpp"
#include "dig/scenario.hpp"
#include "dig/spectral.hpp"
#include "dig/transport/broker.hpp"
#include "dig/transport/client.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

using nlohmann::json;
using namespace std::chrono_literals;

namespace {

std::atomic<bool> g_interrupted{false};

void on_sigint(int) { g_interrupted = true; }

void emit_report(const json& report, bool as_json) {
    if (as_json) {
        std::cout << report.dump(2) << "\n";
        return;
    }
    for (auto& [k, v] : report.items())
        std::cout << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump())
                  << "\n";
}

dig::ScenarioCatalog load_catalog(const std::string& extra_file) {
    auto cat = dig::ScenarioCatalog::builtin();
    if (!extra_file.empty()) cat.load_file(extra_file);
    return cat;
}

// One 40 ms analysis window of a scenario's power trace, rendered at fs with
// a per-window sample offset so windows are independent but reproducible.
dig::Psd scenario_window_psd(const dig::ScenarioSpec& spec, double fs_hz,
                             uint64_t seed, uint64_t window) {
    std::size_t n = std::size_t(std::lround(fs_hz * dig::kPsdWindowSeconds));
    auto tr = dig::render_trace(spec, fs_hz, dig::kPsdWindowSeconds, seed,
                                window * n);
    return dig::compute_psd(tr.power_w, fs_hz, 0, window);
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
    std::string scenario = "idle";
    std::string scenario_file;
    std::string out = "trace.csv";
    double fs_hz = 50000.0;
    double duration_s = 1.0;
    uint64_t seed = 1;
    bool as_json = false;
};

int run_synth(const SynthArgs& a) {
    auto cat = load_catalog(a.scenario_file);
    const auto& spec = cat.get(a.scenario);
    auto tr = dig::render_trace(spec, a.fs_hz, a.duration_s, a.seed);

    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot open output file: " + a.out);
    out << "t_s,current_a,voltage_v,power_w\n";
    char line[128];
    for (std::size_t i = 0; i < tr.power_w.size(); ++i) {
        std::snprintf(line, sizeof line, "%.9f,%.9g,%.9g,%.9g\n",
                      double(i) / a.fs_hz, tr.current_a[i], tr.voltage_v[i],
                      tr.power_w[i]);
        out << line;
    }
    double mean = 0;
    for (double p : tr.power_w) mean += p;
    mean /= double(tr.power_w.size());

    emit_report({{"command", "synth"},
                 {"scenario", a.scenario},
                 {"samples", tr.power_w.size()},
                 {"fs_hz", a.fs_hz},
                 {"duration_s", a.duration_s},
                 {"mean_power_w", mean},
                 {"out", a.out}},
                a.as_json);
    return 0;
}

// ------------------------------------------------------------ calibrate ----

struct CalibrateArgs {
    std::string sensor = "hall";
    std::string out;
    int steps = 11;
    double dwell_s = 1.0;
    uint64_t seed = 1;
    bool as_json = false;
};

int run_calibrate(const CalibrateArgs& a) {
    dig::SensorConfig sensor;
    if (a.sensor == "hall")
        sensor = dig::SensorConfig::hall_effect();
    else if (a.sensor == "shunt")
        sensor = dig::SensorConfig::shunt_mirror();
    else
        throw std::runtime_error("unknown sensor kind: " + a.sensor +
                                 " (expected hall or shunt)");

    auto run = dig::calibrate_sensor(sensor, dig::AdcConfig{}, a.steps,
                                     a.dwell_s, a.seed);
    if (!a.out.empty()) run.model.save(a.out);

    emit_report({{"command", "calibrate"},
                 {"sensor", a.sensor},
                 {"steps", a.steps},
                 {"r2_current", run.model.r2_i},
                 {"r2_voltage", run.model.r2_v},
                 {"gain_i_a_per_code", run.model.gain_i},
                 {"offset_i_a", run.model.offset_i},
                 {"gain_v_v_per_code", run.model.gain_v},
                 {"offset_v_v", run.model.offset_v},
                 {"points", run.model.n_points},
                 {"out", a.out}},
                a.as_json);
    return 0;
}

// ---------------------------------------------------------------- agent ----

struct AgentArgs {
    std::string config_file;
    dig::AgentConfig cfg;
    double duration_s = 10.0;
    bool as_json = false;
};

int run_agent(CLI::App* cmd, AgentArgs& a) {
    dig::AgentConfig cfg;
    if (!a.config_file.empty()) cfg = dig::AgentConfig::from_json_file(a.config_file);
    // explicit flags override config-file values
    if (cmd->count("--scenario")) cfg.scenario = a.cfg.scenario;
    if (cmd->count("--scenario-ref")) cfg.scenario_file = a.cfg.scenario_file;
    if (cmd->count("--node-id")) cfg.node_id = a.cfg.node_id;
    if (cmd->count("--org")) cfg.org = a.cfg.org;
    if (cmd->count("--cluster")) cfg.cluster = a.cfg.cluster;
    if (cmd->count("--broker-host")) cfg.broker_host = a.cfg.broker_host;
    if (cmd->count("--broker-port")) cfg.broker_port = a.cfg.broker_port;
    if (cmd->count("--seed")) cfg.seed = a.cfg.seed;
    if (cmd->count("--calibration")) cfg.calibration_file = a.cfg.calibration_file;
    if (cmd->count("--model")) cfg.centroid_model_file = a.cfg.centroid_model_file;
    if (cmd->count("--realtime")) cfg.realtime = a.cfg.realtime;

    dig::Agent agent(cfg);
    agent.run(a.duration_s);
    auto st = agent.stats();

    emit_report({{"command", "agent"},
                 {"node_id", cfg.node_id},
                 {"scenario", cfg.scenario},
                 {"duration_s", a.duration_s},
                 {"fine_published", st.fine_published},
                 {"coarse_published", st.coarse_published},
                 {"psd_published", st.psd_published},
                 {"counter_published", st.counter_published},
                 {"outage_dropped", st.outage_dropped},
                 {"adc_dropped_blocks", st.adc_dropped_blocks},
                 {"selected_rate_hz", st.selected_rate_hz},
                 {"precision_unmet", st.precision_unmet}},
                a.as_json);
    return 0;
}

// --------------------------------------------------------------- broker ----

struct BrokerArgs {
    std::string host = "127.0.0.1";
    uint16_t port = 1883;
    std::size_t queue_frames = 65536;
    std::size_t max_connections = 1024;
    double sys_interval_s = 1.0;
    double duration_s = 0.0;   // 0: serve until SIGINT
    bool as_json = false;
};

int run_broker(const BrokerArgs& a) {
    dig::transport::Broker broker({.subscriber_queue_frames = a.queue_frames,
                                   .max_connections = a.max_connections,
                                   .sys_interval_s = a.sys_interval_s});
    broker.start(a.host, a.port);
    std::cerr << "broker listening on " << a.host << ":" << broker.port() << "\n";

    std::signal(SIGINT, on_sigint);
    auto t0 = std::chrono::steady_clock::now();
    while (!g_interrupted) {
        if (a.duration_s > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count() >= a.duration_s)
            break;
        std::this_thread::sleep_for(50ms);
    }
    auto st = broker.stats();
    broker.stop();

    emit_report({{"command", "broker"},
                 {"host", a.host},
                 {"port", a.port},
                 {"published", st.published},
                 {"delivered", st.delivered},
                 {"dropped", st.dropped}},
                a.as_json);
    return 0;
}

// -------------------------------------------------------------- collect ----

struct CollectArgs {
    std::string broker_host = "127.0.0.1";
    uint16_t broker_port = 1883;
    std::vector<std::string> filters = {"#"};
    std::string store = "store";
    int fsync_every = 0;
    double duration_s = 0.0;   // 0: run until SIGINT
    bool as_json = false;
};

int run_collect(const CollectArgs& a) {
    dig::Collector collector({.broker_host = a.broker_host,
                              .broker_port = a.broker_port,
                              .filters = a.filters,
                              .store_root = a.store,
                              .fsync_every = a.fsync_every});
    collector.start();

    std::signal(SIGINT, on_sigint);
    auto t0 = std::chrono::steady_clock::now();
    while (!g_interrupted) {
        if (a.duration_s > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count() >= a.duration_s)
            break;
        std::this_thread::sleep_for(50ms);
    }
    collector.stop();

    emit_report({{"command", "collect"},
                 {"store", a.store},
                 {"stored", collector.stored_count()},
                 {"dropped", collector.dropped_count()}},
                a.as_json);
    return 0;
}

// ------------------------------------------------------------------ psd ----

struct PsdArgs {
    std::string scenario;
    std::string scenario_file;
    std::string out = "psd.csv";
    int windows = 10;
    double fs_hz = 50000.0;
    uint64_t seed = 1;
    bool as_json = false;
};

int run_psd(const PsdArgs& a) {
    auto cat = load_catalog(a.scenario_file);
    const auto& spec = cat.get(a.scenario);

    std::vector<double> acc(dig::kPsdBins, 0.0);
    double df = 0;
    for (int w = 0; w < a.windows; ++w) {
        auto psd = scenario_window_psd(spec, a.fs_hz, a.seed, uint64_t(w));
        df = psd.df_hz;
        for (std::size_t b = 0; b < dig::kPsdBins; ++b) acc[b] += psd.bins[b];
    }
    for (double& v : acc) v /= double(a.windows);

    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot open output file: " + a.out);
    out << "frequency_hz,psd_db\n";
    char line[64];
    for (std::size_t b = 0; b < dig::kPsdBins; ++b) {
        double db = 10.0 * std::log10(std::max(acc[b], 1e-30));
        std::snprintf(line, sizeof line, "%.3f,%.4f\n", b * df, db);
        out << line;
    }

    emit_report({{"command", "psd"},
                 {"scenario", a.scenario},
                 {"windows", a.windows},
                 {"fs_hz", a.fs_hz},
                 {"bins", dig::kPsdBins},
                 {"df_hz", df},
                 {"out", a.out}},
                a.as_json);
    return 0;
}

// ---------------------------------------------------------------- train ----

const std::vector<std::string> kDefaultCorpus = {
    "idle",          "mem_bound",    "cpu_bound",    "qe_like",
    "static_tick",   "scan_phase_a", "scan_phase_b", "short_routine_6k5"};

struct TrainArgs {
    std::vector<std::string> scenarios;
    std::string scenario_file;
    std::string out = "model.json";
    int windows = 50;
    double fs_hz = 50000.0;
    uint64_t seed = 1200;
    bool as_json = false;
};

int run_train(const TrainArgs& a) {
    auto cat = load_catalog(a.scenario_file);
    auto classes = a.scenarios.empty() ? kDefaultCorpus : a.scenarios;

    std::vector<std::pair<std::string, std::vector<dig::Psd>>> grouped;
    for (const auto& name : classes) {
        const auto& spec = cat.get(name);
        std::vector<dig::Psd> psds;
        for (int w = 0; w < a.windows; ++w)
            psds.push_back(scenario_window_psd(spec, a.fs_hz, a.seed, uint64_t(w)));
        grouped.emplace_back(name, std::move(psds));
    }
    auto model = dig::train_centroids(grouped);
    model.save(a.out);

    emit_report({{"command", "train"},
                 {"classes", classes},
                 {"windows_per_class", a.windows},
                 {"seed", a.seed},
                 {"out", a.out}},
                a.as_json);
    return 0;
}

// ------------------------------------------------------------- classify ----

struct ClassifyArgs {
    std::string model_file = "model.json";
    std::string scenario;
    std::string scenario_file;
    int windows = 20;
    double fs_hz = 50000.0;
    uint64_t seed = 3400;
    bool as_json = false;
};

int run_classify(const ClassifyArgs& a) {
    auto model = dig::CentroidModel::load(a.model_file);
    auto cat = load_catalog(a.scenario_file);
    const auto& spec = cat.get(a.scenario);

    std::map<std::string, int> votes;
    double margin_sum = 0;
    for (int w = 0; w < a.windows; ++w) {
        auto psd = scenario_window_psd(spec, a.fs_hz, a.seed, uint64_t(w));
        auto c = dig::classify(psd, model);
        ++votes[c.label];
        margin_sum += c.margin;
    }
    std::string best;
    int best_n = -1;
    for (auto& [label, n] : votes)
        if (n > best_n) { best = label; best_n = n; }

    emit_report({{"command", "classify"},
                 {"scenario", a.scenario},
                 {"windows", a.windows},
                 {"label", best},
                 {"agreement", double(best_n) / a.windows},
                 {"mean_margin", margin_sum / a.windows},
                 {"votes", votes}},
                a.as_json);
    return 0;
}

// ----------------------------------------------------------- bench-broker --

struct BenchArgs {
    int publishers = 16;
    double period_ms = 1.0;
    double duration_s = 60.0;
    bool realtime = false;   // default accelerated: paced by the wire only
    bool as_json = false;
};

int run_bench_broker(const BenchArgs& a) {
    namespace tp = dig::transport;
    tp::Broker broker;
    broker.start("127.0.0.1", 0);

    tp::Client sub;
    sub.connect("127.0.0.1", broker.port(), {.client_id = "bench-sub"});
    std::atomic<uint64_t> received{0};
    std::mutex mu;
    std::map<std::string, uint64_t> last_seq;
    std::atomic<bool> ordered{true};
    sub.subscribe("bench/#", [&](const std::string& t, std::span<const uint8_t> p) {
        auto s = tp::decode_sample(p);
        {
            std::lock_guard lk(mu);
            auto it = last_seq.find(t);
            if (it != last_seq.end() && s.timestamp_ns != it->second + 1)
                ordered = false;
            last_seq[t] = s.timestamp_ns;
        }
        ++received;
    });

    const uint64_t per_pub = uint64_t(a.duration_s * 1000.0 / a.period_ms);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> pubs;
    for (int p = 0; p < a.publishers; ++p) {
        pubs.emplace_back([&, p] {
            tp::Client c;
            c.connect("127.0.0.1", broker.port(),
                      {.client_id = "bench" + std::to_string(p)});
            std::string topic = "bench/p" + std::to_string(p);
            for (uint64_t m = 0; m < per_pub; ++m) {
                c.publish_sample(topic, m, double(m));
                if (a.realtime) {
                    c.flush();
                    std::this_thread::sleep_for(
                        std::chrono::duration<double, std::milli>(a.period_ms));
                } else if (m % 64 == 63) {
                    // accelerated: batch of 64 then a short breath, keeping the
                    // aggregate within the single subscriber's drain rate
                    c.flush();
                    std::this_thread::sleep_for(5ms);
                }
            }
            c.flush();
            std::this_thread::sleep_for(300ms);
            c.close();
        });
    }
    for (auto& t : pubs) t.join();

    const uint64_t want = uint64_t(a.publishers) * per_pub;
    auto deadline = std::chrono::steady_clock::now() + 30s;
    while (received.load() < want && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(5ms);
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    auto st = broker.stats();
    sub.close();
    broker.stop();

    emit_report({{"command", "bench-broker"},
                 {"publishers", a.publishers},
                 {"period_ms", a.period_ms},
                 {"duration_s", a.duration_s},
                 {"messages_per_publisher", per_pub},
                 {"published", st.published},
                 {"delivered", st.delivered},
                 {"received", received.load()},
                 {"dropped", st.dropped},
                 {"ordered", ordered.load()},
                 {"elapsed_s", elapsed}},
                a.as_json);
    return st.dropped == 0 && received.load() == want ? 0 : 1;
}

// --------------------------------------------------------------- export ----

struct ExportArgs {
    std::string store = "store";
    std::string topic;
    std::string out = "export.csv";
    std::string format = "csv";
    int64_t t0_ns = 0;
    int64_t t1_ns = INT64_MAX;
    bool as_json = false;
};

int run_export(const ExportArgs& a) {
    if (!std::filesystem::is_directory(a.store))
        throw std::runtime_error("store root does not exist: " + a.store);
    std::size_t rows;
    if (a.format == "csv")
        rows = dig::export_csv(a.store, a.topic, a.t0_ns, a.t1_ns, a.out);
    else if (a.format == "psd")
        rows = dig::export_psd_csv(a.store, a.topic, a.t0_ns, a.t1_ns, a.out);
    else
        throw std::runtime_error("unknown export format: " + a.format +
                                 " (expected csv or psd)");

    emit_report({{"command", "export"},
                 {"store", a.store},
                 {"topic", a.topic},
                 {"format", a.format},
                 {"rows", rows},
                 {"out", a.out}},
                a.as_json);
    return 0;
}

// --------------------------------------------------------------- replay ----

struct ReplayArgs {
    int racks = 3;
    int agents_per_rack = 15;
    double duration_s = 1.0;
    uint64_t seed = 7;
    std::string store;   // empty: no collectors
    std::string scenario_file;
    bool as_json = false;
};

// The full production-shaped topology at desk scale: one broker per rack,
// 15 agents per broker, optional per-rack collector, accelerated time.
int run_replay(const ReplayArgs& a) {
    const std::vector<std::string> rotation = {
        "idle",        "mem_bound",    "cpu_bound",  "qe_like", "static_tick",
        "scan_phase_a", "scan_phase_b", "short_routine_6k5"};

    std::vector<std::unique_ptr<dig::transport::Broker>> brokers;
    std::vector<std::unique_ptr<dig::Collector>> collectors;
    for (int r = 0; r < a.racks; ++r) {
        auto b = std::make_unique<dig::transport::Broker>();
        b->start("127.0.0.1", 0);
        if (!a.store.empty()) {
            auto c = std::make_unique<dig::Collector>(dig::CollectorConfig{
                .broker_host = "127.0.0.1",
                .broker_port = b->port(),
                .filters = {"#"},
                .store_root = a.store + "/rack" + std::to_string(r),
                .fsync_every = 0});
            c->start();
            collectors.push_back(std::move(c));
        }
        brokers.push_back(std::move(b));
    }

    std::mutex mu;
    std::vector<json> agent_reports;
    uint64_t fine_total = 0, coarse_total = 0, dropped_total = 0;
    std::vector<std::thread> threads;
    for (int r = 0; r < a.racks; ++r) {
        for (int n = 0; n < a.agents_per_rack; ++n) {
            threads.emplace_back([&, r, n] {
                int idx = r * a.agents_per_rack + n;
                dig::AgentConfig cfg;
                cfg.node_id = "node" + std::to_string(idx);
                cfg.cluster = "rack" + std::to_string(r);
                cfg.scenario = rotation[std::size_t(idx) % rotation.size()];
                cfg.scenario_file = a.scenario_file;
                cfg.seed = a.seed + uint64_t(idx);
                cfg.broker_port = brokers[std::size_t(r)]->port();
                dig::Agent agent(cfg);
                agent.run(a.duration_s);
                auto st = agent.stats();
                std::lock_guard lk(mu);
                fine_total += st.fine_published;
                coarse_total += st.coarse_published;
                dropped_total += st.outage_dropped;
                agent_reports.push_back({{"node_id", cfg.node_id},
                                         {"rack", r},
                                         {"scenario", cfg.scenario},
                                         {"fine_published", st.fine_published}});
            });
        }
    }
    for (auto& t : threads) t.join();
    // drain in-flight frames: wait until the collectors stop making progress
    uint64_t last_stored = 0;
    for (int i = 0; i < 100; ++i) {
        std::this_thread::sleep_for(200ms);
        uint64_t stored = 0;
        for (auto& c : collectors) stored += c->stored_count();
        if (stored == last_stored) break;
        last_stored = stored;
    }

    json broker_stats = json::array();
    uint64_t stored_total = 0;
    for (int r = 0; r < a.racks; ++r) {
        auto st = brokers[std::size_t(r)]->stats();
        broker_stats.push_back({{"rack", r},
                                {"published", st.published},
                                {"delivered", st.delivered},
                                {"dropped", st.dropped}});
    }
    for (auto& c : collectors) {
        c->stop();
        stored_total += c->stored_count();
    }
    for (auto& b : brokers) b->stop();

    json report = {{"command", "replay"},
                   {"racks", a.racks},
                   {"agents_per_rack", a.agents_per_rack},
                   {"duration_s", a.duration_s},
                   {"fine_published_total", fine_total},
                   {"coarse_published_total", coarse_total},
                   {"agent_outage_dropped_total", dropped_total},
                   {"brokers", broker_stats}};
    if (!a.store.empty()) report["stored_total"] = stored_total;
    emit_report(report, a.as_json);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dig: desk-scale out-of-band power monitoring stack"};
    app.require_subcommand(1);
    app.set_config("--config");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Render a scenario trace to CSV");
    c_synth->add_option("--scenario", synth.scenario, "Scenario name");
    c_synth->add_option("--scenario-file", synth.scenario_file,
                        "Extra scenario catalog (JSON)");
    c_synth->add_option("--fs", synth.fs_hz, "Sampling rate (Hz)");
    c_synth->add_option("--duration-s", synth.duration_s, "Trace length (s)");
    c_synth->add_option("--seed", synth.seed, "RNG seed");
    c_synth->add_option("--out", synth.out, "Output CSV path");
    c_synth->add_flag("--json", synth.as_json, "JSON summary");

    CalibrateArgs cal;
    auto* c_cal = app.add_subcommand("calibrate", "Fit a sensor calibration model");
    c_cal->add_option("--sensor", cal.sensor, "hall or shunt");
    c_cal->add_option("--steps", cal.steps, "Sweep steps");
    c_cal->add_option("--dwell-s", cal.dwell_s, "Dwell per step (s)");
    c_cal->add_option("--seed", cal.seed, "RNG seed");
    c_cal->add_option("--out", cal.out, "Model output path (JSON)");
    c_cal->add_flag("--json", cal.as_json, "JSON summary");

    AgentArgs ag;
    auto* c_ag = app.add_subcommand("agent", "Run one edge agent");
    c_ag->add_option("--agent-config", ag.config_file, "Agent config (JSON)");
    c_ag->add_option("--scenario", ag.cfg.scenario, "Scenario name");
    c_ag->add_option("--scenario-ref", ag.cfg.scenario_file,
                     "Extra scenario catalog (JSON)");
    c_ag->add_option("--node-id", ag.cfg.node_id, "Node identifier");
    c_ag->add_option("--org", ag.cfg.org, "Organization topic level");
    c_ag->add_option("--cluster", ag.cfg.cluster, "Cluster topic level");
    c_ag->add_option("--broker-host", ag.cfg.broker_host, "Broker host");
    c_ag->add_option("--broker-port", ag.cfg.broker_port,
                     "Broker port (0 = offline)");
    c_ag->add_option("--seed", ag.cfg.seed, "RNG seed");
    c_ag->add_option("--calibration", ag.cfg.calibration_file,
                     "Calibration model file");
    c_ag->add_option("--model", ag.cfg.centroid_model_file,
                     "Classifier model file");
    c_ag->add_flag("--realtime", ag.cfg.realtime, "Pace to the wall clock");
    c_ag->add_option("--duration-s", ag.duration_s, "Simulated seconds to run");
    c_ag->add_flag("--json", ag.as_json, "JSON summary");

    BrokerArgs br;
    auto* c_br = app.add_subcommand("broker", "Run a pub/sub broker");
    c_br->add_option("--host", br.host, "Bind address");
    c_br->add_option("--port", br.port, "Bind port (0 = ephemeral)");
    c_br->add_option("--queue-frames", br.queue_frames,
                     "Per-subscriber egress queue (frames)");
    c_br->add_option("--max-connections", br.max_connections, "Connection cap");
    c_br->add_option("--sys-interval-s", br.sys_interval_s,
                     "$sys heartbeat cadence (s)");
    c_br->add_option("--duration-s", br.duration_s,
                     "Serve this long then exit (0 = until SIGINT)");
    c_br->add_flag("--json", br.as_json, "JSON summary");

    CollectArgs col;
    auto* c_col = app.add_subcommand("collect", "Subscribe and persist telemetry");
    c_col->add_option("--broker-host", col.broker_host, "Broker host");
    c_col->add_option("--broker-port", col.broker_port, "Broker port");
    c_col->add_option("--filter", col.filters, "Topic filter (repeatable)");
    c_col->add_option("--store", col.store, "Store root directory");
    c_col->add_option("--fsync-every", col.fsync_every,
                      "Records between fsyncs (0 = never)");
    c_col->add_option("--duration-s", col.duration_s,
                      "Collect this long then exit (0 = until SIGINT)");
    c_col->add_flag("--json", col.as_json, "JSON summary");

    PsdArgs psd;
    auto* c_psd = app.add_subcommand("psd", "Averaged power spectrum to CSV");
    c_psd->add_option("--scenario", psd.scenario, "Scenario name")->required();
    c_psd->add_option("--scenario-file", psd.scenario_file,
                      "Extra scenario catalog (JSON)");
    c_psd->add_option("--windows", psd.windows, "Windows to average");
    c_psd->add_option("--fs", psd.fs_hz, "Sampling rate (Hz)");
    c_psd->add_option("--seed", psd.seed, "RNG seed");
    c_psd->add_option("--out", psd.out, "Output CSV path");
    c_psd->add_flag("--json", psd.as_json, "JSON summary");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train the centroid classifier");
    c_tr->add_option("--scenario", tr.scenarios,
                     "Class scenario (repeatable; default 8-class corpus)");
    c_tr->add_option("--scenario-file", tr.scenario_file,
                     "Extra scenario catalog (JSON)");
    c_tr->add_option("--windows", tr.windows, "Training windows per class");
    c_tr->add_option("--fs", tr.fs_hz, "Sampling rate (Hz)");
    c_tr->add_option("--seed", tr.seed, "RNG seed");
    c_tr->add_option("--out", tr.out, "Model output path (JSON)");
    c_tr->add_flag("--json", tr.as_json, "JSON summary");

    ClassifyArgs cls;
    auto* c_cls = app.add_subcommand("classify", "Classify scenario windows");
    c_cls->add_option("--model", cls.model_file, "Model path (JSON)")->required();
    c_cls->add_option("--scenario", cls.scenario, "Scenario name")->required();
    c_cls->add_option("--scenario-file", cls.scenario_file,
                      "Extra scenario catalog (JSON)");
    c_cls->add_option("--windows", cls.windows, "Windows to classify");
    c_cls->add_option("--fs", cls.fs_hz, "Sampling rate (Hz)");
    c_cls->add_option("--seed", cls.seed, "RNG seed");
    c_cls->add_flag("--json", cls.as_json, "JSON summary");

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench-broker", "Broker load benchmark");
    c_bench->add_option("--publishers", bench.publishers, "Publisher count");
    c_bench->add_option("--period-ms", bench.period_ms, "Publish period (ms)");
    c_bench->add_option("--duration-s", bench.duration_s, "Modeled duration (s)");
    c_bench->add_flag("--realtime", bench.realtime,
                      "Pace to the wall clock instead of accelerating");
    c_bench->add_flag("--json", bench.as_json, "JSON report");

    ExportArgs exp;
    auto* c_exp = app.add_subcommand("export", "Export stored topics to CSV");
    c_exp->add_option("--store", exp.store, "Store root directory");
    c_exp->add_option("--topic", exp.topic, "Exact topic name")->required();
    c_exp->add_option("--format", exp.format, "csv (scalar) or psd (spectrogram)");
    c_exp->add_option("--t0-ns", exp.t0_ns, "Range start (ns, inclusive)");
    c_exp->add_option("--t1-ns", exp.t1_ns, "Range end (ns, inclusive)");
    c_exp->add_option("--out", exp.out, "Output CSV path");
    c_exp->add_flag("--json", exp.as_json, "JSON summary");

    ReplayArgs rep;
    auto* c_rep = app.add_subcommand(
        "replay", "Accelerated multi-rack demo (3 brokers x 15 agents)");
    c_rep->add_option("--racks", rep.racks, "Broker/rack count");
    c_rep->add_option("--agents-per-rack", rep.agents_per_rack, "Agents per rack");
    c_rep->add_option("--duration-s", rep.duration_s, "Simulated seconds");
    c_rep->add_option("--seed", rep.seed, "Base RNG seed");
    c_rep->add_option("--store", rep.store,
                      "Per-rack collector store root (empty = no collectors)");
    c_rep->add_option("--scenario-file", rep.scenario_file,
                      "Extra scenario catalog (JSON)");
    c_rep->add_flag("--json", rep.as_json, "JSON summary");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);   // help on stdout, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*c_synth) return run_synth(synth);
        if (*c_cal) return run_calibrate(cal);
        if (*c_ag) return run_agent(c_ag, ag);
        if (*c_br) return run_broker(br);
        if (*c_col) return run_collect(col);
        if (*c_psd) return run_psd(psd);
        if (*c_tr) return run_train(tr);
        if (*c_cls) return run_classify(cls);
        if (*c_bench) return run_bench_broker(bench);
        if (*c_exp) return run_export(exp);
        if (*c_rep) return run_replay(rep);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
