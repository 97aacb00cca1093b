#include "dig/agent.hpp"

#include "dig/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace dig {

AgentConfig AgentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open agent config: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    AgentConfig c;
    c.node_id = j.value("node_id", c.node_id);
    c.org = j.value("org", c.org);
    c.cluster = j.value("cluster", c.cluster);
    c.scenario = j.value("scenario", c.scenario);
    c.scenario_file = j.value("scenario_file", c.scenario_file);
    c.topic_prefix = j.value("topic_prefix", c.topic_prefix);
    c.seed = j.value("seed", c.seed);
    c.broker_host = j.value("broker_host", c.broker_host);
    c.broker_port = j.value("broker_port", c.broker_port);
    c.calibration_file = j.value("calibration_file", c.calibration_file);
    c.centroid_model_file = j.value("centroid_model_file", c.centroid_model_file);
    c.coarse_period_s = j.value("coarse_period_s", c.coarse_period_s);
    c.fine_period_s = j.value("fine_period_s", c.fine_period_s);
    c.psd_period_s = j.value("psd_period_s", c.psd_period_s);
    c.outage_buffer_s = j.value("outage_buffer_s", c.outage_buffer_s);
    c.realtime = j.value("realtime", c.realtime);
    if (j.contains("sensor")) {
        const auto& s = j["sensor"];
        std::string kind = s.value("transducer_kind", "hall_effect");
        c.sensor = kind == "shunt_mirror" ? SensorConfig::shunt_mirror()
                                          : SensorConfig::hall_effect();
        c.sensor.current_sensitivity_v_per_a =
            s.value("current_sensitivity", c.sensor.current_sensitivity_v_per_a);
        c.sensor.current_channel_scale =
            s.value("current_channel_scale", c.sensor.current_channel_scale);
        c.sensor.divider_ratio = s.value("divider_ratio", c.sensor.divider_ratio);
        c.sensor.filter_cutoff_hz = s.value("filter_cutoff", c.sensor.filter_cutoff_hz);
        c.sensor.analog_noise_sigma_v =
            s.value("analog_noise_sigma", c.sensor.analog_noise_sigma_v);
    }
    if (j.contains("adc")) {
        const auto& a = j["adc"];
        c.adc.fs_adc_hz = a.value("fs_adc", c.adc.fs_adc_hz);
        c.adc.avg = a.value("avg", c.adc.avg);
        c.adc.resolution_bits = a.value("resolution_bits", c.adc.resolution_bits);
        c.adc.watermark = a.value("watermark", c.adc.watermark);
        c.adc.kernel_fifo_capacity =
            a.value("kernel_fifo_capacity", c.adc.kernel_fifo_capacity);
    }
    if (j.contains("policy")) {
        const auto& p = j["policy"];
        c.policy.sigma_target_w = p.value("sigma_target", c.policy.sigma_target_w);
        c.policy.dwell_s = p.value("dwell", c.policy.dwell_s);
        if (p.contains("rate_ladder"))
            c.policy.rate_ladder_hz = p["rate_ladder"].get<std::vector<double>>();
    }
    if (j.contains("clock")) {
        const auto& k = j["clock"];
        c.clock.offset_s = k.value("offset", c.clock.offset_s);
        c.clock.drift = k.value("drift", c.clock.drift);
        c.clock.jitter_sigma_s = k.value("jitter_sigma", c.clock.jitter_sigma_s);
    }
    if (j.contains("counters")) {
        const auto& n = j["counters"];
        c.counters.amester_metrics = n.value("amester_metrics", 242);
        c.counters.amester_period_s = n.value("amester_period_s", 10.0);
        c.counters.ipmi_metrics = n.value("ipmi_metrics", 89);
        c.counters.ipmi_period_s = n.value("ipmi_period_s", 5.0);
    }
    return c;
}

namespace {

ScenarioSpec load_scenario(const AgentConfig& cfg) {
    auto catalog = ScenarioCatalog::builtin();
    if (!cfg.scenario_file.empty()) catalog.load_file(cfg.scenario_file);
    return catalog.get(cfg.scenario);
}

CalibrationModel load_or_fit_model(const AgentConfig& cfg) {
    if (!cfg.calibration_file.empty()) {
        std::ifstream probe(cfg.calibration_file);
        if (probe) return CalibrationModel::load(cfg.calibration_file);
    }
    // auto-calibration against the simulated bench; 0.1 s per step keeps
    // startup short while the fit stays comfortably inside 1 %
    auto run = calibrate_sensor(cfg.sensor, cfg.adc, 11, 0.1, cfg.seed ^ 0xca11b);
    if (!cfg.calibration_file.empty()) run.model.save(cfg.calibration_file);
    return run.model;
}

} // namespace

Agent::Agent(AgentConfig cfg)
    : cfg_(std::move(cfg)),
      spec_(load_scenario(cfg_)),
      model_(load_or_fit_model(cfg_)),
      filt_i_(cfg_.adc.fs_adc_hz, cfg_.sensor.filter_cutoff_hz),
      filt_v_(cfg_.adc.fs_adc_hz, cfg_.sensor.filter_cutoff_hz),
      stage_(cfg_.sensor, cfg_.seed ^ 0xa0a0),
      session_(cfg_.adc, cfg_.clock),
      rate_ctl_(cfg_.policy) {
    double fs = cfg_.adc.effective_rate_hz();
    fine_factor_ = std::size_t(std::llround(fs * cfg_.fine_period_s));
    coarse_factor_ = std::size_t(std::llround(fs * cfg_.coarse_period_s));
    if (fine_factor_ < 1 || coarse_factor_ < 1 || coarse_factor_ % fine_factor_ != 0)
        throw std::invalid_argument("stream periods must divide the effective rate");
    psd_every_samples_ = std::size_t(std::llround(fs * cfg_.psd_period_s));
    outage_buf_cap_ =
        std::size_t(std::llround(cfg_.outage_buffer_s / cfg_.fine_period_s)) + 64;
    amester_state_.assign(std::size_t(cfg_.counters.amester_metrics), 0.0);
    ipmi_state_.assign(std::size_t(cfg_.counters.ipmi_metrics), 0.0);

    if (!cfg_.centroid_model_file.empty())
        centroids_ = CentroidModel::load(cfg_.centroid_model_file);

    if (cfg_.broker_port != 0) {
        client_ = std::make_unique<transport::Client>();
        client_->connect(cfg_.broker_host, cfg_.broker_port,
                         {.client_id = cfg_.node_id, .auto_reconnect = true});
    }
}

Agent::~Agent() {
    if (client_) client_->close();
}

void Agent::emit(const std::string& topic, std::vector<uint8_t> payload) {
    if (sink_) {
        sink_(topic, payload);
        return;
    }
    if (!client_) return;
    if (!outage_buf_.empty()) flush_outage_buffer();
    try {
        client_->publish(topic, payload);
    } catch (const transport::ConnectionError&) {
        // broker outage: buffer, drop oldest beyond the cap
        if (outage_buf_.size() >= outage_buf_cap_) {
            outage_buf_.pop_front();
            ++stats_.outage_dropped;
        }
        outage_buf_.emplace_back(topic, std::move(payload));
    }
}

void Agent::flush_outage_buffer() {
    while (!outage_buf_.empty()) {
        try {
            client_->publish(outage_buf_.front().first, outage_buf_.front().second);
            outage_buf_.pop_front();
        } catch (const transport::ConnectionError&) {
            return;
        }
    }
}

void Agent::emit_counters(double sim_t_s) {
    auto prefix = cfg_.prefix();
    auto publish_set = [&](const char* subsystem, std::vector<double>& state,
                           uint64_t tick, uint64_t stream) {
        int64_t t_ns = int64_t(std::llround(sim_t_s * 1e9));
        for (std::size_t m = 0; m < state.size(); ++m) {
            // slow random walk plus coupling to the node load level
            state[m] += 0.05 * hash_normal(cfg_.seed ^ stream, tick, m);
            double value = 50.0 + 10.0 * state[m] +
                           0.1 * load_level_ * hash_uniform(cfg_.seed ^ stream, 0, m);
            char name[16];
            std::snprintf(name, sizeof name, "m%03zu", m);
            emit(prefix + "/" + subsystem + "/" + name,
                 transport::encode_sample({uint64_t(t_ns), value}));
            ++stats_.counter_published;
        }
    };
    while (sim_t_s >= double(amester_ticks_) * cfg_.counters.amester_period_s) {
        publish_set("occ", amester_state_, amester_ticks_, 0xa3e5);
        ++amester_ticks_;
    }
    while (sim_t_s >= double(ipmi_ticks_) * cfg_.counters.ipmi_period_s) {
        publish_set("ipmi", ipmi_state_, ipmi_ticks_, 0x19a1);
        ++ipmi_ticks_;
    }
}

void Agent::publish_psd_and_class() {
    auto rec = snapshot_psd();
    emit(cfg_.prefix() + "/pwr/psd", rec);
    ++stats_.psd_published;
    if (centroids_) {
        std::vector<double> window(psd_ring_.end() - std::ptrdiff_t(2000),
                                   psd_ring_.end());
        auto psd = compute_psd(window, cfg_.adc.effective_rate_hz(),
                               psd_ring_t0_ns_, psd_window_id_);
        auto cls = classify(psd, *centroids_);
        std::string msg = cls.label + " " + std::to_string(cls.margin);
        emit(cfg_.prefix() + "/pwr/class",
             std::vector<uint8_t>(msg.begin(), msg.end()));
    }
}

void Agent::on_calibrated(const CalibratedSample& s) {
    auto prefix = cfg_.prefix();

    fine_.p += s.power_w;
    fine_.t += double(s.t_ns);
    if (++fine_.n == fine_factor_) {
        emit(prefix + "/pwr/avg1ms",
             transport::encode_sample(
                 {uint64_t(std::llround(fine_.t / double(fine_.n))),
                  fine_.p / double(fine_.n)}));
        ++stats_.fine_published;
        fine_ = {};
    }

    coarse_.p += s.power_w;
    coarse_.t += double(s.t_ns);
    sum_i_ += s.current_a;
    sum_ii_ += s.current_a * s.current_a;
    sum_v_ += s.voltage_v;
    sum_vv_ += s.voltage_v * s.voltage_v;
    if (++coarse_.n == coarse_factor_) {
        double n = double(coarse_.n);
        double mean_p = coarse_.p / n;
        emit(prefix + "/pwr/avg1s",
             transport::encode_sample(
                 {uint64_t(std::llround(coarse_.t / n)), mean_p}));
        ++stats_.coarse_published;
        load_level_ = mean_p;

        double mi = sum_i_ / n, mv = sum_v_ / n;
        UncertaintyEstimate est;
        est.sigma_i_a = std::sqrt(std::max(0.0, (sum_ii_ - n * mi * mi) / (n - 1)));
        est.sigma_v_v = std::sqrt(std::max(0.0, (sum_vv_ - n * mv * mv) / (n - 1)));
        est.sigma_p_w = sigma_power(mi, mv, est.sigma_i_a, est.sigma_v_v);
        est.cv = mean_p != 0.0 ? est.sigma_p_w / mean_p : 0.0;
        est.window_len = coarse_.n;
        est.effective_rate_hz = cfg_.adc.effective_rate_hz();
        double rate = rate_ctl_.update(est, sim_time_s_);
        stats_.selected_rate_hz = rate;
        stats_.precision_unmet = rate_ctl_.precision_unmet();
        stats_.adc_dropped_blocks = session_.dropped_blocks();

        char health[256];
        std::snprintf(health, sizeof health,
                      "{\"selected_rate_hz\":%g,\"precision_unmet\":%s,"
                      "\"sigma_p_w\":%g,\"cv\":%g,\"adc_dropped_blocks\":%llu,"
                      "\"saturations\":%llu}",
                      rate, rate_ctl_.precision_unmet() ? "true" : "false",
                      est.sigma_p_w, est.cv,
                      static_cast<unsigned long long>(session_.dropped_blocks()),
                      static_cast<unsigned long long>(stage_.saturation_count()));
        emit(prefix + "/$health",
             std::vector<uint8_t>(health, health + std::strlen(health)));

        coarse_ = {};
        sum_i_ = sum_ii_ = sum_v_ = sum_vv_ = 0.0;
    }

    psd_ring_.push_back(s.power_w);
    if (psd_ring_.size() > 2048) psd_ring_.pop_front();
    if (psd_ring_.size() >= 2000) {
        // t0 of the newest possible 2000-sample window
        psd_ring_t0_ns_ =
            s.t_ns - int64_t(std::llround(1999.0 * 1e9 / cfg_.adc.effective_rate_hz()));
    }
    if (++samples_since_psd_ >= psd_every_samples_ && psd_ring_.size() >= 2000) {
        samples_since_psd_ = 0;
        ++psd_window_id_;
        publish_psd_and_class();
    }
}

void Agent::run(double duration_s) {
    const double chunk_s = 0.05;
    double remaining = duration_s;
    double fs = cfg_.adc.effective_rate_hz();
    while (remaining > 1e-12) {
        double this_chunk = std::min(chunk_s, remaining);
        auto wall_start = std::chrono::steady_clock::now();
        auto trace = render_trace(spec_, cfg_.adc.fs_adc_hz, this_chunk,
                                  cfg_.seed, raw_cursor_);
        for (std::size_t k = 0; k < trace.current_a.size(); ++k) {
            double iv = filt_i_.step(trace.current_a[k]);
            double vv = filt_v_.step(trace.voltage_v[k]);
            auto ch = stage_.convert(iv, vv, raw_cursor_ + k);
            session_.push_sample(ch.current_ch_v, ch.voltage_ch_v);
        }
        raw_cursor_ += trace.current_a.size();
        sim_time_s_ = double(raw_cursor_) / cfg_.adc.fs_adc_hz;

        RawBlock block;
        while (session_.pop_block(block)) {
            for (const auto& s : convert(block, model_, fs)) on_calibrated(s);
        }
        emit_counters(sim_time_s_);

        if (cfg_.realtime) {
            auto elapsed = std::chrono::steady_clock::now() - wall_start;
            auto budget = std::chrono::duration<double>(this_chunk);
            if (elapsed < budget)
                std::this_thread::sleep_for(budget - elapsed);
        }
        remaining -= this_chunk;
    }
    if (client_) client_->flush();
}

std::vector<uint8_t> Agent::snapshot_psd() {
    if (psd_ring_.size() < 2000)
        throw NotReady("agent: fewer than 40 ms of samples buffered");
    std::vector<double> window(psd_ring_.end() - 2000, psd_ring_.end());
    auto psd = compute_psd(window, cfg_.adc.effective_rate_hz(), psd_ring_t0_ns_,
                           psd_window_id_);
    return make_spectrogram_record(psd);
}

Agent::Stats agent_run(const AgentConfig& cfg, double duration_s) {
    Agent agent(cfg);
    agent.run(duration_s);
    return agent.stats();
}

} // namespace dig
