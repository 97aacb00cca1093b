#pragma once

#include "dig/adc.hpp"
#include "dig/bounded_queue.hpp"
#include "dig/calib.hpp"
#include "dig/frontend.hpp"
#include "dig/metrology.hpp"
#include "dig/scenario.hpp"
#include "dig/spectral.hpp"
#include "dig/transport/client.hpp"

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace dig {

struct CounterEmulation {
    int amester_metrics = 242;
    double amester_period_s = 10.0;
    int ipmi_metrics = 89;
    double ipmi_period_s = 5.0;
};

struct AgentConfig {
    std::string node_id = "node00";
    std::string org = "org";
    std::string cluster = "cluster";
    std::string scenario = "idle";
    std::string scenario_file;        // optional extra catalog entries
    std::string topic_prefix;         // default "<org>/<cluster>/<node_id>"
    SensorConfig sensor;
    AdcConfig adc;
    AveragingPolicy policy;
    ClockModel clock;
    CounterEmulation counters;
    double coarse_period_s = 1.0;
    double fine_period_s = 0.001;
    double psd_period_s = 0.25;
    uint64_t seed = 1;
    std::string broker_host = "127.0.0.1";
    uint16_t broker_port = 0;         // 0: offline, publish only to the sink
    std::string calibration_file;     // empty: auto-calibrate at startup
    std::string centroid_model_file;  // optional classifier
    double outage_buffer_s = 5.0;     // fine-stream seconds buffered on outage
    bool realtime = false;            // false: accelerated simulated time

    std::string prefix() const {
        return topic_prefix.empty() ? org + "/" + cluster + "/" + node_id
                                    : topic_prefix;
    }

    static AgentConfig from_json_file(const std::string& path);
};

struct NotReady : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The per-node edge daemon: scenario -> analog frontend -> ADC -> calibrated
// power stream, with downsampled 1 s / 1 ms streams, counter emulation,
// on-demand spectrograms and health reporting, published over the fabric.
class Agent {
public:
    using Sink = std::function<void(const std::string& topic,
                                    std::span<const uint8_t> payload)>;

    explicit Agent(AgentConfig cfg);
    ~Agent();

    // Replaces broker publishing (tests, offline runs).
    void set_sink(Sink sink) { sink_ = std::move(sink); }

    // Advances simulated time; chunked internally. Pacing to the wall clock
    // only when cfg.realtime.
    void run(double duration_s);

    // Most recent 40 ms window as a serialized spectrogram record.
    // Throws NotReady before enough samples are buffered.
    std::vector<uint8_t> snapshot_psd();

    struct Stats {
        uint64_t coarse_published = 0;
        uint64_t fine_published = 0;
        uint64_t psd_published = 0;
        uint64_t counter_published = 0;
        uint64_t outage_dropped = 0;
        uint64_t adc_dropped_blocks = 0;
        double selected_rate_hz = 0.0;
        bool precision_unmet = false;
    };
    Stats stats() const { return stats_; }

    const CalibrationModel& calibration() const { return model_; }
    const ScenarioSpec& scenario() const { return spec_; }

private:
    void emit(const std::string& topic, std::vector<uint8_t> payload);
    void flush_outage_buffer();
    void emit_counters(double sim_t_s);
    void on_calibrated(const CalibratedSample& s);
    void publish_psd_and_class();

    AgentConfig cfg_;
    ScenarioSpec spec_;
    CalibrationModel model_;
    std::optional<CentroidModel> centroids_;
    Sink sink_;
    std::unique_ptr<transport::Client> client_;

    FirstOrderLowpass filt_i_;
    FirstOrderLowpass filt_v_;
    AdcInputStage stage_;
    AcquisitionSession session_;
    RateController rate_ctl_;

    // downsampling accumulators over the full-rate calibrated stream
    struct Accum {
        double p = 0, t = 0;
        std::size_t n = 0;
    };
    Accum fine_, coarse_;
    std::size_t fine_factor_, coarse_factor_;
    double sum_i_ = 0, sum_ii_ = 0, sum_v_ = 0, sum_vv_ = 0;   // per coarse block

    std::deque<double> psd_ring_;
    int64_t psd_ring_t0_ns_ = 0;
    uint64_t psd_window_id_ = 0;
    std::size_t samples_since_psd_ = 0;
    std::size_t psd_every_samples_;

    uint64_t raw_cursor_ = 0;       // absolute raw-sample index (simulated time)
    double sim_time_s_ = 0.0;
    uint64_t amester_ticks_ = 0;
    uint64_t ipmi_ticks_ = 0;
    std::vector<double> amester_state_;
    std::vector<double> ipmi_state_;
    double load_level_ = 0.0;       // latest coarse mean power, couples counters

    std::deque<std::pair<std::string, std::vector<uint8_t>>> outage_buf_;
    std::size_t outage_buf_cap_;

    Stats stats_;
};

// Convenience wrapper mirroring the daemon entry point.
Agent::Stats agent_run(const AgentConfig& cfg, double duration_s);

} // namespace dig
