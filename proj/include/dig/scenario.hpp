#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dig {

struct PulseTrain {
    double frequency_hz = 0.0;
    double duty = 0.5;          // fraction of the period spent high, (0, 1)
    double amplitude_w = 0.0;
    double phase_rad = 0.0;
};

struct Tone {
    double frequency_hz = 0.0;
    double amplitude_w = 0.0;
    double phase_rad = 0.0;
};

// The time-varying part of a scenario; segments swap the whole body.
struct WaveformBody {
    double baseline_power_w = 0.0;
    std::vector<PulseTrain> pulse_trains;
    std::vector<Tone> tones;
};

struct Segment {
    double t_start_s = 0.0;
    double t_end_s = 0.0;
    WaveformBody body;
};

struct ScenarioSpec {
    std::string name;
    WaveformBody body;
    double bus_voltage_v = 12.0;
    double ripple_fraction = 0.001;   // 100 Hz sinusoidal rail ripple
    double ripple_freq_hz = 100.0;
    double noise_sigma_w = 0.0;       // additive white Gaussian on power
    std::vector<Segment> segments;

    // Throws std::invalid_argument on violated invariants (duty range,
    // negative baseline, non-positive bus voltage).
    void validate() const;

    double max_component_freq_hz() const;
};

struct Trace {
    double fs_hz = 0.0;
    std::vector<double> current_a;
    std::vector<double> voltage_v;
    std::vector<double> power_w;   // exactly voltage*current, per sample
};

// Noise-free instantaneous power, clamped at 0 W.
double eval_power_clean(const ScenarioSpec& spec, double t_s);

// Power including noise; pure in (spec, t, seed).
double eval_power(const ScenarioSpec& spec, double t_s, uint64_t seed);

// v(t) with rail ripple and i(t) = p(t)/v(t); v*i reconstructs p exactly.
struct IvSample {
    double current_a;
    double voltage_v;
};
IvSample eval_current_voltage(const ScenarioSpec& spec, double t_s, uint64_t seed);

// Samples round(fs*duration) points at t = (start_sample + n)/fs; per-sample
// noise is keyed on the absolute index, so chunked rendering with a running
// start_sample is bit-identical to one long render.
Trace render_trace(const ScenarioSpec& spec, double fs_hz, double duration_s,
                   uint64_t seed, uint64_t start_sample = 0);

class ScenarioCatalog {
public:
    // Built-in presets: idle, mem_bound, cpu_bound, qe_like,
    // short_routine_6k5/9k/11k, static_tick, scan_phase_a/b,
    // duty20_100hz, duty50_100hz, dummy_load_*.
    static ScenarioCatalog builtin();

    // Merges scenarios from a JSON file (see docs/scenario_format in README)
    // on top of the built-ins; file entries win on name clash.
    void load_file(const std::string& path);

    const ScenarioSpec& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::vector<std::string> names() const;
    void put(ScenarioSpec spec);

private:
    std::map<std::string, ScenarioSpec> specs_;
};

// Parses one scenario from its JSON description.
ScenarioSpec scenario_from_json_text(const std::string& text);

} // namespace dig
