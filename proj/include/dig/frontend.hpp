#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dig {

enum class TransducerKind { hall_effect, shunt_mirror };

struct SensorConfig {
    TransducerKind transducer_kind = TransducerKind::hall_effect;
    double current_range_a = 100.0;        // 100 A hall, 250 A shunt mirror
    double current_sensitivity_v_per_a = 0.040;
    // scaling stage between the transducer and the ADC; the 40 mV/A hall
    // output (4 V at 100 A) must land inside the 1.8 V full scale
    double current_channel_scale = 0.4;
    double divider_ratio = 0.12;           // 12 V rail -> 1.44 V at the ADC
    double filter_cutoff_hz = 25000.0;
    double analog_noise_sigma_v = 0.0091;  // per channel, at the ADC input
    double adc_full_scale_v = 1.8;

    double current_gain_v_per_a() const {
        return current_sensitivity_v_per_a * current_channel_scale;
    }

    void validate() const;

    static SensorConfig hall_effect();
    static SensorConfig shunt_mirror();
};

// Discrete first-order low-pass (one pole, one zero) whose magnitude tracks
// the analog response 1/sqrt(1+(f/fc)^2) within 2 % up to fs/8. Coefficients
// are fitted at construction; DC gain is exactly 1.
class FirstOrderLowpass {
public:
    FirstOrderLowpass(double fs_hz, double fc_hz);

    double step(double x);
    void reset(double steady_state_value = 0.0);

    // |H(e^{j2*pi*f/fs})|
    double magnitude(double f_hz) const;

    double pole() const { return pole_; }
    double zero() const { return zero_; }

private:
    double fs_;
    double pole_ = 0.0;
    double zero_ = 0.0;
    double gain_ = 1.0;
    double x1_ = 0.0;
    double y1_ = 0.0;
};

std::vector<double> lowpass_first_order(const std::vector<double>& samples,
                                        double fs_hz, double fc_hz);

// Stateless current/voltage -> ADC-input-volt conversion with clamping.
// Saturations (input beyond range or output beyond full scale) accumulate
// in the counter.
class AdcInputStage {
public:
    explicit AdcInputStage(SensorConfig cfg, uint64_t noise_seed = 0);

    struct Channels {
        double current_ch_v;
        double voltage_ch_v;
    };

    // sample_index keys the per-sample noise draw; pure per (cfg, seed, index).
    Channels convert(double i_a, double v_v, uint64_t sample_index);

    uint64_t saturation_count() const { return saturations_; }
    const SensorConfig& config() const { return cfg_; }

private:
    SensorConfig cfg_;
    uint64_t seed_;
    uint64_t saturations_ = 0;
};

} // namespace dig
