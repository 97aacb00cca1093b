#include "dig/frontend.hpp"

#include "dig/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dig {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
}

void SensorConfig::validate() const {
    if (current_sensitivity_v_per_a <= 0.0)
        throw std::invalid_argument("current_sensitivity must be > 0");
    if (current_channel_scale <= 0.0)
        throw std::invalid_argument("current_channel_scale must be > 0");
    if (current_range_a * current_gain_v_per_a() > adc_full_scale_v)
        throw std::invalid_argument(
            "current range exceeds ADC full scale; adjust current_channel_scale");
    if (!(divider_ratio > 0.0 && divider_ratio <= 1.0))
        throw std::invalid_argument("divider_ratio must be in (0, 1]");
    if (filter_cutoff_hz <= 0.0)
        throw std::invalid_argument("filter_cutoff must be > 0");
    if (analog_noise_sigma_v < 0.0)
        throw std::invalid_argument("analog_noise_sigma must be >= 0");
    if (adc_full_scale_v <= 0.0)
        throw std::invalid_argument("adc_full_scale must be > 0");
    double expect = transducer_kind == TransducerKind::hall_effect ? 100.0 : 250.0;
    if (current_range_a != expect)
        throw std::invalid_argument("current_range does not match transducer kind");
}

SensorConfig SensorConfig::hall_effect() {
    SensorConfig c;
    c.transducer_kind = TransducerKind::hall_effect;
    c.current_range_a = 100.0;
    c.current_sensitivity_v_per_a = 0.040;
    return c;
}

SensorConfig SensorConfig::shunt_mirror() {
    SensorConfig c;
    c.transducer_kind = TransducerKind::shunt_mirror;
    c.current_range_a = 250.0;
    // transresistance chosen so 250 A lands near full scale (0.25 V margin)
    c.current_sensitivity_v_per_a = 0.0062;
    c.current_channel_scale = 1.0;   // 250 A -> 1.55 V, inside full scale
    return c;
}

namespace {

double discrete_mag2(double p, double z, double g, double w) {
    double c = std::cos(w);
    double num = 1.0 - 2.0 * z * c + z * z;
    double den = 1.0 - 2.0 * p * c + p * p;
    return g * g * num / den;
}

double analog_mag(double f, double fc) {
    double r = f / fc;
    return 1.0 / std::sqrt(1.0 + r * r);
}

} // namespace

FirstOrderLowpass::FirstOrderLowpass(double fs_hz, double fc_hz) : fs_(fs_hz) {
    if (fs_hz <= 0.0) throw std::invalid_argument("lowpass: fs must be > 0");
    if (!(fc_hz > 0.0 && fc_hz < fs_hz / 2.0))
        throw std::invalid_argument("lowpass: fc must be in (0, fs/2)");

    // Neither the bilinear nor the matched-z single pole stays within 2 % of
    // the analog magnitude out to fs/8 at fc = fs/32, so the pole and zero
    // are fitted numerically under the exact-DC-gain constraint.
    const int nf = 96;
    std::vector<double> freqs(nf);
    double f_lo = std::max(fc_hz * 1e-3, fs_hz * 1e-5);
    double f_hi = fs_hz / 8.0;
    for (int i = 0; i < nf; ++i)
        freqs[i] = f_lo * std::pow(f_hi / f_lo, i / double(nf - 1));
    double f_guard = std::min(10.0 * fc_hz, 0.45 * fs_hz);

    auto cost = [&](double p, double z) {
        double g = (1.0 - p) / (1.0 - z);
        double worst = 0.0;
        for (double f : freqs) {
            double w = kTwoPi * f / fs_hz;
            double hd = std::sqrt(discrete_mag2(p, z, g, w));
            double ha = analog_mag(f, fc_hz);
            worst = std::max(worst, std::abs(hd - ha) / ha);
        }
        // keep the stopband at least as steep as the analog prototype
        double wg = kTwoPi * f_guard / fs_hz;
        double hg = std::sqrt(discrete_mag2(p, z, g, wg));
        double ag = analog_mag(f_guard, fc_hz);
        if (hg > ag * 1.05) worst += (hg / ag - 1.05) * 10.0;
        return worst;
    };

    double p0 = std::exp(-kTwoPi * fc_hz / fs_hz);
    double best_p = p0, best_z = 0.0;
    double dp = std::min(0.2, (1.0 - p0) * 0.9), dz = 0.95;
    double best = cost(best_p, best_z);
    for (int round = 0; round < 5; ++round) {
        for (int ip = -12; ip <= 12; ++ip) {
            double p = std::clamp(best_p + dp * ip / 12.0, 0.0, 0.999999);
            for (int iz = -12; iz <= 12; ++iz) {
                double z = std::clamp(best_z + dz * iz / 12.0, -0.999999, 0.95);
                double c = cost(p, z);
                if (c < best) {
                    best = c;
                    best_p = p;
                    best_z = z;
                }
            }
        }
        dp *= 0.2;
        dz *= 0.2;
    }
    pole_ = best_p;
    zero_ = best_z;
    gain_ = (1.0 - pole_) / (1.0 - zero_);
}

double FirstOrderLowpass::step(double x) {
    double y = gain_ * (x - zero_ * x1_) + pole_ * y1_;
    x1_ = x;
    y1_ = y;
    return y;
}

void FirstOrderLowpass::reset(double v) {
    x1_ = v;
    y1_ = v;
}

double FirstOrderLowpass::magnitude(double f_hz) const {
    return std::sqrt(discrete_mag2(pole_, zero_, gain_, kTwoPi * f_hz / fs_));
}

std::vector<double> lowpass_first_order(const std::vector<double>& samples,
                                        double fs_hz, double fc_hz) {
    FirstOrderLowpass filt(fs_hz, fc_hz);
    if (!samples.empty()) filt.reset(samples.front());
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = filt.step(samples[i]);
    return out;
}

AdcInputStage::AdcInputStage(SensorConfig cfg, uint64_t noise_seed)
    : cfg_(cfg), seed_(noise_seed) {
    cfg_.validate();
}

AdcInputStage::Channels AdcInputStage::convert(double i_a, double v_v,
                                               uint64_t sample_index) {
    if (i_a > cfg_.current_range_a) {
        i_a = cfg_.current_range_a;
        ++saturations_;
    } else if (i_a < 0.0) {
        i_a = 0.0;
        ++saturations_;
    }
    double ci = i_a * cfg_.current_gain_v_per_a();
    double cv = v_v * cfg_.divider_ratio;
    if (cfg_.analog_noise_sigma_v > 0.0) {
        ci += cfg_.analog_noise_sigma_v * hash_normal(seed_, sample_index, 1);
        cv += cfg_.analog_noise_sigma_v * hash_normal(seed_, sample_index, 2);
    }
    auto clamp_fs = [&](double x) {
        if (x < 0.0 || x > cfg_.adc_full_scale_v) ++saturations_;
        return std::clamp(x, 0.0, cfg_.adc_full_scale_v);
    };
    return {clamp_fs(ci), clamp_fs(cv)};
}

} // namespace dig
