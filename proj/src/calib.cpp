#include "dig/calib.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

namespace dig {

void CalibrationModel::validate() const {
    if (gain_i <= 0.0 || gain_v <= 0.0)
        throw std::invalid_argument("calibration gains must be > 0");
    if (r2_i < 0.0 || r2_i > 1.0 || r2_v < 0.0 || r2_v > 1.0)
        throw std::invalid_argument("r2 must be in [0, 1]");
}

CalibrationModel CalibrationModel::identity() { return CalibrationModel{}; }

void CalibrationModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write calibration file: " + path);
    out.precision(17);
    out << "sensor_kind " << sensor_kind << "\n"
        << "fit_date " << (fit_date.empty() ? "unknown" : fit_date) << "\n"
        << "gain_i " << gain_i << "\n"
        << "offset_i " << offset_i << "\n"
        << "gain_v " << gain_v << "\n"
        << "offset_v " << offset_v << "\n"
        << "r2_i " << r2_i << "\n"
        << "r2_v " << r2_v << "\n"
        << "residual_sigma_i " << residual_sigma_i << "\n"
        << "residual_sigma_v " << residual_sigma_v << "\n"
        << "n_points " << n_points << "\n";
}

CalibrationModel CalibrationModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read calibration file: " + path);
    CalibrationModel m;
    std::string key;
    while (in >> key) {
        if (key == "sensor_kind") in >> m.sensor_kind;
        else if (key == "fit_date") in >> m.fit_date;
        else if (key == "gain_i") in >> m.gain_i;
        else if (key == "offset_i") in >> m.offset_i;
        else if (key == "gain_v") in >> m.gain_v;
        else if (key == "offset_v") in >> m.offset_v;
        else if (key == "r2_i") in >> m.r2_i;
        else if (key == "r2_v") in >> m.r2_v;
        else if (key == "residual_sigma_i") in >> m.residual_sigma_i;
        else if (key == "residual_sigma_v") in >> m.residual_sigma_v;
        else if (key == "n_points") in >> m.n_points;
        else { std::string skip; std::getline(in, skip); }
    }
    m.validate();
    return m;
}

LinearFit fit_linear(const std::vector<std::pair<double, double>>& code_value) {
    std::size_t n = code_value.size();
    if (n < 3) throw InsufficientData("fit_linear: need at least 3 points");
    double sx = 0, sy = 0;
    for (auto [x, y] : code_value) {
        sx += x;
        sy += y;
    }
    double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (auto [x, y] : code_value) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0) throw SingularFit("fit_linear: codes have no variance");
    LinearFit f;
    f.gain = sxy / sxx;
    f.offset = my - f.gain * mx;
    double ss_res = 0;
    for (auto [x, y] : code_value) {
        double e = y - (f.gain * x + f.offset);
        ss_res += e * e;
    }
    f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    f.residual_sigma = std::sqrt(ss_res / double(n - 2));
    f.n_points = n;
    return f;
}

std::vector<CalibratedSample> convert(const RawBlock& block,
                                      const CalibrationModel& model,
                                      double fs_hz) {
    auto ts = derive_timestamps(block, fs_hz);
    std::vector<CalibratedSample> out(block.codes_i.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        double i = model.gain_i * block.codes_i[k] + model.offset_i;
        double v = model.gain_v * block.codes_v[k] + model.offset_v;
        out[k] = {ts[k], i, v, v * i};
    }
    return out;
}

CalibrationRun calibrate_sensor(const SensorConfig& sensor, const AdcConfig& adc,
                                int n_steps, double dwell_s, uint64_t seed) {
    if (n_steps < 3) throw InsufficientData("calibrate_sensor: need >= 3 steps");
    sensor.validate();
    adc.validate();

    // stop the voltage sweep short of the ADC rail so noise never clips
    double v_max = 0.95 * adc.full_scale_v / sensor.divider_ratio;
    auto n_raw = static_cast<std::size_t>(adc.fs_adc_hz * dwell_s);

    CalibrationRun run;
    for (int k = 0; k < n_steps; ++k) {
        double frac = double(k) / double(n_steps - 1);
        double i_ref = sensor.current_range_a * frac;
        double v_ref = v_max * frac;

        AdcInputStage stage(sensor, seed + k);
        AcquisitionSession session(adc, ClockModel{.jitter_sigma_s = 0.0});
        for (std::size_t s = 0; s < n_raw; ++s) {
            auto ch = stage.convert(i_ref, v_ref, s);
            session.push_sample(ch.current_ch_v, ch.voltage_ch_v);
        }
        session.finish();

        double sum_i = 0, sum_v = 0;
        std::size_t n = 0;
        RawBlock b;
        while (session.pop_block(b)) {
            for (std::size_t j = 0; j < b.codes_i.size(); ++j) {
                sum_i += b.codes_i[j];
                sum_v += b.codes_v[j];
                ++n;
            }
        }
        if (n == 0) continue;
        // near-zero region excluded: sensors are only trusted above 2 % of range
        if (frac >= 0.02) {
            run.points_i.emplace_back(sum_i / n, i_ref);
            run.points_v.emplace_back(sum_v / n, v_ref);
        }
    }

    auto fi = fit_linear(run.points_i);
    auto fv = fit_linear(run.points_v);
    CalibrationModel m;
    m.gain_i = fi.gain;
    m.offset_i = fi.offset;
    m.gain_v = fv.gain;
    m.offset_v = fv.offset;
    m.r2_i = fi.r2;
    m.r2_v = fv.r2;
    m.residual_sigma_i = fi.residual_sigma;
    m.residual_sigma_v = fv.residual_sigma;
    m.n_points = fi.n_points;
    m.sensor_kind = sensor.transducer_kind == TransducerKind::hall_effect
                        ? "hall_effect"
                        : "shunt_mirror";
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%d", std::gmtime(&now));
    m.fit_date = buf;
    m.validate();
    run.model = m;
    return run;
}

} // namespace dig
