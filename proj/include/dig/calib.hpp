#pragma once

#include "dig/adc.hpp"
#include "dig/frontend.hpp"
#include "dig/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dig {

struct LinearFit {
    double gain = 0.0;
    double offset = 0.0;
    double r2 = 0.0;
    double residual_sigma = 0.0;
    std::size_t n_points = 0;
};

struct CalibrationModel {
    double gain_i = 1.0;    // ampere per code
    double offset_i = 0.0;
    double gain_v = 1.0;    // volt per code
    double offset_v = 0.0;
    double r2_i = 1.0;
    double r2_v = 1.0;
    double residual_sigma_i = 0.0;
    double residual_sigma_v = 0.0;
    std::size_t n_points = 0;
    std::string sensor_kind = "identity";
    std::string fit_date;

    void validate() const;
    static CalibrationModel identity();

    void save(const std::string& path) const;
    static CalibrationModel load(const std::string& path);
};

// Ordinary least squares of value against code.
// Throws InsufficientData (< 3 points) or SingularFit (no code variance).
LinearFit fit_linear(const std::vector<std::pair<double, double>>& code_value);

struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SingularFit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CalibratedSample {
    int64_t t_ns;
    double current_a;
    double voltage_v;
    double power_w;
};

std::vector<CalibratedSample> convert(const RawBlock& block,
                                      const CalibrationModel& model,
                                      double fs_hz);

// Bench procedure: hold constant-power steps across the sensor range,
// average 1 s of acquired codes per step against the scenario ground truth,
// and fit both channels. Points below 2 % of range are excluded from the fit.
struct CalibrationRun {
    CalibrationModel model;
    std::vector<std::pair<double, double>> points_i;  // (code, ampere)
    std::vector<std::pair<double, double>> points_v;  // (code, volt)
};

CalibrationRun calibrate_sensor(const SensorConfig& sensor, const AdcConfig& adc,
                                int n_steps = 11, double dwell_s = 1.0,
                                uint64_t seed = 1);

} // namespace dig
