#pragma once

#include "dig/calib.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dig {

struct UncertaintyEstimate {
    double sigma_i_a = 0.0;
    double sigma_v_v = 0.0;
    double sigma_p_w = 0.0;
    double cv = 0.0;               // sigma_p / mean power
    std::size_t window_len = 0;
    double effective_rate_hz = 0.0;
};

struct AveragingPolicy {
    double sigma_target_w = 0.5;
    std::vector<double> rate_ladder_hz = {50000.0, 25000.0, 1000.0, 1.0};
    double low_current_threshold_a = 20.0;
    double dwell_s = 1.0;

    void validate() const;
};

// Uncorrelated-error propagation for P = V*I.
double sigma_power(double i_mean_a, double v_mean_v, double sigma_i_a,
                   double sigma_v_v);

UncertaintyEstimate estimate_noise(std::span<const CalibratedSample> window,
                                   double effective_rate_hz);

struct AveragedSample {
    int64_t t_ns;    // mean of member timestamps
    double power_w;
};

// Block means of M consecutive power samples; trailing remainder dropped.
std::vector<AveragedSample> software_average(
    std::span<const CalibratedSample> stream, std::size_t factor);
std::vector<AveragedSample> software_average(
    std::span<const AveragedSample> stream, std::size_t factor);

struct RateSelection {
    double rate_hz;
    double predicted_sigma_w;
    bool precision_unmet;   // even the ladder floor misses the target
};

// Highest ladder rate whose white-noise-predicted sigma meets the target.
// `estimate` must be measured at the ladder's top rate.
RateSelection select_rate(const UncertaintyEstimate& estimate,
                          const AveragingPolicy& policy);

// Hysteresis wrapper owned by the agent loop: a proposed switch must persist
// for `dwell_s` before it takes effect.
class RateController {
public:
    explicit RateController(AveragingPolicy policy);

    double update(const UncertaintyEstimate& estimate, double now_s);
    double current_rate_hz() const { return current_rate_; }
    bool precision_unmet() const { return precision_unmet_; }

private:
    AveragingPolicy policy_;
    double current_rate_;
    double candidate_rate_;
    double candidate_since_s_ = -1.0;
    bool precision_unmet_ = false;
};

} // namespace dig
