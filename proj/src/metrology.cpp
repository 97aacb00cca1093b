#include "dig/metrology.hpp"

#include <cmath>
#include <stdexcept>

namespace dig {

void AveragingPolicy::validate() const {
    if (sigma_target_w <= 0.0)
        throw std::invalid_argument("sigma_target must be > 0");
    if (dwell_s <= 0.0) throw std::invalid_argument("dwell must be > 0");
    if (rate_ladder_hz.size() < 1)
        throw std::invalid_argument("rate ladder must be non-empty");
    for (std::size_t k = 1; k < rate_ladder_hz.size(); ++k)
        if (rate_ladder_hz[k] >= rate_ladder_hz[k - 1])
            throw std::invalid_argument("rate ladder must be strictly decreasing");
}

double sigma_power(double i_mean_a, double v_mean_v, double sigma_i_a,
                   double sigma_v_v) {
    if (sigma_i_a < 0.0 || sigma_v_v < 0.0)
        throw std::invalid_argument("sigma_power: sigmas must be >= 0");
    return std::sqrt(i_mean_a * i_mean_a * sigma_v_v * sigma_v_v +
                     v_mean_v * v_mean_v * sigma_i_a * sigma_i_a);
}

UncertaintyEstimate estimate_noise(std::span<const CalibratedSample> window,
                                   double effective_rate_hz) {
    std::size_t n = window.size();
    if (n < 2) throw InsufficientData("estimate_noise: window too short");
    double mi = 0, mv = 0, mp = 0;
    for (const auto& s : window) {
        mi += s.current_a;
        mv += s.voltage_v;
        mp += s.power_w;
    }
    mi /= n;
    mv /= n;
    mp /= n;
    double vi = 0, vv = 0;
    for (const auto& s : window) {
        vi += (s.current_a - mi) * (s.current_a - mi);
        vv += (s.voltage_v - mv) * (s.voltage_v - mv);
    }
    UncertaintyEstimate e;
    e.sigma_i_a = std::sqrt(vi / (n - 1));
    e.sigma_v_v = std::sqrt(vv / (n - 1));
    e.sigma_p_w = sigma_power(mi, mv, e.sigma_i_a, e.sigma_v_v);
    e.cv = mp != 0.0 ? e.sigma_p_w / mp : 0.0;
    e.window_len = n;
    e.effective_rate_hz = effective_rate_hz;
    return e;
}

namespace {

template <class S>
std::vector<AveragedSample> block_means(std::span<const S> stream,
                                        std::size_t factor) {
    if (factor < 1) throw std::invalid_argument("software_average: factor must be >= 1");
    std::size_t nblocks = stream.size() / factor;
    std::vector<AveragedSample> out(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
        double p = 0;
        double t = 0;
        for (std::size_t k = 0; k < factor; ++k) {
            const auto& s = stream[b * factor + k];
            p += s.power_w;
            t += double(s.t_ns);
        }
        out[b] = {static_cast<int64_t>(std::llround(t / factor)), p / factor};
    }
    return out;
}

} // namespace

std::vector<AveragedSample> software_average(
    std::span<const CalibratedSample> stream, std::size_t factor) {
    return block_means(stream, factor);
}

std::vector<AveragedSample> software_average(std::span<const AveragedSample> stream,
                                             std::size_t factor) {
    return block_means(stream, factor);
}

RateSelection select_rate(const UncertaintyEstimate& estimate,
                          const AveragingPolicy& policy) {
    policy.validate();
    double f_top = policy.rate_ladder_hz.front();
    double sigma_top = estimate.sigma_p_w;
    RateSelection sel{policy.rate_ladder_hz.back(), 0.0, true};
    for (double f : policy.rate_ladder_hz) {
        double predicted = sigma_top / std::sqrt(f_top / f);
        if (predicted <= policy.sigma_target_w) {
            return {f, predicted, false};
        }
        sel.rate_hz = f;
        sel.predicted_sigma_w = predicted;
    }
    return sel;   // floor of the ladder, target not reachable
}

RateController::RateController(AveragingPolicy policy)
    : policy_(std::move(policy)),
      current_rate_(policy_.rate_ladder_hz.front()),
      candidate_rate_(current_rate_) {
    policy_.validate();
}

double RateController::update(const UncertaintyEstimate& estimate, double now_s) {
    auto sel = select_rate(estimate, policy_);
    precision_unmet_ = sel.precision_unmet;
    if (sel.rate_hz == current_rate_) {
        candidate_since_s_ = -1.0;
        return current_rate_;
    }
    if (sel.rate_hz != candidate_rate_ || candidate_since_s_ < 0.0) {
        candidate_rate_ = sel.rate_hz;
        candidate_since_s_ = now_s;
        return current_rate_;
    }
    if (now_s - candidate_since_s_ >= policy_.dwell_s) {
        current_rate_ = candidate_rate_;
        candidate_since_s_ = -1.0;
    }
    return current_rate_;
}

} // namespace dig
