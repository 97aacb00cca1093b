#include "dig/adc.hpp"

#include "dig/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dig {

void AdcConfig::validate() const {
    if (fs_adc_hz <= 0.0) throw std::invalid_argument("fs_adc must be > 0");
    if (avg < 1) throw std::invalid_argument("avg must be >= 1");
    if (watermark < 1) throw std::invalid_argument("watermark must be >= 1");
    if (resolution_bits < 8 || resolution_bits > 16)
        throw std::invalid_argument("resolution_bits must be in [8, 16]");
    if (full_scale_v <= 0.0) throw std::invalid_argument("full_scale must be > 0");
    if (kernel_fifo_capacity < 1)
        throw std::invalid_argument("kernel_fifo_capacity must be >= 1");
}

void ClockModel::validate() const {
    if (std::abs(drift) >= 1e-3) throw std::invalid_argument("|drift| must be < 1e-3");
    if (jitter_sigma_s < 0.0) throw std::invalid_argument("jitter_sigma must be >= 0");
}

int64_t ClockModel::local_ns(double true_t_s, uint64_t event_index) const {
    double t = true_t_s * (1.0 + drift) + offset_s;
    if (jitter_sigma_s > 0.0)
        t += jitter_sigma_s * hash_normal(seed, event_index, 0xc10cULL);
    return static_cast<int64_t>(std::llround(t * 1e9));
}

uint16_t quantize(double v_in, const AdcConfig& cfg) {
    double code = std::floor(v_in / cfg.lsb_v());
    if (code < 0.0) return 0;
    int max = cfg.max_code();
    if (code > max) return static_cast<uint16_t>(max);
    return static_cast<uint16_t>(code);
}

uint16_t hw_average(std::span<const uint16_t> codes, const AdcConfig& cfg) {
    if (codes.size() != static_cast<std::size_t>(cfg.avg))
        throw std::invalid_argument("hw_average: expected exactly avg codes");
    uint32_t sum = 0;
    for (uint16_t c : codes) sum += c;
    // round-half-up
    return static_cast<uint16_t>((2u * sum + cfg.avg) / (2u * cfg.avg));
}

AcquisitionSession::AcquisitionSession(AdcConfig cfg, ClockModel clock)
    : cfg_(cfg), clock_(clock) {
    cfg_.validate();
    clock_.validate();
    pending_.codes_i.reserve(cfg_.watermark);
    pending_.codes_v.reserve(cfg_.watermark);
}

void AcquisitionSession::emit_block() {
    pending_.sequence = next_sequence_++;
    // flush anchored on the true time of the last raw sample in the block
    double t_last = static_cast<double>(raw_index_ - 1) / cfg_.fs_adc_hz;
    pending_.flush_timestamp_ns = clock_.local_ns(t_last, pending_.sequence);
    if (fifo_.size() - fifo_head_ >= cfg_.kernel_fifo_capacity) {
        ++dropped_;  // drop newest, acquisition never stalls
    } else {
        fifo_.push_back(std::move(pending_));
    }
    pending_ = RawBlock{};
    pending_.codes_i.reserve(cfg_.watermark);
    pending_.codes_v.reserve(cfg_.watermark);
}

void AcquisitionSession::push_sample(double ci_v, double cv_v) {
    sum_i_ += quantize(ci_v, cfg_);
    sum_v_ += quantize(cv_v, cfg_);
    ++raw_index_;
    if (++avg_fill_ == static_cast<uint32_t>(cfg_.avg)) {
        uint32_t n = static_cast<uint32_t>(cfg_.avg);
        pending_.codes_i.push_back(static_cast<uint16_t>((2u * sum_i_ + n) / (2u * n)));
        pending_.codes_v.push_back(static_cast<uint16_t>((2u * sum_v_ + n) / (2u * n)));
        sum_i_ = sum_v_ = 0;
        avg_fill_ = 0;
        if (pending_.codes_i.size() == static_cast<std::size_t>(cfg_.watermark))
            emit_block();
    }
}

void AcquisitionSession::push_samples(std::span<const double> ci,
                                      std::span<const double> cv) {
    if (ci.size() != cv.size())
        throw std::invalid_argument("push_samples: channel length mismatch");
    for (std::size_t k = 0; k < ci.size(); ++k) push_sample(ci[k], cv[k]);
}

void AcquisitionSession::finish() {
    // trailing raw samples short of a full average are discarded; a trailing
    // partial watermark becomes a final short block
    sum_i_ = sum_v_ = 0;
    avg_fill_ = 0;
    if (!pending_.codes_i.empty()) emit_block();
}

bool AcquisitionSession::pop_block(RawBlock& out) {
    if (fifo_head_ >= fifo_.size()) {
        if (fifo_head_ > 0) {
            fifo_.clear();
            fifo_head_ = 0;
        }
        return false;
    }
    out = std::move(fifo_[fifo_head_++]);
    if (fifo_head_ == fifo_.size()) {
        fifo_.clear();
        fifo_head_ = 0;
    }
    return true;
}

std::vector<int64_t> derive_timestamps(const RawBlock& block, double fs_hz) {
    if (fs_hz <= 0.0) throw std::invalid_argument("derive_timestamps: fs must be > 0");
    std::size_t w = block.codes_i.size();
    std::vector<int64_t> ts(w);
    double period_ns = 1e9 / fs_hz;
    for (std::size_t i = 0; i < w; ++i) {
        double back = static_cast<double>(w - 1 - i) * period_ns;
        ts[i] = block.flush_timestamp_ns - static_cast<int64_t>(std::llround(back));
    }
    return ts;
}

} // namespace dig
