#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace dig {

struct AdcConfig {
    double fs_adc_hz = 800000.0;   // per channel
    int avg = 16;                  // hardware averaging factor
    int resolution_bits = 12;
    double full_scale_v = 1.8;
    int watermark = 16;            // averaged i/v pairs per flush
    std::size_t kernel_fifo_capacity = 1024;  // blocks

    void validate() const;

    double effective_rate_hz() const { return fs_adc_hz / avg; }
    int max_code() const { return (1 << resolution_bits) - 1; }
    double lsb_v() const { return full_scale_v / double(1 << resolution_bits); }
};

struct RawBlock {
    int64_t flush_timestamp_ns = 0;  // local clock at flush
    std::vector<uint16_t> codes_i;
    std::vector<uint16_t> codes_v;
    uint64_t sequence = 0;
};

// Local clock: offset + drift + Gaussian jitter, applied at flush points only.
struct ClockModel {
    double offset_s = 0.0;
    double drift = 0.0;            // fractional rate error, |drift| < 1e-3
    double jitter_sigma_s = 200e-9;
    uint64_t seed = 0;

    void validate() const;
    int64_t local_ns(double true_t_s, uint64_t event_index) const;
};

uint16_t quantize(double v_in, const AdcConfig& cfg);

// Mean of `avg` raw codes, round-half-up. Length must equal cfg.avg.
uint16_t hw_average(std::span<const uint16_t> codes, const AdcConfig& cfg);

// Streaming acquisition: feed ADC-input voltage pairs at fs_adc; emits one
// RawBlock per watermark averaged samples into an internal kernel FIFO.
// Overflow (consumer too slow) drops the newest block and counts.
class AcquisitionSession {
public:
    AcquisitionSession(AdcConfig cfg, ClockModel clock);

    void push_sample(double ci_v, double cv_v);
    void push_samples(std::span<const double> ci, std::span<const double> cv);

    // Flushes any partial averaging/watermark state as a final short block.
    void finish();

    bool pop_block(RawBlock& out);
    uint64_t dropped_blocks() const { return dropped_; }
    const AdcConfig& config() const { return cfg_; }

private:
    void emit_block();

    AdcConfig cfg_;
    ClockModel clock_;
    uint64_t raw_index_ = 0;       // raw samples consumed, defines true time
    uint32_t avg_fill_ = 0;
    uint32_t sum_i_ = 0, sum_v_ = 0;
    RawBlock pending_;
    uint64_t next_sequence_ = 0;
    std::vector<RawBlock> fifo_;   // kernel FIFO, FIFO order
    std::size_t fifo_head_ = 0;
    uint64_t dropped_ = 0;
};

// timestamp(i) = flush_ts - (W-1-i)/fs; the last sample owns the flush time.
std::vector<int64_t> derive_timestamps(const RawBlock& block, double fs_hz);

} // namespace dig
