#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dig {

inline constexpr std::size_t kPsdBins = 2048;
inline constexpr std::size_t kFftLen = 4096;
inline constexpr double kPsdWindowSeconds = 0.040;

struct Psd {
    std::vector<double> bins;   // kPsdBins one-sided densities, W^2/Hz
    double df_hz = 0.0;         // fs / kFftLen
    double fs_hz = 0.0;
    uint64_t window_id = 0;
    int64_t t_start_ns = 0;

    double frequency(std::size_t bin) const { return bin * df_hz; }
};

struct SpectralPeak {
    double frequency_hz;
    double magnitude_db;    // 10*log10 of the peak bin density
    double prominence_db;   // above the local median noise floor
};

struct HarmonicComb {
    double f0_hz;
    int n_harmonics;
    double score;                       // sum of member prominences (dB)
    std::vector<int> member_orders;     // harmonic indices k
    std::vector<double> member_freqs_hz;
};

struct Signature {
    std::vector<SpectralPeak> peaks;
    std::vector<HarmonicComb> combs;
    std::string label;
};

// Mean-removed, Hann-windowed periodogram of one 40 ms window (fs*0.040
// samples), zero-padded to a 4096-point transform; 2048 one-sided bins.
Psd compute_psd(std::span<const double> power_samples, double fs_hz,
                int64_t t_start_ns = 0, uint64_t window_id = 0);

// dB scale used by the fixed-point spectrogram payload.
struct SpectrogramScale {
    double min_db = -120.0;
    double max_db = 40.0;
};

// 2048 x u16 little-endian, dB clamped to the scale: 4096 bytes.
std::vector<uint8_t> serialize_spectrogram(const Psd& psd,
                                           SpectrogramScale scale = {});
std::vector<double> deserialize_spectrogram_db(std::span<const uint8_t> payload,
                                               SpectrogramScale scale = {});

// Full wire/storage record: 16-byte header (t_start ns u64, fs u32 Hz,
// scale min/max i16 dB) + 4096-byte payload = 4112 bytes.
inline constexpr std::size_t kSpectrogramRecordSize = 4112;
std::vector<uint8_t> make_spectrogram_record(const Psd& psd,
                                             SpectrogramScale scale = {});
struct SpectrogramRecord {
    int64_t t_start_ns;
    double fs_hz;
    SpectrogramScale scale;
    std::vector<double> bins_db;
};
SpectrogramRecord parse_spectrogram_record(std::span<const uint8_t> record);

struct PeakDetectConfig {
    double min_prominence_db = 10.0;
    double min_separation_hz = 150.0;   // merges window sidelobes of one tone
    int floor_kernel_bins = 51;
};

std::vector<SpectralPeak> detect_peaks(const Psd& psd,
                                       PeakDetectConfig cfg = {});

std::vector<HarmonicComb> detect_comb(const std::vector<SpectralPeak>& peaks,
                                      double f0_min_hz, double f0_max_hz,
                                      double tolerance_hz = 25.0,
                                      double band_limit_hz = 0.0);

// Harmonic line magnitudes (linear, sqrt of the strongest bin near k*f0) up
// to the band edge; feeds estimate_duty.
std::vector<std::pair<int, double>> harmonic_magnitudes(const Psd& psd,
                                                        double f0_hz,
                                                        double tolerance_hz = 25.0);

// Fits |c_k| ~ A*|sin(pi*k*d)|/k over d in (0, 0.5], 1e-3 grid plus local
// refinement. Needs >= 3 harmonics including the fundamental.
double estimate_duty(const std::vector<std::pair<int, double>>& harmonics);

struct CentroidModel {
    struct Class {
        std::string label;
        std::vector<double> centroid;   // standardized log-PSD space
        std::size_t n_train = 0;
    };
    std::vector<Class> classes;
    std::vector<double> feature_mean;   // per-bin, log-PSD dB
    std::vector<double> feature_std;

    void save(const std::string& path) const;
    static CentroidModel load(const std::string& path);
};

struct LabeledWindow {
    std::string label;
    Psd psd;
};

// Per-class mean in globally standardized log-PSD space.
CentroidModel train_centroids(const std::vector<LabeledWindow>& windows);

// Pre-grouped variant; throws std::invalid_argument on duplicate labels.
CentroidModel train_centroids(
    const std::vector<std::pair<std::string, std::vector<Psd>>>& grouped);

struct Classification {
    std::string label;
    double margin;   // (second best - best distance) / best distance
};

Classification classify(const Psd& psd, const CentroidModel& model);

} // namespace dig
