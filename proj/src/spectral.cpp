#include "dig/spectral.hpp"

#include "dig/calib.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dig {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;
constexpr double kDbFloorPower = 1e-30;

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
    std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = -kTwoPi / double(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

double to_db(double p) { return 10.0 * std::log10(std::max(p, kDbFloorPower)); }

} // namespace

Psd compute_psd(std::span<const double> power_samples, double fs_hz,
                int64_t t_start_ns, uint64_t window_id) {
    auto want = static_cast<std::size_t>(std::llround(fs_hz * kPsdWindowSeconds));
    if (power_samples.size() != want)
        throw std::invalid_argument("compute_psd: expected fs*40ms samples");
    if (want > kFftLen)
        throw std::invalid_argument("compute_psd: window exceeds transform length");

    std::size_t n = power_samples.size();
    double mean = std::accumulate(power_samples.begin(), power_samples.end(), 0.0) /
                  double(n);

    std::vector<std::complex<double>> buf(kFftLen, {0.0, 0.0});
    double win_power = 0.0;   // sum w^2, compensates the Hann loss
    for (std::size_t k = 0; k < n; ++k) {
        double w = 0.5 * (1.0 - std::cos(kTwoPi * double(k) / double(n - 1)));
        win_power += w * w;
        buf[k] = {(power_samples[k] - mean) * w, 0.0};
    }
    fft_radix2(buf);

    Psd psd;
    psd.fs_hz = fs_hz;
    psd.df_hz = fs_hz / double(kFftLen);
    psd.t_start_ns = t_start_ns;
    psd.window_id = window_id;
    psd.bins.resize(kPsdBins);
    double scale = 1.0 / (fs_hz * win_power);
    psd.bins[0] = std::norm(buf[0]) * scale;
    for (std::size_t k = 1; k < kPsdBins; ++k)
        psd.bins[k] = 2.0 * std::norm(buf[k]) * scale;
    return psd;
}

std::vector<uint8_t> serialize_spectrogram(const Psd& psd, SpectrogramScale scale) {
    if (psd.bins.size() != kPsdBins)
        throw std::invalid_argument("serialize_spectrogram: malformed PSD");
    std::vector<uint8_t> out(kPsdBins * 2);
    double range = scale.max_db - scale.min_db;
    for (std::size_t k = 0; k < kPsdBins; ++k) {
        double db = std::clamp(to_db(psd.bins[k]), scale.min_db, scale.max_db);
        auto q = static_cast<uint16_t>(std::lround((db - scale.min_db) / range * 65535.0));
        out[2 * k] = static_cast<uint8_t>(q & 0xff);
        out[2 * k + 1] = static_cast<uint8_t>(q >> 8);
    }
    return out;
}

std::vector<double> deserialize_spectrogram_db(std::span<const uint8_t> payload,
                                               SpectrogramScale scale) {
    if (payload.size() != kPsdBins * 2)
        throw std::invalid_argument("spectrogram payload must be 4096 bytes");
    std::vector<double> db(kPsdBins);
    double range = scale.max_db - scale.min_db;
    for (std::size_t k = 0; k < kPsdBins; ++k) {
        uint16_t q = static_cast<uint16_t>(payload[2 * k] | (payload[2 * k + 1] << 8));
        db[k] = scale.min_db + double(q) / 65535.0 * range;
    }
    return db;
}

std::vector<uint8_t> make_spectrogram_record(const Psd& psd, SpectrogramScale scale) {
    std::vector<uint8_t> rec(16);
    auto put_u64 = [&](std::size_t off, uint64_t v) {
        for (int i = 0; i < 8; ++i) rec[off + i] = uint8_t(v >> (8 * i));
    };
    auto put_u32 = [&](std::size_t off, uint32_t v) {
        for (int i = 0; i < 4; ++i) rec[off + i] = uint8_t(v >> (8 * i));
    };
    auto put_i16 = [&](std::size_t off, int16_t v) {
        rec[off] = uint8_t(uint16_t(v) & 0xff);
        rec[off + 1] = uint8_t(uint16_t(v) >> 8);
    };
    put_u64(0, static_cast<uint64_t>(psd.t_start_ns));
    put_u32(8, static_cast<uint32_t>(std::lround(psd.fs_hz)));
    put_i16(12, static_cast<int16_t>(std::lround(scale.min_db)));
    put_i16(14, static_cast<int16_t>(std::lround(scale.max_db)));
    auto payload = serialize_spectrogram(psd, scale);
    rec.insert(rec.end(), payload.begin(), payload.end());
    return rec;
}

SpectrogramRecord parse_spectrogram_record(std::span<const uint8_t> record) {
    if (record.size() != kSpectrogramRecordSize)
        throw std::invalid_argument("spectrogram record must be 4112 bytes");
    auto get_u64 = [&](std::size_t off) {
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | record[off + i];
        return v;
    };
    auto get_u32 = [&](std::size_t off) {
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | record[off + i];
        return v;
    };
    auto get_i16 = [&](std::size_t off) {
        return int16_t(uint16_t(record[off]) | (uint16_t(record[off + 1]) << 8));
    };
    SpectrogramRecord out;
    out.t_start_ns = static_cast<int64_t>(get_u64(0));
    out.fs_hz = get_u32(8);
    out.scale.min_db = get_i16(12);
    out.scale.max_db = get_i16(14);
    out.bins_db = deserialize_spectrogram_db(record.subspan(16), out.scale);
    return out;
}

std::vector<SpectralPeak> detect_peaks(const Psd& psd, PeakDetectConfig cfg) {
    if (cfg.min_prominence_db <= 0.0)
        throw std::invalid_argument("detect_peaks: min_prominence must be > 0");
    std::size_t n = psd.bins.size();
    std::vector<double> db(n);
    for (std::size_t k = 0; k < n; ++k) db[k] = to_db(psd.bins[k]);

    // rolling-median noise floor; the median of an exponential periodogram
    // bin sits 10*log10(ln 2) = 1.59 dB below its mean, so correct the
    // estimate up to the mean noise level before applying the threshold
    const double median_to_mean_db = 10.0 * std::log10(1.0 / std::log(2.0));
    int half = cfg.floor_kernel_bins / 2;
    std::vector<double> floor_db(n);
    std::vector<double> win;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t lo = k >= std::size_t(half) ? k - half : 0;
        std::size_t hi = std::min(n - 1, k + std::size_t(half));
        win.assign(db.begin() + lo, db.begin() + hi + 1);
        auto mid = win.begin() + win.size() / 2;
        std::nth_element(win.begin(), mid, win.end());
        floor_db[k] = *mid + median_to_mean_db;
    }

    std::vector<SpectralPeak> cand;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (db[k] <= db[k - 1] || db[k] < db[k + 1]) continue;
        double prom = db[k] - floor_db[k];
        if (prom < cfg.min_prominence_db) continue;
        // parabolic interpolation on dB for sub-bin frequency
        double y0 = db[k - 1], y1 = db[k], y2 = db[k + 1];
        double denom = y0 - 2.0 * y1 + y2;
        double delta = denom != 0.0 ? 0.5 * (y0 - y2) / denom : 0.0;
        delta = std::clamp(delta, -0.5, 0.5);
        cand.push_back({(double(k) + delta) * psd.df_hz, y1, prom});
    }

    // merge clusters closer than min_separation, keeping the strongest
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
        return a.magnitude_db > b.magnitude_db;
    });
    std::vector<SpectralPeak> out;
    for (const auto& p : cand) {
        bool near = std::any_of(out.begin(), out.end(), [&](const auto& q) {
            return std::abs(q.frequency_hz - p.frequency_hz) < cfg.min_separation_hz;
        });
        if (!near) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.frequency_hz < b.frequency_hz;
    });
    return out;
}

std::vector<HarmonicComb> detect_comb(const std::vector<SpectralPeak>& peaks,
                                      double f0_min_hz, double f0_max_hz,
                                      double tolerance_hz, double band_limit_hz) {
    if (!(f0_min_hz > 0.0 && f0_min_hz < f0_max_hz))
        throw std::invalid_argument("detect_comb: need 0 < f0_min < f0_max");
    if (band_limit_hz <= 0.0 && !peaks.empty())
        band_limit_hz = peaks.back().frequency_hz + tolerance_hz;

    std::vector<HarmonicComb> found;
    for (const auto& seed : peaks) {
        if (seed.frequency_hz < f0_min_hz || seed.frequency_hz > f0_max_hz) continue;
        HarmonicComb comb;
        double num = 0.0, den = 0.0;   // refined f0 via LS over k*f_k
        double score = 0.0;
        int kmax = int(band_limit_hz / seed.frequency_hz) + 1;
        for (int k = 1; k <= kmax; ++k) {
            double target = k * seed.frequency_hz;
            const SpectralPeak* best = nullptr;
            for (const auto& p : peaks) {
                if (std::abs(p.frequency_hz - target) <= tolerance_hz &&
                    (!best || p.prominence_db > best->prominence_db))
                    best = &p;
            }
            if (!best) continue;
            comb.member_orders.push_back(k);
            comb.member_freqs_hz.push_back(best->frequency_hz);
            score += best->prominence_db;
            num += double(k) * best->frequency_hz;
            den += double(k) * double(k);
        }
        if (comb.member_orders.size() < 3) continue;
        comb.f0_hz = num / den;
        comb.n_harmonics = int(comb.member_orders.size());
        comb.score = score;
        found.push_back(std::move(comb));
    }

    // dedupe overlapping combs (shared members) by score
    std::sort(found.begin(), found.end(),
              [](const auto& a, const auto& b) { return a.score > b.score; });
    std::vector<HarmonicComb> out;
    for (auto& c : found) {
        bool overlaps = false;
        for (const auto& kept : out) {
            int shared = 0;
            for (double f : c.member_freqs_hz)
                for (double g : kept.member_freqs_hz)
                    if (std::abs(f - g) <= tolerance_hz) { ++shared; break; }
            if (shared * 2 >= int(c.member_freqs_hz.size())) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.f0_hz < b.f0_hz; });
    return out;
}

std::vector<std::pair<int, double>> harmonic_magnitudes(const Psd& psd,
                                                        double f0_hz,
                                                        double tolerance_hz) {
    if (f0_hz <= 0.0) throw std::invalid_argument("harmonic_magnitudes: f0 must be > 0");
    std::vector<std::pair<int, double>> out;
    double band = 0.95 * psd.fs_hz / 2.0;
    for (int k = 1; k * f0_hz < band; ++k) {
        double target = k * f0_hz;
        auto lo = std::size_t(std::max(0.0, (target - tolerance_hz) / psd.df_hz));
        auto hi = std::min(psd.bins.size() - 1,
                           std::size_t((target + tolerance_hz) / psd.df_hz) + 1);
        double best = 0.0;
        for (std::size_t b = lo; b <= hi; ++b) best = std::max(best, psd.bins[b]);
        out.emplace_back(k, std::sqrt(best));
    }
    return out;
}

namespace {

double duty_residual(const std::vector<std::pair<int, double>>& h, double d) {
    double sgm = 0.0, sgg = 0.0;
    for (auto [k, m] : h) {
        double g = std::abs(std::sin(M_PI * k * d)) / double(k);
        sgm += g * m;
        sgg += g * g;
    }
    double a = sgg > 0.0 ? sgm / sgg : 0.0;
    double res = 0.0;
    for (auto [k, m] : h) {
        double g = std::abs(std::sin(M_PI * k * d)) / double(k);
        double e = m - a * g;
        res += e * e;
    }
    return res;
}

} // namespace

double estimate_duty(const std::vector<std::pair<int, double>>& harmonics) {
    bool has_fundamental = std::any_of(harmonics.begin(), harmonics.end(),
                                       [](auto& p) { return p.first == 1; });
    if (harmonics.size() < 3 || !has_fundamental)
        throw InsufficientData("estimate_duty: need >= 3 harmonics incl. fundamental");

    double best_d = 1e-3, best_r = duty_residual(harmonics, best_d);
    for (int i = 1; i <= 500; ++i) {
        double d = i * 1e-3;
        double r = duty_residual(harmonics, d);
        if (r < best_r) {
            best_r = r;
            best_d = d;
        }
    }
    // golden-section refine inside the winning grid cell
    double lo = std::max(1e-4, best_d - 1e-3), hi = std::min(0.5, best_d + 1e-3);
    constexpr double phi = 0.6180339887498949;
    double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
    double fa = duty_residual(harmonics, a), fb = duty_residual(harmonics, b);
    for (int it = 0; it < 40; ++it) {
        if (fa < fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = duty_residual(harmonics, a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = duty_residual(harmonics, b);
        }
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Nearest-centroid classifier
// ---------------------------------------------------------------------------

namespace {

std::vector<double> log_psd(const Psd& p) {
    std::vector<double> v(p.bins.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = to_db(p.bins[k]);
    return v;
}

} // namespace

CentroidModel train_centroids(const std::vector<LabeledWindow>& windows) {
    std::vector<std::string> labels;
    for (const auto& w : windows)
        if (std::find(labels.begin(), labels.end(), w.label) == labels.end())
            labels.push_back(w.label);
    if (labels.size() < 2)
        throw InsufficientData("train_centroids: need >= 2 classes");
    for (const auto& l : labels) {
        std::size_t n = std::count_if(windows.begin(), windows.end(),
                                      [&](auto& w) { return w.label == l; });
        if (n < 5)
            throw InsufficientData("train_centroids: class '" + l +
                                   "' has fewer than 5 windows");
    }

    std::size_t dim = windows.front().psd.bins.size();
    CentroidModel m;
    m.feature_mean.assign(dim, 0.0);
    m.feature_std.assign(dim, 0.0);

    std::vector<std::vector<double>> feats;
    feats.reserve(windows.size());
    for (const auto& w : windows) {
        if (w.psd.bins.size() != dim)
            throw std::invalid_argument("train_centroids: inconsistent bin count");
        feats.push_back(log_psd(w.psd));
        for (std::size_t k = 0; k < dim; ++k) m.feature_mean[k] += feats.back()[k];
    }
    for (auto& v : m.feature_mean) v /= double(windows.size());
    for (const auto& f : feats)
        for (std::size_t k = 0; k < dim; ++k) {
            double d = f[k] - m.feature_mean[k];
            m.feature_std[k] += d * d;
        }
    for (auto& v : m.feature_std)
        v = std::max(1e-9, std::sqrt(v / double(windows.size())));

    for (const auto& l : labels) {
        CentroidModel::Class c;
        c.label = l;
        c.centroid.assign(dim, 0.0);
        for (std::size_t i = 0; i < windows.size(); ++i) {
            if (windows[i].label != l) continue;
            ++c.n_train;
            for (std::size_t k = 0; k < dim; ++k)
                c.centroid[k] += (feats[i][k] - m.feature_mean[k]) / m.feature_std[k];
        }
        for (auto& v : c.centroid) v /= double(c.n_train);
        m.classes.push_back(std::move(c));
    }
    return m;
}

CentroidModel train_centroids(
    const std::vector<std::pair<std::string, std::vector<Psd>>>& grouped) {
    std::vector<LabeledWindow> flat;
    for (std::size_t i = 0; i < grouped.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j)
            if (grouped[j].first == grouped[i].first)
                throw std::invalid_argument("train_centroids: duplicate label '" +
                                            grouped[i].first + "'");
        for (const auto& p : grouped[i].second)
            flat.push_back({grouped[i].first, p});
    }
    return train_centroids(flat);
}

Classification classify(const Psd& psd, const CentroidModel& model) {
    if (model.classes.empty())
        throw std::invalid_argument("classify: empty model");
    std::size_t dim = model.feature_mean.size();
    if (psd.bins.size() != dim)
        throw std::invalid_argument("classify: bin count mismatch");

    auto f = log_psd(psd);
    for (std::size_t k = 0; k < dim; ++k)
        f[k] = (f[k] - model.feature_mean[k]) / model.feature_std[k];

    double best = -1.0, second = -1.0;
    const CentroidModel::Class* winner = nullptr;
    for (const auto& c : model.classes) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            double d = f[k] - c.centroid[k];
            d2 += d * d;
        }
        if (best < 0.0 || d2 < best) {
            second = best;
            best = d2;
            winner = &c;
        } else if (second < 0.0 || d2 < second) {
            second = d2;
        }
    }
    double bd = std::sqrt(std::max(best, 1e-300));
    double sd = model.classes.size() > 1 ? std::sqrt(second) : bd;
    return {winner->label, (sd - bd) / bd};
}

void CentroidModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write centroid model: " + path);
    out << "DIGCENTROID 1\n" << classes.size() << ' ' << feature_mean.size() << '\n';
    for (const auto& c : classes) out << c.label << ' ' << c.n_train << '\n';
    out << "BINARY\n";
    auto dump = [&](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  std::streamsize(v.size() * sizeof(double)));
    };
    dump(feature_mean);
    dump(feature_std);
    for (const auto& c : classes) dump(c.centroid);
}

CentroidModel CentroidModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read centroid model: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "DIGCENTROID" || version != 1)
        throw std::runtime_error("bad centroid model header: " + path);
    std::size_t nclasses = 0, dim = 0;
    in >> nclasses >> dim;
    CentroidModel m;
    m.classes.resize(nclasses);
    for (auto& c : m.classes) in >> c.label >> c.n_train;
    std::string tag;
    in >> tag;
    in.get();   // newline before the binary section
    auto slurp = [&](std::vector<double>& v) {
        v.resize(dim);
        in.read(reinterpret_cast<char*>(v.data()),
                std::streamsize(dim * sizeof(double)));
    };
    slurp(m.feature_mean);
    slurp(m.feature_std);
    for (auto& c : m.classes) slurp(c.centroid);
    if (!in) throw std::runtime_error("truncated centroid model: " + path);
    return m;
}

} // namespace dig
