#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dig/calib.hpp"
#include "dig/rng.hpp"
#include "dig/scenario.hpp"
#include "dig/spectral.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

using namespace dig;

namespace {

constexpr double kFs = 50000.0;
constexpr std::size_t kWin = 2000;   // 40 ms at 50 kS/s

std::vector<double> tone_window(double freq, double amp, double base,
                                double phase = 0.0) {
    std::vector<double> x(kWin);
    for (std::size_t k = 0; k < kWin; ++k)
        x[k] = base + amp * std::sin(2 * M_PI * freq * double(k) / kFs + phase);
    return x;
}

Psd psd_of_scenario(const std::string& name, uint64_t seed, uint64_t window = 0) {
    auto cat = ScenarioCatalog::builtin();
    auto tr = render_trace(cat.get(name), kFs, kPsdWindowSeconds, seed,
                           window * kWin);
    return compute_psd(tr.power_w, kFs);
}

} // namespace

TEST_CASE("psd geometry: 2048 bins at fs/4096 spacing") {
    auto psd = compute_psd(tone_window(1000.0, 1.0, 0.0), kFs);
    CHECK(psd.bins.size() == kPsdBins);
    CHECK(psd.df_hz == doctest::Approx(kFs / 4096.0));
    CHECK(psd.frequency(2047) < kFs / 2);
    std::vector<double> wrong(100, 0.0);
    CHECK_THROWS_AS(compute_psd(wrong, kFs), std::invalid_argument);
}

TEST_CASE("pure tone concentrates power at its frequency") {
    const double f0 = 5004.0, amp = 3.0;
    auto psd = compute_psd(tone_window(f0, amp, 100.0), kFs);
    auto it = std::max_element(psd.bins.begin(), psd.bins.end());
    auto k = std::size_t(it - psd.bins.begin());
    CHECK(std::abs(psd.frequency(k) - f0) <= psd.df_hz);
    // integrated density near the peak recovers the tone power A^2/2
    double sum = 0;
    for (std::size_t b = k >= 20 ? k - 20 : 0; b <= k + 20; ++b)
        sum += psd.bins[b] * psd.df_hz;
    CHECK(sum == doctest::Approx(amp * amp / 2.0).epsilon(0.01));
}

TEST_CASE("parseval: integrated psd equals windowed signal power") {
    // oracle computed directly from the window definition
    auto cat = ScenarioCatalog::builtin();
    auto tr = render_trace(cat.get("idle"), kFs, kPsdWindowSeconds, 3);
    auto& x = tr.power_w;
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
    double num = 0, den = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        double w = 0.5 * (1.0 - std::cos(2 * M_PI * double(k) / double(x.size() - 1)));
        num += w * w * (x[k] - mean) * (x[k] - mean);
        den += w * w;
    }
    double oracle = num / den;
    auto psd = compute_psd(x, kFs);
    double integral = 0;
    for (double b : psd.bins) integral += b * psd.df_hz;
    CHECK(integral == doctest::Approx(oracle).epsilon(0.001));
}

TEST_CASE("psd is deterministic per input") {
    auto a = psd_of_scenario("idle", 7);
    auto b = psd_of_scenario("idle", 7);
    CHECK(a.bins == b.bins);
}

TEST_CASE("spectrogram payload round trip within the quantization step") {
    auto psd = psd_of_scenario("cpu_bound", 1);
    auto payload = serialize_spectrogram(psd);
    REQUIRE(payload.size() == 4096);
    auto db = deserialize_spectrogram_db(payload);
    double step = 160.0 / 65535.0;
    for (std::size_t k = 0; k < kPsdBins; ++k) {
        double want = std::clamp(10.0 * std::log10(std::max(psd.bins[k], 1e-30)),
                                 -120.0, 40.0);
        CHECK(std::abs(db[k] - want) <= step);
    }
}

TEST_CASE("spectrogram record layout is 4112 bytes with an exact header") {
    auto psd = psd_of_scenario("idle", 2);
    psd.t_start_ns = 123456789012345;
    auto rec = make_spectrogram_record(psd);
    REQUIRE(rec.size() == kSpectrogramRecordSize);
    auto parsed = parse_spectrogram_record(rec);
    CHECK(parsed.t_start_ns == 123456789012345);
    CHECK(parsed.fs_hz == doctest::Approx(kFs));
    CHECK(parsed.scale.min_db == doctest::Approx(-120.0));
    CHECK(parsed.scale.max_db == doctest::Approx(40.0));
    CHECK(parsed.bins_db.size() == kPsdBins);
    std::vector<uint8_t> bad(100);
    CHECK_THROWS_AS(parse_spectrogram_record(bad), std::invalid_argument);
}

TEST_CASE("detect_peaks finds isolated tones at the right frequencies") {
    std::vector<double> x(kWin, 0.0);
    std::vector<double> freqs = {1000.0, 4003.0, 9500.0};
    for (std::size_t k = 0; k < kWin; ++k) {
        // a real noise floor keeps window sidelobes below the threshold
        x[k] = 200.0 + 0.5 * hash_normal(77, k);
        for (double f : freqs)
            x[k] += 5.0 * std::sin(2 * M_PI * f * double(k) / kFs + 0.3 * f);
    }
    auto peaks = detect_peaks(compute_psd(x, kFs));
    REQUIRE(peaks.size() == freqs.size());
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        CHECK(std::abs(peaks[i].frequency_hz - freqs[i]) < kFs / 4096.0);
        CHECK(peaks[i].prominence_db >= 10.0);
    }
}

TEST_CASE("sub-bin interpolation beats the bin width on an off-grid tone") {
    const double f0 = 3006.7;   // between bins (df = 12.207)
    auto x = tone_window(f0, 4.0, 50.0);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += 0.2 * hash_normal(78, k);
    auto psd = compute_psd(x, kFs);
    auto peaks = detect_peaks(psd);
    REQUIRE(peaks.size() == 1);
    CHECK(std::abs(peaks[0].frequency_hz - f0) < 0.5 * psd.df_hz);
}

TEST_CASE("peak counts for the signature scenarios") {
    // mode of the per-window count over consecutive windows
    auto mode_count = [](const char* name) {
        std::map<std::size_t, int> hist;
        for (uint64_t w = 0; w < 15; ++w)
            ++hist[detect_peaks(psd_of_scenario(name, 4, w)).size()];
        return std::max_element(hist.begin(), hist.end(), [](auto& a, auto& b) {
                   return a.second < b.second;
               })->first;
    };
    CHECK(mode_count("mem_bound") == 3);
    CHECK(mode_count("cpu_bound") == 10);
}

TEST_CASE("comb detection on a synthetic 1 kHz pulse train") {
    auto psd = psd_of_scenario("static_tick", 9);
    auto peaks = detect_peaks(psd);
    auto combs = detect_comb(peaks, 500.0, 1500.0);
    REQUIRE(combs.size() >= 1);
    const auto* best = &combs[0];
    for (const auto& c : combs)
        if (c.score > best->score) best = &c;
    CHECK(std::abs(best->f0_hz - 1000.0) <= kFs / 4096.0);
    CHECK(best->n_harmonics >= 11);
}

TEST_CASE("no comb on the idle scenario") {
    auto peaks = detect_peaks(psd_of_scenario("idle", 10));
    auto combs = detect_comb(peaks, 500.0, 1500.0);
    CHECK(combs.empty());
}

TEST_CASE("estimate_duty on exact envelope magnitudes") {
    // oracle: synthesize |c_k| = A*|sin(pi*k*d)|/k for a known duty
    for (double d : {0.2, 0.23, 0.35, 0.5}) {
        std::vector<std::pair<int, double>> h;
        for (int k = 1; k <= 9; ++k)
            h.emplace_back(k, 7.7 * std::abs(std::sin(M_PI * k * d)) / k);
        CHECK(estimate_duty(h) == doctest::Approx(d).epsilon(0.005));
    }
    std::vector<std::pair<int, double>> no_fund = {{2, 1.0}, {3, 0.5}, {4, 0.2}};
    CHECK_THROWS_AS(estimate_duty(no_fund), InsufficientData);
}

TEST_CASE("duty recovered from the full psd pipeline") {
    for (auto [name, d] : {std::pair{"duty20_100hz", 0.2},
                           std::pair{"duty50_100hz", 0.5}}) {
        auto psd = psd_of_scenario(name, 21);
        auto h = harmonic_magnitudes(psd, 100.0, 25.0);
        double est = estimate_duty(h);
        CHECK(est == doctest::Approx(d).epsilon(0.05));
    }
}

TEST_CASE("centroid classifier separates synthetic classes") {
    std::vector<LabeledWindow> train;
    for (int w = 0; w < 8; ++w) {
        train.push_back({"a", psd_of_scenario("mem_bound", 100 + w)});
        train.push_back({"b", psd_of_scenario("cpu_bound", 100 + w)});
        train.push_back({"c", psd_of_scenario("idle", 100 + w)});
    }
    auto model = train_centroids(train);
    CHECK(model.classes.size() == 3);
    for (int w = 0; w < 5; ++w) {
        CHECK(classify(psd_of_scenario("mem_bound", 900 + w), model).label == "a");
        CHECK(classify(psd_of_scenario("cpu_bound", 900 + w), model).label == "b");
        CHECK(classify(psd_of_scenario("idle", 900 + w), model).label == "c");
    }
    auto cls = classify(psd_of_scenario("mem_bound", 990), model);
    CHECK(cls.margin > 0.0);
}

TEST_CASE("centroid model save/load round trip") {
    std::vector<LabeledWindow> train;
    for (int w = 0; w < 6; ++w) {
        train.push_back({"x", psd_of_scenario("idle", 300 + w)});
        train.push_back({"y", psd_of_scenario("qe_like", 300 + w)});
    }
    auto model = train_centroids(train);
    auto path = std::filesystem::temp_directory_path() / "dig_centroid_rt.bin";
    model.save(path.string());
    auto loaded = CentroidModel::load(path.string());
    REQUIRE(loaded.classes.size() == model.classes.size());
    CHECK(loaded.classes[0].label == model.classes[0].label);
    CHECK(loaded.classes[0].centroid == model.classes[0].centroid);
    CHECK(loaded.feature_mean == model.feature_mean);
    CHECK(loaded.feature_std == model.feature_std);
    auto p = psd_of_scenario("qe_like", 555);
    CHECK(classify(p, loaded).label == classify(p, model).label);
    std::filesystem::remove(path);
}

TEST_CASE("training rejects degenerate corpora") {
    std::vector<LabeledWindow> one_class;
    for (int w = 0; w < 6; ++w)
        one_class.push_back({"only", psd_of_scenario("idle", 40 + w)});
    CHECK_THROWS_AS(train_centroids(one_class), InsufficientData);

    std::vector<std::pair<std::string, std::vector<Psd>>> dup;
    std::vector<Psd> ps;
    for (int w = 0; w < 6; ++w) ps.push_back(psd_of_scenario("idle", 60 + w));
    dup.emplace_back("same", ps);
    dup.emplace_back("same", ps);
    CHECK_THROWS_AS(train_centroids(dup), std::invalid_argument);
}
