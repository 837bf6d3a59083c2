#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "geega/dsp.hpp"
#include "oracles.hpp"

using namespace geega;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double f, double fs, size_t n, double amp = 1.0) {
    std::vector<double> x(n);
    for (size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * kPi * f * static_cast<double>(i) / fs);
    return x;
}

}  // namespace

TEST_CASE("bandpass keeps a passband tone (matches the analytic response)") {
    const double fs = 256.0;
    auto x = sine(10.0, fs, 4096);
    auto y = dsp::bandpass(x, fs, 1.0, 75.0, 4);
    REQUIRE(y.size() == x.size());
    // forward-backward filtering squares the magnitude response
    double expected = std::pow(oracles::butter_bandpass_mag(10.0, 1.0, 75.0, fs, 4), 2);
    double measured = oracles::sine_amplitude(y, fs, 10.0, 1024, 2048);
    CHECK(measured == doctest::Approx(expected).epsilon(0.02));
    CHECK(std::abs(measured - 1.0) < 0.01);  // passband: within 1% of the input
}

TEST_CASE("bandpass rejects a stopband tone") {
    const double fs = 256.0;
    auto x = sine(0.1, fs, 10240);
    auto y = dsp::bandpass(x, fs, 1.0, 75.0, 4);
    double measured = oracles::sine_amplitude(y, fs, 0.1, 2560, 5120);
    double expected = std::pow(oracles::butter_bandpass_mag(0.1, 1.0, 75.0, fs, 4), 2);
    CHECK(measured < 0.05);
    CHECK(std::abs(measured - expected) < 0.02);  // attenuation level agrees
}

TEST_CASE("bandpass of zero is zero") {
    std::vector<double> zeros(1000, 0.0);
    auto y = dsp::bandpass(zeros, 256.0, 1.0, 75.0, 4);
    for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("bandpass rejects invalid band edges") {
    std::vector<double> x(100, 0.0);
    CHECK_THROWS(dsp::bandpass(x, 256.0, 75.0, 1.0, 4));
    CHECK_THROWS(dsp::bandpass(x, 256.0, 1.0, 200.0, 4));
    CHECK_THROWS(dsp::bandpass(x, 256.0, 0.0, 75.0, 4));
}

TEST_CASE("filters are linear") {
    const double fs = 256.0;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(2048), y(2048);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    const double a = 2.5, b = -1.25;
    std::vector<double> mix(2048);
    for (size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];

    for (bool use_notch : {false, true}) {
        auto filt = [&](const std::vector<double>& s) {
            return use_notch ? dsp::notch(s, fs, 60.0, 30.0) : dsp::bandpass(s, fs, 1.0, 75.0, 4);
        };
        auto fx = filt(x), fy = filt(y), fmix = filt(mix);
        double num = 0.0, den = 0.0;
        for (size_t i = 0; i < mix.size(); ++i) {
            double want = a * fx[i] + b * fy[i];
            num += std::abs(fmix[i] - want);
            den += std::abs(want);
        }
        CHECK(num / den < 1e-9);
    }
}

TEST_CASE("notch kills the notch frequency and passes the rest") {
    const double fs = 256.0;
    auto x60 = sine(60.0, fs, 4096);
    auto y60 = dsp::notch(x60, fs, 60.0, 30.0);
    double in_power = 0.0, out_power = 0.0;
    for (size_t i = 1024; i < 3072; ++i) {
        in_power += x60[i] * x60[i];
        out_power += y60[i] * y60[i];
    }
    CHECK(out_power < 0.01 * in_power);

    auto x10 = sine(10.0, fs, 4096);
    auto y10 = dsp::notch(x10, fs, 60.0, 30.0);
    double measured = oracles::sine_amplitude(y10, fs, 10.0, 1024, 2048);
    double expected = std::pow(oracles::notch_mag(10.0, 60.0, 30.0, fs), 2);
    CHECK(std::abs(measured - 1.0) < 0.02);
    CHECK(measured == doctest::Approx(expected).epsilon(0.02));

    auto zeros = dsp::notch(std::vector<double>(512, 0.0), fs, 60.0, 30.0);
    for (double v : zeros) CHECK(v == 0.0);
}

TEST_CASE("psd peaks at the tone frequency") {
    const double fs = 256.0;
    auto x = sine(10.0, fs, 2560);
    auto est = dsp::psd(x, fs, 1.0, 0.5);
    size_t peak = 0;
    for (size_t k = 1; k < est.power.size(); ++k)
        if (est.power[k] > est.power[peak]) peak = k;
    CHECK(est.freqs_hz[peak] == doctest::Approx(10.0));
    CHECK(est.freqs_hz.front() == 0.0);
    CHECK(est.freqs_hz.back() == doctest::Approx(fs / 2.0));
}

TEST_CASE("integrated psd of white noise recovers the variance (Monte Carlo)") {
    const double fs = 256.0;
    const double sigma = 1.7;
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, sigma);
    double acc = 0.0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> x(2560);
        for (auto& v : x) v = g(rng);
        auto est = dsp::psd(x, fs, 1.0, 0.5);
        acc += dsp::simpson_integrate(est.power, est.freqs_hz);
    }
    double mean_power = acc / trials;
    CHECK(mean_power == doctest::Approx(sigma * sigma).epsilon(0.10));
}

TEST_CASE("DC signal concentrates all power at 0 Hz") {
    std::vector<double> x(1024, 1.0);
    auto est = dsp::psd(x, 256.0, 1.0, 0.5);
    CHECK(est.power[0] > 0.0);
    CHECK(est.power[0] > est.power[1]);
    // the Hann mainlobe is two bins wide with exact nulls beyond it
    for (size_t k = 2; k < est.power.size(); ++k)
        CHECK(est.power[k] < 1e-12 * est.power[0]);
}

TEST_CASE("psd is nonnegative for random inputs") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(600);
        for (auto& v : x) v = g(rng);
        auto est = dsp::psd(x, 200.0, 1.0, 0.5);
        for (double p : est.power) CHECK(p >= 0.0);
    }
}

TEST_CASE("psd rejects too-short signals") {
    std::vector<double> x(100, 1.0);
    CHECK_THROWS(dsp::psd(x, 256.0, 1.0, 0.5));
}

TEST_CASE("simpson is exact for the textbook cases") {
    CHECK(dsp::simpson_integrate({0.0, 1.0, 4.0}, {0.0, 1.0, 2.0}) ==
          doctest::Approx(8.0 / 3.0).epsilon(1e-12));
    CHECK(dsp::simpson_integrate({1.0, 1.0, 1.0, 1.0, 1.0}, {0.0, 0.3, 1.1, 2.0, 2.5}) ==
          doctest::Approx(2.5).epsilon(1e-12));
    CHECK(dsp::simpson_integrate({0.0, 0.125, 1.0}, {0.0, 0.5, 1.0}) ==
          doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("simpson is exact for cubics on uniform grids with even interval count") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> coef(-3.0, 3.0);
    std::uniform_int_distribution<int> npts(3, 41);
    for (int trial = 0; trial < 50; ++trial) {
        int n = npts(rng) | 1;  // odd point count = even interval count
        double a = coef(rng), b = coef(rng), c = coef(rng), d = coef(rng);
        double lo = -2.0, hi = 3.0;
        std::vector<double> xs(static_cast<size_t>(n)), ys(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            double x = lo + (hi - lo) * i / (n - 1);
            xs[static_cast<size_t>(i)] = x;
            ys[static_cast<size_t>(i)] = a * x * x * x + b * x * x + c * x + d;
        }
        auto anti = [&](double x) {
            return a * x * x * x * x / 4 + b * x * x * x / 3 + c * x * x / 2 + d * x;
        };
        double want = anti(hi) - anti(lo);
        double got = dsp::simpson_integrate(ys, xs);
        CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("simpson rejects non-ascending grids") {
    CHECK_THROWS(dsp::simpson_integrate({1.0, 2.0, 3.0}, {0.0, 0.0, 1.0}));
    CHECK_THROWS(dsp::simpson_integrate({1.0}, {0.0}));
}

TEST_CASE("band_power on simple spectra") {
    dsp::PsdEstimate flat;
    for (int f = 0; f <= 16; ++f) {
        flat.freqs_hz.push_back(f);
        flat.power.push_back(1.0);
    }
    CHECK(dsp::band_power(flat, {"Alpha", 8.0, 12.0}) == doctest::Approx(4.0));

    dsp::PsdEstimate zero = flat;
    for (auto& p : zero.power) p = 0.0;
    CHECK(dsp::band_power(zero, {"Alpha", 8.0, 12.0}) == 0.0);

    CHECK_THROWS(dsp::band_power(flat, {"Gamma", 30.0, 75.0}));  // outside range
}

TEST_CASE("pure alpha tone dominates every other band") {
    const double fs = 256.0;
    auto x = sine(10.0, fs, 2560);
    auto est = dsp::psd(x, fs, 1.0, 0.5);
    double alpha = 0.0;
    std::vector<double> others;
    for (const auto& band : dsp::default_bands()) {
        double p = dsp::band_power(est, band);
        if (band.name == "Alpha")
            alpha = p;
        else
            others.push_back(p);
    }
    for (double p : others) CHECK(alpha > 10.0 * p);
}

TEST_CASE("stft frame count, bin count and tail handling") {
    std::vector<double> x(2560, 0.0);
    auto m = dsp::stft_frames(x, 256);
    CHECK(m.rows == 10);
    CHECK(m.cols == 129);
    for (double v : m.v) CHECK(v == 0.0);

    auto m2 = dsp::stft_frames(std::vector<double>(2560 + 100, 0.0), 256);
    CHECK(m2.rows == 10);  // tail dropped

    CHECK_THROWS(dsp::stft_frames(std::vector<double>(100, 0.0), 256));
}

TEST_CASE("stft concentrates an integer-bin sine in one bin") {
    const double fs = 256.0;
    const int bin = 20;
    const double f = bin * fs / 256.0;
    auto x = sine(f, fs, 2560);
    auto m = dsp::stft_frames(x, 256);
    for (int r = 0; r < m.rows; ++r) {
        double total = 0.0, in_bin = 0.0;
        for (int c = 0; c < m.cols; ++c) {
            double e = m.at(r, c) * m.at(r, c);
            total += e;
            if (c == bin) in_bin = e;
        }
        CHECK(in_bin >= 0.99 * total);
    }
}

TEST_CASE("stft satisfies Parseval per frame") {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<double> x(1024);
    for (auto& v : x) v = g(rng);
    auto m = dsp::stft_frames(x, 256);
    for (int r = 0; r < m.rows; ++r) {
        double time_energy = 0.0;
        for (int i = 0; i < 256; ++i) {
            double v = x[static_cast<size_t>(r) * 256 + static_cast<size_t>(i)];
            time_energy += v * v;
        }
        // one-sided fold: double everything except DC and Nyquist
        double freq_energy = m.at(r, 0) * m.at(r, 0) + m.at(r, 128) * m.at(r, 128);
        for (int c = 1; c < 128; ++c) freq_energy += 2.0 * m.at(r, c) * m.at(r, c);
        freq_energy /= 256.0;
        CHECK(std::abs(freq_energy - time_energy) <= 1e-6 * time_energy);
    }
}
