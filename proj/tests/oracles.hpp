#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace oracles {

constexpr double kPi = std::numbers::pi;

// Continuous-time Butterworth bandpass magnitude at a digital frequency f:
// |H(j w)|^2 = 1 / (1 + ((w^2 - w0^2) / (bw * w))^(2n)) evaluated at the
// bilinear-prewarped frequencies, which is exactly the digital filter's
// magnitude. Depends only on the textbook formula, not on the designed
// coefficients.
inline double butter_bandpass_mag(double f_hz, double lo_hz, double hi_hz, double fs, int order) {
    auto prewarp = [&](double f) { return 2.0 * fs * std::tan(kPi * f / fs); };
    double w = prewarp(f_hz);
    double w1 = prewarp(lo_hz), w2 = prewarp(hi_hz);
    double w0 = std::sqrt(w1 * w2), bw = w2 - w1;
    double x = (w * w - w0 * w0) / (bw * w);
    return 1.0 / std::sqrt(1.0 + std::pow(x * x, order));
}

// RBJ notch magnitude straight from the biquad definition.
inline double notch_mag(double f_hz, double f0_hz, double q, double fs) {
    double w0 = 2.0 * kPi * f0_hz / fs;
    double alpha = std::sin(w0) / (2.0 * q);
    double b0 = 1.0, b1 = -2.0 * std::cos(w0), b2 = 1.0;
    double a0 = 1.0 + alpha, a1 = b1, a2 = 1.0 - alpha;
    std::complex<double> z = std::exp(std::complex<double>(0.0, -2.0 * kPi * f_hz / fs));
    return std::abs((b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z));
}

// Amplitude of the f_hz component over [start, start+len) by projection.
inline double sine_amplitude(const std::vector<double>& x, double fs, double f_hz, size_t start,
                             size_t len) {
    double s = 0.0, c = 0.0;
    for (size_t i = 0; i < len; ++i) {
        double t = static_cast<double>(start + i) / fs;
        s += x[start + i] * std::sin(2.0 * kPi * f_hz * t);
        c += x[start + i] * std::cos(2.0 * kPi * f_hz * t);
    }
    return 2.0 * std::hypot(s, c) / static_cast<double>(len);
}

// Central-difference gradient of a scalar function (64-bit).
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-4) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + h;
        double up = f(x);
        x[i] = keep - h;
        double dn = f(x);
        x[i] = keep;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

inline bool grads_close(const std::vector<double>& a, const std::vector<double>& b, double rel,
                        double abs_tol = 1e-7) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        double err = std::abs(a[i] - b[i]);
        if (err > abs_tol + rel * std::max(std::abs(a[i]), std::abs(b[i]))) return false;
    }
    return true;
}

// Brute-force minimizer of |a g1 + (1-a) g2|^2 over the alpha grid, using the
// quadratic form q(a) = a^2 |g1|^2 + (1-a)^2 |g2|^2 + 2 a (1-a) <g1,g2>.
struct ParetoGrid {
    double alpha;     // arg min over the grid
    double min_norm;  // sqrt(q(alpha))
};

inline ParetoGrid pareto_grid_search(const std::vector<double>& g1, const std::vector<double>& g2,
                                     double step) {
    double n1 = 0.0, n2 = 0.0, dot = 0.0;
    for (size_t i = 0; i < g1.size(); ++i) {
        n1 += g1[i] * g1[i];
        n2 += g2[i] * g2[i];
        dot += g1[i] * g2[i];
    }
    auto q = [&](double a) { return a * a * n1 + (1 - a) * (1 - a) * n2 + 2 * a * (1 - a) * dot; };
    ParetoGrid best{0.0, std::sqrt(std::max(0.0, q(0.0)))};
    for (double a = 0.0; a <= 1.0 + 1e-12; a += step) {
        double al = std::min(a, 1.0);
        double v = std::sqrt(std::max(0.0, q(al)));
        if (v < best.min_norm) best = {al, v};
    }
    return best;
}

inline double candidate_norm(const std::vector<double>& g1, const std::vector<double>& g2,
                             double alpha) {
    double acc = 0.0;
    for (size_t i = 0; i < g1.size(); ++i) {
        double v = alpha * g1[i] + (1 - alpha) * g2[i];
        acc += v * v;
    }
    return std::sqrt(acc);
}

}  // namespace oracles
