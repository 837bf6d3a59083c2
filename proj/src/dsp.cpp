#include "geega/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace geega::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

const std::vector<BandDefinition>& default_bands() {
    static const std::vector<BandDefinition> bands = {
        {"Delta", 1.0, 4.0}, {"Theta", 4.0, 8.0},  {"Alpha", 8.0, 12.0},
        {"Beta", 12.0, 30.0}, {"Gamma", 30.0, 75.0},
    };
    return bands;
}

void fft_inplace(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n <= 1) return;
    if (!is_pow2(n)) {
        // direct DFT for awkward lengths (e.g. 250-sample windows)
        std::vector<std::complex<double>> out(n);
        for (size_t k = 0; k < n; ++k) {
            std::complex<double> acc(0.0, 0.0);
            for (size_t j = 0; j < n; ++j) {
                double ang = -2.0 * kPi * static_cast<double>(k * j % n) / static_cast<double>(n);
                acc += a[j] * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            out[k] = acc;
        }
        a = std::move(out);
        return;
    }
    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * kPi / static_cast<double>(len);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// IIR design
// ---------------------------------------------------------------------------

std::vector<Biquad> butter_bandpass_sos(int order, double lo_hz, double hi_hz, double fs) {
    if (!(lo_hz > 0.0) || !(lo_hz < hi_hz) || !(hi_hz < fs / 2.0))
        throw std::invalid_argument("bandpass: need 0 < lo < hi < fs/2 (lo=" +
                                    std::to_string(lo_hz) + ", hi=" + std::to_string(hi_hz) +
                                    ", fs=" + std::to_string(fs) + ")");
    if (order < 1) throw std::invalid_argument("bandpass: order must be >= 1");

    const double fs2 = 2.0 * fs;
    const double w1 = fs2 * std::tan(kPi * lo_hz / fs);  // prewarped edges
    const double w2 = fs2 * std::tan(kPi * hi_hz / fs);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    // analog prototype poles on the unit circle, left half plane
    std::vector<std::complex<double>> proto;
    for (int k = 1; k <= order; ++k) {
        double theta = kPi * (2.0 * k + order - 1.0) / (2.0 * order);
        proto.emplace_back(std::cos(theta), std::sin(theta));
    }

    // lowpass -> bandpass: each prototype pole yields two analog poles
    std::vector<std::complex<double>> apoles;
    for (const auto& p : proto) {
        std::complex<double> pb = p * bw;
        std::complex<double> disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
        apoles.push_back((pb + disc) / 2.0);
        apoles.push_back((pb - disc) / 2.0);
    }

    // bilinear transform
    std::vector<std::complex<double>> zpoles;
    zpoles.reserve(apoles.size());
    for (const auto& s : apoles) zpoles.push_back((fs2 + s) / (fs2 - s));

    // pair poles into sections; conjugates sit adjacent after sorting by imag
    std::sort(zpoles.begin(), zpoles.end(), [](const auto& a, const auto& b) {
        if (std::abs(a.real() - b.real()) > 1e-12) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    std::vector<Biquad> sos;
    std::vector<char> used(zpoles.size(), 0);
    for (size_t i = 0; i < zpoles.size(); ++i) {
        if (used[i]) continue;
        used[i] = 1;
        // find the conjugate partner (or the nearest remaining real pole)
        size_t best = i;
        double best_d = 1e300;
        for (size_t j = i + 1; j < zpoles.size(); ++j) {
            if (used[j]) continue;
            double d = std::abs(zpoles[j] - std::conj(zpoles[i]));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best == i) throw std::runtime_error("bandpass: unpaired pole");
        used[best] = 1;
        std::complex<double> z1 = zpoles[i], z2 = zpoles[best];
        Biquad q;
        q.b0 = 1.0;  // zeros at z = +1 and z = -1: (1 - z^-1)(1 + z^-1)
        q.b1 = 0.0;
        q.b2 = -1.0;
        q.a1 = -(z1 + z2).real();
        q.a2 = (z1 * z2).real();
        if (std::abs(q.a2) >= 1.0 + 1e-9)
            throw std::runtime_error("bandpass: unstable section (|a2| >= 1)");
        sos.push_back(q);
    }

    // normalize to unit gain at the (digital) center frequency
    const double fc_dig = std::atan(w0 / fs2) * fs / kPi;  // maps prewarped w0 back
    double g = sos_response(sos, fc_dig, fs);
    if (!(g > 0.0)) throw std::runtime_error("bandpass: degenerate gain normalization");
    double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
    for (auto& q : sos) {
        q.b0 *= per_section;
        q.b1 *= per_section;
        q.b2 *= per_section;
    }
    return sos;
}

Biquad notch_biquad(double f0_hz, double quality, double fs) {
    if (!(f0_hz > 0.0) || !(f0_hz < fs / 2.0))
        throw std::invalid_argument("notch: need 0 < f0 < fs/2");
    if (!(quality > 0.0)) throw std::invalid_argument("notch: quality must be positive");
    double w0 = 2.0 * kPi * f0_hz / fs;
    double alpha = std::sin(w0) / (2.0 * quality);
    double a0 = 1.0 + alpha;
    Biquad q;
    q.b0 = 1.0 / a0;
    q.b1 = -2.0 * std::cos(w0) / a0;
    q.b2 = 1.0 / a0;
    q.a1 = -2.0 * std::cos(w0) / a0;
    q.a2 = (1.0 - alpha) / a0;
    return q;
}

double sos_response(const std::vector<Biquad>& sos, double f_hz, double fs) {
    std::complex<double> z = std::exp(std::complex<double>(0.0, -2.0 * kPi * f_hz / fs));
    std::complex<double> h(1.0, 0.0);
    for (const auto& q : sos) {
        std::complex<double> num = q.b0 + q.b1 * z + q.b2 * z * z;
        std::complex<double> den = 1.0 + q.a1 * z + q.a2 * z * z;
        h *= num / den;
    }
    return std::abs(h);
}

namespace {

// steady-state DF2T state for a unit constant input
void section_zi(const Biquad& q, double& z1, double& z2) {
    double den = 1.0 + q.a1 + q.a2;
    double y = (q.b0 + q.b1 + q.b2) / den;
    z2 = q.b2 - q.a2 * y;
    z1 = q.b1 - q.a1 * y + z2;
}

void sosfilt(const std::vector<Biquad>& sos, std::vector<double>& x) {
    for (const auto& q : sos) {
        double zi1, zi2;
        section_zi(q, zi1, zi2);
        double z1 = zi1 * x[0];
        double z2 = zi2 * x[0];
        for (double& s : x) {
            double in = s;
            double out = q.b0 * in + z1;
            z1 = q.b1 * in - q.a1 * out + z2;
            z2 = q.b2 * in - q.a2 * out;
            s = out;
        }
    }
}

}  // namespace

std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
    if (x.empty()) return {};
    const size_t n = x.size();
    size_t padlen = 3 * (2 * sos.size() + 1);
    padlen = std::min(padlen, n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);  // odd head reflection
    ext.insert(ext.end(), x.begin(), x.end());
    for (size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    sosfilt(sos, ext);
    std::reverse(ext.begin(), ext.end());
    sosfilt(sos, ext);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
                               ext.begin() + static_cast<std::ptrdiff_t>(padlen + n));
}

std::vector<double> bandpass(const std::vector<double>& signal, double fs, double lo_hz,
                             double hi_hz, int order) {
    auto sos = butter_bandpass_sos(order, lo_hz, hi_hz, fs);
    for (double s : signal)
        if (!std::isfinite(s)) throw std::invalid_argument("bandpass: non-finite sample");
    return filtfilt(sos, signal);
}

std::vector<double> notch(const std::vector<double>& signal, double fs, double f0_hz,
                          double quality) {
    std::vector<Biquad> sos = {notch_biquad(f0_hz, quality, fs)};
    return filtfilt(sos, signal);
}

PsdEstimate psd(const std::vector<double>& signal, double fs, double window_seconds,
                double overlap_fraction) {
    const int nwin = static_cast<int>(std::llround(window_seconds * fs));
    if (nwin < 2) throw std::invalid_argument("psd: window too short");
    if (static_cast<int>(signal.size()) < nwin)
        throw std::invalid_argument("psd: signal shorter than one window (" +
                                    std::to_string(signal.size()) + " < " + std::to_string(nwin) +
                                    ")");
    if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
        throw std::invalid_argument("psd: overlap fraction must be in [0,1)");

    std::vector<double> window(static_cast<size_t>(nwin));
    double u = 0.0;  // window power
    for (int i = 0; i < nwin; ++i) {
        window[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / nwin));
        u += window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }

    int step = std::max(1, static_cast<int>(std::llround(nwin * (1.0 - overlap_fraction))));
    int nbins = nwin / 2 + 1;
    std::vector<double> acc(static_cast<size_t>(nbins), 0.0);
    int count = 0;
    std::vector<std::complex<double>> buf(static_cast<size_t>(nwin));
    for (int start = 0; start + nwin <= static_cast<int>(signal.size()); start += step) {
        for (int i = 0; i < nwin; ++i)
            buf[static_cast<size_t>(i)] = {signal[static_cast<size_t>(start + i)] *
                                               window[static_cast<size_t>(i)],
                                           0.0};
        fft_inplace(buf);
        for (int k = 0; k < nbins; ++k) {
            double p = std::norm(buf[static_cast<size_t>(k)]) / (fs * u);
            if (k != 0 && !(nwin % 2 == 0 && k == nwin / 2)) p *= 2.0;  // one-sided fold
            acc[static_cast<size_t>(k)] += p;
        }
        ++count;
    }

    PsdEstimate out;
    out.freqs_hz.resize(static_cast<size_t>(nbins));
    out.power.resize(static_cast<size_t>(nbins));
    for (int k = 0; k < nbins; ++k) {
        out.freqs_hz[static_cast<size_t>(k)] = fs * k / nwin;
        out.power[static_cast<size_t>(k)] = acc[static_cast<size_t>(k)] / count;
    }
    return out;
}

double simpson_integrate(const std::vector<double>& y, const std::vector<double>& x) {
    if (y.size() != x.size()) throw std::invalid_argument("simpson: y/x length mismatch");
    if (x.size() < 2) throw std::invalid_argument("simpson: need at least 2 points");
    for (size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1])) throw std::invalid_argument("simpson: x must be ascending");

    const size_t n_int = x.size() - 1;
    double total = 0.0;
    size_t i = 0;
    for (; i + 1 < n_int; i += 2) {
        double h0 = x[i + 1] - x[i];
        double h1 = x[i + 2] - x[i + 1];
        double hsum = h0 + h1;
        total += hsum / 6.0 *
                 ((2.0 - h1 / h0) * y[i] + hsum * hsum / (h0 * h1) * y[i + 1] +
                  (2.0 - h0 / h1) * y[i + 2]);
    }
    if (i < n_int)  // odd interval left: trapezoid
        total += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
    return total;
}

double band_power(const PsdEstimate& psd, const BandDefinition& band) {
    if (!(band.lo_hz < band.hi_hz)) throw std::invalid_argument("band_power: lo >= hi");
    if (psd.freqs_hz.empty() || band.lo_hz < psd.freqs_hz.front() - 1e-12 ||
        band.hi_hz > psd.freqs_hz.back() + 1e-12)
        throw std::invalid_argument("band_power: band [" + std::to_string(band.lo_hz) + "," +
                                    std::to_string(band.hi_hz) + "] outside PSD range");
    std::vector<double> xs, ys;
    for (size_t k = 0; k < psd.freqs_hz.size(); ++k) {
        if (psd.freqs_hz[k] >= band.lo_hz - 1e-12 && psd.freqs_hz[k] <= band.hi_hz + 1e-12) {
            xs.push_back(psd.freqs_hz[k]);
            ys.push_back(psd.power[k]);
        }
    }
    if (xs.size() < 2)
        throw std::invalid_argument("band_power: fewer than 2 PSD bins in band " + band.name);
    return simpson_integrate(ys, xs);
}

RealMatrix stft_frames(const std::vector<double>& signal, int window_len) {
    if (window_len < 2) throw std::invalid_argument("stft: window too short");
    if (static_cast<int>(signal.size()) < window_len)
        throw std::invalid_argument("stft: signal shorter than one window (" +
                                    std::to_string(signal.size()) + " < " +
                                    std::to_string(window_len) + ")");
    const int frames = static_cast<int>(signal.size()) / window_len;
    const int bins = window_len / 2 + 1;
    RealMatrix out(frames, bins);
    std::vector<std::complex<double>> buf(static_cast<size_t>(window_len));
    for (int f = 0; f < frames; ++f) {
        for (int i = 0; i < window_len; ++i)
            buf[static_cast<size_t>(i)] = {signal[static_cast<size_t>(f) * window_len + i], 0.0};
        fft_inplace(buf);
        for (int k = 0; k < bins; ++k) out.at(f, k) = std::abs(buf[static_cast<size_t>(k)]);
    }
    return out;
}

}  // namespace geega::dsp
