#pragma once

#include <complex>
#include <string>
#include <vector>

namespace geega::dsp {

struct BandDefinition {
    std::string name;
    double lo_hz = 0.0;
    double hi_hz = 0.0;
};

// Delta 1-4, Theta 4-8, Alpha 8-12, Beta 12-30, Gamma 30-75 Hz.
const std::vector<BandDefinition>& default_bands();

struct PsdEstimate {
    std::vector<double> freqs_hz;  // ascending, 0 .. fs/2
    std::vector<double> power;     // uV^2/Hz, nonnegative
};

struct RealMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    RealMatrix() = default;
    RealMatrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// Normalized biquad (a0 = 1).
struct Biquad {
    double b0, b1, b2, a1, a2;
};

// Butterworth bandpass as second-order sections; `order` is the analog
// prototype order (the digital filter has 2*order poles).
std::vector<Biquad> butter_bandpass_sos(int order, double lo_hz, double hi_hz, double fs);

// RBJ-style notch biquad.
Biquad notch_biquad(double f0_hz, double quality, double fs);

// |H(e^{j 2 pi f / fs})| of a section cascade.
double sos_response(const std::vector<Biquad>& sos, double f_hz, double fs);

// Zero-phase (forward-backward) filtering with reflective padding and
// steady-state initial conditions. Output length equals input length.
std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x);

std::vector<double> bandpass(const std::vector<double>& signal, double fs, double lo_hz,
                             double hi_hz, int order);

std::vector<double> notch(const std::vector<double>& signal, double fs, double f0_hz,
                          double quality);

// Welch-averaged PSD, Hann window, density scaling.
PsdEstimate psd(const std::vector<double>& signal, double fs, double window_seconds,
                double overlap_fraction);

// Composite Simpson over an ascending grid; pairs of intervals take the
// generalized (non-uniform) parabolic rule, a trailing odd interval falls
// back to the trapezoid.
double simpson_integrate(const std::vector<double>& y, const std::vector<double>& x);

double band_power(const PsdEstimate& psd, const BandDefinition& band);

// Non-overlapping rectangular-window FFT frames; one-sided magnitudes.
// Output is [floor(len/window_len) x (window_len/2 + 1)].
RealMatrix stft_frames(const std::vector<double>& signal, int window_len = 256);

// Radix-2 when the length is a power of two, direct DFT otherwise.
void fft_inplace(std::vector<std::complex<double>>& a);

}  // namespace geega::dsp
