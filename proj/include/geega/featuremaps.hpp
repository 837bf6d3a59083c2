#pragma once

#include <array>
#include <string>
#include <vector>

#include "geega/dsp.hpp"
#include "geega/signal_io.hpp"
#include "geega/tensor.hpp"

namespace geega::feat {

// Gaussian RBF with an affine tail; interpolates exactly at the nodes and
// reproduces planes.
struct RbfInterpolant {
    std::vector<std::array<double, 2>> points;
    std::vector<double> weights;
    std::array<double, 3> affine{0.0, 0.0, 0.0};  // c0 + cx*x + cy*y
    double epsilon = 1.0;

    double eval(double x, double y) const;
};

// epsilon <= 0 selects the mean nearest-neighbor distance.
RbfInterpolant rbf_fit(const std::vector<std::array<double, 3>>& points, double epsilon = 0.0);

struct FeatureOptions {
    int image = 32;
    double psd_window_seconds = 1.0;
    double psd_overlap = 0.5;
    bool log_band_power = false;  // log-compress band powers before interpolation
    int stft_window = 256;
};

// Band powers per channel -> RBF -> [bands x image x image]; pixels outside
// the unit head disc are zero.
diff::Tensor topomap(const sio::Segment& seg, const sio::Montage& montage,
                     const std::vector<dsp::BandDefinition>& bands,
                     const FeatureOptions& opts = {});

// Per channel: rectangular STFT -> log(1+magnitude) -> resize;
// output [channels x image x image].
diff::Tensor spectrogram(const sio::Segment& seg, const FeatureOptions& opts = {});

// Separable bilinear resize; the filter widens when downscaling so narrow
// features survive (triangle kernel scaled by the shrink factor).
dsp::RealMatrix resize_bilinear(const dsp::RealMatrix& in, int out_rows, int out_cols);

// --- feature cache -----------------------------------------------------------

struct FeatureItem {
    std::string subject_id;
    int label = 0;
    diff::Tensor topo;     // [k x h x w]
    diff::Tensor spectro;  // [c x h x w]
};

struct FeatureSet {
    int bands = 5;
    int channels = 4;
    int image = 32;
    std::string montage;
    std::vector<FeatureItem> items;
};

void save_features(const FeatureSet& fs, const std::string& path);
FeatureSet load_features(const std::string& path);

// Full per-segment pipeline used by the featgen command.
FeatureItem make_features(const sio::Segment& seg, const sio::Montage& montage,
                          const std::vector<dsp::BandDefinition>& bands,
                          const FeatureOptions& opts = {});

}  // namespace geega::feat
