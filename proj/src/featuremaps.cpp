#include "geega/featuremaps.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "geega/binio.hpp"

namespace geega::feat {

double RbfInterpolant::eval(double x, double y) const {
    double acc = affine[0] + affine[1] * x + affine[2] * y;
    for (size_t i = 0; i < points.size(); ++i) {
        double dx = x - points[i][0];
        double dy = y - points[i][1];
        double r2 = dx * dx + dy * dy;
        acc += weights[i] * std::exp(-r2 / (epsilon * epsilon));
    }
    return acc;
}

RbfInterpolant rbf_fit(const std::vector<std::array<double, 3>>& pts, double epsilon) {
    const int n = static_cast<int>(pts.size());
    if (n < 3) throw std::invalid_argument("rbf_fit: need at least 3 points");
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double dx = pts[static_cast<size_t>(i)][0] - pts[static_cast<size_t>(j)][0];
            double dy = pts[static_cast<size_t>(i)][1] - pts[static_cast<size_t>(j)][1];
            if (dx * dx + dy * dy < 1e-20)
                throw std::invalid_argument("rbf_fit: duplicate points");
        }

    if (epsilon <= 0.0) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = 1e300;
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                double dx = pts[static_cast<size_t>(i)][0] - pts[static_cast<size_t>(j)][0];
                double dy = pts[static_cast<size_t>(i)][1] - pts[static_cast<size_t>(j)][1];
                best = std::min(best, std::sqrt(dx * dx + dy * dy));
            }
            acc += best;
        }
        epsilon = acc / n;
    }

    // augmented system:  [K P; P^T 0] [w; c] = [v; 0]
    const int m = n + 3;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double dx = pts[static_cast<size_t>(i)][0] - pts[static_cast<size_t>(j)][0];
            double dy = pts[static_cast<size_t>(i)][1] - pts[static_cast<size_t>(j)][1];
            a(i, j) = std::exp(-(dx * dx + dy * dy) / (epsilon * epsilon));
        }
        a(i, n) = 1.0;
        a(i, n + 1) = pts[static_cast<size_t>(i)][0];
        a(i, n + 2) = pts[static_cast<size_t>(i)][1];
        a(n, i) = 1.0;
        a(n + 1, i) = pts[static_cast<size_t>(i)][0];
        a(n + 2, i) = pts[static_cast<size_t>(i)][1];
        b(i) = pts[static_cast<size_t>(i)][2];
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < m)
        throw std::runtime_error("rbf_fit: singular interpolation system (collinear electrodes?)");
    Eigen::VectorXd sol = qr.solve(b);

    RbfInterpolant out;
    out.epsilon = epsilon;
    out.points.resize(static_cast<size_t>(n));
    out.weights.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.points[static_cast<size_t>(i)] = {pts[static_cast<size_t>(i)][0],
                                              pts[static_cast<size_t>(i)][1]};
        out.weights[static_cast<size_t>(i)] = sol(i);
    }
    out.affine = {sol(n), sol(n + 1), sol(n + 2)};

    for (int i = 0; i < n; ++i) {
        double got = out.eval(pts[static_cast<size_t>(i)][0], pts[static_cast<size_t>(i)][1]);
        if (std::abs(got - pts[static_cast<size_t>(i)][2]) >
            1e-6 * std::max(1.0, std::abs(pts[static_cast<size_t>(i)][2])))
            throw std::runtime_error("rbf_fit: node residual too large (ill-conditioned system)");
    }
    return out;
}

diff::Tensor topomap(const sio::Segment& seg, const sio::Montage& montage,
                     const std::vector<dsp::BandDefinition>& bands, const FeatureOptions& opts) {
    montage.validate();
    if (montage.size() != seg.channels)
        throw std::invalid_argument("topomap: montage has " + std::to_string(montage.size()) +
                                    " electrodes, segment has " + std::to_string(seg.channels) +
                                    " channels");
    if (montage.size() < 3) throw std::invalid_argument("topomap: need at least 3 electrodes");

    const int k = static_cast<int>(bands.size());
    const int img = opts.image;

    // band powers per channel, one PSD per channel
    std::vector<std::vector<double>> powers(static_cast<size_t>(k),
                                            std::vector<double>(static_cast<size_t>(seg.channels)));
    for (int c = 0; c < seg.channels; ++c) {
        auto est = dsp::psd(seg.channel(c), seg.sample_rate_hz, opts.psd_window_seconds,
                            opts.psd_overlap);
        for (int b = 0; b < k; ++b) {
            double p = dsp::band_power(est, bands[static_cast<size_t>(b)]);
            if (opts.log_band_power) p = std::log1p(p);
            powers[static_cast<size_t>(b)][static_cast<size_t>(c)] = p;
        }
    }

    diff::Tensor out = diff::Tensor::zeros({k, img, img});
    double* o = out.data();
    for (int b = 0; b < k; ++b) {
        std::vector<std::array<double, 3>> pts;
        pts.reserve(static_cast<size_t>(montage.size()));
        for (int c = 0; c < montage.size(); ++c)
            pts.push_back({montage.electrodes[static_cast<size_t>(c)].x,
                           montage.electrodes[static_cast<size_t>(c)].y,
                           powers[static_cast<size_t>(b)][static_cast<size_t>(c)]});
        RbfInterpolant interp;
        try {
            interp = rbf_fit(pts);
        } catch (const std::exception& e) {
            throw std::runtime_error("topomap: band " + bands[static_cast<size_t>(b)].name + ": " +
                                     e.what());
        }
        for (int i = 0; i < img; ++i) {
            double y = 1.0 - (i + 0.5) * 2.0 / img;  // row 0 at the front
            for (int j = 0; j < img; ++j) {
                double x = -1.0 + (j + 0.5) * 2.0 / img;
                double v = (x * x + y * y <= 1.0) ? interp.eval(x, y) : 0.0;
                o[(static_cast<int64_t>(b) * img + i) * img + j] = v;
            }
        }
    }
    return out;
}

dsp::RealMatrix resize_bilinear(const dsp::RealMatrix& in, int out_rows, int out_cols) {
    if (in.rows < 1 || in.cols < 1) throw std::invalid_argument("resize: empty input");
    auto resize_axis = [](const dsp::RealMatrix& src, int out_n, bool rows) {
        int in_n = rows ? src.rows : src.cols;
        int other = rows ? src.cols : src.rows;
        double scale = static_cast<double>(in_n) / out_n;
        double fscale = std::max(1.0, scale);
        dsp::RealMatrix dst(rows ? out_n : src.rows, rows ? src.cols : out_n);
        for (int o = 0; o < out_n; ++o) {
            double center = (o + 0.5) * scale - 0.5;
            int lo = static_cast<int>(std::floor(center - fscale));
            int hi = static_cast<int>(std::ceil(center + fscale));
            double wsum = 0.0;
            std::vector<std::pair<int, double>> taps;
            for (int s = lo; s <= hi; ++s) {
                double w = 1.0 - std::abs((s - center) / fscale);
                if (w <= 0.0) continue;
                int sc = std::clamp(s, 0, in_n - 1);
                taps.emplace_back(sc, w);
                wsum += w;
            }
            for (int q = 0; q < other; ++q) {
                double acc = 0.0;
                for (const auto& [s, w] : taps)
                    acc += w * (rows ? src.at(s, q) : src.at(q, s));
                double v = acc / wsum;
                if (rows)
                    dst.at(o, q) = v;
                else
                    dst.at(q, o) = v;
            }
        }
        return dst;
    };
    dsp::RealMatrix tmp = resize_axis(in, out_rows, true);
    return resize_axis(tmp, out_cols, false);
}

diff::Tensor spectrogram(const sio::Segment& seg, const FeatureOptions& opts) {
    if (seg.length < opts.stft_window)
        throw std::invalid_argument("spectrogram: segment length " + std::to_string(seg.length) +
                                    " shorter than the " + std::to_string(opts.stft_window) +
                                    "-sample window");
    const int img = opts.image;
    diff::Tensor out = diff::Tensor::zeros({seg.channels, img, img});
    double* o = out.data();
    for (int c = 0; c < seg.channels; ++c) {
        dsp::RealMatrix frames = dsp::stft_frames(seg.channel(c), opts.stft_window);
        for (double& v : frames.v) v = std::log1p(v);
        dsp::RealMatrix small = resize_bilinear(frames, img, img);
        for (int i = 0; i < img; ++i)
            for (int j = 0; j < img; ++j)
                o[(static_cast<int64_t>(c) * img + i) * img + j] = small.at(i, j);
    }
    return out;
}

FeatureItem make_features(const sio::Segment& seg, const sio::Montage& montage,
                          const std::vector<dsp::BandDefinition>& bands,
                          const FeatureOptions& opts) {
    FeatureItem item;
    item.subject_id = seg.subject_id;
    item.label = seg.label;
    item.topo = topomap(seg, montage, bands, opts);
    item.spectro = spectrogram(seg, opts);
    return item;
}

void save_features(const FeatureSet& fs, const std::string& path) {
    auto os = binio::open_out(path);
    binio::write_magic(os, "GEEF");
    binio::write_raw<uint16_t>(os, 1);
    binio::write_raw<uint16_t>(os, static_cast<uint16_t>(fs.bands));
    binio::write_raw<uint16_t>(os, static_cast<uint16_t>(fs.channels));
    binio::write_raw<uint16_t>(os, static_cast<uint16_t>(fs.image));
    binio::write_string(os, fs.montage);
    binio::write_raw<uint32_t>(os, static_cast<uint32_t>(fs.items.size()));
    for (const auto& item : fs.items) {
        binio::write_string(os, item.subject_id);
        binio::write_raw<uint8_t>(os, static_cast<uint8_t>(item.label));
        const double* t = item.topo.data();
        for (int64_t i = 0; i < item.topo.size(); ++i)
            binio::write_raw<float>(os, static_cast<float>(t[i]));
        const double* s = item.spectro.data();
        for (int64_t i = 0; i < item.spectro.size(); ++i)
            binio::write_raw<float>(os, static_cast<float>(s[i]));
    }
    if (!os) throw std::runtime_error("feature cache write failed: " + path);
}

FeatureSet load_features(const std::string& path) {
    auto is = binio::open_in(path);
    binio::expect_magic(is, "GEEF", "feature cache " + path);
    uint16_t version = binio::read_raw<uint16_t>(is);
    if (version != 1) throw std::runtime_error("feature cache: unsupported version");
    FeatureSet fs;
    fs.bands = binio::read_raw<uint16_t>(is);
    fs.channels = binio::read_raw<uint16_t>(is);
    fs.image = binio::read_raw<uint16_t>(is);
    fs.montage = binio::read_string(is);
    uint32_t n = binio::read_raw<uint32_t>(is);
    fs.items.reserve(n);
    for (uint32_t k = 0; k < n; ++k) {
        FeatureItem item;
        item.subject_id = binio::read_string(is);
        item.label = binio::read_raw<uint8_t>(is);
        item.topo = diff::Tensor::zeros({fs.bands, fs.image, fs.image});
        double* t = item.topo.data();
        for (int64_t i = 0; i < item.topo.size(); ++i)
            t[i] = static_cast<double>(binio::read_raw<float>(is));
        item.spectro = diff::Tensor::zeros({fs.channels, fs.image, fs.image});
        double* s = item.spectro.data();
        for (int64_t i = 0; i < item.spectro.size(); ++i)
            s[i] = static_cast<double>(binio::read_raw<float>(is));
        fs.items.push_back(std::move(item));
    }
    return fs;
}

}  // namespace geega::feat
