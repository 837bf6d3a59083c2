#include "geega/model.hpp"

#include <cmath>
#include <stdexcept>

namespace geega::model {

using diff::Component;
using diff::Tape;
using diff::Tensor;
using diff::Var;
namespace ops = diff::ops;

void ModelConfig::validate() const {
    if (encoder.embed_dim % encoder.heads != 0)
        throw std::invalid_argument("model: embed_dim must be divisible by heads");
    if (image % encoder.patch != 0)
        throw std::invalid_argument("model: image size " + std::to_string(image) +
                                    " not divisible by patch " + std::to_string(encoder.patch));
    if (encoder.blocks < 1) throw std::invalid_argument("model: need at least one block");
    if (!use_topo && !use_spectro)
        throw std::invalid_argument("model: at least one domain branch must be enabled");
    if (gcn.nodes < 1 || gcn.node_dim < 1 || gcn.out_dim < 1)
        throw std::invalid_argument("model: GCN dims must be positive");
}

namespace {

Tensor uniform_init(std::vector<int> shape, double bound, std::mt19937_64& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uniform_real_distribution<double> uni(-bound, bound);
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = uni(rng);
    return t;
}

}  // namespace

GeegaNet::GeegaNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);

    if (cfg_.use_topo)
        topo_enc_ = build_encoder("topo", Component::TopoEncoder, cfg_.topo_channels, rng);
    if (cfg_.use_spectro)
        spectro_enc_ = build_encoder("spectro", Component::SpectroEncoder, cfg_.spectro_channels, rng);

    const int d = cfg_.encoder.embed_dim;
    const int g1 = cfg_.fused_width();
    const int g2 = cfg_.gcn.nodes * cfg_.gcn.node_dim;
    const int f = cfg_.gcn.node_dim;
    double bound = 1.0 / std::sqrt(static_cast<double>(g1));
    gcn_proj_w_ = params_.add("gcn.proj.w", Component::Gcn, uniform_init({g1, g2}, bound, rng));
    gcn_proj_b_ = params_.add("gcn.proj.b", Component::Gcn, uniform_init({g2}, bound, rng), true, false);
    bound = 1.0 / std::sqrt(static_cast<double>(f));
    gcn_w1_ = params_.add("gcn.w1", Component::Gcn, uniform_init({f, f}, bound, rng));
    gcn_w2_ = params_.add("gcn.w2", Component::Gcn, uniform_init({f, f}, bound, rng));
    bound = 1.0 / std::sqrt(static_cast<double>(g2));
    gcn_out_w_ = params_.add("gcn.out.w", Component::Gcn,
                             uniform_init({g2, cfg_.gcn.out_dim}, bound, rng));
    gcn_out_b_ = params_.add("gcn.out.b", Component::Gcn,
                             uniform_init({cfg_.gcn.out_dim}, bound, rng), true, false);

    if (cfg_.use_topo) head_topo_ = build_head("head_topo", Component::HeadTopo, d, rng);
    if (cfg_.use_spectro)
        head_spectro_ = build_head("head_spectro", Component::HeadSpectro, d, rng);
    head_gcn_ = build_head("head_gcn", Component::HeadGcn, cfg_.gcn.out_dim, rng);

    // class centers: state updated by EMA, not by the optimizer
    if (cfg_.use_topo)
        centers_topo = params_.add("centers.topo", Component::Centers, Tensor::zeros({2, d}),
                                   false, false);
    if (cfg_.use_spectro)
        centers_spectro = params_.add("centers.spectro", Component::Centers,
                                      Tensor::zeros({2, d}), false, false);
    centers_gcn = params_.add("centers.gcn", Component::Centers,
                              Tensor::zeros({2, cfg_.gcn.out_dim}), false, false);

    const int n = cfg_.gcn.nodes;
    adjacency_ = Tensor::full({n, n}, 1.0 / n);
}

GeegaNet::EncoderParams GeegaNet::build_encoder(const std::string& prefix, Component comp,
                                                int in_channels, std::mt19937_64& rng) {
    const auto& ec = cfg_.encoder;
    const int d = ec.embed_dim;
    const int p = ec.patch;
    const int n_tokens = (cfg_.image / p) * (cfg_.image / p) + 1;
    const int patch_dim = in_channels * p * p;

    EncoderParams ep;
    double bound = 1.0 / std::sqrt(static_cast<double>(patch_dim));
    ep.patch_w = params_.add(prefix + ".patch.w", comp, uniform_init({patch_dim, d}, bound, rng));
    ep.patch_b = params_.add(prefix + ".patch.b", comp, uniform_init({d}, bound, rng), true, false);
    ep.cls = params_.add(prefix + ".cls", comp, uniform_init({1, d}, 0.02, rng), true, false);
    ep.pos = params_.add(prefix + ".pos", comp, uniform_init({n_tokens, d}, 0.02, rng), true, false);

    for (int blk = 0; blk < ec.blocks; ++blk) {
        std::string bp = prefix + ".blk" + std::to_string(blk);
        EncoderParams::Block b;
        b.ln1_g = params_.add(bp + ".ln1.g", comp, Tensor::full({d}, 1.0), true, false);
        b.ln1_b = params_.add(bp + ".ln1.b", comp, Tensor::zeros({d}), true, false);
        bound = 1.0 / std::sqrt(static_cast<double>(d));
        b.wq = params_.add(bp + ".attn.wq", comp, uniform_init({d, d}, bound, rng));
        b.bq = params_.add(bp + ".attn.bq", comp, uniform_init({d}, bound, rng), true, false);
        b.wk = params_.add(bp + ".attn.wk", comp, uniform_init({d, d}, bound, rng));
        b.bk = params_.add(bp + ".attn.bk", comp, uniform_init({d}, bound, rng), true, false);
        b.wv = params_.add(bp + ".attn.wv", comp, uniform_init({d, d}, bound, rng));
        b.bv = params_.add(bp + ".attn.bv", comp, uniform_init({d}, bound, rng), true, false);
        b.wo = params_.add(bp + ".attn.wo", comp, uniform_init({d, d}, bound, rng));
        b.bo = params_.add(bp + ".attn.bo", comp, uniform_init({d}, bound, rng), true, false);
        b.ln2_g = params_.add(bp + ".ln2.g", comp, Tensor::full({d}, 1.0), true, false);
        b.ln2_b = params_.add(bp + ".ln2.b", comp, Tensor::zeros({d}), true, false);
        b.mlp_w1 = params_.add(bp + ".mlp.w1", comp, uniform_init({d, ec.mlp_hidden}, bound, rng));
        b.mlp_b1 = params_.add(bp + ".mlp.b1", comp, uniform_init({ec.mlp_hidden}, bound, rng),
                               true, false);
        bound = 1.0 / std::sqrt(static_cast<double>(ec.mlp_hidden));
        b.mlp_w2 = params_.add(bp + ".mlp.w2", comp, uniform_init({ec.mlp_hidden, d}, bound, rng));
        b.mlp_b2 = params_.add(bp + ".mlp.b2", comp, uniform_init({d}, bound, rng), true, false);
        ep.blocks.push_back(b);
    }
    ep.lnf_g = params_.add(prefix + ".lnf.g", comp, Tensor::full({d}, 1.0), true, false);
    ep.lnf_b = params_.add(prefix + ".lnf.b", comp, Tensor::zeros({d}), true, false);
    return ep;
}

GeegaNet::HeadParams GeegaNet::build_head(const std::string& prefix, Component comp, int in_dim,
                                          std::mt19937_64& rng) {
    HeadParams hp;
    double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    hp.w1 = params_.add(prefix + ".fc1.w", comp, uniform_init({in_dim, cfg_.head.hidden}, bound, rng));
    hp.b1 = params_.add(prefix + ".fc1.b", comp, uniform_init({cfg_.head.hidden}, bound, rng),
                        true, false);
    bound = 1.0 / std::sqrt(static_cast<double>(cfg_.head.hidden));
    hp.w2 = params_.add(prefix + ".fc2.w", comp, uniform_init({cfg_.head.hidden, 1}, bound, rng));
    hp.b2 = params_.add(prefix + ".fc2.b", comp, uniform_init({1}, bound, rng), true, false);
    return hp;
}

GeegaNet::Binding GeegaNet::bind(Tape& t) const {
    Binding b;
    b.vars.reserve(static_cast<size_t>(params_.count()));
    for (int i = 0; i < params_.count(); ++i) {
        const auto& p = params_.at(i);
        // centers enter forward passes as constants
        b.vars.push_back(t.leaf(p.value, p.component != Component::Centers));
    }
    return b;
}

void GeegaNet::accumulate_grads(const Tape& t, const Binding& b) {
    for (int i = 0; i < params_.count(); ++i) {
        Var v = b.vars[static_cast<size_t>(i)];
        if (!t.has_grad(v)) continue;
        const Tensor& g = t.grad(v);
        double* dst = params_.at(i).grad.data();
        const double* src = g.data();
        for (int64_t j = 0; j < g.size(); ++j) dst[j] += src[j];
    }
}

Tensor image_to_patches(const Tensor& images, int patch) {
    if (images.rank() != 4) throw std::invalid_argument("image_to_patches: want [B,ch,h,w]");
    const int b = images.dim(0), ch = images.dim(1), h = images.dim(2), w = images.dim(3);
    if (h % patch != 0 || w % patch != 0)
        throw std::invalid_argument("image_to_patches: image not divisible by patch size");
    const int gy = h / patch, gx = w / patch;
    const int n_patches = gy * gx;
    const int pdim = ch * patch * patch;
    Tensor out = Tensor::zeros({b, n_patches, pdim});
    double* o = out.data();
    const double* src = images.data();
    for (int bi = 0; bi < b; ++bi)
        for (int py = 0; py < gy; ++py)
            for (int px = 0; px < gx; ++px) {
                int64_t base = ((static_cast<int64_t>(bi) * n_patches) + py * gx + px) * pdim;
                int64_t k = 0;
                for (int c = 0; c < ch; ++c)
                    for (int yy = 0; yy < patch; ++yy)
                        for (int xx = 0; xx < patch; ++xx) {
                            int64_t idx = ((static_cast<int64_t>(bi) * ch + c) * h +
                                           (py * patch + yy)) * w +
                                          (px * patch + xx);
                            o[base + k++] = src[idx];
                        }
            }
    return out;
}

Var GeegaNet::encode(Tape& t, const Binding& b, const EncoderParams& ep, const Tensor& input,
                     bool training, std::mt19937_64& rng) const {
    const auto& ec = cfg_.encoder;
    const int batch = input.dim(0);
    const int d = ec.embed_dim;
    const int heads = ec.heads;
    const int dh = d / heads;

    auto pv = [&](int idx) { return b.vars[static_cast<size_t>(idx)]; };

    // tokenize: patches -> linear projection -> class token -> positions
    Var patches = t.leaf(image_to_patches(input, ec.patch));
    Var tokens = ops::add_bias(t, ops::matmul_rhs(t, patches, pv(ep.patch_w)), pv(ep.patch_b));
    Var cls = ops::bcast0(t, pv(ep.cls), batch);           // [B,1,D]
    Var x = ops::concat_axis1(t, cls, tokens);             // [B,T,D]
    const int T = t.val(x).dim(1);
    x = ops::add(t, x, ops::bcast0(t, pv(ep.pos), batch));

    for (const auto& blk : ep.blocks) {
        // pre-norm attention
        Var h1 = ops::layer_norm(t, x, pv(blk.ln1_g), pv(blk.ln1_b));
        auto split = [&](Var y) {
            Var r = ops::reshape(t, y, {batch, T, heads, dh});
            r = ops::permute(t, r, {0, 2, 1, 3});
            return ops::reshape(t, r, {batch * heads, T, dh});
        };
        Var q = split(ops::add_bias(t, ops::matmul_rhs(t, h1, pv(blk.wq)), pv(blk.bq)));
        Var k = split(ops::add_bias(t, ops::matmul_rhs(t, h1, pv(blk.wk)), pv(blk.bk)));
        Var v = split(ops::add_bias(t, ops::matmul_rhs(t, h1, pv(blk.wv)), pv(blk.bv)));
        Var scores = ops::scale(t, ops::bmm(t, q, ops::transpose_last(t, k)),
                                1.0 / std::sqrt(static_cast<double>(dh)));
        Var probs = ops::softmax_last(t, scores);
        probs = ops::dropout(t, probs, ec.dropout, rng, training);
        Var ctx = ops::bmm(t, probs, v);                   // [B*H,T,dh]
        ctx = ops::reshape(t, ctx, {batch, heads, T, dh});
        ctx = ops::permute(t, ctx, {0, 2, 1, 3});
        ctx = ops::reshape(t, ctx, {batch, T, d});
        Var attn = ops::add_bias(t, ops::matmul_rhs(t, ctx, pv(blk.wo)), pv(blk.bo));
        attn = ops::dropout(t, attn, ec.dropout, rng, training);
        x = ops::add(t, x, attn);

        // pre-norm MLP
        Var h2 = ops::layer_norm(t, x, pv(blk.ln2_g), pv(blk.ln2_b));
        Var m = ops::relu(t, ops::add_bias(t, ops::matmul_rhs(t, h2, pv(blk.mlp_w1)), pv(blk.mlp_b1)));
        m = ops::add_bias(t, ops::matmul_rhs(t, m, pv(blk.mlp_w2)), pv(blk.mlp_b2));
        m = ops::dropout(t, m, ec.dropout, rng, training);
        x = ops::add(t, x, m);
    }

    x = ops::layer_norm(t, x, pv(ep.lnf_g), pv(ep.lnf_b));
    return ec.mean_pool ? ops::mean_axis1(t, x) : ops::select_axis1(t, x, 0);
}

Var GeegaNet::run_head(Tape& t, const Binding& b, const HeadParams& hp, Var emb, bool training,
                       std::mt19937_64& rng) const {
    auto pv = [&](int idx) { return b.vars[static_cast<size_t>(idx)]; };
    Var z = ops::relu(t, ops::add_bias(t, ops::matmul(t, emb, pv(hp.w1)), pv(hp.b1)));
    z = ops::dropout(t, z, cfg_.head.dropout, rng, training);
    return ops::add_bias(t, ops::matmul(t, z, pv(hp.w2)), pv(hp.b2));  // [B,1]
}

ForwardOutputs GeegaNet::forward(Tape& t, const Binding& b, const Tensor& topo,
                                 const Tensor& spectro, bool training,
                                 std::mt19937_64& rng) const {
    auto pv = [&](int idx) { return b.vars[static_cast<size_t>(idx)]; };
    ForwardOutputs out;

    int batch = -1;
    if (cfg_.use_topo) {
        if (topo.rank() != 4 || topo.dim(1) != cfg_.topo_channels || topo.dim(2) != cfg_.image ||
            topo.dim(3) != cfg_.image)
            throw std::invalid_argument("forward: topo batch must be [B x " +
                                        std::to_string(cfg_.topo_channels) + " x " +
                                        std::to_string(cfg_.image) + " x " +
                                        std::to_string(cfg_.image) + "], got " + topo.shape_str());
        batch = topo.dim(0);
    }
    if (cfg_.use_spectro) {
        if (spectro.rank() != 4 || spectro.dim(1) != cfg_.spectro_channels ||
            spectro.dim(2) != cfg_.image || spectro.dim(3) != cfg_.image)
            throw std::invalid_argument("forward: spectro batch must be [B x " +
                                        std::to_string(cfg_.spectro_channels) + " x " +
                                        std::to_string(cfg_.image) + " x " +
                                        std::to_string(cfg_.image) + "], got " +
                                        spectro.shape_str());
        if (batch >= 0 && spectro.dim(0) != batch)
            throw std::invalid_argument("forward: batch size mismatch between domains");
        batch = spectro.dim(0);
    }

    std::vector<Var> embs;
    if (cfg_.use_topo) {
        out.e_freq = encode(t, b, topo_enc_, topo, training, rng);
        out.logit_topo = run_head(t, b, head_topo_, out.e_freq, training, rng);
        embs.push_back(out.e_freq);
    }
    if (cfg_.use_spectro) {
        out.e_timefreq = encode(t, b, spectro_enc_, spectro, training, rng);
        out.logit_spectro = run_head(t, b, head_spectro_, out.e_timefreq, training, rng);
        embs.push_back(out.e_timefreq);
    }

    // graph fusion: concat -> lift -> two GCN layers -> flatten -> project
    Var cat = embs.size() == 2 ? ops::concat_last(t, embs[0], embs[1]) : embs[0];
    Var lifted = ops::add_bias(t, ops::matmul(t, cat, pv(gcn_proj_w_)), pv(gcn_proj_b_));
    Var nodes = ops::reshape(t, lifted, {batch, cfg_.gcn.nodes, cfg_.gcn.node_dim});

    Var o1 = ops::matmul_rhs(t, nodes, pv(gcn_w1_));
    Var u1 = ops::relu(t, ops::matmul_lhs_const(t, adjacency_, o1));
    u1 = ops::dropout(t, u1, cfg_.gcn.dropout, rng, training);
    Var o2 = ops::matmul_rhs(t, u1, pv(gcn_w2_));
    Var u2 = ops::relu(t, ops::matmul_lhs_const(t, adjacency_, o2));
    u2 = ops::dropout(t, u2, cfg_.gcn.dropout, rng, training);

    Var flat = ops::reshape(t, u2, {batch, cfg_.gcn.nodes * cfg_.gcn.node_dim});
    out.e_gcn = ops::add_bias(t, ops::matmul(t, flat, pv(gcn_out_w_)), pv(gcn_out_b_));
    out.logit_gcn = run_head(t, b, head_gcn_, out.e_gcn, training, rng);
    return out;
}

}  // namespace geega::model
