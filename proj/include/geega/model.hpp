#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "geega/params.hpp"
#include "geega/tape.hpp"
#include "geega/tensor.hpp"

namespace geega::model {

struct EncoderConfig {
    int blocks = 3;
    int heads = 8;
    int embed_dim = 512;
    int mlp_hidden = 1024;
    double dropout = 0.1;
    int patch = 8;
    bool mean_pool = false;  // default readout: class token
};

struct GcnConfig {
    int nodes = 6;     // N
    int node_dim = 256;  // F; the lifted width G2 = nodes * node_dim
    int out_dim = 512;   // H
    double dropout = 0.1;
};

struct HeadConfig {
    int hidden = 128;
    double dropout = 0.25;
};

struct ModelConfig {
    EncoderConfig encoder;
    GcnConfig gcn;
    HeadConfig head;
    int image = 32;
    int topo_channels = 5;     // k frequency bands
    int spectro_channels = 4;  // montage channels
    bool use_topo = true;
    bool use_spectro = true;

    int fused_width() const {  // G1
        return (use_topo ? encoder.embed_dim : 0) + (use_spectro ? encoder.embed_dim : 0);
    }
    void validate() const;
};

struct ForwardOutputs {
    diff::Var e_freq;      // [B x M1] (invalid when the branch is off)
    diff::Var e_timefreq;  // [B x M2]
    diff::Var e_gcn;       // [B x H]
    diff::Var logit_topo;
    diff::Var logit_spectro;
    diff::Var logit_gcn;
};

// The full network. Parameters live in a ParameterSet; every forward pass
// binds them as leaves onto a caller-supplied tape.
class GeegaNet {
public:
    GeegaNet(const ModelConfig& cfg, uint64_t seed);

    struct Binding {
        std::vector<diff::Var> vars;  // aligned with parameter indices
    };

    Binding bind(diff::Tape& t) const;

    // topo [B x k x h x w], spectro [B x c x h x w]; pass empty tensors for
    // disabled branches.
    ForwardOutputs forward(diff::Tape& t, const Binding& b, const diff::Tensor& topo,
                           const diff::Tensor& spectro, bool training,
                           std::mt19937_64& rng) const;

    // Adds the tape's parameter adjoints into the ParameterSet gradient slots.
    void accumulate_grads(const diff::Tape& t, const Binding& b);

    diff::ParameterSet& params() { return params_; }
    const diff::ParameterSet& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

    int centers_topo = -1;    // parameter indices of the three center matrices
    int centers_spectro = -1;
    int centers_gcn = -1;

private:
    struct EncoderParams {
        int patch_w, patch_b, cls, pos;
        struct Block {
            int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
            int ln2_g, ln2_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
        };
        std::vector<Block> blocks;
        int lnf_g, lnf_b;
    };
    struct HeadParams {
        int w1, b1, w2, b2;
    };

    EncoderParams build_encoder(const std::string& prefix, diff::Component comp, int in_channels,
                                std::mt19937_64& rng);
    HeadParams build_head(const std::string& prefix, diff::Component comp, int in_dim,
                          std::mt19937_64& rng);

    diff::Var encode(diff::Tape& t, const Binding& b, const EncoderParams& ep,
                     const diff::Tensor& input, bool training, std::mt19937_64& rng) const;
    diff::Var run_head(diff::Tape& t, const Binding& b, const HeadParams& hp, diff::Var emb,
                       bool training, std::mt19937_64& rng) const;

    ModelConfig cfg_;
    diff::ParameterSet params_;
    EncoderParams topo_enc_, spectro_enc_;
    HeadParams head_topo_, head_spectro_, head_gcn_;
    int gcn_proj_w_ = -1, gcn_proj_b_ = -1, gcn_w1_ = -1, gcn_w2_ = -1;
    int gcn_out_w_ = -1, gcn_out_b_ = -1;
    diff::Tensor adjacency_;  // (1/N) * ones, fully connected with self-loops
};

// Patch extraction: [B x ch x h x w] -> [B x n_patches x ch*p*p].
diff::Tensor image_to_patches(const diff::Tensor& images, int patch);

}  // namespace geega::model
