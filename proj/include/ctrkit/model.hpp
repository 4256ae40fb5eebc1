#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctrkit/attention.hpp"
#include "ctrkit/data.hpp"
#include "ctrkit/embedding.hpp"
#include "ctrkit/losses.hpp"

namespace ctrkit {

// A stack of affine layers with ReLU between them (none after the last).
struct Mlp {
    std::vector<Matrix> w, b;      // values
    std::vector<Matrix> d_w, d_b;  // grads

    void add_layer(int in, int out) {
        w.emplace_back(in, out);
        b.emplace_back(1, out);
        d_w.emplace_back(in, out);
        d_b.emplace_back(1, out);
    }
    int layers() const { return int(w.size()); }
    void init(Rng& rng);
    void clear_grads();
};

struct MlpCache {
    std::vector<Matrix> inputs;   // input to each layer
    std::vector<Matrix> preacts;  // affine outputs before ReLU
};

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache& cache);
void mlp_backward(Mlp& mlp, const MlpCache& cache, const Matrix& d_out, Matrix* d_x);

struct ModelConfig {
    int d = 16;        // embedding size
    int d_prime = 32;  // projection head output width
    int m_max = 20;    // behavior positions per instance
    std::vector<int> tower_widths = {128, 64};
};

enum class RunMode { Train, Inference };

struct ParamRef {
    std::string name;
    Matrix* value = nullptr;
    Matrix* grad = nullptr;
    EmbeddingTable* table = nullptr;  // non-null for sparse-row params
};

// Full parameter set: shared embedding layer feeding three heads, three
// disjoint attention parameter sets, projection heads and the main tower.
struct ModelParams {
    Schema schema;
    ModelConfig cfg;
    std::vector<EmbeddingTable> tables;
    AttentionParams attn_main, attn_uim, attn_nip;
    Mlp tower;      // tower_widths..., then a final scalar layer
    Mlp proj_user;  // 2 layers: (P+1)d -> 2d' -> d'
    Mlp proj_item;  // 2 layers: Id -> 2d' -> d'

    static ModelParams build(const Schema& schema, const ModelConfig& cfg);
    // Every parameter gets its own named init stream, so which heads exist
    // never shifts the draws of any other parameter.
    void init(uint64_t seed);
    void clear_grads();
    std::vector<ParamRef> param_refs();
    int tower_input_dim() const;
};

// Everything the backward pass and the losses need from one forward run.
struct ForwardArtifacts {
    RunMode mode = RunMode::Inference;
    bool has_uim = false;
    bool has_nip = false;

    std::vector<double> p;  // predicted click probabilities, length n

    // main path caches
    Matrix e_up, e_item, e_ctx;  // n x (P d), n x (I d), n x (C d)
    Matrix x_beh;                // (n m) x d
    std::vector<AttentionCache> main_attn;
    Matrix e_us_main;  // n x d
    Matrix tower_in;
    MlpCache tower_cache;
    Matrix logits;   // n x 1
    Matrix p_mat;    // n x 1 sigmoid output

    // user-item match branch
    std::vector<AttentionCache> uim_attn;
    Matrix e_us_uim;  // n x d
    Matrix e_user;    // n x (P+1)d
    MlpCache proj_user_cache, proj_item_cache;
    Matrix r_user, r_item;  // n x d'

    // next-item branch
    std::vector<AttentionCache> nip_attn;
    Matrix prefix_reps;  // (n (m-1)) x d
    Matrix next_items;   // (n (m-1)) x d
    std::vector<uint8_t> nip_valid;
};

// Inference computes only p; train mode adds whichever auxiliary branches
// are requested.
ForwardArtifacts forward(const ModelParams& params, const Batch& batch, RunMode mode,
                         bool compute_uim = true, bool compute_nip = true);

// Upstream loss gradients in artifact shapes; empty matrices mean "no
// contribution" for that head.
struct LossGrads {
    std::vector<double> d_p;
    Matrix d_r_user, d_r_item;
    Matrix d_prefix_reps, d_next_items;
};

// Accumulates into the params' grad buffers (shared embeddings receive the
// sum over all heads).
void backward(ModelParams& params, const Batch& batch, const ForwardArtifacts& art,
              const LossGrads& grads);

// Down-sampling correction q = p / (p + (1-p)/w); strictly increasing in p.
double calibrate_probability(double p, double w);
std::vector<double> predict_calibrated(const ModelParams& params, const Batch& batch, double w);

}  // namespace ctrkit
