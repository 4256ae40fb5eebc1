#pragma once

#include "ctrkit/rng.hpp"
#include "ctrkit/tensor.hpp"

namespace ctrkit {

// One single-head attention parameter set (d x d projections). The main
// tower, the user-item match head and the next-item head each own a disjoint
// set; values and grads live side by side.
struct AttentionParams {
    Matrix w_q, w_k, w_v;
    Matrix d_w_q, d_w_k, d_w_v;

    AttentionParams() = default;
    explicit AttentionParams(int d)
        : w_q(d, d), w_k(d, d), w_v(d, d), d_w_q(d, d), d_w_k(d, d), d_w_v(d, d) {}

    void init(Rng& rng);
    void clear_grads();
};

// Valid positions form a prefix: sequences are left-aligned, right-padded.
struct SequenceMask {
    int valid_count = 0;
    int length = 0;
};

// Activations kept from the forward pass for backprop.
struct AttentionCache {
    Matrix q, k, v;  // m x d
    Matrix probs;    // m x m, row t holds attention weights over keys
    Matrix out;      // m x d
};

// out = softmax(X Wq (X Wk)^T / sqrt(d)) X Wv over valid key positions; with
// `causal`, query t sees keys 1..t only. Padded query rows come out zero.
// valid_count = 0 yields an all-zero output (no error).
void attention_forward(const Matrix& x, const AttentionParams& p, const SequenceMask& mask,
                       bool causal, AttentionCache& cache);

// Accumulates into d_x and the params' grad buffers; d_x may be null.
void attention_backward(const Matrix& x, AttentionParams& p, const SequenceMask& mask,
                        bool causal, const AttentionCache& cache, const Matrix& d_out,
                        Matrix* d_x);

// Bidirectional encoder output (m x d), convenience over attention_forward.
Matrix self_attention(const Matrix& x, const AttentionParams& p, const SequenceMask& mask);

// Rows 1..m-1 of the causally masked encoder: row t aggregates the oldest
// t+1 behaviors (position t attends to 1..t inclusive). m < 2 is an error.
Matrix causal_self_attention(const Matrix& x, const AttentionParams& p,
                             const SequenceMask& mask);

// Mean over valid rows; zero vector when no row is valid.
Matrix mean_pool(const Matrix& h, const SequenceMask& mask);
void mean_pool_backward(const SequenceMask& mask, const Matrix& d_out, Matrix* d_h);

}  // namespace ctrkit
