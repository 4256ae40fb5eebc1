#pragma once

#include <vector>

#include "ctrkit/tensor.hpp"

// Plain serial re-derivations of the numeric paths, kept deliberately naive
// and independent of the OpenMP kernels. Tests use them as oracles; the
// benchmark target compares them against the parallel kernels.
namespace ctrkit::ref {

Matrix matmul(const Matrix& a, const Matrix& b);
void matmul_backward(const Matrix& a, const Matrix& b, const Matrix& d_c, Matrix* d_a,
                     Matrix* d_b);

Matrix softmax_rows(const Matrix& a, const Matrix* mask = nullptr);

double cosine(const double* a, const double* b, int d);
Matrix cosine_sim_matrix(const Matrix& a, const Matrix& b);

// Single-instance attention from the definition: logits, softmax over the
// allowed keys, weighted value sum. Padded queries output zero.
Matrix self_attention(const Matrix& x, const Matrix& w_q, const Matrix& w_k,
                      const Matrix& w_v, int valid, bool causal);

Matrix mean_pool(const Matrix& h, int valid);

// O(P*N) pairwise AUC with ties counted one half.
double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels);

// Directional InfoNCE straight from the definition (double loop, no
// shortcuts): -(1/s) sum_k log( exp(sim_k,pair/tau) / sum_j exp(sim_k,j/tau) )
double info_nce(const Matrix& anchors, const Matrix& candidates,
                const std::vector<int>& pair_of, double tau);

// Symmetric user-item match loss over positive rows.
double uim_loss(const Matrix& r_user, const Matrix& r_item, const std::vector<int>& labels,
                double tau);

// Symmetric next-item loss averaged over valid positions; candidates share
// the anchor's position.
double nip_loss(const Matrix& prefix_reps, const Matrix& next_items,
                const std::vector<uint8_t>& valid, int n, int m, double tau);

double bce(const std::vector<double>& p, const std::vector<int>& labels);

}  // namespace ctrkit::ref
