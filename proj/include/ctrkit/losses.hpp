#pragma once

#include <vector>

#include "ctrkit/tensor.hpp"

namespace ctrkit {

// probability clamp applied before logs in the binary cross-entropy
inline constexpr double kProbEps = 1e-7;

struct LossResult {
    double value = 0.0;
    bool skipped = false;  // no positive pair / no valid position in the batch
};

// Directional InfoNCE over cosine similarities:
//   loss = -(1/s) sum_k log( exp(sim(a_k, c_pair(k))/tau) / sum_j exp(sim(a_k, c_j)/tau) )
// The denominator runs over ALL candidates, the positive pair included.
// Gradients of (grad_scale * loss) are ACCUMULATED into d_anchors /
// d_candidates (either may be null). s = 0 returns 0 ("skip" signal).
double info_nce_directional(const Matrix& anchors, const Matrix& candidates,
                            const std::vector<int>& pair_of, double tau, double grad_scale,
                            Matrix* d_anchors, Matrix* d_candidates);

// User-item match loss, the symmetric sum L_ui + L_iu. Anchors are the
// positive instances' rows; candidates are all n rows of the other side.
struct UimBatchInputs {
    const Matrix* r_user = nullptr;  // n x d'
    const Matrix* r_item = nullptr;  // n x d'
    const std::vector<int>* labels = nullptr;
    double tau = 0.07;
};

LossResult uim_loss(const UimBatchInputs& in, double grad_scale, Matrix* d_r_user,
                    Matrix* d_r_item);

// Next-item prediction loss. R and E_next stack prefix representations and
// next-item embeddings as (n*(m-1)) x d with rows (i,k) -> i*(m-1)+k; a
// position is valid only when behaviors k and k+1 both exist. Negatives for
// anchor (i,k) are the valid rows at the same k in other instances. The
// average runs over valid positions. Symmetric sum L_pi + L_ip.
struct NipBatchInputs {
    const Matrix* prefix_reps = nullptr;  // R
    const Matrix* next_items = nullptr;   // E_next
    const std::vector<uint8_t>* position_valid = nullptr;  // n*(m-1)
    int n = 0;
    int m = 0;
    double tau = 0.1;
};

LossResult nip_loss(const NipBatchInputs& in, double grad_scale, Matrix* d_prefix,
                    Matrix* d_next);

// Mean binary cross-entropy on probabilities clamped to [eps, 1-eps].
// d_p (if given) receives grad_scale * dL/dp accumulated.
double bce_loss(const std::vector<double>& p, const std::vector<int>& labels,
                double grad_scale, std::vector<double>* d_p);

// L_total = L_main + lambda_uim * L_uim + lambda_nip * L_nip
double total_loss(double l_main, double l_uim, double l_nip, double lambda_uim,
                  double lambda_nip);

}  // namespace ctrkit
