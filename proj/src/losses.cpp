#include "ctrkit/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ctrkit/errors.hpp"

namespace ctrkit {

double info_nce_directional(const Matrix& anchors, const Matrix& candidates,
                            const std::vector<int>& pair_of, double tau, double grad_scale,
                            Matrix* d_anchors, Matrix* d_candidates) {
    if (tau <= 0.0) throw ConfigError("info_nce: temperature must be positive");
    const int s = anchors.rows;
    const int n = candidates.rows;
    if (s == 0) return 0.0;
    if (int(pair_of.size()) != s)
        throw DimensionError("info_nce: pair map size " + std::to_string(pair_of.size()) +
                             " vs " + std::to_string(s) + " anchors");
    for (int k = 0; k < s; ++k)
        if (pair_of[k] < 0 || pair_of[k] >= n)
            throw DimensionError("info_nce: pair index " + std::to_string(pair_of[k]) +
                                 " out of range for " + std::to_string(n) + " candidates");

    Matrix sim = cosine_sim_matrix(anchors, candidates);
    double loss = 0.0;
    Matrix d_sim(s, n);
    const double inv_s = 1.0 / double(s);
    for (int k = 0; k < s; ++k) {
        const double* srow = sim.row(k);
        double mx = srow[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, srow[j]);
        double denom = 0.0;
        double* drow = d_sim.row(k);
        for (int j = 0; j < n; ++j) {
            drow[j] = std::exp((srow[j] - mx) / tau);
            denom += drow[j];
        }
        loss -= (srow[pair_of[k]] - mx) / tau - std::log(denom);
        if (d_anchors || d_candidates) {
            for (int j = 0; j < n; ++j) drow[j] = grad_scale * inv_s / tau * (drow[j] / denom);
            drow[pair_of[k]] -= grad_scale * inv_s / tau;
        }
    }
    if (d_anchors || d_candidates)
        cosine_sim_matrix_backward(anchors, candidates, d_sim, d_anchors, d_candidates);
    return loss * inv_s;
}

LossResult uim_loss(const UimBatchInputs& in, double grad_scale, Matrix* d_r_user,
                    Matrix* d_r_item) {
    const Matrix& ru = *in.r_user;
    const Matrix& ri = *in.r_item;
    if (!ru.same_shape(ri))
        throw DimensionError("uim_loss: r_user " + ru.shape_str() + " vs r_item " +
                             ri.shape_str());
    const int n = ru.rows;
    if (int(in.labels->size()) != n)
        throw DimensionError("uim_loss: label count mismatch");
    std::vector<int> positives;
    for (int i = 0; i < n; ++i)
        if ((*in.labels)[i] == 1) positives.push_back(i);
    if (positives.empty()) return {0.0, true};

    const int s = int(positives.size());
    const int d = ru.cols;
    Matrix anchors_u(s, d), anchors_i(s, d);
    for (int k = 0; k < s; ++k) {
        std::copy(ru.row(positives[k]), ru.row(positives[k]) + d, anchors_u.row(k));
        std::copy(ri.row(positives[k]), ri.row(positives[k]) + d, anchors_i.row(k));
    }

    Matrix d_anchor_u(s, d), d_anchor_i(s, d);
    double l_ui = info_nce_directional(anchors_u, ri, positives, in.tau, grad_scale,
                                       d_r_user ? &d_anchor_u : nullptr, d_r_item);
    double l_iu = info_nce_directional(anchors_i, ru, positives, in.tau, grad_scale,
                                       d_r_item ? &d_anchor_i : nullptr, d_r_user);
    // scatter anchor grads back to their batch rows
    if (d_r_user)
        for (int k = 0; k < s; ++k) {
            double* dst = d_r_user->row(positives[k]);
            const double* src = d_anchor_u.row(k);
            for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
    if (d_r_item)
        for (int k = 0; k < s; ++k) {
            double* dst = d_r_item->row(positives[k]);
            const double* src = d_anchor_i.row(k);
            for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
    return {l_ui + l_iu, false};
}

LossResult nip_loss(const NipBatchInputs& in, double grad_scale, Matrix* d_prefix,
                    Matrix* d_next) {
    const Matrix& reps = *in.prefix_reps;
    const Matrix& next = *in.next_items;
    if (!reps.same_shape(next))
        throw DimensionError("nip_loss: prefix stack " + reps.shape_str() + " vs next stack " +
                             next.shape_str());
    const int positions = in.m - 1;
    if (reps.rows != in.n * positions)
        throw DimensionError("nip_loss: stack rows " + std::to_string(reps.rows) + " vs n*(m-1)=" +
                             std::to_string(in.n * positions));
    const int d = reps.cols;

    int total_valid = 0;
    for (uint8_t v : *in.position_valid) total_valid += v != 0;
    if (total_valid == 0) return {0.0, true};

    double loss_sum = 0.0;
    for (int k = 0; k < positions; ++k) {
        std::vector<int> rows;  // stack rows of instances valid at this k
        for (int i = 0; i < in.n; ++i)
            if ((*in.position_valid)[size_t(i) * positions + k]) rows.push_back(i * positions + k);
        if (rows.empty()) continue;
        const int s = int(rows.size());
        Matrix a(s, d), c(s, d);
        for (int r = 0; r < s; ++r) {
            std::copy(reps.row(rows[r]), reps.row(rows[r]) + d, a.row(r));
            std::copy(next.row(rows[r]), next.row(rows[r]) + d, c.row(r));
        }
        std::vector<int> pair(s);
        for (int r = 0; r < s; ++r) pair[r] = r;
        // the primitive returns a mean over its s anchors; re-weight so the
        // overall average runs over all valid positions
        const double w = double(s) / double(total_valid);
        Matrix d_a(s, d), d_c(s, d);
        double l_pi = info_nce_directional(a, c, pair, in.tau, grad_scale * w,
                                           d_prefix ? &d_a : nullptr, d_next ? &d_c : nullptr);
        double l_ip = info_nce_directional(c, a, pair, in.tau, grad_scale * w,
                                           d_next ? &d_c : nullptr, d_prefix ? &d_a : nullptr);
        loss_sum += (l_pi + l_ip) * s;
        if (d_prefix)
            for (int r = 0; r < s; ++r) {
                double* dst = d_prefix->row(rows[r]);
                const double* src = d_a.row(r);
                for (int cc = 0; cc < d; ++cc) dst[cc] += src[cc];
            }
        if (d_next)
            for (int r = 0; r < s; ++r) {
                double* dst = d_next->row(rows[r]);
                const double* src = d_c.row(r);
                for (int cc = 0; cc < d; ++cc) dst[cc] += src[cc];
            }
    }
    return {loss_sum / total_valid, false};
}

double bce_loss(const std::vector<double>& p, const std::vector<int>& labels,
                double grad_scale, std::vector<double>* d_p) {
    if (p.size() != labels.size())
        throw DimensionError("bce_loss: " + std::to_string(p.size()) + " probabilities vs " +
                             std::to_string(labels.size()) + " labels");
    if (p.empty()) throw DimensionError("bce_loss: empty batch");
    const double inv_n = 1.0 / double(p.size());
    double loss = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        int y = labels[i];
        if (y != 0 && y != 1)
            throw DataError("bce_loss: label " + std::to_string(y) + " at position " +
                            std::to_string(i) + " is not binary");
        double pc = std::clamp(p[i], kProbEps, 1.0 - kProbEps);
        loss += y == 1 ? -std::log(pc) : -std::log(1.0 - pc);
        if (d_p) {
            // derivative through the clamp: zero where the clamp is active
            double g = 0.0;
            if (p[i] > kProbEps && p[i] < 1.0 - kProbEps)
                g = y == 1 ? -1.0 / pc : 1.0 / (1.0 - pc);
            (*d_p)[i] += grad_scale * inv_n * g;
        }
    }
    return loss * inv_n;
}

double total_loss(double l_main, double l_uim, double l_nip, double lambda_uim,
                  double lambda_nip) {
    if (lambda_uim < 0.0 || lambda_nip < 0.0)
        throw ConfigError("total_loss: loss weights must be nonnegative");
    return l_main + lambda_uim * l_uim + lambda_nip * l_nip;
}

}  // namespace ctrkit
