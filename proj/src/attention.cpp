#include "ctrkit/attention.hpp"

#include <cmath>

#include "ctrkit/errors.hpp"

namespace ctrkit {

void AttentionParams::init(Rng& rng) {
    double bound = 1.0 / std::sqrt(double(w_q.rows));
    for (double& v : w_q.data) v = rng.uniform(-bound, bound);
    for (double& v : w_k.data) v = rng.uniform(-bound, bound);
    for (double& v : w_v.data) v = rng.uniform(-bound, bound);
}

void AttentionParams::clear_grads() {
    d_w_q.zero();
    d_w_k.zero();
    d_w_v.zero();
}

void attention_forward(const Matrix& x, const AttentionParams& p, const SequenceMask& mask,
                       bool causal, AttentionCache& cache) {
    const int m = x.rows;
    const int d = x.cols;
    if (p.w_q.rows != d)
        throw DimensionError("attention: input cols " + std::to_string(d) +
                             " vs weight " + p.w_q.shape_str());
    const int valid = mask.valid_count;
    cache.out = Matrix(m, d);
    cache.probs = Matrix(m, m);
    if (valid == 0) {
        cache.q = Matrix(m, d);
        cache.k = Matrix(m, d);
        cache.v = Matrix(m, d);
        return;
    }
    cache.q = matmul(x, p.w_q);
    cache.k = matmul(x, p.w_k);
    cache.v = matmul(x, p.w_v);
    const double scale = 1.0 / std::sqrt(double(d));
    for (int t = 0; t < valid; ++t) {
        const int keys = causal ? t + 1 : valid;
        const double* qrow = cache.q.row(t);
        double* prow = cache.probs.row(t);
        double mx = -INFINITY;
        for (int j = 0; j < keys; ++j) {
            const double* krow = cache.k.row(j);
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += qrow[c] * krow[c];
            prow[j] = s * scale;
            mx = std::max(mx, prow[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < keys; ++j) {
            prow[j] = std::exp(prow[j] - mx);
            sum += prow[j];
        }
        double* orow = cache.out.row(t);
        for (int j = 0; j < keys; ++j) {
            prow[j] /= sum;
            const double* vrow = cache.v.row(j);
            for (int c = 0; c < d; ++c) orow[c] += prow[j] * vrow[c];
        }
    }
}

void attention_backward(const Matrix& x, AttentionParams& p, const SequenceMask& mask,
                        bool causal, const AttentionCache& cache, const Matrix& d_out,
                        Matrix* d_x) {
    const int m = x.rows;
    const int d = x.cols;
    const int valid = mask.valid_count;
    if (valid == 0) return;
    const double scale = 1.0 / std::sqrt(double(d));
    Matrix d_q(m, d), d_k(m, d), d_v(m, d);
    for (int t = 0; t < valid; ++t) {
        const int keys = causal ? t + 1 : valid;
        const double* prow = cache.probs.row(t);
        const double* grow = d_out.row(t);
        // dP[t][j] = dOut[t] . V[j], then softmax backward within the row
        double dot = 0.0;
        std::vector<double> dp(keys);
        for (int j = 0; j < keys; ++j) {
            const double* vrow = cache.v.row(j);
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += grow[c] * vrow[c];
            dp[j] = s;
            dot += s * prow[j];
            double* dvrow = d_v.row(j);
            for (int c = 0; c < d; ++c) dvrow[c] += prow[j] * grow[c];
        }
        const double* qrow = cache.q.row(t);
        double* dqrow = d_q.row(t);
        for (int j = 0; j < keys; ++j) {
            double ds = prow[j] * (dp[j] - dot) * scale;
            if (ds == 0.0) continue;
            const double* krow = cache.k.row(j);
            double* dkrow = d_k.row(j);
            for (int c = 0; c < d; ++c) {
                dqrow[c] += ds * krow[c];
                dkrow[c] += ds * qrow[c];
            }
        }
    }
    matmul_backward(x, p.w_q, d_q, d_x, &p.d_w_q);
    matmul_backward(x, p.w_k, d_k, d_x, &p.d_w_k);
    matmul_backward(x, p.w_v, d_v, d_x, &p.d_w_v);
}

Matrix self_attention(const Matrix& x, const AttentionParams& p, const SequenceMask& mask) {
    AttentionCache cache;
    attention_forward(x, p, mask, /*causal=*/false, cache);
    return cache.out;
}

Matrix causal_self_attention(const Matrix& x, const AttentionParams& p,
                             const SequenceMask& mask) {
    if (x.rows < 2)
        throw DimensionError("causal_self_attention: sequence too short (m=" +
                             std::to_string(x.rows) + ", need m >= 2)");
    AttentionCache cache;
    attention_forward(x, p, mask, /*causal=*/true, cache);
    Matrix out(x.rows - 1, x.cols);
    for (int t = 0; t + 1 < x.rows; ++t)
        for (int c = 0; c < x.cols; ++c) out.at(t, c) = cache.out.at(t, c);
    return out;
}

Matrix mean_pool(const Matrix& h, const SequenceMask& mask) {
    Matrix out(1, h.cols);
    const int valid = mask.valid_count;
    if (valid == 0) return out;
    for (int t = 0; t < valid; ++t) {
        const double* row = h.row(t);
        for (int c = 0; c < h.cols; ++c) out.at(0, c) += row[c];
    }
    for (int c = 0; c < h.cols; ++c) out.at(0, c) /= valid;
    return out;
}

void mean_pool_backward(const SequenceMask& mask, const Matrix& d_out, Matrix* d_h) {
    const int valid = mask.valid_count;
    if (valid == 0) return;
    for (int t = 0; t < valid; ++t) {
        double* row = d_h->row(t);
        for (int c = 0; c < d_out.cols; ++c) row[c] += d_out.at(0, c) / valid;
    }
}

}  // namespace ctrkit
