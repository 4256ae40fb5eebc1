#include "ctrkit/reference.hpp"

#include <algorithm>
#include <cmath>

namespace ctrkit::ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

void matmul_backward(const Matrix& a, const Matrix& b, const Matrix& d_c, Matrix* d_a,
                     Matrix* d_b) {
    if (d_a)
        for (int i = 0; i < a.rows; ++i)
            for (int k = 0; k < a.cols; ++k) {
                double s = 0.0;
                for (int j = 0; j < b.cols; ++j) s += d_c.at(i, j) * b.at(k, j);
                d_a->at(i, k) += s;
            }
    if (d_b)
        for (int k = 0; k < b.rows; ++k)
            for (int j = 0; j < b.cols; ++j) {
                double s = 0.0;
                for (int i = 0; i < a.rows; ++i) s += a.at(i, k) * d_c.at(i, j);
                d_b->at(k, j) += s;
            }
}

Matrix softmax_rows(const Matrix& a, const Matrix* mask) {
    Matrix y(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        double mx = -INFINITY;
        for (int j = 0; j < a.cols; ++j)
            if (!mask || mask->at(i, j) != 0.0) mx = std::max(mx, a.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < a.cols; ++j)
            if (!mask || mask->at(i, j) != 0.0) sum += std::exp(a.at(i, j) - mx);
        for (int j = 0; j < a.cols; ++j)
            y.at(i, j) = (!mask || mask->at(i, j) != 0.0) ? std::exp(a.at(i, j) - mx) / sum : 0.0;
    }
    return y;
}

double cosine(const double* a, const double* b, int d) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int k = 0; k < d; ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    na = std::max(std::sqrt(na), kCosineNormEps);
    nb = std::max(std::sqrt(nb), kCosineNormEps);
    return dot / (na * nb);
}

Matrix cosine_sim_matrix(const Matrix& a, const Matrix& b) {
    Matrix sim(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) sim.at(i, j) = cosine(a.row(i), b.row(j), a.cols);
    return sim;
}

Matrix self_attention(const Matrix& x, const Matrix& w_q, const Matrix& w_k,
                      const Matrix& w_v, int valid, bool causal) {
    const int m = x.rows;
    const int d = x.cols;
    Matrix out(m, d);
    if (valid == 0) return out;
    Matrix q = ref::matmul(x, w_q), k = ref::matmul(x, w_k), v = ref::matmul(x, w_v);
    for (int t = 0; t < valid; ++t) {
        int keys = causal ? t + 1 : valid;
        std::vector<double> logits(keys);
        double mx = -INFINITY;
        for (int j = 0; j < keys; ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += q.at(t, c) * k.at(j, c);
            logits[j] = s / std::sqrt(double(d));
            mx = std::max(mx, logits[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < keys; ++j) {
            logits[j] = std::exp(logits[j] - mx);
            sum += logits[j];
        }
        for (int j = 0; j < keys; ++j)
            for (int c = 0; c < d; ++c) out.at(t, c) += logits[j] / sum * v.at(j, c);
    }
    return out;
}

Matrix mean_pool(const Matrix& h, int valid) {
    Matrix out(1, h.cols);
    if (valid == 0) return out;
    for (int t = 0; t < valid; ++t)
        for (int c = 0; c < h.cols; ++c) out.at(0, c) += h.at(t, c) / valid;
    return out;
}

double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / double(pairs);
}

double info_nce(const Matrix& anchors, const Matrix& candidates,
                const std::vector<int>& pair_of, double tau) {
    const int s = anchors.rows;
    if (s == 0) return 0.0;
    double loss = 0.0;
    for (int k = 0; k < s; ++k) {
        double denom = 0.0;
        for (int j = 0; j < candidates.rows; ++j)
            denom += std::exp(cosine(anchors.row(k), candidates.row(j), anchors.cols) / tau);
        double num =
            std::exp(cosine(anchors.row(k), candidates.row(pair_of[k]), anchors.cols) / tau);
        loss -= std::log(num / denom);
    }
    return loss / s;
}

double uim_loss(const Matrix& r_user, const Matrix& r_item, const std::vector<int>& labels,
                double tau) {
    std::vector<int> positives;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 1) positives.push_back(int(i));
    if (positives.empty()) return 0.0;
    const int d = r_user.cols;
    Matrix au(int(positives.size()), d), ai(int(positives.size()), d);
    for (size_t k = 0; k < positives.size(); ++k) {
        std::copy(r_user.row(positives[k]), r_user.row(positives[k]) + d, au.row(int(k)));
        std::copy(r_item.row(positives[k]), r_item.row(positives[k]) + d, ai.row(int(k)));
    }
    return info_nce(au, r_item, positives, tau) + info_nce(ai, r_user, positives, tau);
}

double nip_loss(const Matrix& prefix_reps, const Matrix& next_items,
                const std::vector<uint8_t>& valid, int n, int m, double tau) {
    const int positions = m - 1;
    const int d = prefix_reps.cols;
    int total = 0;
    for (uint8_t v : valid) total += v != 0;
    if (total == 0) return 0.0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < positions; ++k) {
            if (!valid[size_t(i) * positions + k]) continue;
            const double* anchor = prefix_reps.row(i * positions + k);
            const double* target = next_items.row(i * positions + k);
            double denom_pi = 0.0, denom_ip = 0.0;
            for (int j = 0; j < n; ++j) {
                if (!valid[size_t(j) * positions + k]) continue;
                denom_pi += std::exp(cosine(anchor, next_items.row(j * positions + k), d) / tau);
                denom_ip += std::exp(cosine(target, prefix_reps.row(j * positions + k), d) / tau);
            }
            double pos = std::exp(cosine(anchor, target, d) / tau);
            sum -= std::log(pos / denom_pi);
            sum -= std::log(pos / denom_ip);
        }
    return sum / total;
}

double bce(const std::vector<double>& p, const std::vector<int>& labels) {
    double loss = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        double pc = std::clamp(p[i], 1e-7, 1.0 - 1e-7);
        loss += labels[i] == 1 ? -std::log(pc) : -std::log(1.0 - pc);
    }
    return loss / double(p.size());
}

}  // namespace ctrkit::ref
