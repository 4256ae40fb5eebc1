#include "ctrkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctrkit/errors.hpp"

namespace ctrkit {

std::string Matrix::shape_str() const {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

static void require_shape(bool ok, const char* op, const Matrix& a, const Matrix& b) {
    if (!ok)
        throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() +
                             " and " + b.shape_str());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_shape(a.cols == b.rows, "matmul", a, b);
    Matrix c(a.rows, b.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    require_shape(a.cols == b.cols, "matmul_bt", a, b);
    Matrix c(a.rows, b.rows);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            crow[j] = s;
        }
    }
    return c;
}

void matmul_backward(const Matrix& a, const Matrix& b, const Matrix& d_c,
                     Matrix* d_a, Matrix* d_b) {
    require_shape(d_c.rows == a.rows && d_c.cols == b.cols, "matmul_backward", a, d_c);
    if (d_a) {
        require_shape(d_a->same_shape(a), "matmul_backward dA", *d_a, a);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < a.rows; ++i) {
            const double* drow = d_c.row(i);
            double* darow = d_a->row(i);
            for (int k = 0; k < a.cols; ++k) {
                const double* brow = b.row(k);
                double s = 0.0;
                for (int j = 0; j < b.cols; ++j) s += drow[j] * brow[j];
                darow[k] += s;
            }
        }
    }
    if (d_b) {
        require_shape(d_b->same_shape(b), "matmul_backward dB", *d_b, b);
        // dB[k][j] = sum_i A[i][k] * dC[i][j]; parallel over k keeps each
        // element's i-reduction sequential
#pragma omp parallel for schedule(static)
        for (int k = 0; k < b.rows; ++k) {
            double* dbrow = d_b->row(k);
            for (int i = 0; i < a.rows; ++i) {
                double av = a.at(i, k);
                if (av == 0.0) continue;
                const double* drow = d_c.row(i);
                for (int j = 0; j < b.cols; ++j) dbrow[j] += av * drow[j];
            }
        }
    }
}

Matrix softmax_rows(const Matrix& a, const Matrix* mask) {
    if (mask) require_shape(mask->same_shape(a), "softmax_rows mask", *mask, a);
    Matrix y(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* mrow = mask ? mask->row(i) : nullptr;
        double mx = -INFINITY;
        for (int j = 0; j < a.cols; ++j)
            if (!mrow || mrow[j] != 0.0) mx = std::max(mx, arow[j]);
        if (mx == -INFINITY)
            throw NumericError("softmax_rows: fully masked row " + std::to_string(i));
        double* yrow = y.row(i);
        double sum = 0.0;
        for (int j = 0; j < a.cols; ++j) {
            if (!mrow || mrow[j] != 0.0) {
                yrow[j] = std::exp(arow[j] - mx);
                sum += yrow[j];
            } else {
                yrow[j] = 0.0;
            }
        }
        for (int j = 0; j < a.cols; ++j) yrow[j] /= sum;
    }
    return y;
}

void softmax_rows_backward(const Matrix& y, const Matrix& d_y, Matrix* d_x) {
    require_shape(y.same_shape(d_y), "softmax_rows_backward", y, d_y);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < y.rows; ++i) {
        const double* yrow = y.row(i);
        const double* drow = d_y.row(i);
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j) dot += drow[j] * yrow[j];
        double* dxrow = d_x->row(i);
        for (int j = 0; j < y.cols; ++j) dxrow[j] += yrow[j] * (drow[j] - dot);
    }
}

static double clamped_norm(const double* v, int d) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += v[k] * v[k];
    return std::max(std::sqrt(s), kCosineNormEps);
}

Matrix cosine_sim_matrix(const Matrix& a, const Matrix& b) {
    require_shape(a.cols == b.cols, "cosine_sim_matrix", a, b);
    const int d = a.cols;
    std::vector<double> na(a.rows), nb(b.rows);
    for (int i = 0; i < a.rows; ++i) na[i] = clamped_norm(a.row(i), d);
    for (int j = 0; j < b.rows; ++j) nb[j] = clamped_norm(b.row(j), d);
    Matrix sim(a.rows, b.rows);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* srow = sim.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += arow[k] * brow[k];
            srow[j] = dot / (na[i] * nb[j]);
        }
    }
    return sim;
}

void cosine_sim_matrix_backward(const Matrix& a, const Matrix& b, const Matrix& d_sim,
                                Matrix* d_a, Matrix* d_b) {
    require_shape(a.cols == b.cols, "cosine_sim_matrix_backward", a, b);
    require_shape(d_sim.rows == a.rows && d_sim.cols == b.rows,
                  "cosine_sim_matrix_backward dSim", d_sim, a);
    const int d = a.cols;
    std::vector<double> na(a.rows), nb(b.rows);
    std::vector<uint8_t> a_clamped(a.rows), b_clamped(b.rows);
    for (int i = 0; i < a.rows; ++i) {
        double raw = 0.0;
        for (int k = 0; k < d; ++k) raw += a.at(i, k) * a.at(i, k);
        raw = std::sqrt(raw);
        a_clamped[i] = raw <= kCosineNormEps;
        na[i] = std::max(raw, kCosineNormEps);
    }
    for (int j = 0; j < b.rows; ++j) {
        double raw = 0.0;
        for (int k = 0; k < d; ++k) raw += b.at(j, k) * b.at(j, k);
        raw = std::sqrt(raw);
        b_clamped[j] = raw <= kCosineNormEps;
        nb[j] = std::max(raw, kCosineNormEps);
    }
    // s_ij = dot/(na nb): ds/da = b/(na nb) - dot a/(na^3 nb). The second
    // term vanishes when the norm sits on the eps clamp.
    if (d_a) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < a.rows; ++i) {
            const double* arow = a.row(i);
            double* darow = d_a->row(i);
            for (int j = 0; j < b.rows; ++j) {
                double g = d_sim.at(i, j);
                if (g == 0.0) continue;
                const double* brow = b.row(j);
                double dot = 0.0;
                for (int k = 0; k < d; ++k) dot += arow[k] * brow[k];
                double inv = 1.0 / (na[i] * nb[j]);
                double coef = a_clamped[i] ? 0.0 : dot / (na[i] * na[i]);
                for (int k = 0; k < d; ++k)
                    darow[k] += g * inv * (brow[k] - coef * arow[k]);
            }
        }
    }
    if (d_b) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double* dbrow = d_b->row(j);
            for (int i = 0; i < a.rows; ++i) {
                double g = d_sim.at(i, j);
                if (g == 0.0) continue;
                const double* arow = a.row(i);
                double dot = 0.0;
                for (int k = 0; k < d; ++k) dot += arow[k] * brow[k];
                double inv = 1.0 / (na[i] * nb[j]);
                double coef = b_clamped[j] ? 0.0 : dot / (nb[j] * nb[j]);
                for (int k = 0; k < d; ++k)
                    dbrow[k] += g * inv * (arow[k] - coef * brow[k]);
            }
        }
    }
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
    require_shape(x.cols == w.rows, "affine", x, w);
    require_shape(b.rows == 1 && b.cols == w.cols, "affine bias", b, w);
    Matrix y = matmul(x, w);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < y.rows; ++i) {
        double* yrow = y.row(i);
        const double* brow = b.row(0);
        for (int j = 0; j < y.cols; ++j) yrow[j] += brow[j];
    }
    return y;
}

void affine_backward(const Matrix& x, const Matrix& w, const Matrix& d_y,
                     Matrix* d_x, Matrix* d_w, Matrix* d_b) {
    matmul_backward(x, w, d_y, d_x, d_w);
    if (d_b) {
        require_shape(d_b->rows == 1 && d_b->cols == d_y.cols, "affine_backward dB", *d_b, d_y);
#pragma omp parallel for schedule(static)
        for (int j = 0; j < d_y.cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < d_y.rows; ++i) s += d_y.at(i, j);
            d_b->at(0, j) += s;
        }
    }
}

Matrix relu(const Matrix& x) {
    Matrix y(x.rows, x.cols);
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return y;
}

void relu_backward(const Matrix& x, const Matrix& d_y, Matrix* d_x) {
    require_shape(x.same_shape(d_y), "relu_backward", x, d_y);
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < x.size(); ++i)
        if (x.data[i] > 0.0) d_x->data[i] += d_y.data[i];
}

Matrix sigmoid(const Matrix& x) {
    Matrix y(x.rows, x.cols);
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < x.size(); ++i) y.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
    return y;
}

void sigmoid_backward(const Matrix& y, const Matrix& d_y, Matrix* d_x) {
    require_shape(y.same_shape(d_y), "sigmoid_backward", y, d_y);
#pragma omp parallel for schedule(static)
    for (size_t i = 0; i < y.size(); ++i)
        d_x->data[i] += d_y.data[i] * y.data[i] * (1.0 - y.data[i]);
}

Matrix concat_cols(const std::vector<const Matrix*>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    int rows = parts[0]->rows;
    int cols = 0;
    for (const Matrix* p : parts) {
        require_shape(p->rows == rows, "concat_cols", *p, *parts[0]);
        cols += p->cols;
    }
    Matrix out(rows, cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        double* orow = out.row(i);
        int off = 0;
        for (const Matrix* p : parts) {
            const double* prow = p->row(i);
            for (int j = 0; j < p->cols; ++j) orow[off + j] = prow[j];
            off += p->cols;
        }
    }
    return out;
}

void concat_cols_backward(const Matrix& d_out, const std::vector<Matrix*>& d_parts) {
    int cols = 0;
    for (Matrix* p : d_parts) cols += p->cols;
    if (cols != d_out.cols || (d_parts.size() && d_parts[0]->rows != d_out.rows))
        throw DimensionError("concat_cols_backward: parts do not tile " + d_out.shape_str());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < d_out.rows; ++i) {
        const double* orow = d_out.row(i);
        int off = 0;
        for (Matrix* p : d_parts) {
            double* prow = p->row(i);
            for (int j = 0; j < p->cols; ++j) prow[j] += orow[off + j];
            off += p->cols;
        }
    }
}

}  // namespace ctrkit
