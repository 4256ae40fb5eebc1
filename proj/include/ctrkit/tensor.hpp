#pragma once

#include <string>
#include <vector>

namespace ctrkit {

// Dense row-major matrix of 64-bit reals. All model math runs in double so
// finite-difference checks are meaningful.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(size_t(r) * size_t(c), 0.0) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix identity(int n);

    double& at(int r, int c) { return data[size_t(r) * cols + c]; }
    double at(int r, int c) const { return data[size_t(r) * cols + c]; }
    double* row(int r) { return data.data() + size_t(r) * cols; }
    const double* row(int r) const { return data.data() + size_t(r) * cols; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(0.0); }

    std::string shape_str() const;
    bool all_finite() const;
};

// epsilon guard for cosine norms (zero / freshly padded embeddings)
inline constexpr double kCosineNormEps = 1e-12;

// ---------------------------------------------------------------------------
// Forward kernels. Heavy loops are OpenMP-parallel over independent output
// rows; every output element keeps a fixed sequential reduction order, so
// results are bit-identical for any thread count.
// ---------------------------------------------------------------------------

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);

// c = a * b^T (n x d times k x d -> n x k)
Matrix matmul_bt(const Matrix& a, const Matrix& b);

// Row-wise softmax with per-row max subtraction. mask (if given) has a's
// shape with entries in {0,1}; masked entries come out exactly 0. A fully
// masked row is a degenerate-row error.
Matrix softmax_rows(const Matrix& a, const Matrix* mask = nullptr);

// entry (i,j) = a_i . b_j / (max(|a_i|,eps) * max(|b_j|,eps))
Matrix cosine_sim_matrix(const Matrix& a, const Matrix& b);

// y = x * w + 1 b   (b is 1 x w.cols)
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b);

Matrix relu(const Matrix& x);
Matrix sigmoid(const Matrix& x);

// horizontal concatenation, column blocks in argument order
Matrix concat_cols(const std::vector<const Matrix*>& parts);

// ---------------------------------------------------------------------------
// Backward kernels. All of them ACCUMULATE into their output buffers (callers
// zero the buffers between optimizer steps); null destinations are skipped.
// ---------------------------------------------------------------------------

// dA += dC * B^T, dB += A^T * dC
void matmul_backward(const Matrix& a, const Matrix& b, const Matrix& d_c,
                     Matrix* d_a, Matrix* d_b);

// y = softmax_rows(x): dx_ij += y_ij * (dy_ij - sum_l dy_il y_il)
void softmax_rows_backward(const Matrix& y, const Matrix& d_y, Matrix* d_x);

void cosine_sim_matrix_backward(const Matrix& a, const Matrix& b, const Matrix& d_sim,
                                Matrix* d_a, Matrix* d_b);

void affine_backward(const Matrix& x, const Matrix& w, const Matrix& d_y,
                     Matrix* d_x, Matrix* d_w, Matrix* d_b);

void relu_backward(const Matrix& x, const Matrix& d_y, Matrix* d_x);

// y = sigmoid(x): dx += dy * y * (1 - y)
void sigmoid_backward(const Matrix& y, const Matrix& d_y, Matrix* d_x);

void concat_cols_backward(const Matrix& d_out, const std::vector<Matrix*>& d_parts);

}  // namespace ctrkit
