// Times the OpenMP kernels against the serial reference path on the shapes
// the trainer actually runs, and checks the outputs agree.

#include <chrono>
#include <cmath>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ctrkit/attention.hpp"
#include "ctrkit/reference.hpp"
#include "ctrkit/rng.hpp"
#include "ctrkit/tensor.hpp"

using namespace ctrkit;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double mx = 0.0;
    for (size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::fabs(a.data[i] - b.data[i]));
    return mx;
}

template <class F>
double time_ms(F&& fn, int reps) {
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp max threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without openmp\n");
#endif
    std::printf("%-28s %10s %10s %8s %12s\n", "kernel", "serial ms", "omp ms", "speedup",
                "max |diff|");

    Rng rng(7);

    for (int n : {128, 256, 512}) {
        Matrix a = random_matrix(n, n, rng);
        Matrix b = random_matrix(n, n, rng);
        Matrix out_ref, out_omp;
        double t_ref = time_ms([&] { out_ref = ref::matmul(a, b); }, 3);
        double t_omp = time_ms([&] { out_omp = matmul(a, b); }, 3);
        std::printf("%-28s %10.3f %10.3f %8.2f %12.3g\n",
                    ("matmul " + std::to_string(n) + "^3").c_str(), t_ref, t_omp, t_ref / t_omp,
                    max_abs_diff(out_ref, out_omp));
    }

    {
        const int rows = 4096, d = 32;
        Matrix a = random_matrix(rows, d, rng);
        Matrix b = random_matrix(rows, d, rng);
        Matrix out_ref, out_omp;
        double t_ref = time_ms([&] { out_ref = ref::cosine_sim_matrix(a, b); }, 3);
        double t_omp = time_ms([&] { out_omp = cosine_sim_matrix(a, b); }, 3);
        std::printf("%-28s %10.3f %10.3f %8.2f %12.3g\n", "cosine_sim 4096x4096x32", t_ref,
                    t_omp, t_ref / t_omp, max_abs_diff(out_ref, out_omp));
    }

    {
        // one batch worth of per-instance attention
        const int n = 256, m = 20, d = 16;
        AttentionParams p(d);
        Rng init(3);
        p.init(init);
        std::vector<Matrix> xs;
        for (int i = 0; i < n; ++i) xs.push_back(random_matrix(m, d, rng));
        std::vector<Matrix> out_ref(n), out_omp(n);
        double t_ref = time_ms(
            [&] {
                for (int i = 0; i < n; ++i)
                    out_ref[i] = ref::self_attention(xs[i], p.w_q, p.w_k, p.w_v, m, false);
            },
            3);
        double t_omp = time_ms(
            [&] {
#pragma omp parallel for schedule(static)
                for (int i = 0; i < n; ++i) {
                    SequenceMask mask{m, m};
                    out_omp[i] = self_attention(xs[i], p, mask);
                }
            },
            3);
        double mx = 0.0;
        for (int i = 0; i < n; ++i) mx = std::max(mx, max_abs_diff(out_ref[i], out_omp[i]));
        std::printf("%-28s %10.3f %10.3f %8.2f %12.3g\n", "attention batch 256x20x16", t_ref,
                    t_omp, t_ref / t_omp, mx);
    }

    return 0;
}
