#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctrkit/errors.hpp"
#include "ctrkit/losses.hpp"
#include "ctrkit/reference.hpp"
#include "test_util.hpp"

using namespace ctrkit;
using testutil::fd_check;
using testutil::random_matrix;

namespace {

std::vector<int> random_labels(int n, Rng& rng, bool force_positive) {
    std::vector<int> labels(n);
    for (int& y : labels) y = int(rng.uniform_int(2));
    if (force_positive) labels[int(rng.uniform_int(n))] = 1;
    return labels;
}

std::vector<uint8_t> random_valid(int n, int positions, Rng& rng) {
    std::vector<uint8_t> valid(size_t(n) * positions, 0);
    for (auto& v : valid) v = rng.uniform() < 0.7;
    valid[0] = 1;
    return valid;
}

}  // namespace

TEST_CASE("single pair degenerates to zero loss") {
    Matrix v(1, 3);
    v.data = {0.4, -0.2, 1.0};
    CHECK(info_nce_directional(v, v, {0}, 0.07, 1.0, nullptr, nullptr) == 0.0);
}

TEST_CASE("two-pair hand computation") {
    Matrix a(2, 2), c(2, 2);
    a.data = {1, 0, 0, 1};
    c.data = {1, 0, 0, 1};
    double loss = info_nce_directional(a, c, {0, 1}, 1.0, 1.0, nullptr, nullptr);
    // sim matrix [[1,0],[0,1]]: loss = -log(e / (e + 1)) = log(1 + 1/e)
    CHECK(loss == doctest::Approx(0.313262).epsilon(5e-7));
    CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("duplicating candidates strictly increases the loss") {
    Rng rng(31);
    Matrix a = random_matrix(3, 4, rng);
    Matrix c = random_matrix(3, 4, rng);
    std::vector<int> pairs = {0, 1, 2};
    double base = info_nce_directional(a, c, pairs, 0.2, 1.0, nullptr, nullptr);
    Matrix c2(6, 4);
    for (int j = 0; j < 3; ++j) {
        std::copy(c.row(j), c.row(j) + 4, c2.row(j));
        std::copy(c.row(j), c.row(j) + 4, c2.row(3 + j));
    }
    double doubled = info_nce_directional(a, c2, pairs, 0.2, 1.0, nullptr, nullptr);
    CHECK(doubled > base);
}

TEST_CASE("config and skip cases") {
    Matrix a(1, 2), c(1, 2);
    CHECK_THROWS_AS(info_nce_directional(a, c, {0}, 0.0, 1.0, nullptr, nullptr), ConfigError);
    CHECK_THROWS_AS(info_nce_directional(a, c, {0}, -1.0, 1.0, nullptr, nullptr), ConfigError);
    Matrix empty(0, 2);
    CHECK(info_nce_directional(empty, c, {}, 0.1, 1.0, nullptr, nullptr) == 0.0);
}

TEST_CASE("directional losses are nonnegative") {
    Rng rng(32);
    for (int trial = 0; trial < 50; ++trial) {
        int s = 1 + int(rng.uniform_int(5));
        int n = s + int(rng.uniform_int(4));
        Matrix a = random_matrix(s, 3, rng);
        Matrix c = random_matrix(n, 3, rng);
        std::vector<int> pairs(s);
        for (int k = 0; k < s; ++k) pairs[k] = k;
        CHECK(info_nce_directional(a, c, pairs, 0.3, 1.0, nullptr, nullptr) >= 0.0);
    }
}

TEST_CASE("uim loss: aligned pairs with repelled negatives vanish") {
    // two antiparallel unit vectors: diagonal sims 1, off-diagonal -1
    Matrix r(2, 2);
    r.data = {1, 0, -1, 0};
    std::vector<int> labels = {1, 1};
    UimBatchInputs in{&r, &r, &labels, 0.07};
    LossResult res = uim_loss(in, 1.0, nullptr, nullptr);
    CHECK(!res.skipped);
    CHECK(std::fabs(res.value) < 1e-10);
}

TEST_CASE("uim loss: all-negative batch is skipped") {
    Rng rng(33);
    Matrix ru = random_matrix(3, 4, rng), ri = random_matrix(3, 4, rng);
    std::vector<int> labels = {0, 0, 0};
    UimBatchInputs in{&ru, &ri, &labels, 0.07};
    LossResult res = uim_loss(in, 1.0, nullptr, nullptr);
    CHECK(res.skipped);
    CHECK(res.value == 0.0);
}

TEST_CASE("uim loss equals the naive double-loop oracle") {
    Rng rng(34);
    for (int trial = 0; trial < 60; ++trial) {
        int n = 2 + int(rng.uniform_int(7));  // n <= 8
        int d = 1 + int(rng.uniform_int(4));  // d <= 4
        Matrix ru = random_matrix(n, d, rng), ri = random_matrix(n, d, rng);
        std::vector<int> labels = random_labels(n, rng, true);
        double tau = trial % 2 ? 0.07 : 0.5;
        UimBatchInputs in{&ru, &ri, &labels, tau};
        LossResult res = uim_loss(in, 1.0, nullptr, nullptr);
        double expect = ref::uim_loss(ru, ri, labels, tau);
        CHECK(std::fabs(res.value - expect) < 1e-10);
    }
}

TEST_CASE("uim loss invariances") {
    Rng rng(35);
    for (int trial = 0; trial < 25; ++trial) {
        int n = 3 + int(rng.uniform_int(5));
        int d = 2 + int(rng.uniform_int(3));
        Matrix ru = random_matrix(n, d, rng), ri = random_matrix(n, d, rng);
        std::vector<int> labels = random_labels(n, rng, true);
        UimBatchInputs in{&ru, &ri, &labels, 0.07};
        double base = uim_loss(in, 1.0, nullptr, nullptr).value;

        // positive per-row scaling is absorbed by the cosine
        Matrix ru2 = ru;
        int row = int(rng.uniform_int(n));
        double scale = std::exp(rng.normal());
        for (int c = 0; c < d; ++c) ru2.at(row, c) *= scale;
        UimBatchInputs in2{&ru2, &ri, &labels, 0.07};
        CHECK(std::fabs(uim_loss(in2, 1.0, nullptr, nullptr).value - base) < 1e-10);

        // permuting the batch leaves the loss unchanged
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        for (int i = n - 1; i > 0; --i)
            std::swap(perm[i], perm[int(rng.uniform_int(uint64_t(i) + 1))]);
        Matrix ru_p(n, d), ri_p(n, d);
        std::vector<int> labels_p(n);
        for (int i = 0; i < n; ++i) {
            std::copy(ru.row(perm[i]), ru.row(perm[i]) + d, ru_p.row(i));
            std::copy(ri.row(perm[i]), ri.row(perm[i]) + d, ri_p.row(i));
            labels_p[i] = labels[perm[i]];
        }
        UimBatchInputs in3{&ru_p, &ri_p, &labels_p, 0.07};
        CHECK(std::fabs(uim_loss(in3, 1.0, nullptr, nullptr).value - base) < 1e-10);
    }
}

TEST_CASE("nip loss: single instance has no in-batch negatives") {
    Rng rng(36);
    const int n = 1, m = 4, positions = m - 1;
    Matrix reps = random_matrix(n * positions, 3, rng);
    Matrix next = random_matrix(n * positions, 3, rng);
    std::vector<uint8_t> valid(positions, 1);
    NipBatchInputs in{&reps, &next, &valid, n, m, 0.1};
    LossResult res = nip_loss(in, 1.0, nullptr, nullptr);
    CHECK(!res.skipped);
    CHECK(std::fabs(res.value) < 1e-12);
}

TEST_CASE("nip loss hand computation") {
    const int n = 2, m = 2;
    Matrix reps(2, 2), next(2, 2);
    reps.data = {1, 0, -1, 0};
    next.data = {1, 0, -1, 0};
    std::vector<uint8_t> valid = {1, 1};
    NipBatchInputs in{&reps, &next, &valid, n, m, 1.0};
    LossResult res = nip_loss(in, 1.0, nullptr, nullptr);
    // per direction: -log(e / (e + 1/e)) = log(1 + e^-2)
    double expect = 2.0 * std::log(1.0 + std::exp(-2.0));
    CHECK(res.value == doctest::Approx(0.253856).epsilon(5e-6));
    CHECK(res.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("nip loss equals the naive oracle and respects masking") {
    Rng rng(37);
    for (int trial = 0; trial < 60; ++trial) {
        int n = 2 + int(rng.uniform_int(7));
        int m = 2 + int(rng.uniform_int(3));  // m <= 4
        int d = 1 + int(rng.uniform_int(4));
        int positions = m - 1;
        Matrix reps = random_matrix(n * positions, d, rng);
        Matrix next = random_matrix(n * positions, d, rng);
        std::vector<uint8_t> valid = random_valid(n, positions, rng);
        double tau = trial % 2 ? 0.1 : 0.7;
        NipBatchInputs in{&reps, &next, &valid, n, m, tau};
        double got = nip_loss(in, 1.0, nullptr, nullptr).value;
        double expect = ref::nip_loss(reps, next, valid, n, m, tau);
        CHECK(std::fabs(got - expect) < 1e-10);

        // zeroing a position's validity removes exactly its contribution:
        // equality with a fresh computation on the reduced set
        if (positions >= 2) {
            std::vector<uint8_t> reduced = valid;
            for (int i = 0; i < n; ++i) reduced[size_t(i) * positions + 0] = 0;
            bool any = false;
            for (uint8_t v : reduced) any |= v != 0;
            if (any) {
                NipBatchInputs in2{&reps, &next, &reduced, n, m, tau};
                double got2 = nip_loss(in2, 1.0, nullptr, nullptr).value;
                double expect2 = ref::nip_loss(reps, next, reduced, n, m, tau);
                CHECK(std::fabs(got2 - expect2) < 1e-10);
            }
        }
    }
}

TEST_CASE("nip loss: no valid positions is skipped") {
    Matrix reps(2, 2), next(2, 2);
    std::vector<uint8_t> valid = {0, 0};
    NipBatchInputs in{&reps, &next, &valid, 2, 2, 0.1};
    LossResult res = nip_loss(in, 1.0, nullptr, nullptr);
    CHECK(res.skipped);
    CHECK(res.value == 0.0);
}

TEST_CASE("bce examples") {
    CHECK(bce_loss({0.5}, {1}, 0.0, nullptr) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss({1.0 - 1e-7}, {1}, 0.0, nullptr) < 1e-6);
    CHECK(bce_loss({0.9}, {0}, 0.0, nullptr) ==
          doctest::Approx(-std::log(0.1)).epsilon(1e-12));
    CHECK(bce_loss({0.9}, {0}, 0.0, nullptr) == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK_THROWS_AS(bce_loss({0.5}, {2}, 0.0, nullptr), DataError);
}

TEST_CASE("total loss composition") {
    CHECK(total_loss(1.0, 5.0, 7.0, 0.0, 0.0) == 1.0);
    CHECK(total_loss(1.0, 2.0, 3.0, 0.5, 0.1) == doctest::Approx(2.3).epsilon(1e-15));
    double delta1 = total_loss(1.0, 2.0, 3.0, 0.5, 0.1) - 1.0;
    double delta2 = total_loss(1.0, 2.0, 3.0, 1.0, 0.2) - 1.0;
    CHECK(delta2 == doctest::Approx(2.0 * delta1).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss(1, 1, 1, -0.1, 0.0), ConfigError);
}

TEST_CASE("gradient checks for all losses") {
    Rng rng(38);
    double worst = 0.0;
    for (int trial = 0; trial < 15; ++trial) {
        int n = 3 + int(rng.uniform_int(4));
        int d = 2 + int(rng.uniform_int(3));
        double tau = trial % 2 ? 0.07 : 0.4;

        {  // uim
            Matrix ru = random_matrix(n, d, rng), ri = random_matrix(n, d, rng);
            std::vector<int> labels = random_labels(n, rng, true);
            auto loss = [&] {
                UimBatchInputs in{&ru, &ri, &labels, tau};
                return uim_loss(in, 1.0, nullptr, nullptr).value;
            };
            Matrix d_ru(n, d), d_ri(n, d);
            UimBatchInputs in{&ru, &ri, &labels, tau};
            uim_loss(in, 1.0, &d_ru, &d_ri);
            worst = std::max(worst, fd_check(ru, d_ru, loss));
            worst = std::max(worst, fd_check(ri, d_ri, loss));
        }
        {  // nip
            int m = 2 + int(rng.uniform_int(2));
            int positions = m - 1;
            Matrix reps = random_matrix(n * positions, d, rng);
            Matrix next = random_matrix(n * positions, d, rng);
            std::vector<uint8_t> valid = random_valid(n, positions, rng);
            auto loss = [&] {
                NipBatchInputs in{&reps, &next, &valid, n, m, tau};
                return nip_loss(in, 1.0, nullptr, nullptr).value;
            };
            Matrix d_reps(reps.rows, d), d_next(next.rows, d);
            NipBatchInputs in{&reps, &next, &valid, n, m, tau};
            nip_loss(in, 1.0, &d_reps, &d_next);
            worst = std::max(worst, fd_check(reps, d_reps, loss));
            worst = std::max(worst, fd_check(next, d_next, loss));
        }
        {  // bce on a matrix-shaped probability vector for fd_check
            Matrix p = random_matrix(1, n, rng);
            for (double& v : p.data) v = 0.05 + 0.9 / (1.0 + std::exp(-v));
            std::vector<int> labels = random_labels(n, rng, false);
            auto loss = [&] {
                std::vector<double> pv(p.data.begin(), p.data.end());
                return bce_loss(pv, labels, 0.0, nullptr);
            };
            std::vector<double> d_pv(n, 0.0);
            std::vector<double> pv(p.data.begin(), p.data.end());
            bce_loss(pv, labels, 1.0, &d_pv);
            Matrix d_p(1, n);
            for (int i = 0; i < n; ++i) d_p.at(0, i) = d_pv[i];
            worst = std::max(worst, fd_check(p, d_p, loss));
        }
    }
    CHECK(worst < testutil::kGradTol);
}

TEST_CASE("grad_scale scales gradients linearly") {
    Rng rng(39);
    int n = 4, d = 3;
    Matrix ru = random_matrix(n, d, rng), ri = random_matrix(n, d, rng);
    std::vector<int> labels = {1, 0, 1, 0};
    Matrix g1(n, d), g2(n, d);
    UimBatchInputs in{&ru, &ri, &labels, 0.1};
    uim_loss(in, 1.0, &g1, nullptr);
    uim_loss(in, 2.5, &g2, nullptr);
    for (size_t i = 0; i < g1.size(); ++i)
        CHECK(g2.data[i] == doctest::Approx(2.5 * g1.data[i]).epsilon(1e-12));
}
