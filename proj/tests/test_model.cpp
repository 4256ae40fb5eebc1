#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctrkit/errors.hpp"
#include "ctrkit/model.hpp"
#include "test_util.hpp"

using namespace ctrkit;
using testutil::rel_err;

namespace {

Schema tiny_schema(int d) {
    return Schema::from_fields({
        {"up_a", 6, FieldRole::UserProfile, d},
        {"up_b", 4, FieldRole::UserProfile, d},
        {"b_item", 8, FieldRole::BehaviorItem, d},
        {"b_cat", 5, FieldRole::BehaviorCategory, d},
        {"item_id", 8, FieldRole::Item, d},
        {"item_cat", 5, FieldRole::Item, d},
        {"ctx", 3, FieldRole::Context, d},
    });
}

Batch random_batch(int n, int m_max, Rng& rng) {
    std::vector<Instance> xs;
    for (int i = 0; i < n; ++i) {
        Instance inst;
        inst.label = int(rng.uniform_int(2));
        inst.profile = {int(rng.uniform_int(6)), int(rng.uniform_int(4))};
        int len = 1 + int(rng.uniform_int(uint64_t(m_max)));
        for (int t = 0; t < len; ++t)
            inst.behaviors.emplace_back(int(rng.uniform_int(8)), int(rng.uniform_int(5)));
        inst.item = {int(rng.uniform_int(8)), int(rng.uniform_int(5))};
        inst.context = {int(rng.uniform_int(3))};
        xs.push_back(std::move(inst));
    }
    xs[0].label = 1;  // UIM needs a positive
    return pack_batch(xs, 0, xs.size(), m_max);
}

ModelParams small_model(int d, int m_max, int d_prime, uint64_t seed) {
    ModelConfig mc;
    mc.d = d;
    mc.d_prime = d_prime;
    mc.m_max = m_max;
    mc.tower_widths = {8, 4};
    ModelParams params = ModelParams::build(tiny_schema(d), mc);
    params.init(seed);
    return params;
}

struct LossSpec {
    double lambda_uim = 0.7;
    double lambda_nip = 0.3;
    double tau1 = 0.07;
    double tau2 = 0.1;
};

double full_loss(const ModelParams& params, const Batch& batch, const LossSpec& spec,
                 LossGrads* grads) {
    ForwardArtifacts art = forward(params, batch, RunMode::Train);
    if (grads) grads->d_p.assign(batch.n, 0.0);
    double l_main =
        bce_loss(art.p, batch.labels, 1.0, grads ? &grads->d_p : nullptr);
    if (grads) {
        grads->d_r_user = Matrix(art.r_user.rows, art.r_user.cols);
        grads->d_r_item = Matrix(art.r_item.rows, art.r_item.cols);
        grads->d_prefix_reps = Matrix(art.prefix_reps.rows, art.prefix_reps.cols);
        grads->d_next_items = Matrix(art.next_items.rows, art.next_items.cols);
    }
    UimBatchInputs uin{&art.r_user, &art.r_item, &batch.labels, spec.tau1};
    double l_uim = uim_loss(uin, spec.lambda_uim, grads ? &grads->d_r_user : nullptr,
                            grads ? &grads->d_r_item : nullptr)
                       .value;
    NipBatchInputs nin{&art.prefix_reps, &art.next_items, &art.nip_valid,
                       batch.n,           batch.m,         spec.tau2};
    double l_nip = nip_loss(nin, spec.lambda_nip, grads ? &grads->d_prefix_reps : nullptr,
                            grads ? &grads->d_next_items : nullptr)
                       .value;
    return total_loss(l_main, l_uim, l_nip, spec.lambda_uim, spec.lambda_nip);
}

}  // namespace

TEST_CASE("inference probabilities live in (0,1) with the right shapes") {
    Rng rng(41);
    ModelParams params = small_model(4, 3, 4, 1);
    Batch batch = random_batch(5, 3, rng);
    ForwardArtifacts art = forward(params, batch, RunMode::Inference);
    CHECK(int(art.p.size()) == 5);
    for (double p : art.p) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
    CHECK(!art.has_uim);
    CHECK(!art.has_nip);
}

TEST_CASE("zero tower weights predict one half") {
    Rng rng(42);
    ModelParams params = small_model(4, 3, 4, 2);
    for (Matrix& w : params.tower.w) w.zero();
    for (Matrix& b : params.tower.b) b.zero();
    Batch batch = random_batch(4, 3, rng);
    ForwardArtifacts art = forward(params, batch, RunMode::Inference);
    for (double p : art.p) CHECK(p == 0.5);
}

TEST_CASE("train-mode artifact shape contract") {
    Rng rng(43);
    const int n = 6, m = 3, d = 4, dp = 5;
    ModelParams params = small_model(d, m, dp, 3);
    Batch batch = random_batch(n, m, rng);
    ForwardArtifacts art = forward(params, batch, RunMode::Train);
    CHECK(art.r_user.rows == n);
    CHECK(art.r_user.cols == dp);
    CHECK(art.r_item.rows == n);
    CHECK(art.r_item.cols == dp);
    CHECK(art.prefix_reps.rows == n * (m - 1));
    CHECK(art.prefix_reps.cols == d);
    CHECK(art.next_items.rows == n * (m - 1));
}

TEST_CASE("inference and train mode agree bit for bit on p") {
    Rng rng(44);
    ModelParams params = small_model(4, 3, 4, 4);
    Batch batch = random_batch(7, 3, rng);
    ForwardArtifacts inf = forward(params, batch, RunMode::Inference);
    ForwardArtifacts tr = forward(params, batch, RunMode::Train);
    for (int i = 0; i < batch.n; ++i) CHECK(inf.p[i] == tr.p[i]);
}

TEST_CASE("backward demands a train-mode forward") {
    Rng rng(45);
    ModelParams params = small_model(4, 3, 4, 5);
    Batch batch = random_batch(3, 3, rng);
    ForwardArtifacts art = forward(params, batch, RunMode::Inference);
    LossGrads lg;
    lg.d_p.assign(batch.n, 0.1);
    CHECK_THROWS_AS(backward(params, batch, art, lg), ConfigError);
}

TEST_CASE("zero loss weights leave auxiliary attention gradients at zero") {
    Rng rng(46);
    ModelParams params = small_model(4, 3, 4, 6);
    Batch batch = random_batch(5, 3, rng);
    LossSpec spec;
    spec.lambda_uim = 0.0;
    spec.lambda_nip = 0.0;
    LossGrads lg;
    full_loss(params, batch, spec, &lg);
    params.clear_grads();
    ForwardArtifacts art = forward(params, batch, RunMode::Train);
    backward(params, batch, art, lg);
    for (const Matrix* g : {&params.attn_uim.d_w_q, &params.attn_uim.d_w_k,
                            &params.attn_uim.d_w_v, &params.attn_nip.d_w_q,
                            &params.attn_nip.d_w_k, &params.attn_nip.d_w_v})
        for (double v : g->data) CHECK(v == 0.0);
    // the main tower still learns
    double sum = 0.0;
    for (double v : params.attn_main.d_w_q.data) sum += std::fabs(v);
    CHECK(sum > 0.0);
}

TEST_CASE("end-to-end gradients match central differences") {
    Rng rng(47);
    const int d = 4, m = 3, dp = 4;
    ModelParams params = small_model(d, m, dp, 7);
    Batch batch = random_batch(4, m, rng);
    LossSpec spec;

    LossGrads lg;
    double base = full_loss(params, batch, spec, &lg);
    CHECK(std::isfinite(base));
    params.clear_grads();
    ForwardArtifacts art = forward(params, batch, RunMode::Train);
    backward(params, batch, art, lg);

    const double h = 1e-4;
    double worst = 0.0;
    for (ParamRef& ref : params.param_refs()) {
        for (size_t i = 0; i < ref.value->size(); ++i) {
            double saved = ref.value->data[i];
            ref.value->data[i] = saved + h;
            double up = full_loss(params, batch, spec, nullptr);
            ref.value->data[i] = saved - h;
            double down = full_loss(params, batch, spec, nullptr);
            ref.value->data[i] = saved;
            double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, rel_err(fd, ref.grad->data[i]));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("calibration closed form and endpoints") {
    CHECK(calibrate_probability(0.5, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(calibrate_probability(0.5, 0.1) == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
    CHECK(calibrate_probability(0.0, 0.3) == 0.0);
    CHECK(calibrate_probability(1.0, 0.3) == 1.0);
    CHECK_THROWS_AS(calibrate_probability(0.5, 0.0), ConfigError);
    CHECK_THROWS_AS(calibrate_probability(0.5, 1.5), ConfigError);
}

TEST_CASE("calibration is strictly increasing in p") {
    for (double w : {0.05, 0.1, 0.5, 1.0}) {
        double prev = -1.0;
        for (int i = 0; i <= 1000; ++i) {
            double p = double(i) / 1000.0;
            double q = calibrate_probability(p, w);
            CHECK(q > prev);
            prev = q;
        }
    }
}

TEST_CASE("schema mismatch is a descriptive error") {
    Rng rng(48);
    ModelParams params = small_model(4, 3, 4, 8);
    Batch batch = random_batch(3, 3, rng);
    batch.profile_idx.pop_back();
    CHECK_THROWS_AS(forward(params, batch, RunMode::Inference), DataError);
}
