#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "ctrkit/errors.hpp"
#include "ctrkit/losses.hpp"
#include "ctrkit/metrics.hpp"
#include "ctrkit/reference.hpp"
#include "test_util.hpp"

using namespace ctrkit;

TEST_CASE("auc on tiny hand cases") {
    CHECK(auc({0.9, 0.1}, {1, 0}) == 1.0);
    CHECK(auc({0.1, 0.9}, {1, 0}) == 0.0);
    CHECK(auc({0.5, 0.5}, {1, 0}) == 0.5);
    CHECK_THROWS_AS(auc({0.2, 0.4}, {1, 1}), NumericError);
    CHECK_THROWS_AS(auc({0.2, 0.4}, {0, 0}), NumericError);
}

TEST_CASE("sorted auc equals the pairwise oracle on 1000 randomized cases") {
    Rng rng(61);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 2 + int(rng.uniform_int(trial % 10 == 0 ? 999 : 40));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        // duplicate-heavy score alphabet exercises the tie handling
        int alphabet = 1 + int(rng.uniform_int(8));
        for (int i = 0; i < n; ++i) {
            scores[i] = trial % 3 == 0 ? double(rng.uniform_int(alphabet)) / alphabet
                                       : rng.uniform();
            labels[i] = int(rng.uniform_int(2));
        }
        labels[0] = 1;
        labels[1] = 0;
        double fast = auc(scores, labels);
        double slow = ref::auc_pairwise(scores, labels);
        CHECK(std::fabs(fast - slow) < 1e-12);
    }
}

TEST_CASE("auc is invariant under calibration and any increasing transform") {
    Rng rng(62);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 10 + int(rng.uniform_int(50));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) {
            scores[i] = rng.uniform();
            labels[i] = int(rng.uniform_int(2));
        }
        labels[0] = 1;
        labels[1] = 0;
        double base = auc(scores, labels);

        double w = 0.05 + 0.95 * rng.uniform();
        std::vector<double> calibrated(n), warped(n);
        for (int i = 0; i < n; ++i) {
            calibrated[i] = calibrate_probability(scores[i], w);
            warped[i] = std::exp(3.0 * scores[i]);
        }
        CHECK(std::fabs(auc(calibrated, labels) - base) < 1e-12);
        CHECK(std::fabs(auc(warped, labels) - base) < 1e-12);
    }
}

TEST_CASE("logloss examples") {
    CHECK(logloss({1.0, 0.0}, {1, 0}) < 1e-6);
    CHECK(logloss({0.5, 0.5, 0.5}, {1, 0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    double expect = -(std::log(0.8) + std::log(0.6)) / 2.0;
    CHECK(logloss({0.8, 0.4}, {1, 0}) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(logloss({0.8, 0.4}, {1, 0}) == doctest::Approx(0.3669845875).epsilon(1e-9));
}

TEST_CASE("logloss is exactly the training bce on identical inputs") {
    Rng rng(63);
    std::vector<double> p(37);
    std::vector<int> y(37);
    for (size_t i = 0; i < p.size(); ++i) {
        p[i] = rng.uniform();
        y[i] = int(rng.uniform_int(2));
    }
    CHECK(logloss(p, y) == bce_loss(p, y, 0.0, nullptr));
}

TEST_CASE("report serializes to parseable json") {
    MetricsReport rep{0.75, 0.31, 1000, 100};
    nlohmann::json j = nlohmann::json::parse(rep.to_json());
    CHECK(j["auc"].get<double>() == doctest::Approx(0.75));
    CHECK(j["n_eval"].get<int64_t>() == 1000);
}

namespace {

// one profile field + zeroed second item field makes the user and item sides
// the same 2d-dimensional vector when behaviors are empty
Schema mirror_schema(int d) {
    return Schema::from_fields({
        {"up", 10, FieldRole::UserProfile, d},
        {"bi", 10, FieldRole::BehaviorItem, d},
        {"bc", 10, FieldRole::BehaviorCategory, d},
        {"item_main", 10, FieldRole::Item, d},
        {"item_zero", 10, FieldRole::Item, d},
        {"cx", 4, FieldRole::Context, d},
    });
}

}  // namespace

TEST_CASE("case study: mirrored embeddings give cosine one per instance") {
    const int d = 4;
    ModelConfig mc;
    mc.d = d;
    mc.m_max = 3;
    mc.d_prime = 4;
    ModelParams params = ModelParams::build(mirror_schema(d), mc);
    params.init(77);
    // mirror the sides: user profile table equals the main item table, the
    // second item field and behaviors contribute nothing
    params.tables[3].weight = params.tables[0].weight;
    params.tables[4].weight.zero();
    params.proj_item.w = params.proj_user.w;
    params.proj_item.b = params.proj_user.b;

    std::vector<Instance> data;
    for (int i = 0; i < 10; ++i) {
        Instance inst;
        inst.label = 1;
        inst.profile = {i};
        inst.item = {i, 0};
        inst.context = {0};
        data.push_back(inst);
    }
    Rng rng(7);
    RelevanceHistogram hist = relevance_case_study(params, data, 10, rng);
    CHECK(hist.total == 10);
    CHECK(hist.mean_cosine == doctest::Approx(1.0).epsilon(1e-12));
    int64_t sum = 0;
    for (int64_t c : hist.counts) sum += c;
    CHECK(sum == 10);
    CHECK(hist.counts[RelevanceHistogram::kBins - 1] == 10);
}

TEST_CASE("case study sampling is capped and seeded") {
    const int d = 4;
    ModelConfig mc;
    mc.d = d;
    mc.m_max = 3;
    ModelParams params = ModelParams::build(mirror_schema(d), mc);
    params.init(78);
    std::vector<Instance> data;
    for (int i = 0; i < 40; ++i) {
        Instance inst;
        inst.label = i % 2;
        inst.profile = {i % 10};
        inst.behaviors = {{i % 10, i % 10}};
        inst.item = {i % 10, (i + 3) % 10};
        inst.context = {i % 4};
        data.push_back(inst);
    }
    Rng r1(5), r2(5);
    RelevanceHistogram h1 = relevance_case_study(params, data, 7, r1);
    RelevanceHistogram h2 = relevance_case_study(params, data, 7, r2);
    CHECK(h1.total == 7);
    CHECK(h1.mean_cosine == h2.mean_cosine);
    CHECK(h1.counts == h2.counts);

    std::vector<Instance> no_pos;
    for (Instance inst : data)
        if (inst.label == 0) no_pos.push_back(inst);
    Rng r3(5);
    CHECK_THROWS_AS(relevance_case_study(params, no_pos, 7, r3), DataError);
}
