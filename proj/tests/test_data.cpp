#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctrkit/data.hpp"
#include "ctrkit/errors.hpp"
#include "ctrkit/metrics.hpp"

using namespace ctrkit;
namespace fs = std::filesystem;

namespace {

Schema wide_schema() {
    return Schema::from_fields({
        {"up_a", 20, FieldRole::UserProfile, 4},
        {"up_b", 20, FieldRole::UserProfile, 4},
        {"b_item", 20, FieldRole::BehaviorItem, 4},
        {"b_cat", 20, FieldRole::BehaviorCategory, 4},
        {"item_a", 20, FieldRole::Item, 4},
        {"item_b", 20, FieldRole::Item, 4},
        {"ctx", 20, FieldRole::Context, 4},
    });
}

std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

}  // namespace

TEST_CASE("parses tagged index tokens") {
    std::string path = temp_path("ctrkit_parse_a.tsv");
    spit(path, "1\tu7|g2\t3:1|9:4\t12|5\t0\n");
    std::vector<Instance> xs = parse_dataset(path, wide_schema());
    REQUIRE(xs.size() == 1);
    CHECK(xs[0].label == 1);
    CHECK(xs[0].profile == std::vector<int>{7, 2});
    REQUIRE(xs[0].behaviors.size() == 2);
    CHECK(xs[0].behaviors[0] == std::pair<int, int>{3, 1});
    CHECK(xs[0].behaviors[1] == std::pair<int, int>{9, 4});
    CHECK(xs[0].item == std::vector<int>{12, 5});
    CHECK(xs[0].context == std::vector<int>{0});
}

TEST_CASE("empty behavior column is a valid empty sequence") {
    std::string path = temp_path("ctrkit_parse_b.tsv");
    spit(path, "0\t1|2\t\t3|4\t5\n");
    std::vector<Instance> xs = parse_dataset(path, wide_schema());
    REQUIRE(xs.size() == 1);
    CHECK(xs[0].behaviors.empty());
    Batch b = pack_batch(xs, 0, 1, 4);
    CHECK(b.valid[0] == 0);
}

TEST_CASE("malformed lines carry line numbers") {
    Schema schema = wide_schema();
    std::string path = temp_path("ctrkit_parse_c.tsv");

    spit(path, "0\t1|2\t\t3|4\t5\n1\t1|2\t\t3|4\n");
    CHECK_THROWS_WITH(parse_dataset(path, schema), doctest::Contains("line 2"));

    spit(path, "0\t1|x\t\t3|4\t5\n");
    CHECK_THROWS_AS(parse_dataset(path, schema), DataError);

    spit(path, "0\t1|2\t\t3|4\t25\n");  // ctx cardinality 20
    CHECK_THROWS_WITH(parse_dataset(path, schema), doctest::Contains("ctx"));

    spit(path, "7\t1|2\t\t3|4\t5\n");
    CHECK_THROWS_WITH(parse_dataset(path, schema), doctest::Contains("label"));
}

TEST_CASE("write/parse round trip reproduces the file") {
    Rng rng(51);
    std::vector<Instance> xs;
    for (int i = 0; i < 50; ++i) {
        Instance inst;
        inst.label = int(rng.uniform_int(2));
        inst.profile = {int(rng.uniform_int(20)), int(rng.uniform_int(20))};
        int len = int(rng.uniform_int(5));
        for (int t = 0; t < len; ++t)
            inst.behaviors.emplace_back(int(rng.uniform_int(20)), int(rng.uniform_int(20)));
        inst.item = {int(rng.uniform_int(20)), int(rng.uniform_int(20))};
        inst.context = {int(rng.uniform_int(20))};
        xs.push_back(std::move(inst));
    }
    std::string p1 = temp_path("ctrkit_rt1.tsv"), p2 = temp_path("ctrkit_rt2.tsv");
    write_dataset(p1, xs);
    write_dataset(p2, parse_dataset(p1, wide_schema()));
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("down-sampling membership rules") {
    Rng gen(52);
    std::vector<Instance> xs;
    for (int i = 0; i < 500; ++i) {
        Instance inst;
        inst.label = int(gen.uniform_int(2));
        inst.profile = {i % 20, 0};
        inst.item = {0, 0};
        inst.context = {0};
        xs.push_back(inst);
    }
    Rng r1(1);
    std::vector<Instance> all = downsample_negatives(xs, 1.0, r1);
    CHECK(all.size() == xs.size());

    Rng r2(1);
    std::vector<Instance> pos = downsample_negatives(xs, 0.0, r2);
    for (const Instance& inst : pos) CHECK(inst.label == 1);
    size_t n_pos = 0;
    for (const Instance& inst : xs) n_pos += inst.label == 1;
    CHECK(pos.size() == n_pos);

    // features and labels never change, only membership
    Rng r3(7);
    std::vector<Instance> some = downsample_negatives(xs, 0.5, r3);
    size_t j = 0;
    for (const Instance& kept : some) {
        while (j < xs.size() && (xs[j].label != kept.label || xs[j].profile != kept.profile))
            ++j;
        REQUIRE(j < xs.size());
        CHECK(xs[j].item == kept.item);
        ++j;
    }
}

TEST_CASE("down-sampling statistics at w=0.1 over 1e5 negatives") {
    std::vector<Instance> xs(100000);
    for (auto& inst : xs) {
        inst.label = 0;
        inst.profile = {0, 0};
        inst.item = {0, 0};
        inst.context = {0};
    }
    Rng rng = Rng::from(1, "downsample");
    std::vector<Instance> kept = downsample_negatives(xs, 0.1, rng);
    // 3 sigma of Binomial(1e5, 0.1) is 285
    CHECK(kept.size() >= 10000 - 285);
    CHECK(kept.size() <= 10000 + 285);
}

TEST_CASE("batch assembly rules") {
    Rng rng(53);
    std::vector<Instance> xs;
    for (int i = 0; i < 10; ++i) {
        Instance inst;
        inst.label = i % 3 == 0;
        inst.profile = {i, i};
        for (int t = 0; t < 7; ++t)
            inst.behaviors.emplace_back(t, t);
        inst.item = {i, i};
        inst.context = {i};
        xs.push_back(inst);
    }
    Rng no_shuffle(0);
    std::vector<Batch> train_bs = batches(xs, 4, 0, 5, no_shuffle, true);
    CHECK(train_bs.size() == 2);  // floor(10/4), short batch dropped
    std::vector<Batch> eval_bs = batches(xs, 4, 0, 5, no_shuffle, false);
    CHECK(eval_bs.size() == 3);
    CHECK(eval_bs.back().n == 2);

    // recency: length-7 sequence keeps behaviors 2..6
    CHECK(train_bs[0].valid[0] == 5);
    CHECK(train_bs[0].beh_item[0] == 2);
    CHECK(train_bs[0].beh_item[4] == 6);

    for (const Batch& b : eval_bs) {
        int sum = 0;
        for (int y : b.labels) sum += y;
        CHECK(b.n_pos == sum);
    }

    CHECK_THROWS_AS(batches(xs, 1, 0, 5, no_shuffle, true), ConfigError);
}

TEST_CASE("shuffle stream is a seeded permutation") {
    std::vector<Instance> xs;
    for (int i = 0; i < 100; ++i) {
        Instance inst;
        inst.label = 0;
        inst.profile = {i, 0};
        inst.item = {0, 0};
        inst.context = {0};
        xs.push_back(inst);
    }
    Rng a(9), b(9), c(10);
    std::vector<Instance> s1 = shuffle_stream(xs, 16, a);
    std::vector<Instance> s2 = shuffle_stream(xs, 16, b);
    std::vector<Instance> s3 = shuffle_stream(xs, 16, c);
    REQUIRE(s1.size() == xs.size());
    bool same12 = true, same13 = true;
    std::vector<int> seen(100, 0);
    for (size_t i = 0; i < s1.size(); ++i) {
        same12 &= s1[i].profile[0] == s2[i].profile[0];
        same13 &= s1[i].profile[0] == s3[i].profile[0];
        ++seen[s1[i].profile[0]];
    }
    CHECK(same12);
    CHECK(!same13);
    for (int count : seen) CHECK(count == 1);  // a permutation, nothing lost
}

TEST_CASE("synthetic generation is deterministic and planted") {
    SyntheticConfig cfg;
    cfg.num_users = 50;
    cfg.num_items = 40;
    cfg.num_categories = 8;
    cfg.behaviors_per_user = 6;
    cfg.impressions = 3000;
    cfg.test_impressions = 1500;
    cfg.seed = 11;

    std::string dir1 = temp_path("ctrkit_syn1");
    std::string dir2 = temp_path("ctrkit_syn2");
    SyntheticStats st1 = synthesize_dataset(cfg, dir1);
    SyntheticStats st2 = synthesize_dataset(cfg, dir2);
    for (const char* f : {"train.tsv", "test.tsv", "sidecar.tsv", "schema.txt"})
        CHECK(slurp(dir1 + "/" + std::string(f)) == slurp(dir2 + "/" + std::string(f)));

    CHECK(st1.train_positive_rate > 0.02);
    CHECK(st1.train_positive_rate < 0.5);
    CHECK(st1.train_positive_rate == st2.train_positive_rate);

    // the sidecar's true probabilities bound achievable ranking: Bayes AUC
    Schema schema = Schema::load(dir1 + "/schema.txt", 4);
    std::vector<Instance> test = parse_dataset(dir1 + "/test.tsv", schema);
    std::ifstream sc(dir1 + "/sidecar.tsv");
    std::string line;
    std::getline(sc, line);  // header
    std::vector<double> true_p;
    std::vector<int> labels;
    size_t row = 0;
    while (std::getline(sc, line)) {
        std::istringstream ls(line);
        int u, v;
        double p;
        ls >> u >> v >> p;
        true_p.push_back(p);
        labels.push_back(test[row++].label);
    }
    REQUIRE(true_p.size() == test.size());
    double bayes = auc(true_p, labels);
    MESSAGE("bayes-optimal AUC ceiling on this config: ", bayes);
    CHECK(bayes > 0.65);

    // a heavily negative offset drives the positive rate to zero
    SyntheticConfig dead = cfg;
    dead.base_click_logit_offset = -30.0;
    std::string dir3 = temp_path("ctrkit_syn3");
    SyntheticStats st3 = synthesize_dataset(dead, dir3);
    CHECK(st3.train_positive_rate == 0.0);
}
