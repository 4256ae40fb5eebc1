#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctrkit/embedding.hpp"
#include "ctrkit/rng.hpp"

namespace ctrkit {

// One labeled impression. Indices are validated against the schema at parse
// time; behaviors are chronological, oldest first.
struct Instance {
    int label = 0;
    std::vector<int> profile;                    // one index per profile field
    std::vector<std::pair<int, int>> behaviors;  // (item_id, category_id)
    std::vector<int> item;                       // one index per item field
    std::vector<int> context;                    // one index per context field
};

// Padded, masked stack of instances ready for the model.
struct Batch {
    int n = 0;
    int m = 0;  // padded behavior length (m_max)
    std::vector<int> labels;
    int n_pos = 0;
    std::vector<int> profile_idx;  // n x P row-major
    std::vector<int> item_idx;     // n x I
    std::vector<int> context_idx;  // n x C
    std::vector<int> beh_item;     // n x m, -1 at padded positions
    std::vector<int> beh_cat;      // n x m
    std::vector<int> valid;        // valid behavior count per instance
};

// --- TSV wire format -------------------------------------------------------
// One impression per line: label TAB profile TAB behaviors TAB item TAB context.
// Within a column fields are joined by '|'; behaviors are item:category pairs.
// Index tokens may carry a leading alphabetic tag (e.g. "u7"), which the
// parser strips; the writer always emits bare integers.

std::vector<Instance> parse_dataset(const std::string& path, const Schema& schema);
void write_dataset(const std::string& path, const std::vector<Instance>& instances);

// Every positive passes; each negative is kept independently with
// probability w (Bernoulli thinning).
std::vector<Instance> downsample_negatives(const std::vector<Instance>& in, double w, Rng& rng);

// Streaming shuffle through a bounded buffer; deterministic given the rng.
std::vector<Instance> shuffle_stream(const std::vector<Instance>& in, int buffer_size, Rng& rng);

// Truncates behavior sequences to the most recent m_max entries, right-pads,
// stacks into batches. Training drops the final short batch and requires
// n >= 2; evaluation keeps the remainder batch.
std::vector<Batch> batches(const std::vector<Instance>& in, int batch_size, int shuffle_buffer,
                           int m_max, Rng& rng, bool training);

Batch pack_batch(const std::vector<Instance>& in, size_t begin, size_t end, int m_max);

// --- synthetic data --------------------------------------------------------

struct SyntheticConfig {
    int num_users = 3000;
    int num_items = 2000;
    int num_categories = 50;
    int latent_dim = 4;
    double context_noise_scale = 0.5;
    double base_click_logit_offset = -2.2;
    int behaviors_per_user = 25;
    int impressions = 200000;       // train split
    int test_impressions = 20000;   // test split
    uint64_t seed = 1;
};

struct SyntheticStats {
    double train_positive_rate = 0.0;
    double test_positive_rate = 0.0;
};

// Plants user-item affinity: latent u, v drawn from a seeded normal, behavior
// sequences sampled proportional to softmax(u . v), click labels Bernoulli of
// sigmoid(u . v + offset + context noise). Writes train.tsv, test.tsv,
// sidecar.tsv (user, item, true probability; row-aligned with test.tsv) and
// schema.txt into out_dir.
SyntheticStats synthesize_dataset(const SyntheticConfig& cfg, const std::string& out_dir);

Schema synthetic_schema(const SyntheticConfig& cfg, int dim);

}  // namespace ctrkit
