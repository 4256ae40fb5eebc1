#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctrkit/model.hpp"

namespace ctrkit {

struct MetricsReport {
    double auc = 0.0;
    double logloss = 0.0;
    int64_t n_eval = 0;
    int64_t n_pos = 0;

    std::string to_json() const;
};

// Probability that a random positive outranks a random negative, ties
// counted one half; sort + average-rank statistics, O(N log N).
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean BCE on clamped scores; same formula as the training loss.
double logloss(const std::vector<double>& scores, const std::vector<int>& labels);

// Runs the model in inference mode over the instances (no down-sampling on
// eval data); calibrate_w < 1 applies the down-sampling correction first,
// which never changes AUC.
MetricsReport evaluate_model(const ModelParams& params, const std::vector<Instance>& data,
                             int batch_size, double calibrate_w = 1.0);

struct RelevanceHistogram {
    static constexpr int kBins = 40;  // uniform over [-1, 1]
    std::array<int64_t, kBins> counts{};
    double mean_cosine = 0.0;
    int64_t total = 0;

    static double bin_left(int b) { return -1.0 + 2.0 * b / kBins; }
    static double bin_right(int b) { return -1.0 + 2.0 * (b + 1) / kBins; }
};

// Cosine between the projected user-side representation (profile + pooled
// match-encoder interest) and the projected item-side representation, over
// up to k sampled positive instances.
RelevanceHistogram relevance_case_study(const ModelParams& params,
                                        const std::vector<Instance>& data, int k, Rng& rng);

void write_histogram_tsv(const std::string& path, const RelevanceHistogram& h);

}  // namespace ctrkit
