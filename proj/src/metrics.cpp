#include "ctrkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ctrkit/errors.hpp"
#include "ctrkit/losses.hpp"

namespace ctrkit {

std::string MetricsReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"auc\": " << auc << ", \"logloss\": " << logloss << ", \"n_eval\": " << n_eval
       << ", \"n_pos\": " << n_pos << "}";
    return os.str();
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    int64_t pos = 0, neg = 0;
    for (int y : labels) {
        if (y == 1) ++pos;
        else if (y == 0) ++neg;
        else throw DataError("auc: label " + std::to_string(y) + " is not binary");
    }
    if (pos == 0 || neg == 0)
        throw NumericError("auc: undefined for single-class input (" + std::to_string(pos) +
                           " positives, " + std::to_string(neg) + " negatives)");
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores[a] < scores[b]; });
    // average ranks within tie groups; AUC = (rank_sum_pos - P(P+1)/2) / (P N)
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * double(i + 1 + j + 1);
        for (size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    return (rank_sum_pos - 0.5 * double(pos) * double(pos + 1)) / (double(pos) * double(neg));
}

double logloss(const std::vector<double>& scores, const std::vector<int>& labels) {
    return bce_loss(scores, labels, 0.0, nullptr);
}

MetricsReport evaluate_model(const ModelParams& params, const std::vector<Instance>& data,
                             int batch_size, double calibrate_w) {
    MetricsReport report;
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(data.size());
    labels.reserve(data.size());
    Rng no_shuffle(0);
    for (const Batch& batch :
         batches(data, batch_size, /*shuffle_buffer=*/0, params.cfg.m_max, no_shuffle,
                 /*training=*/false)) {
        std::vector<double> p = calibrate_w < 1.0
                                    ? predict_calibrated(params, batch, calibrate_w)
                                    : forward(params, batch, RunMode::Inference).p;
        scores.insert(scores.end(), p.begin(), p.end());
        labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    }
    report.n_eval = int64_t(scores.size());
    report.n_pos = std::count(labels.begin(), labels.end(), 1);
    report.auc = auc(scores, labels);
    report.logloss = logloss(scores, labels);
    return report;
}

RelevanceHistogram relevance_case_study(const ModelParams& params,
                                        const std::vector<Instance>& data, int k, Rng& rng) {
    std::vector<int> positives;
    for (size_t i = 0; i < data.size(); ++i)
        if (data[i].label == 1) positives.push_back(int(i));
    if (positives.empty()) throw DataError("case study: no positive instances in the data");

    // sample without replacement up to k
    std::vector<int> chosen;
    if (int(positives.size()) <= k) {
        chosen = positives;
    } else {
        for (int t = 0; t < k; ++t) {
            size_t pick = rng.uniform_int(positives.size());
            chosen.push_back(positives[pick]);
            positives[pick] = positives.back();
            positives.pop_back();
        }
    }

    std::vector<Instance> sample;
    sample.reserve(chosen.size());
    for (int idx : chosen) sample.push_back(data[idx]);

    RelevanceHistogram hist;
    double sum = 0.0;
    Rng no_shuffle(0);
    for (const Batch& batch : batches(sample, 256, 0, params.cfg.m_max, no_shuffle, false)) {
        ForwardArtifacts art = forward(params, batch, RunMode::Train, /*compute_uim=*/true,
                                       /*compute_nip=*/false);
        Matrix sim = cosine_sim_matrix(art.r_user, art.r_item);
        for (int i = 0; i < batch.n; ++i) {
            double c = sim.at(i, i);
            sum += c;
            int b = int((c + 1.0) / 2.0 * RelevanceHistogram::kBins);
            b = std::clamp(b, 0, RelevanceHistogram::kBins - 1);
            ++hist.counts[b];
            ++hist.total;
        }
    }
    hist.mean_cosine = sum / double(hist.total);
    return hist;
}

void write_histogram_tsv(const std::string& path, const RelevanceHistogram& h) {
    std::ofstream f(path);
    if (!f) throw DataError("write_histogram_tsv: cannot write " + path);
    f << "bin_left\tbin_right\tcount\n";
    f.precision(17);
    for (int b = 0; b < RelevanceHistogram::kBins; ++b)
        f << RelevanceHistogram::bin_left(b) << "\t" << RelevanceHistogram::bin_right(b) << "\t"
          << h.counts[b] << "\n";
}

}  // namespace ctrkit
