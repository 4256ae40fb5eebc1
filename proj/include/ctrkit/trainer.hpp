#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctrkit/model.hpp"

namespace ctrkit {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<Matrix> m, v;  // aligned with ModelParams::param_refs()

    AdamState() = default;
    AdamState(ModelParams& params, double lr_in);
};

// Bias-corrected Adam. Embedding tables update touched rows only; touched
// rows follow exactly the dense rule, untouched rows (params and moments)
// are left bit-identical. Clears all grads afterwards.
void adam_step(ModelParams& params, AdamState& state);

struct TrainConfig {
    int d = 16;
    int d_prime = 32;
    int m_max = 20;
    double tau1 = 0.07;
    double tau2 = 0.1;
    double lambda_uim = 1.0;
    double lambda_nip = 0.1;
    double lr = 1e-3;
    int batch_size = 256;
    int epochs = 2;
    double sampling_ratio = 1.0;  // w; applied to training data only
    uint64_t seed = 1;
    std::vector<int> tower_widths = {128, 64};
    int shuffle_buffer = 10000;
    int save_every = 0;  // steps between mid-run checkpoints; 0 = end only
    int64_t max_steps = 0;  // stop after this many optimizer steps; 0 = run all epochs

    void validate() const;
    ModelConfig model_config() const;
};

struct RunLogRow {
    int64_t step = 0;
    double l_main = 0.0, l_uim = 0.0, l_nip = 0.0, l_total = 0.0;
    int n = 0, n_pos = 0;
    bool uim_skipped = false, nip_skipped = false;
};

struct TrainResult {
    ModelParams params;
    AdamState adam;
    std::vector<RunLogRow> log;
};

// Multi-task loop: forward(train) -> losses -> backward -> adam_step per
// batch. Deterministic given (seed, config, data): down-sampling draws from
// the "downsample" stream, epoch e shuffles from "shuffle"/e, so a resumed
// run replays the identical batch sequence and skips the first `t` steps.
TrainResult train(const TrainConfig& cfg, const Schema& schema,
                  const std::vector<Instance>& data,
                  const std::string* resume_checkpoint = nullptr,
                  const std::string* checkpoint_out = nullptr);

// Binary checkpoint: "ATCK" magic, version, embedded schema and model config
// text, then length-prefixed named segments of 64-bit little-endian reals
// (every parameter plus Adam moments and step count). Self-contained: load
// rebuilds the params without external schema/config files.
void save_checkpoint(ModelParams& params, const AdamState& state, const std::string& path);
struct Checkpoint {
    ModelParams params;
    AdamState adam;
};
Checkpoint load_checkpoint(const std::string& path);

void write_run_log(const std::string& path, const std::vector<RunLogRow>& rows);

}  // namespace ctrkit
