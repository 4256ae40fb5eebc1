#include "ctrkit/model.hpp"

#include <cmath>

#include "ctrkit/errors.hpp"

namespace ctrkit {

void Mlp::init(Rng& rng) {
    for (Matrix& m : w) {
        double bound = 1.0 / std::sqrt(double(m.rows));
        for (double& v : m.data) v = rng.uniform(-bound, bound);
    }
    // biases start at zero
}

void Mlp::clear_grads() {
    for (Matrix& m : d_w) m.zero();
    for (Matrix& m : d_b) m.zero();
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache& cache) {
    cache.inputs.clear();
    cache.preacts.clear();
    Matrix cur = x;
    for (int l = 0; l < mlp.layers(); ++l) {
        cache.inputs.push_back(cur);
        Matrix z = affine(cur, mlp.w[l], mlp.b[l]);
        cache.preacts.push_back(z);
        cur = l + 1 < mlp.layers() ? relu(z) : std::move(z);
    }
    return cur;
}

void mlp_backward(Mlp& mlp, const MlpCache& cache, const Matrix& d_out, Matrix* d_x) {
    Matrix d_cur = d_out;
    for (int l = mlp.layers() - 1; l >= 0; --l) {
        Matrix d_z;
        if (l + 1 < mlp.layers()) {
            d_z = Matrix(cache.preacts[l].rows, cache.preacts[l].cols);
            relu_backward(cache.preacts[l], d_cur, &d_z);
        } else {
            d_z = std::move(d_cur);
        }
        if (l == 0) {
            affine_backward(cache.inputs[l], mlp.w[l], d_z, d_x, &mlp.d_w[l], &mlp.d_b[l]);
        } else {
            Matrix d_in(cache.inputs[l].rows, cache.inputs[l].cols);
            affine_backward(cache.inputs[l], mlp.w[l], d_z, &d_in, &mlp.d_w[l], &mlp.d_b[l]);
            d_cur = std::move(d_in);
        }
    }
}

int ModelParams::tower_input_dim() const {
    // concat(e_up, e_us, e_item, e_ctx)
    return (schema.num_profile() + 1 + schema.num_item() + schema.num_context()) * cfg.d;
}

ModelParams ModelParams::build(const Schema& schema_in, const ModelConfig& cfg_in) {
    ModelParams p;
    p.schema = schema_in;
    p.cfg = cfg_in;
    for (FieldSchema& f : p.schema.fields) f.dim = cfg_in.d;
    p.tables = make_tables(p.schema);
    p.attn_main = AttentionParams(cfg_in.d);
    p.attn_uim = AttentionParams(cfg_in.d);
    p.attn_nip = AttentionParams(cfg_in.d);

    int in = p.tower_input_dim();
    for (int wdt : cfg_in.tower_widths) {
        p.tower.add_layer(in, wdt);
        in = wdt;
    }
    p.tower.add_layer(in, 1);

    const int dp = cfg_in.d_prime;
    const int user_in = (p.schema.num_profile() + 1) * cfg_in.d;
    const int item_in = p.schema.num_item() * cfg_in.d;
    p.proj_user.add_layer(user_in, 2 * dp);
    p.proj_user.add_layer(2 * dp, dp);
    p.proj_item.add_layer(item_in, 2 * dp);
    p.proj_item.add_layer(2 * dp, dp);
    return p;
}

std::vector<ParamRef> ModelParams::param_refs() {
    std::vector<ParamRef> refs;
    for (EmbeddingTable& t : tables)
        refs.push_back({"emb." + t.field.name, &t.weight, &t.grad, &t});
    auto add_attn = [&](const char* tag, AttentionParams& a) {
        refs.push_back({std::string("attn.") + tag + ".wq", &a.w_q, &a.d_w_q, nullptr});
        refs.push_back({std::string("attn.") + tag + ".wk", &a.w_k, &a.d_w_k, nullptr});
        refs.push_back({std::string("attn.") + tag + ".wv", &a.w_v, &a.d_w_v, nullptr});
    };
    add_attn("main", attn_main);
    add_attn("uim", attn_uim);
    add_attn("nip", attn_nip);
    auto add_mlp = [&](const char* tag, Mlp& m) {
        for (int l = 0; l < m.layers(); ++l) {
            refs.push_back(
                {std::string(tag) + ".w" + std::to_string(l), &m.w[l], &m.d_w[l], nullptr});
            refs.push_back(
                {std::string(tag) + ".b" + std::to_string(l), &m.b[l], &m.d_b[l], nullptr});
        }
    };
    add_mlp("tower", tower);
    add_mlp("proj_user", proj_user);
    add_mlp("proj_item", proj_item);
    return refs;
}

void ModelParams::init(uint64_t seed) {
    for (ParamRef& ref : param_refs()) {
        Rng rng = Rng::from(seed, "init:" + ref.name);
        if (ref.table) {
            ref.table->init(rng);
        } else if (ref.value->rows > 1) {
            double bound = 1.0 / std::sqrt(double(ref.value->rows));
            for (double& v : ref.value->data) v = rng.uniform(-bound, bound);
        }
        // 1 x k rows are biases; they stay zero
    }
}

void ModelParams::clear_grads() {
    for (EmbeddingTable& t : tables) t.clear_grads();
    attn_main.clear_grads();
    attn_uim.clear_grads();
    attn_nip.clear_grads();
    tower.clear_grads();
    proj_user.clear_grads();
    proj_item.clear_grads();
}

static void check_batch(const ModelParams& params, const Batch& batch) {
    const Schema& s = params.schema;
    if (batch.profile_idx.size() != size_t(batch.n) * s.num_profile() ||
        batch.item_idx.size() != size_t(batch.n) * s.num_item() ||
        batch.context_idx.size() != size_t(batch.n) * s.num_context())
        throw DataError("forward: batch field counts do not match schema");
    if (batch.m != params.cfg.m_max)
        throw DataError("forward: batch padded to m=" + std::to_string(batch.m) +
                        " but model expects m_max=" + std::to_string(params.cfg.m_max));
}

static Matrix instance_rows(const Matrix& stack, int i, int m, int d) {
    Matrix x(m, d);
    std::copy(stack.row(i * m), stack.row(i * m) + size_t(m) * d, x.row(0));
    return x;
}

ForwardArtifacts forward(const ModelParams& params, const Batch& batch, RunMode mode,
                         bool compute_uim, bool compute_nip) {
    check_batch(params, batch);
    const int n = batch.n;
    const int m = batch.m;
    const int d = params.cfg.d;

    ForwardArtifacts art;
    art.mode = mode;

    art.e_up = embed_profile(params.tables, params.schema, batch);
    art.e_item = embed_item(params.tables, params.schema, batch);
    art.e_ctx = embed_context(params.tables, params.schema, batch);
    art.x_beh = embed_behaviors(params.tables, params.schema, batch);

    // main tower: SA + mean pool over behaviors, concat with the field groups
    art.main_attn.resize(n);
    art.e_us_main = Matrix(n, d);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        Matrix x = instance_rows(art.x_beh, i, m, d);
        SequenceMask mask{batch.valid[i], m};
        attention_forward(x, params.attn_main, mask, /*causal=*/false, art.main_attn[i]);
        Matrix pooled = mean_pool(art.main_attn[i].out, mask);
        std::copy(pooled.row(0), pooled.row(0) + d, art.e_us_main.row(i));
    }
    art.tower_in = concat_cols({&art.e_up, &art.e_us_main, &art.e_item, &art.e_ctx});
    art.logits = mlp_forward(params.tower, art.tower_in, art.tower_cache);
    art.p_mat = sigmoid(art.logits);
    art.p.resize(n);
    for (int i = 0; i < n; ++i) art.p[i] = art.p_mat.at(i, 0);

    if (mode == RunMode::Inference) return art;

    if (compute_uim) {
        art.has_uim = true;
        art.uim_attn.resize(n);
        art.e_us_uim = Matrix(n, d);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            Matrix x = instance_rows(art.x_beh, i, m, d);
            SequenceMask mask{batch.valid[i], m};
            attention_forward(x, params.attn_uim, mask, /*causal=*/false, art.uim_attn[i]);
            Matrix pooled = mean_pool(art.uim_attn[i].out, mask);
            std::copy(pooled.row(0), pooled.row(0) + d, art.e_us_uim.row(i));
        }
        art.e_user = concat_cols({&art.e_up, &art.e_us_uim});
        art.r_user = mlp_forward(params.proj_user, art.e_user, art.proj_user_cache);
        art.r_item = mlp_forward(params.proj_item, art.e_item, art.proj_item_cache);
    }

    if (compute_nip && m >= 2) {
        art.has_nip = true;
        const int positions = m - 1;
        art.nip_attn.resize(n);
        art.prefix_reps = Matrix(n * positions, d);
        art.next_items = Matrix(n * positions, d);
        art.nip_valid.assign(size_t(n) * positions, 0);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            Matrix x = instance_rows(art.x_beh, i, m, d);
            SequenceMask mask{batch.valid[i], m};
            attention_forward(x, params.attn_nip, mask, /*causal=*/true, art.nip_attn[i]);
            for (int t = 0; t < positions; ++t) {
                std::copy(art.nip_attn[i].out.row(t), art.nip_attn[i].out.row(t) + d,
                          art.prefix_reps.row(i * positions + t));
                if (t + 1 < batch.valid[i]) {
                    // the next behavior's position embedding is the target
                    std::copy(art.x_beh.row(i * m + t + 1), art.x_beh.row(i * m + t + 1) + d,
                              art.next_items.row(i * positions + t));
                    art.nip_valid[size_t(i) * positions + t] = 1;
                }
            }
        }
    }

    return art;
}

void backward(ModelParams& params, const Batch& batch, const ForwardArtifacts& art,
              const LossGrads& grads) {
    if (art.mode != RunMode::Train)
        throw ConfigError("backward: forward pass must run in train mode");
    const int n = batch.n;
    const int m = batch.m;
    const int d = params.cfg.d;

    Matrix d_x_beh(n * m, d);
    Matrix d_e_up(n, art.e_up.cols);
    Matrix d_e_item(n, art.e_item.cols);
    Matrix d_e_ctx(n, art.e_ctx.cols);

    // ---- main tower ----
    if (!grads.d_p.empty()) {
        Matrix d_p_mat(n, 1);
        for (int i = 0; i < n; ++i) d_p_mat.at(i, 0) = grads.d_p[i];
        Matrix d_logits(n, 1);
        sigmoid_backward(art.p_mat, d_p_mat, &d_logits);
        Matrix d_tower_in(n, art.tower_in.cols);
        mlp_backward(params.tower, art.tower_cache, d_logits, &d_tower_in);
        Matrix d_e_us_main(n, d);
        concat_cols_backward(d_tower_in, {&d_e_up, &d_e_us_main, &d_e_item, &d_e_ctx});
        // attention weight grads are shared across instances: serial loop
        for (int i = 0; i < n; ++i) {
            SequenceMask mask{batch.valid[i], m};
            Matrix d_out(m, d);
            Matrix d_row(1, d);
            std::copy(d_e_us_main.row(i), d_e_us_main.row(i) + d, d_row.row(0));
            mean_pool_backward(mask, d_row, &d_out);
            Matrix x = instance_rows(art.x_beh, i, m, d);
            Matrix d_x(m, d);
            attention_backward(x, params.attn_main, mask, false, art.main_attn[i], d_out, &d_x);
            double* dst = d_x_beh.row(i * m);
            for (size_t j = 0; j < d_x.size(); ++j) dst[j] += d_x.data[j];
        }
    }

    // ---- user-item match branch ----
    if (art.has_uim && (grads.d_r_user.size() || grads.d_r_item.size())) {
        if (grads.d_r_user.size()) {
            Matrix d_e_user(n, art.e_user.cols);
            mlp_backward(params.proj_user, art.proj_user_cache, grads.d_r_user, &d_e_user);
            Matrix d_e_us_uim(n, d);
            concat_cols_backward(d_e_user, {&d_e_up, &d_e_us_uim});
            for (int i = 0; i < n; ++i) {
                SequenceMask mask{batch.valid[i], m};
                Matrix d_out(m, d);
                Matrix d_row(1, d);
                std::copy(d_e_us_uim.row(i), d_e_us_uim.row(i) + d, d_row.row(0));
                mean_pool_backward(mask, d_row, &d_out);
                Matrix x = instance_rows(art.x_beh, i, m, d);
                Matrix d_x(m, d);
                attention_backward(x, params.attn_uim, mask, false, art.uim_attn[i], d_out,
                                   &d_x);
                double* dst = d_x_beh.row(i * m);
                for (size_t j = 0; j < d_x.size(); ++j) dst[j] += d_x.data[j];
            }
        }
        if (grads.d_r_item.size())
            mlp_backward(params.proj_item, art.proj_item_cache, grads.d_r_item, &d_e_item);
    }

    // ---- next-item branch ----
    if (art.has_nip && (grads.d_prefix_reps.size() || grads.d_next_items.size())) {
        const int positions = m - 1;
        for (int i = 0; i < n; ++i) {
            SequenceMask mask{batch.valid[i], m};
            if (grads.d_prefix_reps.size()) {
                Matrix d_out(m, d);
                for (int t = 0; t < positions; ++t) {
                    const double* src = grads.d_prefix_reps.row(i * positions + t);
                    double* dst = d_out.row(t);
                    for (int c = 0; c < d; ++c) dst[c] += src[c];
                }
                Matrix x = instance_rows(art.x_beh, i, m, d);
                Matrix d_x(m, d);
                attention_backward(x, params.attn_nip, mask, true, art.nip_attn[i], d_out,
                                   &d_x);
                double* dst = d_x_beh.row(i * m);
                for (size_t j = 0; j < d_x.size(); ++j) dst[j] += d_x.data[j];
            }
            // next-item targets are behavior embeddings shifted by one
            if (grads.d_next_items.size())
                for (int t = 0; t < positions; ++t)
                    if (art.nip_valid[size_t(i) * positions + t]) {
                        const double* src = grads.d_next_items.row(i * positions + t);
                        double* beh = d_x_beh.row(i * m + t + 1);
                        for (int c = 0; c < d; ++c) beh[c] += src[c];
                    }
        }
    }

    embed_profile_backward(params.tables, params.schema, batch, d_e_up);
    embed_item_backward(params.tables, params.schema, batch, d_e_item);
    embed_context_backward(params.tables, params.schema, batch, d_e_ctx);
    embed_behaviors_backward(params.tables, params.schema, batch, d_x_beh);
}

double calibrate_probability(double p, double w) {
    if (w <= 0.0 || w > 1.0)
        throw ConfigError("calibrate: sampling ratio must be in (0, 1], got " +
                          std::to_string(w));
    return p / (p + (1.0 - p) / w);
}

std::vector<double> predict_calibrated(const ModelParams& params, const Batch& batch, double w) {
    if (w <= 0.0 || w > 1.0)
        throw ConfigError("calibrate: sampling ratio must be in (0, 1], got " +
                          std::to_string(w));
    ForwardArtifacts art = forward(params, batch, RunMode::Inference);
    for (double& p : art.p) p = calibrate_probability(p, w);
    return art.p;
}

}  // namespace ctrkit
