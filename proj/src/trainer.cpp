#include "ctrkit/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctrkit/errors.hpp"

namespace ctrkit {

AdamState::AdamState(ModelParams& params, double lr_in) : lr(lr_in) {
    for (ParamRef& ref : params.param_refs()) {
        m.emplace_back(ref.value->rows, ref.value->cols);
        v.emplace_back(ref.value->rows, ref.value->cols);
    }
}

static void adam_update_span(double* theta, double* m, double* v, const double* g, size_t len,
                             const AdamState& s, double bc1, double bc2) {
    for (size_t i = 0; i < len; ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        theta[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

void adam_step(ModelParams& params, AdamState& state) {
    std::vector<ParamRef> refs = params.param_refs();
    if (refs.size() != state.m.size())
        throw DimensionError("adam_step: state holds " + std::to_string(state.m.size()) +
                             " buffers for " + std::to_string(refs.size()) + " params");
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (size_t r = 0; r < refs.size(); ++r) {
        ParamRef& ref = refs[r];
        if (!ref.value->same_shape(state.m[r]))
            throw DimensionError("adam_step: moment shape " + state.m[r].shape_str() +
                                 " vs param " + ref.value->shape_str());
        if (ref.table) {
            const int d = ref.table->field.dim;
            for (int row : ref.table->touched)
                adam_update_span(ref.value->row(row), state.m[r].row(row), state.v[r].row(row),
                                 ref.grad->row(row), size_t(d), state, bc1, bc2);
        } else {
            adam_update_span(ref.value->data.data(), state.m[r].data.data(),
                             state.v[r].data.data(), ref.grad->data.data(), ref.value->size(),
                             state, bc1, bc2);
        }
    }
    params.clear_grads();
}

void TrainConfig::validate() const {
    if (tau1 <= 0.0 || tau2 <= 0.0) throw ConfigError("config: temperatures must be positive");
    if (lambda_uim < 0.0 || lambda_nip < 0.0)
        throw ConfigError("config: loss weights must be nonnegative");
    if (sampling_ratio <= 0.0 || sampling_ratio > 1.0)
        throw ConfigError("config: sampling_ratio must be in (0, 1]");
    if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2 for training");
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (d < 1 || d_prime < 1 || m_max < 2) throw ConfigError("config: bad model dimensions");
    if (lr <= 0.0) throw ConfigError("config: learning rate must be positive");
}

ModelConfig TrainConfig::model_config() const {
    ModelConfig mc;
    mc.d = d;
    mc.d_prime = d_prime;
    mc.m_max = m_max;
    mc.tower_widths = tower_widths;
    return mc;
}

TrainResult train(const TrainConfig& cfg, const Schema& schema,
                  const std::vector<Instance>& data, const std::string* resume_checkpoint,
                  const std::string* checkpoint_out) {
    cfg.validate();

    TrainResult result;
    int64_t start_step = 0;
    if (resume_checkpoint) {
        Checkpoint ck = load_checkpoint(*resume_checkpoint);
        result.params = std::move(ck.params);
        result.adam = std::move(ck.adam);
        start_step = result.adam.t;
    } else {
        result.params = ModelParams::build(schema, cfg.model_config());
        result.params.init(cfg.seed);
        result.adam = AdamState(result.params, cfg.lr);
    }

    Rng ds_rng = Rng::from(cfg.seed, "downsample");
    std::vector<Instance> sampled = downsample_negatives(data, cfg.sampling_ratio, ds_rng);
    if (sampled.size() < size_t(cfg.batch_size))
        throw DataError("train: only " + std::to_string(sampled.size()) +
                        " instances after down-sampling, need at least one full batch");

    const bool use_uim = cfg.lambda_uim > 0.0;
    const bool use_nip = cfg.lambda_nip > 0.0;

    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::from(cfg.seed, "shuffle", uint64_t(epoch));
        std::vector<Batch> bs = batches(sampled, cfg.batch_size, cfg.shuffle_buffer, cfg.m_max,
                                        shuffle_rng, /*training=*/true);
        for (Batch& batch : bs) {
            ++step;
            if (step <= start_step) continue;  // replayed portion of a resumed run

            ForwardArtifacts art =
                forward(result.params, batch, RunMode::Train, use_uim, use_nip);

            LossGrads lg;
            lg.d_p.assign(batch.n, 0.0);
            double l_main = bce_loss(art.p, batch.labels, 1.0, &lg.d_p);

            RunLogRow row;
            row.step = step;
            row.n = batch.n;
            row.n_pos = batch.n_pos;
            row.l_main = l_main;

            if (use_uim) {
                lg.d_r_user = Matrix(art.r_user.rows, art.r_user.cols);
                lg.d_r_item = Matrix(art.r_item.rows, art.r_item.cols);
                UimBatchInputs in{&art.r_user, &art.r_item, &batch.labels, cfg.tau1};
                LossResult lr_uim = uim_loss(in, cfg.lambda_uim, &lg.d_r_user, &lg.d_r_item);
                row.l_uim = lr_uim.value;
                row.uim_skipped = lr_uim.skipped;
            }
            if (use_nip && art.has_nip) {
                lg.d_prefix_reps = Matrix(art.prefix_reps.rows, art.prefix_reps.cols);
                lg.d_next_items = Matrix(art.next_items.rows, art.next_items.cols);
                NipBatchInputs in{&art.prefix_reps, &art.next_items, &art.nip_valid, batch.n,
                                  batch.m, cfg.tau2};
                LossResult lr_nip = nip_loss(in, cfg.lambda_nip, &lg.d_prefix_reps,
                                             &lg.d_next_items);
                row.l_nip = lr_nip.value;
                row.nip_skipped = lr_nip.skipped;
            }
            row.l_total = total_loss(row.l_main, row.l_uim, row.l_nip, cfg.lambda_uim,
                                     cfg.lambda_nip);
            if (!std::isfinite(row.l_main))
                throw NumericError("train: non-finite main loss at step " +
                                   std::to_string(step));
            if (!std::isfinite(row.l_uim))
                throw NumericError("train: non-finite UIM loss at step " + std::to_string(step));
            if (!std::isfinite(row.l_nip))
                throw NumericError("train: non-finite NIP loss at step " + std::to_string(step));

            backward(result.params, batch, art, lg);
            adam_step(result.params, result.adam);
            result.log.push_back(row);

            if (checkpoint_out && cfg.save_every > 0 && step % cfg.save_every == 0)
                save_checkpoint(result.params, result.adam, *checkpoint_out);
            if (cfg.max_steps > 0 && step >= cfg.max_steps) {
                if (checkpoint_out) save_checkpoint(result.params, result.adam, *checkpoint_out);
                return result;
            }
        }
    }
    if (checkpoint_out) save_checkpoint(result.params, result.adam, *checkpoint_out);
    return result;
}

// ---------------------------------------------------------------------------
// checkpoint format
// ---------------------------------------------------------------------------

static constexpr char kMagic[4] = {'A', 'T', 'C', 'K'};
static constexpr uint32_t kVersion = 1;

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t k, const char* what) {
        if (pos + k > buf.size())
            throw DataError("corrupt checkpoint " + path + ": truncated reading " + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) {
        uint64_t bits = u64(what);
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string bytes(size_t k, const char* what) {
        need(k, what);
        std::string s = buf.substr(pos, k);
        pos += k;
        return s;
    }
};

void put_segment(std::string& out, const std::string& name, const Matrix& m) {
    put_u32(out, uint32_t(name.size()));
    out.append(name);
    put_u32(out, uint32_t(m.rows));
    put_u32(out, uint32_t(m.cols));
    for (double d : m.data) put_f64(out, d);
}

}  // namespace

void save_checkpoint(ModelParams& params, const AdamState& state, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);

    std::string schema_text = params.schema.to_text();
    std::ostringstream cfg;
    cfg << "d=" << params.cfg.d << "\n";
    cfg << "d_prime=" << params.cfg.d_prime << "\n";
    cfg << "m_max=" << params.cfg.m_max << "\n";
    cfg << "tower_widths=";
    for (size_t i = 0; i < params.cfg.tower_widths.size(); ++i)
        cfg << (i ? "," : "") << params.cfg.tower_widths[i];
    cfg << "\n";
    std::string cfg_text = cfg.str();
    put_u32(out, uint32_t(schema_text.size()));
    out.append(schema_text);
    put_u32(out, uint32_t(cfg_text.size()));
    out.append(cfg_text);

    std::vector<ParamRef> refs = params.param_refs();
    uint32_t segments = uint32_t(refs.size() * 3 + 2);
    put_u32(out, segments);
    Matrix scalar(1, 1);
    scalar.at(0, 0) = double(state.t);
    put_segment(out, "adam.t", scalar);
    scalar.at(0, 0) = state.lr;
    put_segment(out, "adam.lr", scalar);
    for (size_t r = 0; r < refs.size(); ++r) {
        put_segment(out, refs[r].name, *refs[r].value);
        put_segment(out, "adam.m." + refs[r].name, state.m[r]);
        put_segment(out, "adam.v." + refs[r].name, state.v[r]);
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_checkpoint: cannot write " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string buf = ss.str();
    Reader r{buf, 0, path};

    std::string magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw DataError("corrupt checkpoint " + path + ": bad magic");
    uint32_t version = r.u32("version");
    if (version != kVersion)
        throw DataError("corrupt checkpoint " + path + ": unsupported version " +
                        std::to_string(version));

    uint32_t schema_len = r.u32("schema length");
    std::string schema_text = r.bytes(schema_len, "schema");
    uint32_t cfg_len = r.u32("config length");
    std::string cfg_text = r.bytes(cfg_len, "config");

    ModelConfig mc;
    try {
        std::istringstream is(cfg_text);
        std::string line;
        while (std::getline(is, line)) {
            size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(0, eq), val = line.substr(eq + 1);
            if (key == "d") mc.d = std::stoi(val);
            else if (key == "d_prime") mc.d_prime = std::stoi(val);
            else if (key == "m_max") mc.m_max = std::stoi(val);
            else if (key == "tower_widths") {
                mc.tower_widths.clear();
                std::istringstream vs(val);
                std::string tok;
                while (std::getline(vs, tok, ',')) mc.tower_widths.push_back(std::stoi(tok));
            }
        }
    } catch (const std::exception&) {
        throw DataError("corrupt checkpoint " + path + ": bad model dimensions");
    }

    Checkpoint ck;
    ck.params = ModelParams::build(Schema::from_text(schema_text, mc.d), mc);
    ck.adam = AdamState(ck.params, 1e-3);

    uint32_t segments = r.u32("segment count");
    std::vector<ParamRef> refs = ck.params.param_refs();
    auto find_target = [&](const std::string& name) -> Matrix* {
        if (name == "adam.t" || name == "adam.lr") return nullptr;  // handled below
        std::string base = name;
        int kind = 0;
        if (base.rfind("adam.m.", 0) == 0) {
            base = base.substr(7);
            kind = 1;
        } else if (base.rfind("adam.v.", 0) == 0) {
            base = base.substr(7);
            kind = 2;
        }
        for (size_t i = 0; i < refs.size(); ++i)
            if (refs[i].name == base)
                return kind == 0 ? refs[i].value : kind == 1 ? &ck.adam.m[i] : &ck.adam.v[i];
        return nullptr;
    };

    std::vector<uint8_t> seen(refs.size() * 3, 0);
    for (uint32_t s = 0; s < segments; ++s) {
        uint32_t name_len = r.u32("segment name length");
        std::string name = r.bytes(name_len, "segment name");
        uint32_t rows = r.u32("segment rows");
        uint32_t cols = r.u32("segment cols");
        if (name == "adam.t") {
            ck.adam.t = int64_t(r.f64("adam.t"));
            continue;
        }
        if (name == "adam.lr") {
            ck.adam.lr = r.f64("adam.lr");
            continue;
        }
        Matrix* target = find_target(name);
        if (!target)
            throw DataError("corrupt checkpoint " + path + ": unknown segment '" + name + "'");
        if (int(rows) != target->rows || int(cols) != target->cols)
            throw DataError("corrupt checkpoint " + path + ": segment '" + name + "' is " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                            target->shape_str());
        for (double& d : target->data) d = r.f64(name.c_str());
    }
    if (r.pos != buf.size())
        throw DataError("corrupt checkpoint " + path + ": trailing bytes");
    return ck;
}

void write_run_log(const std::string& path, const std::vector<RunLogRow>& rows) {
    std::ofstream f(path);
    if (!f) throw DataError("write_run_log: cannot write " + path);
    f << "step\tl_main\tl_uim\tl_nip\tl_total\tn\tn_plus\tuim_skipped\tnip_skipped\n";
    char line[256];
    for (const RunLogRow& r : rows) {
        int len = std::snprintf(line, sizeof line, "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%d\t%d\t%d\t%d\n",
                                (long long)r.step, r.l_main, r.l_uim, r.l_nip, r.l_total, r.n,
                                r.n_pos, int(r.uim_skipped), int(r.nip_skipped));
        f.write(line, len);
    }
}

}  // namespace ctrkit
