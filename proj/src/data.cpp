#include "ctrkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctrkit/errors.hpp"

namespace ctrkit {

namespace {

// Index token: optional leading alphabetic tag, then decimal digits.
int parse_index(const std::string& tok, int line_no) {
    size_t i = 0;
    while (i < tok.size() && std::isalpha(static_cast<unsigned char>(tok[i]))) ++i;
    if (i == tok.size())
        throw DataError("line " + std::to_string(line_no) + ": non-integer index '" + tok + "'");
    int value = 0;
    for (; i < tok.size(); ++i) {
        char c = tok[i];
        if (c < '0' || c > '9')
            throw DataError("line " + std::to_string(line_no) + ": non-integer index '" + tok +
                            "'");
        value = value * 10 + (c - '0');
        if (value < 0)
            throw DataError("line " + std::to_string(line_no) + ": index overflow in '" + tok +
                            "'");
    }
    return value;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

void check_index(int value, const FieldSchema& f, int line_no) {
    if (value >= f.cardinality)
        throw DataError("line " + std::to_string(line_no) + ": index " + std::to_string(value) +
                        " out of range for field '" + f.name + "' (cardinality " +
                        std::to_string(f.cardinality) + ")");
}

std::vector<int> parse_group(const std::string& column, const Schema& schema,
                             const std::vector<int>& group, int line_no) {
    std::vector<std::string> toks = split(column, '|');
    if (toks.size() != group.size())
        throw DataError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(group.size()) + " fields, got " +
                        std::to_string(toks.size()) + " in column '" + column + "'");
    std::vector<int> idx(group.size());
    for (size_t f = 0; f < group.size(); ++f) {
        idx[f] = parse_index(toks[f], line_no);
        check_index(idx[f], schema.fields[group[f]], line_no);
    }
    return idx;
}

}  // namespace

std::vector<Instance> parse_dataset(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("parse_dataset: cannot open " + path);
    std::vector<Instance> out;
    std::string line;
    int line_no = 0;
    const FieldSchema& bi = schema.fields[schema.behavior_item_field];
    const FieldSchema& bc = schema.fields[schema.behavior_category_field];
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols = split(line, '\t');
        if (cols.size() != 5)
            throw DataError("line " + std::to_string(line_no) + ": expected 5 columns, got " +
                            std::to_string(cols.size()));
        Instance inst;
        int label = parse_index(cols[0], line_no);
        if (label != 0 && label != 1)
            throw DataError("line " + std::to_string(line_no) + ": label must be 0 or 1, got " +
                            std::to_string(label));
        inst.label = label;
        inst.profile = parse_group(cols[1], schema, schema.profile_fields, line_no);
        for (const std::string& pair : split(cols[2], '|')) {
            std::vector<std::string> ic = split(pair, ':');
            if (ic.size() != 2)
                throw DataError("line " + std::to_string(line_no) +
                                ": behavior entry '" + pair + "' is not item:category");
            int item = parse_index(ic[0], line_no);
            int cat = parse_index(ic[1], line_no);
            check_index(item, bi, line_no);
            check_index(cat, bc, line_no);
            inst.behaviors.emplace_back(item, cat);
        }
        inst.item = parse_group(cols[3], schema, schema.item_fields, line_no);
        inst.context = parse_group(cols[4], schema, schema.context_fields, line_no);
        out.push_back(std::move(inst));
    }
    return out;
}

void write_dataset(const std::string& path, const std::vector<Instance>& instances) {
    std::ofstream out(path);
    if (!out) throw DataError("write_dataset: cannot write " + path);
    std::string buf;
    buf.reserve(1 << 20);
    char tmp[32];
    auto put_int = [&](int v) {
        int len = std::snprintf(tmp, sizeof tmp, "%d", v);
        buf.append(tmp, len);
    };
    for (const Instance& inst : instances) {
        put_int(inst.label);
        buf.push_back('\t');
        for (size_t f = 0; f < inst.profile.size(); ++f) {
            if (f) buf.push_back('|');
            put_int(inst.profile[f]);
        }
        buf.push_back('\t');
        for (size_t t = 0; t < inst.behaviors.size(); ++t) {
            if (t) buf.push_back('|');
            put_int(inst.behaviors[t].first);
            buf.push_back(':');
            put_int(inst.behaviors[t].second);
        }
        buf.push_back('\t');
        for (size_t f = 0; f < inst.item.size(); ++f) {
            if (f) buf.push_back('|');
            put_int(inst.item[f]);
        }
        buf.push_back('\t');
        for (size_t f = 0; f < inst.context.size(); ++f) {
            if (f) buf.push_back('|');
            put_int(inst.context[f]);
        }
        buf.push_back('\n');
        if (buf.size() > (1 << 20) - 4096) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

std::vector<Instance> downsample_negatives(const std::vector<Instance>& in, double w, Rng& rng) {
    if (w < 0.0 || w > 1.0)
        throw ConfigError("downsample: ratio must be in [0, 1], got " + std::to_string(w));
    std::vector<Instance> out;
    out.reserve(in.size());
    for (const Instance& inst : in) {
        // one draw per negative regardless of outcome keeps the stream aligned
        if (inst.label == 1)
            out.push_back(inst);
        else if (rng.bernoulli(w))
            out.push_back(inst);
    }
    return out;
}

std::vector<Instance> shuffle_stream(const std::vector<Instance>& in, int buffer_size, Rng& rng) {
    if (buffer_size < 1) buffer_size = 1;
    std::vector<Instance> out;
    out.reserve(in.size());
    std::vector<Instance> buffer;
    buffer.reserve(buffer_size);
    for (const Instance& inst : in) {
        if (int(buffer.size()) < buffer_size) {
            buffer.push_back(inst);
            continue;
        }
        size_t pick = rng.uniform_int(buffer.size());
        out.push_back(buffer[pick]);
        buffer[pick] = inst;
    }
    // drain in random order
    while (!buffer.empty()) {
        size_t pick = rng.uniform_int(buffer.size());
        out.push_back(std::move(buffer[pick]));
        buffer[pick] = std::move(buffer.back());
        buffer.pop_back();
    }
    return out;
}

Batch pack_batch(const std::vector<Instance>& in, size_t begin, size_t end, int m_max) {
    Batch b;
    b.n = int(end - begin);
    b.m = m_max;
    b.labels.reserve(b.n);
    b.valid.reserve(b.n);
    b.beh_item.assign(size_t(b.n) * m_max, -1);
    b.beh_cat.assign(size_t(b.n) * m_max, -1);
    for (size_t s = begin; s < end; ++s) {
        const Instance& inst = in[s];
        int i = int(s - begin);
        b.labels.push_back(inst.label);
        b.n_pos += inst.label == 1;
        for (int v : inst.profile) b.profile_idx.push_back(v);
        for (int v : inst.item) b.item_idx.push_back(v);
        for (int v : inst.context) b.context_idx.push_back(v);
        // keep the most recent m_max behaviors
        size_t len = inst.behaviors.size();
        size_t start = len > size_t(m_max) ? len - m_max : 0;
        int t = 0;
        for (size_t j = start; j < len; ++j, ++t) {
            b.beh_item[size_t(i) * m_max + t] = inst.behaviors[j].first;
            b.beh_cat[size_t(i) * m_max + t] = inst.behaviors[j].second;
        }
        b.valid.push_back(t);
    }
    return b;
}

std::vector<Batch> batches(const std::vector<Instance>& in, int batch_size, int shuffle_buffer,
                           int m_max, Rng& rng, bool training) {
    if (training && batch_size < 2)
        throw ConfigError("batches: training needs batch size >= 2 for in-batch negatives");
    if (batch_size < 1) throw ConfigError("batches: batch size must be >= 1");
    std::vector<Instance> ordered =
        shuffle_buffer > 1 ? shuffle_stream(in, shuffle_buffer, rng) : in;
    std::vector<Batch> out;
    size_t full = ordered.size() / batch_size;
    for (size_t k = 0; k < full; ++k)
        out.push_back(pack_batch(ordered, k * batch_size, (k + 1) * batch_size, m_max));
    size_t rem = ordered.size() % batch_size;
    if (rem > 0 && !training)
        out.push_back(pack_batch(ordered, full * batch_size, ordered.size(), m_max));
    return out;
}

Schema synthetic_schema(const SyntheticConfig& cfg, int dim) {
    std::vector<FieldSchema> fields = {
        {"user_id", cfg.num_users, FieldRole::UserProfile, dim},
        {"user_group", 16, FieldRole::UserProfile, dim},
        {"b_item", cfg.num_items, FieldRole::BehaviorItem, dim},
        {"b_cat", cfg.num_categories, FieldRole::BehaviorCategory, dim},
        {"item_id", cfg.num_items, FieldRole::Item, dim},
        {"item_cat", cfg.num_categories, FieldRole::Item, dim},
        {"ctx_slot", 8, FieldRole::Context, dim},
    };
    return Schema::from_fields(std::move(fields));
}

namespace {

struct LatentWorld {
    int latent_dim;
    std::vector<double> users;  // num_users x latent_dim
    std::vector<double> items;  // num_items x latent_dim
    std::vector<int> item_cat;
    std::vector<int> user_group;
    std::vector<double> ctx_noise;            // per context slot
    std::vector<std::vector<int>> histories;  // behavior item ids per user

    double affinity(int u, int v) const {
        const double* a = users.data() + size_t(u) * latent_dim;
        const double* b = items.data() + size_t(v) * latent_dim;
        double s = 0.0;
        for (int k = 0; k < latent_dim; ++k) s += a[k] * b[k];
        return s;
    }
};

LatentWorld build_world(const SyntheticConfig& cfg) {
    LatentWorld w;
    w.latent_dim = cfg.latent_dim;
    Rng lat = Rng::from(cfg.seed, "syn:latent");
    w.users.resize(size_t(cfg.num_users) * cfg.latent_dim);
    for (double& v : w.users) v = lat.normal();
    w.items.resize(size_t(cfg.num_items) * cfg.latent_dim);
    for (double& v : w.items) v = lat.normal();

    Rng cat = Rng::from(cfg.seed, "syn:categories");
    w.item_cat.resize(cfg.num_items);
    for (int& c : w.item_cat) c = int(cat.uniform_int(cfg.num_categories));

    // coarse sign-pattern group over the first four latent axes
    w.user_group.resize(cfg.num_users);
    for (int u = 0; u < cfg.num_users; ++u) {
        int g = 0;
        for (int k = 0; k < std::min(4, cfg.latent_dim); ++k)
            g = g * 2 + (w.users[size_t(u) * cfg.latent_dim + k] > 0.0);
        w.user_group[u] = g;
    }

    Rng ctx = Rng::from(cfg.seed, "syn:context");
    w.ctx_noise.resize(8);
    for (double& v : w.ctx_noise) v = cfg.context_noise_scale * ctx.normal();

    // behavior histories sampled proportional to softmax(u . v)
    Rng beh = Rng::from(cfg.seed, "syn:behaviors");
    w.histories.resize(cfg.num_users);
    std::vector<double> probs(cfg.num_items);
    for (int u = 0; u < cfg.num_users; ++u) {
        double mx = -INFINITY;
        for (int v = 0; v < cfg.num_items; ++v) {
            probs[v] = w.affinity(u, v);
            mx = std::max(mx, probs[v]);
        }
        double sum = 0.0;
        for (double& p : probs) {
            p = std::exp(p - mx);
            sum += p;
        }
        for (double& p : probs) p /= sum;
        std::vector<double> cdf(probs.size());
        double acc = 0.0;
        for (size_t v = 0; v < probs.size(); ++v) {
            acc += probs[v];
            cdf[v] = acc;
        }
        w.histories[u].resize(cfg.behaviors_per_user);
        for (int t = 0; t < cfg.behaviors_per_user; ++t) {
            double r = beh.uniform() * acc;
            w.histories[u][t] =
                int(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
        }
    }
    return w;
}

void emit_split(const SyntheticConfig& cfg, const LatentWorld& w, int count,
                const std::string& data_path, const std::string* sidecar_path,
                const char* stream_name, double* positive_rate) {
    Rng rng = Rng::from(cfg.seed, stream_name);
    std::vector<Instance> rows;
    rows.reserve(count);
    std::ofstream sidecar;
    if (sidecar_path) {
        sidecar.open(*sidecar_path);
        if (!sidecar) throw DataError("synthesize: cannot write " + *sidecar_path);
        sidecar << "user\titem\ttrue_p\n";
    }
    int positives = 0;
    for (int t = 0; t < count; ++t) {
        int u = int(rng.uniform_int(cfg.num_users));
        int v = int(rng.uniform_int(cfg.num_items));
        int c = int(rng.uniform_int(8));
        double logit = w.affinity(u, v) + cfg.base_click_logit_offset + w.ctx_noise[c];
        double p = 1.0 / (1.0 + std::exp(-logit));
        int label = rng.bernoulli(p) ? 1 : 0;
        positives += label;
        // the visible history is a chronological prefix of the user's sequence
        int hist_len = 1 + int(rng.uniform_int(uint64_t(cfg.behaviors_per_user)));
        Instance inst;
        inst.label = label;
        inst.profile = {u, w.user_group[u]};
        inst.behaviors.reserve(hist_len);
        for (int j = 0; j < hist_len; ++j) {
            int it = w.histories[u][j];
            inst.behaviors.emplace_back(it, w.item_cat[it]);
        }
        inst.item = {v, w.item_cat[v]};
        inst.context = {c};
        rows.push_back(std::move(inst));
        if (sidecar_path) {
            char line[96];
            int len = std::snprintf(line, sizeof line, "%d\t%d\t%.17g\n", u, v, p);
            sidecar.write(line, len);
        }
    }
    write_dataset(data_path, rows);
    if (positive_rate) *positive_rate = count > 0 ? double(positives) / count : 0.0;
}

}  // namespace

SyntheticStats synthesize_dataset(const SyntheticConfig& cfg, const std::string& out_dir) {
    if (cfg.num_users < 1 || cfg.num_items < 1 || cfg.num_categories < 1 ||
        cfg.latent_dim < 1 || cfg.behaviors_per_user < 1 || cfg.impressions < 1)
        throw ConfigError("synthesize: all counts must be >= 1");
    std::filesystem::create_directories(out_dir);
    LatentWorld w = build_world(cfg);
    SyntheticStats stats;
    emit_split(cfg, w, cfg.impressions, out_dir + "/train.tsv", nullptr, "syn:train",
               &stats.train_positive_rate);
    std::string sidecar = out_dir + "/sidecar.tsv";
    emit_split(cfg, w, cfg.test_impressions, out_dir + "/test.tsv", &sidecar, "syn:test",
               &stats.test_positive_rate);
    synthetic_schema(cfg, 1).save(out_dir + "/schema.txt");
    return stats;
}

}  // namespace ctrkit
