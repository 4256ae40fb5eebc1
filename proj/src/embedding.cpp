#include "ctrkit/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctrkit/data.hpp"
#include "ctrkit/errors.hpp"

namespace ctrkit {

const char* field_role_name(FieldRole role) {
    switch (role) {
        case FieldRole::UserProfile: return "user-profile";
        case FieldRole::BehaviorItem: return "behavior-item";
        case FieldRole::BehaviorCategory: return "behavior-category";
        case FieldRole::Item: return "item";
        case FieldRole::Context: return "context";
    }
    return "?";
}

FieldRole field_role_from_name(const std::string& name) {
    if (name == "user-profile") return FieldRole::UserProfile;
    if (name == "behavior-item") return FieldRole::BehaviorItem;
    if (name == "behavior-category") return FieldRole::BehaviorCategory;
    if (name == "item") return FieldRole::Item;
    if (name == "context") return FieldRole::Context;
    throw DataError("schema: unknown field role '" + name + "'");
}

Schema Schema::from_fields(std::vector<FieldSchema> fields) {
    Schema s;
    s.fields = std::move(fields);
    for (size_t i = 0; i < s.fields.size(); ++i) {
        const FieldSchema& f = s.fields[i];
        if (f.cardinality < 1)
            throw DataError("schema: field '" + f.name + "' has cardinality < 1");
        if (f.dim < 1) throw DataError("schema: field '" + f.name + "' has dim < 1");
        for (size_t j = 0; j < i; ++j)
            if (s.fields[j].name == f.name)
                throw DataError("schema: duplicate field name '" + f.name + "'");
        switch (f.role) {
            case FieldRole::UserProfile: s.profile_fields.push_back(int(i)); break;
            case FieldRole::Item: s.item_fields.push_back(int(i)); break;
            case FieldRole::Context: s.context_fields.push_back(int(i)); break;
            case FieldRole::BehaviorItem:
                if (s.behavior_item_field >= 0)
                    throw DataError("schema: multiple behavior-item fields");
                s.behavior_item_field = int(i);
                break;
            case FieldRole::BehaviorCategory:
                if (s.behavior_category_field >= 0)
                    throw DataError("schema: multiple behavior-category fields");
                s.behavior_category_field = int(i);
                break;
        }
    }
    if (s.behavior_item_field < 0 || s.behavior_category_field < 0)
        throw DataError("schema: behavior-item and behavior-category fields are required");
    return s;
}

std::string Schema::to_text() const {
    std::ostringstream os;
    for (const FieldSchema& f : fields)
        os << f.name << " " << field_role_name(f.role) << " " << f.cardinality << "\n";
    return os.str();
}

Schema Schema::from_text(const std::string& text, int dim) {
    std::istringstream is(text);
    std::vector<FieldSchema> fields;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        FieldSchema f;
        std::string role;
        if (!(ls >> f.name >> role >> f.cardinality))
            throw DataError("schema line " + std::to_string(line_no) + ": expected 'name role cardinality'");
        f.role = field_role_from_name(role);
        f.dim = dim;
        fields.push_back(f);
    }
    return from_fields(std::move(fields));
}

Schema Schema::load(const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw DataError("schema: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), dim);
}

void Schema::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("schema: cannot write " + path);
    out << to_text();
}

void EmbeddingTable::init(Rng& rng) {
    double bound = 1.0 / std::sqrt(double(field.dim));
    for (double& v : weight.data) v = rng.uniform(-bound, bound);
}

const double* EmbeddingTable::lookup(int index) const {
    if (index < 0 || index >= field.cardinality)
        throw DataError("out-of-vocabulary index " + std::to_string(index) + " for field '" +
                        field.name + "' (cardinality " + std::to_string(field.cardinality) + ")");
    return weight.row(index);
}

void EmbeddingTable::accumulate_grad(int index, const double* g) {
    if (index < 0 || index >= field.cardinality)
        throw DataError("out-of-vocabulary gradient index " + std::to_string(index) +
                        " for field '" + field.name + "'");
    double* row = grad.row(index);
    for (int k = 0; k < field.dim; ++k) row[k] += g[k];
    if (!touched_flag[index]) {
        touched_flag[index] = 1;
        touched.push_back(index);
    }
}

void EmbeddingTable::clear_grads() {
    for (int r : touched) {
        std::fill(grad.row(r), grad.row(r) + field.dim, 0.0);
        touched_flag[r] = 0;
    }
    touched.clear();
}

std::vector<EmbeddingTable> make_tables(const Schema& schema) {
    std::vector<EmbeddingTable> tables;
    tables.reserve(schema.fields.size());
    for (const FieldSchema& f : schema.fields) tables.emplace_back(f);
    return tables;
}

static Matrix embed_group(const std::vector<EmbeddingTable>& tables,
                          const std::vector<int>& group, const std::vector<int>& idx,
                          int n, int d) {
    const int g = int(group.size());
    Matrix out(n, g * d);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double* orow = out.row(i);
        for (int f = 0; f < g; ++f) {
            const double* e = tables[group[f]].lookup(idx[size_t(i) * g + f]);
            for (int k = 0; k < d; ++k) orow[f * d + k] = e[k];
        }
    }
    return out;
}

static void embed_group_backward(std::vector<EmbeddingTable>& tables,
                                 const std::vector<int>& group, const std::vector<int>& idx,
                                 int n, int d, const Matrix& d_out) {
    const int g = int(group.size());
    if (d_out.rows != n || d_out.cols != g * d)
        throw DimensionError("embed_group_backward: grad shape " + d_out.shape_str());
    for (int i = 0; i < n; ++i) {
        const double* orow = d_out.row(i);
        for (int f = 0; f < g; ++f)
            tables[group[f]].accumulate_grad(idx[size_t(i) * g + f], orow + f * d);
    }
}

static int schema_dim(const Schema& schema) { return schema.fields.at(0).dim; }

Matrix embed_profile(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                     const Batch& batch) {
    return embed_group(tables, schema.profile_fields, batch.profile_idx, batch.n,
                       schema_dim(schema));
}

Matrix embed_item(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                  const Batch& batch) {
    return embed_group(tables, schema.item_fields, batch.item_idx, batch.n, schema_dim(schema));
}

Matrix embed_context(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                     const Batch& batch) {
    return embed_group(tables, schema.context_fields, batch.context_idx, batch.n,
                       schema_dim(schema));
}

Matrix embed_behaviors(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                       const Batch& batch) {
    const int d = schema_dim(schema);
    const int m = batch.m;
    const EmbeddingTable& items = tables[schema.behavior_item_field];
    const EmbeddingTable& cats = tables[schema.behavior_category_field];
    Matrix out(batch.n * m, d);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < batch.n; ++i) {
        for (int t = 0; t < batch.valid[i]; ++t) {
            const double* ei = items.lookup(batch.beh_item[size_t(i) * m + t]);
            const double* ec = cats.lookup(batch.beh_cat[size_t(i) * m + t]);
            double* orow = out.row(i * m + t);
            for (int k = 0; k < d; ++k) orow[k] = ei[k] + ec[k];
        }
    }
    return out;
}

void embed_profile_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                            const Batch& batch, const Matrix& d_out) {
    embed_group_backward(tables, schema.profile_fields, batch.profile_idx, batch.n,
                         schema_dim(schema), d_out);
}

void embed_item_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                         const Batch& batch, const Matrix& d_out) {
    embed_group_backward(tables, schema.item_fields, batch.item_idx, batch.n,
                         schema_dim(schema), d_out);
}

void embed_context_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                            const Batch& batch, const Matrix& d_out) {
    embed_group_backward(tables, schema.context_fields, batch.context_idx, batch.n,
                         schema_dim(schema), d_out);
}

void embed_behaviors_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                              const Batch& batch, const Matrix& d_out) {
    const int d = schema_dim(schema);
    const int m = batch.m;
    if (d_out.rows != batch.n * m || d_out.cols != d)
        throw DimensionError("embed_behaviors_backward: grad shape " + d_out.shape_str());
    EmbeddingTable& items = tables[schema.behavior_item_field];
    EmbeddingTable& cats = tables[schema.behavior_category_field];
    for (int i = 0; i < batch.n; ++i) {
        for (int t = 0; t < batch.valid[i]; ++t) {
            const double* g = d_out.row(i * m + t);
            items.accumulate_grad(batch.beh_item[size_t(i) * m + t], g);
            cats.accumulate_grad(batch.beh_cat[size_t(i) * m + t], g);
        }
    }
}

}  // namespace ctrkit
