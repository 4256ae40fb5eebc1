#pragma once

#include <string>
#include <vector>

#include "ctrkit/rng.hpp"
#include "ctrkit/tensor.hpp"

namespace ctrkit {

enum class FieldRole { UserProfile, BehaviorItem, BehaviorCategory, Item, Context };

const char* field_role_name(FieldRole role);
FieldRole field_role_from_name(const std::string& name);

struct FieldSchema {
    std::string name;
    int cardinality = 0;  // K
    FieldRole role = FieldRole::Context;
    int dim = 0;  // d
};

// Field layout for one dataset. Exactly one behavior-item and one
// behavior-category field; profile/item/context groups keep file order.
struct Schema {
    std::vector<FieldSchema> fields;
    std::vector<int> profile_fields;
    std::vector<int> item_fields;
    std::vector<int> context_fields;
    int behavior_item_field = -1;
    int behavior_category_field = -1;

    static Schema from_fields(std::vector<FieldSchema> fields);
    static Schema load(const std::string& path, int dim);
    void save(const std::string& path) const;
    std::string to_text() const;
    static Schema from_text(const std::string& text, int dim);

    int num_profile() const { return int(profile_fields.size()); }
    int num_item() const { return int(item_fields.size()); }
    int num_context() const { return int(context_fields.size()); }
};

// One K x d table with sparse gradient accumulation: only rows in `touched`
// carry nonzero gradient, and only those rows see the optimizer.
struct EmbeddingTable {
    FieldSchema field;
    Matrix weight;  // K x d
    Matrix grad;    // K x d, rows outside touched are exactly zero
    std::vector<int> touched;
    std::vector<uint8_t> touched_flag;  // K bytes

    EmbeddingTable() = default;
    explicit EmbeddingTable(const FieldSchema& f)
        : field(f), weight(f.cardinality, f.dim), grad(f.cardinality, f.dim),
          touched_flag(size_t(f.cardinality), 0) {}

    void init(Rng& rng);  // uniform on [-1/sqrt(d), 1/sqrt(d)]

    const double* lookup(int index) const;
    void accumulate_grad(int index, const double* g);
    void clear_grads();  // zeroes touched rows only
};

std::vector<EmbeddingTable> make_tables(const Schema& schema);

struct Instance;  // data.hpp
struct Batch;     // data.hpp

// Group encoders. Row i of the result concatenates the group's field vectors
// for instance i; a behavior row is the elementwise sum of the item-id and
// category-id embeddings at that position (padded positions stay zero).
Matrix embed_profile(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                     const Batch& batch);
Matrix embed_item(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                  const Batch& batch);
Matrix embed_context(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                     const Batch& batch);
// (n*m) x d, instance i occupies rows [i*m, (i+1)*m)
Matrix embed_behaviors(const std::vector<EmbeddingTable>& tables, const Schema& schema,
                       const Batch& batch);

// Scatter-add upstream grads into the tables (serial: instances may share rows).
void embed_profile_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                            const Batch& batch, const Matrix& d_out);
void embed_item_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                         const Batch& batch, const Matrix& d_out);
void embed_context_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                            const Batch& batch, const Matrix& d_out);
void embed_behaviors_backward(std::vector<EmbeddingTable>& tables, const Schema& schema,
                              const Batch& batch, const Matrix& d_out);

}  // namespace ctrkit
