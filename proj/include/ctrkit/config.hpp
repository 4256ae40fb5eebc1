#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctrkit/data.hpp"
#include "ctrkit/trainer.hpp"

namespace ctrkit {

// Flat key=value configuration ('#' starts a comment). Command-line flags
// override file values; unknown keys are rejected to keep ablation scripts
// honest.
struct Config {
    std::map<std::string, std::string> kv;

    static Config load(const std::string& path);
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return kv.count(key) != 0; }

    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

    TrainConfig train_config() const;
    SyntheticConfig synthetic_config() const;

    // resolved key=value dump with every key the configs consumed
    std::string resolved_text() const;
};

std::vector<double> parse_double_list(const std::string& s);
std::vector<uint64_t> parse_u64_list(const std::string& s);

}  // namespace ctrkit
