#include "ctrkit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ctrkit/errors.hpp"

namespace ctrkit {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        // training
        "d", "d_prime", "m_max", "tau1", "tau2", "lambda_uim", "lambda_nip", "lr",
        "batch_size", "epochs", "sampling_ratio", "seed", "tower_widths", "shuffle_buffer",
        "save_every", "max_steps",
        // synthetic generator
        "num_users", "num_items", "num_categories", "latent_dim", "context_noise_scale",
        "base_click_logit_offset", "behaviors_per_user", "impressions", "test_impressions"};
    return keys;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    Config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config " + path + " line " + std::to_string(line_no) +
                              ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        cfg.set(key, value);
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw ConfigError("config: unknown key '" + key + "'");
    kv[key] = value;
}

int Config::get_int(const std::string& key, int fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: " + it->second);
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
    }
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: " + it->second);
    }
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::vector<int> out;
    std::istringstream is(it->second);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            out.push_back(std::stoi(trim(tok)));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' has non-integer entry: " + tok);
        }
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' is an empty list");
    return out;
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.d = get_int("d", t.d);
    t.d_prime = get_int("d_prime", t.d_prime);
    t.m_max = get_int("m_max", t.m_max);
    t.tau1 = get_double("tau1", t.tau1);
    t.tau2 = get_double("tau2", t.tau2);
    t.lambda_uim = get_double("lambda_uim", t.lambda_uim);
    t.lambda_nip = get_double("lambda_nip", t.lambda_nip);
    t.lr = get_double("lr", t.lr);
    t.batch_size = get_int("batch_size", t.batch_size);
    t.epochs = get_int("epochs", t.epochs);
    t.sampling_ratio = get_double("sampling_ratio", t.sampling_ratio);
    t.seed = get_u64("seed", t.seed);
    t.tower_widths = get_int_list("tower_widths", t.tower_widths);
    t.shuffle_buffer = get_int("shuffle_buffer", t.shuffle_buffer);
    t.save_every = get_int("save_every", t.save_every);
    t.max_steps = get_int("max_steps", int(t.max_steps));
    return t;
}

SyntheticConfig Config::synthetic_config() const {
    SyntheticConfig s;
    s.num_users = get_int("num_users", s.num_users);
    s.num_items = get_int("num_items", s.num_items);
    s.num_categories = get_int("num_categories", s.num_categories);
    s.latent_dim = get_int("latent_dim", s.latent_dim);
    s.context_noise_scale = get_double("context_noise_scale", s.context_noise_scale);
    s.base_click_logit_offset = get_double("base_click_logit_offset", s.base_click_logit_offset);
    s.behaviors_per_user = get_int("behaviors_per_user", s.behaviors_per_user);
    s.impressions = get_int("impressions", s.impressions);
    s.test_impressions = get_int("test_impressions", s.test_impressions);
    s.seed = get_u64("seed", s.seed);
    return s;
}

std::string Config::resolved_text() const {
    TrainConfig t = train_config();
    SyntheticConfig s = synthetic_config();
    std::ostringstream os;
    os.precision(17);
    os << "d=" << t.d << "\n";
    os << "d_prime=" << t.d_prime << "\n";
    os << "m_max=" << t.m_max << "\n";
    os << "tau1=" << t.tau1 << "\n";
    os << "tau2=" << t.tau2 << "\n";
    os << "lambda_uim=" << t.lambda_uim << "\n";
    os << "lambda_nip=" << t.lambda_nip << "\n";
    os << "lr=" << t.lr << "\n";
    os << "batch_size=" << t.batch_size << "\n";
    os << "epochs=" << t.epochs << "\n";
    os << "sampling_ratio=" << t.sampling_ratio << "\n";
    os << "seed=" << t.seed << "\n";
    os << "tower_widths=";
    for (size_t i = 0; i < t.tower_widths.size(); ++i)
        os << (i ? "," : "") << t.tower_widths[i];
    os << "\n";
    os << "shuffle_buffer=" << t.shuffle_buffer << "\n";
    os << "save_every=" << t.save_every << "\n";
    os << "max_steps=" << t.max_steps << "\n";
    os << "num_users=" << s.num_users << "\n";
    os << "num_items=" << s.num_items << "\n";
    os << "num_categories=" << s.num_categories << "\n";
    os << "latent_dim=" << s.latent_dim << "\n";
    os << "context_noise_scale=" << s.context_noise_scale << "\n";
    os << "base_click_logit_offset=" << s.base_click_logit_offset << "\n";
    os << "behaviors_per_user=" << s.behaviors_per_user << "\n";
    os << "impressions=" << s.impressions << "\n";
    os << "test_impressions=" << s.test_impressions << "\n";
    return os.str();
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad number in list: " + tok);
        }
    }
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

std::vector<uint64_t> parse_u64_list(const std::string& s) {
    std::vector<uint64_t> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            out.push_back(std::stoull(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad integer in list: " + tok);
        }
    }
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

}  // namespace ctrkit
