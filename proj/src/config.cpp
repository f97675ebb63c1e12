#include "mgs/config.hpp"

#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mgs/binio.hpp"
#include "mgs/errors.hpp"

namespace mgs {

TrainConfig PipelineConfig::train_config() const {
    TrainConfig t;
    t.flow_tau = flow_tau;
    t.diff_thresh = diff_thresh;
    t.morph_kernel = morph_kernel;
    t.cluster_eps = eps;
    t.cluster_min_samples = min_samples;
    t.use_clustering = use_clustering;
    t.gim_top_n = top_n;
    t.deform_iters = deform_iters;
    t.optim_iters = optim_iters;
    t.loss_lambda = lambda;
    t.attention_percentile = percentile;
    t.lr_grid = lr_grid;
    t.lr_mlp = lr_mlp;
    t.seed = seed;
    return t;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(uint8_t(s[b]))) ++b;
    while (e > b && std::isspace(uint8_t(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double d;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": trailing characters in '" + v + "'");
    return d;
}

int parse_int(const std::string& key, const std::string& v) {
    size_t pos = 0;
    long l;
    try {
        l = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": trailing characters in '" + v + "'");
    return int(l);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    size_t pos = 0;
    unsigned long long l;
    try {
        l = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an unsigned integer: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key + ": trailing characters in '" + v + "'");
    return l;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

void validate(const PipelineConfig& c) {
    if (c.flow_tau <= 0) throw ConfigError("flow_tau must be positive");
    if (c.diff_thresh < 0) throw ConfigError("diff_thresh must be non-negative");
    if (c.morph_kernel < 1) throw ConfigError("morph_kernel must be >= 1");
    if (c.eps <= 0) throw ConfigError("eps must be positive");
    if (c.min_samples < 1) throw ConfigError("min_samples must be >= 1");
    if (c.top_n < 1 || c.top_n > 5) throw ConfigError("top_n must be in 1..5");
    if (c.deform_iters < 0 || c.optim_iters < 0) throw ConfigError("iteration counts must be >= 0");
    if (c.lambda < 0 || c.lambda > 1) throw ConfigError("lambda must be in [0,1]");
    if (c.percentile <= 0 || c.percentile > 100) throw ConfigError("percentile must be in (0,100]");
    if (c.lr_grid <= 0 || c.lr_mlp <= 0) throw ConfigError("learning rates must be positive");
    if (c.flow_source != "gt" && c.flow_source != "lk")
        throw ConfigError("flow_source must be 'gt' or 'lk'");
    if (c.lk_levels < 1) throw ConfigError("lk_levels must be >= 1");
}

} // namespace

PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig c;
    using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"flow_tau", [](auto& c, auto& k, auto& v) { c.flow_tau = parse_double(k, v); }},
        {"diff_thresh", [](auto& c, auto& k, auto& v) { c.diff_thresh = parse_double(k, v); }},
        {"morph_kernel", [](auto& c, auto& k, auto& v) { c.morph_kernel = parse_int(k, v); }},
        {"eps", [](auto& c, auto& k, auto& v) { c.eps = parse_double(k, v); }},
        {"min_samples", [](auto& c, auto& k, auto& v) { c.min_samples = parse_int(k, v); }},
        {"use_clustering", [](auto& c, auto& k, auto& v) { c.use_clustering = parse_bool(k, v); }},
        {"top_n", [](auto& c, auto& k, auto& v) { c.top_n = parse_int(k, v); }},
        {"deform_iters", [](auto& c, auto& k, auto& v) { c.deform_iters = parse_int(k, v); }},
        {"optim_iters", [](auto& c, auto& k, auto& v) { c.optim_iters = parse_int(k, v); }},
        {"lambda", [](auto& c, auto& k, auto& v) { c.lambda = parse_double(k, v); }},
        {"percentile", [](auto& c, auto& k, auto& v) { c.percentile = parse_double(k, v); }},
        {"lr_grid", [](auto& c, auto& k, auto& v) { c.lr_grid = parse_double(k, v); }},
        {"lr_mlp", [](auto& c, auto& k, auto& v) { c.lr_mlp = parse_double(k, v); }},
        {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_u64(k, v); }},
        {"flow_source", [](auto& c, auto&, auto& v) { c.flow_source = v; }},
        {"lk_levels", [](auto& c, auto& k, auto& v) { c.lk_levels = parse_int(k, v); }},
        {"out_dir", [](auto& c, auto&, auto& v) { c.out_dir = v; }},
        {"model_init", [](auto& c, auto&, auto& v) { c.model_init = v; }},
    };

    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        it->second(c, key, value);
    }
    validate(c);
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::vector<uint8_t> bytes;
    try {
        bytes = read_file(path);
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

} // namespace mgs
