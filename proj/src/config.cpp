#include "dastgcn/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dastgcn {

namespace {

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
}

int64_t parse_i64(const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw ConfigError("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("expected an integer, got '" + v + "'");
    }
}

double parse_f64(const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw ConfigError("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("expected a number, got '" + v + "'");
    }
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Key table shared by set(), to_text() and key_help().
struct KeyEntry {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, KeyEntry>& key_table() {
    auto i64 = [](int64_t RunConfig::*field) {
        return KeyEntry{[field](RunConfig& c, const std::string& v) { c.*field = parse_i64(v); },
                        [field](const RunConfig& c) { return std::to_string(c.*field); }};
    };
    auto f64 = [](double RunConfig::*field) {
        return KeyEntry{[field](RunConfig& c, const std::string& v) { c.*field = parse_f64(v); },
                        [field](const RunConfig& c) {
                            std::ostringstream os;
                            os << c.*field;
                            return os.str();
                        }};
    };
    auto boolean = [](bool RunConfig::*field) {
        return KeyEntry{[field](RunConfig& c, const std::string& v) { c.*field = parse_bool(v); },
                        [field](const RunConfig& c) { return c.*field ? "true" : "false"; }};
    };
    auto model_i64 = [](int64_t ModelConfig::*field) {
        return KeyEntry{
            [field](RunConfig& c, const std::string& v) { c.model.*field = parse_i64(v); },
            [field](const RunConfig& c) { return std::to_string(c.model.*field); }};
    };
    auto model_bool = [](bool ModelConfig::*field) {
        return KeyEntry{
            [field](RunConfig& c, const std::string& v) { c.model.*field = parse_bool(v); },
            [field](const RunConfig& c) { return c.model.*field ? "true" : "false"; }};
    };

    static const std::map<std::string, KeyEntry> table = {
        {"ingest.step_seconds", i64(&RunConfig::step_seconds)},
        {"ingest.gap_limit_seconds", i64(&RunConfig::gap_limit_seconds)},
        {"ingest.alt_feet", boolean(&RunConfig::alt_feet)},
        {"ingest.stride", i64(&RunConfig::stride)},
        {"ingest.min_aircraft", i64(&RunConfig::min_aircraft)},
        {"scene.t_obs", model_i64(&ModelConfig::t_obs)},
        {"scene.t_pred", model_i64(&ModelConfig::t_pred)},
        {"model.n_max", model_i64(&ModelConfig::n_max)},
        {"model.embed_dim", model_i64(&ModelConfig::embed_dim)},
        {"model.stgcn_layers", model_i64(&ModelConfig::stgcn_layers)},
        {"model.txp_layers", model_i64(&ModelConfig::txp_layers)},
        {"model.gat_heads", model_i64(&ModelConfig::gat_heads)},
        {"model.gat_head_dim", model_i64(&ModelConfig::gat_head_dim)},
        {"model.recon_heads", model_i64(&ModelConfig::recon_heads)},
        {"model.d_k", model_i64(&ModelConfig::d_k)},
        {"model.disable_gat", model_bool(&ModelConfig::disable_gat)},
        {"model.disable_adj_attention", model_bool(&ModelConfig::disable_adj_attention)},
        {"model.scaled_scores", model_bool(&ModelConfig::scaled_scores)},
        {"model.residual_adjacency", model_bool(&ModelConfig::residual_adjacency)},
        {"model.gat_on_raw", model_bool(&ModelConfig::gat_on_raw)},
        {"model.dropout",
         {[](RunConfig& c, const std::string& v) { c.model.dropout = parse_f64(v); },
          [](const RunConfig& c) {
              std::ostringstream os;
              os << c.model.dropout;
              return os.str();
          }}},
        {"model.kernel_space",
         {[](RunConfig& c, const std::string& v) {
              if (v == "normalized")
                  c.model.kernel_space = KernelSpace::Normalized;
              else if (v == "raw")
                  c.model.kernel_space = KernelSpace::Raw;
              else
                  throw ConfigError("model.kernel_space must be 'normalized' or 'raw'");
          },
          [](const RunConfig& c) {
              return std::string(c.model.kernel_space == KernelSpace::Raw ? "raw" : "normalized");
          }}},
        {"train.batch_size", i64(&RunConfig::batch_size)},
        {"train.epochs", i64(&RunConfig::epochs)},
        {"train.lr", f64(&RunConfig::lr)},
        {"train.lr_after", f64(&RunConfig::lr_after)},
        {"train.lr_switch_epoch", i64(&RunConfig::lr_switch_epoch)},
        {"train.clip_norm", f64(&RunConfig::clip_norm)},
        {"train.seed",
         {[](RunConfig& c, const std::string& v) { c.seed = static_cast<uint64_t>(parse_i64(v)); },
          [](const RunConfig& c) { return std::to_string(c.seed); }}},
        {"train.split_train", f64(&RunConfig::split_train)},
        {"train.split_val", f64(&RunConfig::split_val)},
        {"train.split_test", f64(&RunConfig::split_test)},
        {"grid.epochs", i64(&RunConfig::grid_epochs)},
        {"eval.protocol",
         {[](RunConfig& c, const std::string& v) {
              if (v != "mean" && v != "best_of_k")
                  throw ConfigError("eval.protocol must be 'mean' or 'best_of_k'");
              c.protocol = v;
          },
          [](const RunConfig& c) { return c.protocol; }}},
        {"eval.k", i64(&RunConfig::best_of_k)},
        {"shard.scenes_per_shard", i64(&RunConfig::scenes_per_shard)},
    };
    return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& table = key_table();
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
        it->second.set(*this, value);
    } catch (const ConfigError& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

void RunConfig::validate() const {
    model.validate();
    if (step_seconds < 1) throw ConfigError("ingest.step_seconds must be >= 1");
    if (gap_limit_seconds < step_seconds)
        throw ConfigError("ingest.gap_limit_seconds must be >= ingest.step_seconds");
    if (stride < 1) throw ConfigError("ingest.stride must be >= 1");
    if (min_aircraft < 1) throw ConfigError("ingest.min_aircraft must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (lr <= 0.0 || lr_after <= 0.0) throw ConfigError("learning rates must be positive");
    if (lr_switch_epoch < 0 || lr_switch_epoch >= epochs)
        throw ConfigError("train.lr_switch_epoch must lie in [0, train.epochs)");
    if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be >= 0");
    const double total = split_train + split_val + split_test;
    if (split_train <= 0.0 || split_val < 0.0 || split_test < 0.0 || total > 1.0 + 1e-9)
        throw ConfigError("train.split_* must be non-negative, train > 0, sum <= 1");
    if (grid_epochs < 1) throw ConfigError("grid.epochs must be >= 1");
    if (best_of_k < 1) throw ConfigError("eval.k must be >= 1");
    if (scenes_per_shard < 1) throw ConfigError("shard.scenes_per_shard must be >= 1");
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [key, entry] : key_table()) os << key << " = " << entry.get(*this) << "\n";
    return os.str();
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string RunConfig::key_help() {
    std::ostringstream os;
    for (const auto& [key, _] : key_table()) os << "  " << key << "\n";
    return os.str();
}

}  // namespace dastgcn
