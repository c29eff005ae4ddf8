#pragma once

#include <string>

#include "dastgcn/model.hpp"

namespace dastgcn {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Merged run configuration. File format: one `dotted.key = value` per line,
/// '#' starts a comment; unknown keys are fatal. Command-line --set overrides
/// win over file values.
struct RunConfig {
    // ingest
    int64_t step_seconds = 10;
    int64_t gap_limit_seconds = 60;
    bool alt_feet = false;
    int64_t stride = 1;
    int64_t min_aircraft = 2;

    ModelConfig model;  // carries t_obs / t_pred / n_max and ablation flags

    // training schedule
    int64_t batch_size = 128;
    int64_t epochs = 400;
    double lr = 1e-3;
    double lr_after = 2e-4;
    int64_t lr_switch_epoch = 200;
    double clip_norm = 10.0;  // 0 disables clipping
    uint64_t seed = 7;
    double split_train = 0.7;
    double split_val = 0.1;
    double split_test = 0.2;

    int64_t grid_epochs = 50;

    std::string protocol = "mean";  // or best_of_k
    int64_t best_of_k = 20;

    int64_t scenes_per_shard = 256;

    /// Applies one key/value pair; throws ConfigError on unknown keys or
    /// unparseable values.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    /// Full key set, one `key = value` line each, in a fixed order.
    std::string to_text() const;

    static RunConfig from_file(const std::string& path);
    /// List of accepted keys for --help output.
    static std::string key_help();
};

}  // namespace dastgcn
