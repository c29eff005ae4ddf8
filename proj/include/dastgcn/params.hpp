#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dastgcn/tensor.hpp"

namespace dastgcn {

class CheckpointVersionMismatch : public std::runtime_error {
public:
    explicit CheckpointVersionMismatch(const std::string& what) : std::runtime_error(what) {}
};

/// One trainable tensor with its gradient slot and Adam state.
struct Param {
    Tensor value;
    Tensor grad;
    Tensor moment1;
    Tensor moment2;
    int64_t step = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Named trainable tensors. Iteration order is the sorted name order, which
/// keeps reductions and updates reproducible.
class ParamStore {
public:
    /// Registers a zero-initialized parameter. Names must be unique.
    Param& create(const std::string& name, std::vector<int64_t> shape);
    /// Registers a parameter filled from U[-bound, bound].
    Param& create_uniform(const std::string& name, std::vector<int64_t> shape, double bound,
                          std::mt19937_64& rng);

    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) > 0; }

    std::vector<std::string> names() const;
    size_t count() const { return entries_.size(); }
    int64_t value_count() const;

    void zero_grad();
    /// Global L2 norm of all gradient slots.
    double grad_norm() const;
    /// Scales all gradients so the global norm is at most max_norm.
    void clip_grad_norm(double max_norm);

    /// Bias-corrected Adam update; zeroes gradient slots afterwards.
    void adam_step(const AdamConfig& cfg);

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Param> entries_;
};

/// Checkpoint container: model metadata plus the full parameter state.
/// Binary layout: magic "DASTGCN1", u64 metadata length, metadata bytes
/// (JSON), u64 entry count, then per entry name, shape, values, both moments
/// and the step counter.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& metadata_json);
std::string load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace dastgcn
