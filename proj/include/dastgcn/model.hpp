#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dastgcn/head.hpp"
#include "dastgcn/params.hpp"
#include "dastgcn/stgraph.hpp"
#include "dastgcn/tape.hpp"

namespace dastgcn {

struct ModelConfig {
    int64_t n_max = 16;
    int64_t t_obs = 4;
    int64_t t_pred = 6;
    int64_t embed_dim = 32;  // feature width after the input lift
    int64_t stgcn_layers = 1;
    int64_t txp_layers = 5;
    int64_t gat_heads = 4;
    int64_t gat_head_dim = 8;
    int64_t recon_heads = 1;  // adjacency reconstruction is single-head
    int64_t d_k = 0;          // 0 -> n_max
    bool disable_gat = false;
    bool disable_adj_attention = false;
    bool scaled_scores = false;
    bool residual_adjacency = false;
    bool gat_on_raw = false;
    double dropout = 0.0;
    KernelSpace kernel_space = KernelSpace::Normalized;

    int64_t dk() const { return d_k > 0 ? d_k : n_max; }
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& json_text);
};

/// The full predictor: input lift, adjacency reconstruction, STGCN and GAT
/// branches, fusion, temporal extrapolation and the Gaussian head.
class Model {
public:
    Model(ModelConfig cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    struct Forward {
        Var loss_sum;  // sum of per-node NLLs over real nodes
        int64_t real_nodes = 0;
        GaussianForecast forecast;
        int64_t clamped_factors = 0;
    };

    /// Per-scene gradient buffer for batched training: adjoints land here
    /// instead of the shared gradient slots, so scene contributions can be
    /// reduced in a fixed order regardless of thread scheduling.
    using GradBuffer = std::map<std::string, Tensor>;

    /// Builds the forward graph for one scene. adj_override, when given,
    /// replaces the reconstructed adjacency (t_obs matrices of n_max x n_max);
    /// dropout_rng enables dropout when the config asks for it.
    Forward forward(Tape& tape, const SceneGraph& graph,
                    const std::vector<Tensor>* adj_override = nullptr,
                    std::mt19937_64* dropout_rng = nullptr, GradBuffer* grad_buffer = nullptr);

    /// Adds buffered gradients into the shared slots, scaled by `factor`.
    void reduce_gradients(const GradBuffer& buffer, double factor);

    /// Value-only reconstructed adjacency for one scene (diagnostics).
    std::vector<Tensor> reconstructed_adjacency(const SceneGraph& graph);

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    void init_params(uint64_t seed);

    ModelConfig cfg_;
    ParamStore params_;
};

}  // namespace dastgcn
