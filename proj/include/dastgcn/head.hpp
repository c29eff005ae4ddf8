#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dastgcn/tape.hpp"

namespace dastgcn {

/// Temporal extrapolation stack. Kernels convolve along the feature axis with
/// the time steps as channels: layers[0] maps T_obs -> T_pred channels, later
/// layers are T_pred -> T_pred with relu + residual. Kernel width 3,
/// padding 1, no biases.
struct TxpWeights {
    std::vector<Var> layers;  // layer kernels, C_out x C_in x 3
};

/// node_seq: T_obs x M for one node -> T_pred x M.
Var txp_node_forward(Var node_seq, const TxpWeights& w);

/// Tape-side Gaussian parameters for one node, all T_pred x 3.
/// log_diag is clamped from below at log(1e-12); `clamped` counts how many
/// entries hit the clamp.
struct NodeGaussian {
    Var mu;
    Var log_diag;  // log of L11, L22, L33
    Var off_diag;  // L21, L31, L32
    int64_t clamped = 0;
};

/// Decodes the 9 raw head outputs per step: mean, exp-diagonal of L, and the
/// three subdiagonal entries. features: T_pred x M, out_proj: M x 9.
NodeGaussian emit_gaussians_node(Var features, Var out_proj);

/// Negative log-likelihood of `truth` (T_pred x 3) under the node's per-step
/// trivariate Gaussians, summed over steps. The quadratic form comes from
/// forward substitution against L; log det Sigma = 2 sum(log_diag).
Var node_nll(const NodeGaussian& g, Var truth);

/// Concrete per-scene forecast, real nodes only, normalized units.
struct GaussianForecast {
    int64_t node_count = 0;
    int64_t t_pred = 0;
    Tensor mu;    // node x t_pred x 3
    Tensor lfac;  // node x t_pred x 9, row-major 3x3 lower-triangular

    Tensor covariance(int64_t node, int64_t step) const;  // 3x3, L L^T
};

/// Mean NLL over nodes evaluated directly from the forecast values.
/// truth: t_pred x 3 x node_count (normalized units).
double forecast_nll(const GaussianForecast& f, const Tensor& truth);

/// Draws `count` trajectory sets mu + L z with z ~ N(0, I); deterministic
/// under the seed. Each sample is node x t_pred x 3.
std::vector<Tensor> sample_trajectories(const GaussianForecast& f, int64_t count, uint64_t seed);

}  // namespace dastgcn
