#pragma once

#include <cstdint>
#include <vector>

#include "dastgcn/ingest.hpp"
#include "dastgcn/tensor.hpp"

namespace dastgcn {

class CapacityExceeded : public std::runtime_error {
public:
    CapacityExceeded(int64_t n, int64_t n_max)
        : std::runtime_error("scene has " + std::to_string(n) + " nodes, capacity is " +
                             std::to_string(n_max)) {}
};

class DegenerateDegree : public std::runtime_error {
public:
    explicit DegenerateDegree(int64_t row)
        : std::runtime_error("non-positive degree at row " + std::to_string(row) +
                             "; adjacency corrupted upstream") {}
};

/// Per-step raw and symmetrically normalized adjacency, plus the validity
/// mask after padding (1.0 = real node).
struct AdjacencyStack {
    Tensor raw;         // T x N x N
    Tensor normalized;  // T x N x N
    Tensor mask;        // N (all ones until padded)
};

/// Inverse-distance influence kernel. Identical positions map to 0;
/// near-coincident positions are clamped to 1e6 to avoid unbounded spikes.
double kernel(const double* vi, const double* vj);

/// raw[t][i][j] = kernel(v_t^i, v_t^j); zero diagonal, symmetric.
/// nodes is 3 x T x N.
Tensor build_adjacency(const Tensor& nodes);

/// Symmetric normalization with self-loops: D^{-1/2} (A + I) D^{-1/2} where
/// D holds the row sums of A + I.
Tensor normalize_adjacency(const Tensor& raw);

/// normalize_adjacency applied to every step of a T x N x N stack.
AdjacencyStack normalize_stack(const Tensor& raw);

/// Zero-pads adjacency and node tensor to n_max nodes and sets the mask.
/// nodes is 3 x T x N -> 3 x T x n_max.
std::pair<AdjacencyStack, Tensor> pad_to_capacity(const AdjacencyStack& stack, const Tensor& nodes,
                                                  int64_t n_max);

/// Splits an over-capacity scene into sub-scenes of at most n_max nodes by
/// greedy nearest-neighbour grouping at the first observed step (normalized
/// coordinates). Groups smaller than min_nodes are dropped. Scalers are
/// recomputed per sub-scene.
std::vector<Scene> split_to_capacity(const Scene& scene, int64_t n_max, int64_t min_nodes = 1);

enum class KernelSpace { Normalized, Raw };

/// Everything the network consumes for one scene, already padded to n_max.
struct SceneGraph {
    int64_t n_real = 0;
    int64_t n_max = 0;
    int64_t t_obs = 0;
    int64_t t_pred = 0;
    Tensor mask;                  // n_max
    std::vector<Tensor> adj_norm;  // t_obs entries, n_max x n_max
    std::vector<Tensor> obs;       // t_obs entries, n_max x 3 (normalized, node rows)
    Tensor truth;                  // t_pred x 3 x n_max (normalized)
    Scalers scalers;
};

SceneGraph build_scene_graph(const Scene& raw_scene, int64_t n_max,
                             KernelSpace space = KernelSpace::Normalized);

}  // namespace dastgcn
