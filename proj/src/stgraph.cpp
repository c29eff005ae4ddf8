#include "dastgcn/stgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dastgcn {

namespace {
constexpr double kCoincidenceEps = 1e-6;
constexpr double kKernelClamp = 1e6;
}  // namespace

double kernel(const double* vi, const double* vj) {
    if (vi[0] == vj[0] && vi[1] == vj[1] && vi[2] == vj[2]) return 0.0;
    const double dx = vi[0] - vj[0];
    const double dy = vi[1] - vj[1];
    const double dz = vi[2] - vj[2];
    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (dist < kCoincidenceEps) return kKernelClamp;
    return 1.0 / dist;
}

Tensor build_adjacency(const Tensor& nodes) {
    if (nodes.rank() != 3 || nodes.dim(0) != 3)
        throw ShapeMismatch("build_adjacency expects 3 x T x N, got " + nodes.shape_str());
    const int64_t t_steps = nodes.dim(1), n = nodes.dim(2);
    Tensor raw({t_steps, n, n});
    for (int64_t t = 0; t < t_steps; ++t)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) {
                const double vi[3] = {nodes.at(0, t, i), nodes.at(1, t, i), nodes.at(2, t, i)};
                const double vj[3] = {nodes.at(0, t, j), nodes.at(1, t, j), nodes.at(2, t, j)};
                const double k = kernel(vi, vj);
                raw.at(t, i, j) = k;
                raw.at(t, j, i) = k;
            }
    return raw;
}

Tensor normalize_adjacency(const Tensor& raw) {
    if (raw.rank() != 2 || raw.dim(0) != raw.dim(1))
        throw ShapeMismatch("normalize_adjacency expects N x N, got " + raw.shape_str());
    const int64_t n = raw.dim(0);
    std::vector<double> inv_sqrt_degree(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double degree = 1.0;  // self-loop
        for (int64_t j = 0; j < n; ++j) degree += raw.at(i, j);
        if (!(degree > 0.0)) throw DegenerateDegree(i);
        inv_sqrt_degree[static_cast<size_t>(i)] = 1.0 / std::sqrt(degree);
    }
    Tensor out({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            const double hat = raw.at(i, j) + (i == j ? 1.0 : 0.0);
            out.at(i, j) = inv_sqrt_degree[static_cast<size_t>(i)] * hat *
                           inv_sqrt_degree[static_cast<size_t>(j)];
        }
    return out;
}

AdjacencyStack normalize_stack(const Tensor& raw) {
    if (raw.rank() != 3) throw ShapeMismatch("normalize_stack expects T x N x N");
    const int64_t t_steps = raw.dim(0), n = raw.dim(1);
    AdjacencyStack stack;
    stack.raw = raw;
    stack.normalized = Tensor({t_steps, n, n});
    stack.mask = Tensor::full({n}, 1.0);
    for (int64_t t = 0; t < t_steps; ++t) {
        Tensor step({n, n});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) step.at(i, j) = raw.at(t, i, j);
        Tensor norm = normalize_adjacency(step);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) stack.normalized.at(t, i, j) = norm.at(i, j);
    }
    return stack;
}

std::pair<AdjacencyStack, Tensor> pad_to_capacity(const AdjacencyStack& stack, const Tensor& nodes,
                                                  int64_t n_max) {
    const int64_t n = stack.raw.dim(1);
    const int64_t t_steps = stack.raw.dim(0);
    if (n > n_max) throw CapacityExceeded(n, n_max);
    if (nodes.dim(2) != n) throw ShapeMismatch("pad_to_capacity: node/adjacency count mismatch");

    AdjacencyStack padded;
    padded.raw = Tensor({t_steps, n_max, n_max});
    padded.normalized = Tensor({t_steps, n_max, n_max});
    padded.mask = Tensor({n_max});
    for (int64_t i = 0; i < n; ++i) padded.mask[i] = 1.0;
    for (int64_t t = 0; t < t_steps; ++t)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) {
                padded.raw.at(t, i, j) = stack.raw.at(t, i, j);
                padded.normalized.at(t, i, j) = stack.normalized.at(t, i, j);
            }
    Tensor padded_nodes({3, nodes.dim(1), n_max});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < nodes.dim(1); ++t)
            for (int64_t i = 0; i < n; ++i) padded_nodes.at(c, t, i) = nodes.at(c, t, i);
    return {std::move(padded), std::move(padded_nodes)};
}

std::vector<Scene> split_to_capacity(const Scene& scene, int64_t n_max, int64_t min_nodes) {
    if (scene.node_count <= n_max) return {scene};

    const Scene norm = normalize_scene(scene);
    const int64_t n = scene.node_count;
    std::vector<int64_t> unassigned(static_cast<size_t>(n));
    std::iota(unassigned.begin(), unassigned.end(), 0);

    auto dist2 = [&](int64_t a, int64_t b) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = norm.positions.at(c, 0, a) - norm.positions.at(c, 0, b);
            s += d * d;
        }
        return s;
    };

    std::vector<Scene> out;
    const int64_t total = scene.t_obs + scene.t_pred;
    while (!unassigned.empty()) {
        const int64_t seed = unassigned.front();
        std::sort(unassigned.begin(), unassigned.end(), [&](int64_t a, int64_t b) {
            const double da = dist2(seed, a), db = dist2(seed, b);
            if (da != db) return da < db;
            return a < b;
        });
        const int64_t take = std::min<int64_t>(n_max, static_cast<int64_t>(unassigned.size()));
        std::vector<int64_t> group(unassigned.begin(), unassigned.begin() + take);
        std::sort(group.begin(), group.end());  // keep ascending encoded-id order
        unassigned.erase(unassigned.begin(), unassigned.begin() + take);

        if (static_cast<int64_t>(group.size()) < min_nodes) continue;
        Scene sub;
        sub.node_count = static_cast<int64_t>(group.size());
        sub.t_obs = scene.t_obs;
        sub.t_pred = scene.t_pred;
        sub.source_id = scene.source_id;
        sub.positions = Tensor({3, total, sub.node_count});
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t t = 0; t < total; ++t)
                for (size_t g = 0; g < group.size(); ++g)
                    sub.positions.at(c, t, static_cast<int64_t>(g)) =
                        scene.positions.at(c, t, group[g]);
        sub.scalers = compute_scalers(sub.positions, sub.t_obs);
        out.push_back(std::move(sub));
    }
    return out;
}

SceneGraph build_scene_graph(const Scene& raw_scene, int64_t n_max, KernelSpace space) {
    if (raw_scene.node_count > n_max) throw CapacityExceeded(raw_scene.node_count, n_max);
    const Scene norm = normalize_scene(raw_scene);
    const int64_t n = raw_scene.node_count;
    const int64_t t_obs = raw_scene.t_obs, t_pred = raw_scene.t_pred;

    // Observation-window node tensor in the requested kernel space.
    Tensor kernel_nodes({3, t_obs, n});
    const Tensor& src = space == KernelSpace::Normalized ? norm.positions : raw_scene.positions;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < t_obs; ++t)
            for (int64_t i = 0; i < n; ++i) kernel_nodes.at(c, t, i) = src.at(c, t, i);

    Tensor feat_nodes({3, t_obs, n});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < t_obs; ++t)
            for (int64_t i = 0; i < n; ++i) feat_nodes.at(c, t, i) = norm.positions.at(c, t, i);

    AdjacencyStack stack = normalize_stack(build_adjacency(kernel_nodes));
    auto [padded, padded_nodes] = pad_to_capacity(stack, feat_nodes, n_max);

    SceneGraph g;
    g.n_real = n;
    g.n_max = n_max;
    g.t_obs = t_obs;
    g.t_pred = t_pred;
    g.mask = padded.mask;
    g.scalers = raw_scene.scalers;
    g.adj_norm.reserve(static_cast<size_t>(t_obs));
    g.obs.reserve(static_cast<size_t>(t_obs));
    for (int64_t t = 0; t < t_obs; ++t) {
        Tensor adj({n_max, n_max});
        for (int64_t i = 0; i < n_max; ++i)
            for (int64_t j = 0; j < n_max; ++j) adj.at(i, j) = padded.normalized.at(t, i, j);
        g.adj_norm.push_back(std::move(adj));
        Tensor step({n_max, 3});
        for (int64_t i = 0; i < n_max; ++i)
            for (int64_t c = 0; c < 3; ++c) step.at(i, c) = padded_nodes.at(c, t, i);
        g.obs.push_back(std::move(step));
    }
    g.truth = Tensor({t_pred, 3, n_max});
    for (int64_t t = 0; t < t_pred; ++t)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < n; ++i)
                g.truth.at(t, c, i) = norm.positions.at(c, t_obs + t, i);
    return g;
}

}  // namespace dastgcn
