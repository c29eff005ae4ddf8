#include <doctest.h>

#include <cmath>
#include <random>

#include "dastgcn/stgraph.hpp"
#include "oracles.hpp"

using namespace dastgcn;

namespace {

Tensor random_nodes(int64_t t_steps, int64_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    Tensor nodes({3, t_steps, n});
    for (int64_t i = 0; i < nodes.numel(); ++i) nodes[i] = coord(rng);
    return nodes;
}

}  // namespace

TEST_CASE("kernel: coincident points, 3-4-5 distance, oracle re-evaluation") {
    const double a[3] = {1.0, 2.0, 3.0};
    CHECK(kernel(a, a) == 0.0);

    const double o[3] = {0.0, 0.0, 0.0};
    const double b[3] = {3.0, 4.0, 0.0};
    CHECK(kernel(o, b) == doctest::Approx(0.2).epsilon(1e-15));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> coord(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        double u[3] = {coord(rng), coord(rng), coord(rng)};
        double v[3] = {coord(rng), coord(rng), coord(rng)};
        const double dist = std::sqrt((u[0] - v[0]) * (u[0] - v[0]) +
                                      (u[1] - v[1]) * (u[1] - v[1]) +
                                      (u[2] - v[2]) * (u[2] - v[2]));
        const double expect = dist == 0.0 ? 0.0 : 1.0 / dist;
        CHECK(kernel(u, v) == expect);
    }
}

TEST_CASE("kernel: near-coincident clamp") {
    const double a[3] = {0.0, 0.0, 0.0};
    const double b[3] = {1e-8, 0.0, 0.0};
    CHECK(kernel(a, b) == 1e6);
}

TEST_CASE("build_adjacency: single node, analytic pair, double-loop oracle") {
    Tensor one({3, 2, 1}, {0, 0, 0, 0, 0, 0});
    Tensor adj1 = build_adjacency(one);
    CHECK(adj1.numel() == 2);
    CHECK(adj1.at(0, 0, 0) == 0.0);

    // two nodes at constant distance 2
    Tensor two({3, 2, 2}, {0, 2, 0, 2,   // lon
                           0, 0, 0, 0,   // lat
                           0, 0, 0, 0}); // alt
    Tensor adj2 = build_adjacency(two);
    for (int64_t t = 0; t < 2; ++t) {
        CHECK(adj2.at(t, 0, 1) == doctest::Approx(0.5));
        CHECK(adj2.at(t, 1, 0) == doctest::Approx(0.5));
        CHECK(adj2.at(t, 0, 0) == 0.0);
    }

    std::mt19937_64 rng(3);
    Tensor nodes = random_nodes(4, 4, rng);
    Tensor adj = build_adjacency(nodes);
    for (int64_t t = 0; t < 4; ++t)
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t j = 0; j < 4; ++j) {
                const double vi[3] = {nodes.at(0, t, i), nodes.at(1, t, i), nodes.at(2, t, i)};
                const double vj[3] = {nodes.at(0, t, j), nodes.at(1, t, j), nodes.at(2, t, j)};
                double expect = 0.0;
                if (i != j) {
                    const double d = std::sqrt((vi[0] - vj[0]) * (vi[0] - vj[0]) +
                                               (vi[1] - vj[1]) * (vi[1] - vj[1]) +
                                               (vi[2] - vj[2]) * (vi[2] - vj[2]));
                    expect = d == 0.0 ? 0.0 : 1.0 / d;
                }
                CHECK(adj.at(t, i, j) == doctest::Approx(expect).epsilon(1e-15));
            }
}

TEST_CASE("normalize_adjacency: hand-computed 2-node case") {
    Tensor raw({2, 2}, {0, 1, 1, 0});
    Tensor out = normalize_adjacency(raw);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 2; ++j) CHECK(out.at(i, j) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalize_adjacency: 1x1 self-loop gives identity") {
    Tensor raw({1, 1}, {0.0});
    Tensor out = normalize_adjacency(raw);
    CHECK(out.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("normalize_adjacency: symmetry, value range and spectral radius") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> weight(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t n = 2 + static_cast<int64_t>(rng() % 4);
        Tensor raw({n, n});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) {
                const double w = weight(rng);
                raw.at(i, j) = w;
                raw.at(j, i) = w;
            }
        Tensor out = normalize_adjacency(raw);
        oracles::Mat m = oracles::make_mat(n, n);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) {
                CHECK(std::abs(out.at(i, j) - out.at(j, i)) < 1e-12);
                CHECK(out.at(i, j) >= 0.0);
                CHECK(out.at(i, j) <= 1.0 + 1e-12);
                m[static_cast<size_t>(i)][static_cast<size_t>(j)] = out.at(i, j);
            }
        const std::vector<double> eig = oracles::jacobi_eigenvalues(m);
        CHECK(std::abs(eig.back()) <= 1.0 + 1e-9);
        CHECK(std::abs(eig.front()) <= 1.0 + 1e-9);
    }
}

TEST_CASE("normalize_adjacency: corrupted negative weights raise DegenerateDegree") {
    Tensor raw({2, 2}, {0, -3.0, -3.0, 0});  // degree 1 + (-3) < 0
    CHECK_THROWS_AS(normalize_adjacency(raw), DegenerateDegree);
}

TEST_CASE("normalize_adjacency: idempotent symmetry on random symmetric input") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> weight(0.0, 1.0);
    Tensor raw({5, 5});
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = i + 1; j < 5; ++j) {
            const double w = weight(rng);
            raw.at(i, j) = w;
            raw.at(j, i) = w;
        }
    Tensor out = normalize_adjacency(raw);
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 5; ++j) CHECK(std::abs(out.at(i, j) - out.at(j, i)) < 1e-12);
}

TEST_CASE("build_adjacency is permutation equivariant") {
    std::mt19937_64 rng(17);
    Tensor nodes = random_nodes(3, 5, rng);
    Tensor adj = build_adjacency(nodes);

    std::vector<int64_t> perm = {3, 0, 4, 1, 2};
    Tensor permuted({3, 3, 5});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < 3; ++t)
            for (int64_t i = 0; i < 5; ++i) permuted.at(c, t, i) = nodes.at(c, t, perm[i]);
    Tensor adj_p = build_adjacency(permuted);
    for (int64_t t = 0; t < 3; ++t)
        for (int64_t i = 0; i < 5; ++i)
            for (int64_t j = 0; j < 5; ++j)
                CHECK(adj_p.at(t, i, j) == adj.at(t, perm[i], perm[j]));  // exact
}

TEST_CASE("pad_to_capacity: no-op at capacity, zero padding below it") {
    std::mt19937_64 rng(23);
    Tensor nodes = random_nodes(2, 2, rng);
    AdjacencyStack stack = normalize_stack(build_adjacency(nodes));

    auto [same, nodes_same] = pad_to_capacity(stack, nodes, 2);
    CHECK(same.mask.numel() == 2);
    CHECK(same.mask[0] == 1.0);
    CHECK(same.mask[1] == 1.0);
    for (int64_t i = 0; i < stack.normalized.numel(); ++i)
        CHECK(same.normalized[i] == stack.normalized[i]);

    auto [padded, nodes_padded] = pad_to_capacity(stack, nodes, 4);
    CHECK(padded.mask.numel() == 4);
    CHECK(padded.mask[2] == 0.0);
    CHECK(padded.mask[3] == 0.0);
    for (int64_t t = 0; t < 2; ++t)
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t j = 0; j < 4; ++j) {
                if (i >= 2 || j >= 2) {
                    CHECK(padded.raw.at(t, i, j) == 0.0);
                    CHECK(padded.normalized.at(t, i, j) == 0.0);
                }
            }
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < 2; ++t)
            for (int64_t i = 2; i < 4; ++i) CHECK(nodes_padded.at(c, t, i) == 0.0);

    CHECK_THROWS_AS(pad_to_capacity(stack, nodes, 1), CapacityExceeded);
}

TEST_CASE("split_to_capacity groups nearby nodes and respects capacity") {
    Scene s;
    s.node_count = 5;
    s.t_obs = 2;
    s.t_pred = 2;
    s.positions = Tensor({3, 4, 5});
    // two clusters: nodes 0,1,2 near lon 0; nodes 3,4 near lon 10
    const double lons[5] = {0.0, 0.1, 0.2, 10.0, 10.1};
    for (int64_t t = 0; t < 4; ++t)
        for (int64_t i = 0; i < 5; ++i) {
            s.positions.at(0, t, i) = lons[i] + 0.01 * static_cast<double>(t);
            s.positions.at(1, t, i) = 0.5 * static_cast<double>(i);
            s.positions.at(2, t, i) = 1000.0;
        }
    s.scalers = compute_scalers(s.positions, s.t_obs);
    auto parts = split_to_capacity(s, 3, 1);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].node_count == 3);
    CHECK(parts[1].node_count == 2);
    CHECK(parts[0].positions.at(0, 0, 0) == doctest::Approx(0.0));
    CHECK(parts[1].positions.at(0, 0, 0) == doctest::Approx(10.0));
}

TEST_CASE("build_scene_graph: shapes, mask and normalized features") {
    Scene s;
    s.node_count = 2;
    s.t_obs = 4;
    s.t_pred = 6;
    s.positions = Tensor({3, 10, 2});
    for (int64_t t = 0; t < 10; ++t) {
        s.positions.at(0, t, 0) = 0.01 * static_cast<double>(t);
        s.positions.at(0, t, 1) = -0.01 * static_cast<double>(t);
        s.positions.at(1, t, 0) = 0.02 * static_cast<double>(t);
        s.positions.at(1, t, 1) = 0.05;
        s.positions.at(2, t, 0) = 1000.0 + static_cast<double>(t);
        s.positions.at(2, t, 1) = 1200.0;
    }
    s.scalers = compute_scalers(s.positions, s.t_obs);
    SceneGraph g = build_scene_graph(s, 4);
    CHECK(g.n_real == 2);
    CHECK(g.adj_norm.size() == 4);
    CHECK(g.obs.size() == 4);
    CHECK(g.obs[0].dim(0) == 4);
    CHECK(g.obs[0].dim(1) == 3);
    CHECK(g.mask[0] == 1.0);
    CHECK(g.mask[2] == 0.0);
    CHECK(g.truth.dim(0) == 6);
    // padded feature rows are zero
    for (int64_t t = 0; t < 4; ++t)
        for (int64_t i = 2; i < 4; ++i)
            for (int64_t c = 0; c < 3; ++c) CHECK(g.obs[t].at(i, c) == 0.0);
}
