#include "dastgcn/head.hpp"

#include <cmath>

namespace dastgcn {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;
constexpr double kMinDiag = 1e-12;
const double kLogMinDiag = std::log(kMinDiag);

Var column(Var mat, int64_t col) {
    Tape& t = *mat.tape;
    const int64_t cols = mat.value().dim(1);
    Tensor sel({cols, 1});
    sel.at(col, 0) = 1.0;
    return matmul(mat, t.leaf(std::move(sel), "col_sel"));
}

}  // namespace

Var txp_node_forward(Var node_seq, const TxpWeights& w) {
    if (w.layers.empty()) throw ShapeMismatch("txp_node_forward: no layers");
    Var x = conv1d(node_seq, w.layers[0], 1);
    for (size_t l = 1; l < w.layers.size(); ++l) x = add(relu(conv1d(x, w.layers[l], 1)), x);
    return x;
}

NodeGaussian emit_gaussians_node(Var features, Var out_proj) {
    Tape& t = *features.tape;
    if (out_proj.value().dim(1) != 9)
        throw ShapeMismatch("emit_gaussians_node: out_proj must have 9 columns");
    Var raw = matmul(features, out_proj);  // T_pred x 9
    if (!raw.value().all_finite()) throw NonFiniteError("emit_gaussians");

    Tensor sel_mu({9, 3}), sel_logd({9, 3}), sel_off({9, 3});
    for (int64_t c = 0; c < 3; ++c) {
        sel_mu.at(c, c) = 1.0;
        sel_logd.at(3 + c, c) = 1.0;
        sel_off.at(6 + c, c) = 1.0;
    }
    NodeGaussian g;
    g.mu = matmul(raw, t.leaf(std::move(sel_mu), "sel_mu"));
    Var log_diag = matmul(raw, t.leaf(std::move(sel_logd), "sel_logd"));
    g.off_diag = matmul(raw, t.leaf(std::move(sel_off), "sel_off"));

    for (int64_t i = 0; i < log_diag.value().numel(); ++i)
        if (log_diag.value()[i] < kLogMinDiag) ++g.clamped;
    // max(x, c) keeps the factor diagonal away from singular underflow
    Var floor_leaf = t.leaf(Tensor::scalar(kLogMinDiag), "diag_floor");
    g.log_diag = add(relu(sub(log_diag, floor_leaf)), floor_leaf);
    return g;
}

Var node_nll(const NodeGaussian& g, Var truth) {
    Tape& t = *truth.tape;
    const int64_t t_pred = truth.value().dim(0);
    Var z = sub(truth, g.mu);  // T_pred x 3

    Var z1 = column(z, 0), z2 = column(z, 1), z3 = column(z, 2);
    Var inv1 = exp(neg(column(g.log_diag, 0)));
    Var inv2 = exp(neg(column(g.log_diag, 1)));
    Var inv3 = exp(neg(column(g.log_diag, 2)));
    Var l21 = column(g.off_diag, 0);
    Var l31 = column(g.off_diag, 1);
    Var l32 = column(g.off_diag, 2);

    // Forward substitution L y = z, vectorized over the step axis.
    Var y1 = mul(z1, inv1);
    Var y2 = mul(sub(z2, mul(l21, y1)), inv2);
    Var y3 = mul(sub(z3, add(mul(l31, y1), mul(l32, y2))), inv3);

    Var quad = add(reduce_sum(mul(y1, y1)),
                   add(reduce_sum(mul(y2, y2)), reduce_sum(mul(y3, y3))));
    Var half_logdet = reduce_sum(g.log_diag);  // = 0.5 * sum_t log det Sigma_t
    Var constant = t.leaf(Tensor::scalar(1.5 * kLogTwoPi * static_cast<double>(t_pred)), "nll_const");
    return add(add(scale(quad, 0.5), half_logdet), constant);
}

Tensor GaussianForecast::covariance(int64_t node, int64_t step) const {
    Tensor sigma({3, 3});
    const double* l = lfac.data() + (node * t_pred + step) * 9;
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < 3; ++k) acc += l[i * 3 + k] * l[j * 3 + k];
            sigma.at(i, j) = acc;
        }
    return sigma;
}

double forecast_nll(const GaussianForecast& f, const Tensor& truth) {
    if (truth.rank() != 3 || truth.dim(0) != f.t_pred || truth.dim(1) != 3 ||
        truth.dim(2) < f.node_count)
        throw ShapeMismatch("forecast_nll: truth must be t_pred x 3 x nodes");
    double total = 0.0;
    for (int64_t i = 0; i < f.node_count; ++i) {
        for (int64_t s = 0; s < f.t_pred; ++s) {
            const double* l = f.lfac.data() + (i * f.t_pred + s) * 9;
            double z[3];
            for (int64_t c = 0; c < 3; ++c) z[c] = truth.at(s, c, i) - f.mu.at(i, s, c);
            // forward substitution
            double y[3];
            y[0] = z[0] / l[0];
            y[1] = (z[1] - l[3] * y[0]) / l[4];
            y[2] = (z[2] - l[6] * y[0] - l[7] * y[1]) / l[8];
            const double quad = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
            const double logdet = 2.0 * (std::log(l[0]) + std::log(l[4]) + std::log(l[8]));
            total += 0.5 * (3.0 * kLogTwoPi + logdet + quad);
        }
    }
    return total / static_cast<double>(f.node_count);
}

std::vector<Tensor> sample_trajectories(const GaussianForecast& f, int64_t count, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Tensor> samples;
    samples.reserve(static_cast<size_t>(count));
    for (int64_t k = 0; k < count; ++k) {
        Tensor s({f.node_count, f.t_pred, 3});
        for (int64_t i = 0; i < f.node_count; ++i)
            for (int64_t step = 0; step < f.t_pred; ++step) {
                const double* l = f.lfac.data() + (i * f.t_pred + step) * 9;
                const double z0 = gauss(rng), z1 = gauss(rng), z2 = gauss(rng);
                s.at(i, step, 0) = f.mu.at(i, step, 0) + l[0] * z0;
                s.at(i, step, 1) = f.mu.at(i, step, 1) + l[3] * z0 + l[4] * z1;
                s.at(i, step, 2) = f.mu.at(i, step, 2) + l[6] * z0 + l[7] * z1 + l[8] * z2;
            }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace dastgcn
