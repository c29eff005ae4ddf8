#pragma once

// Test-only reference implementations, written as plain loops so they stay
// independent of the tape engine and the library code paths they check.

#include <cstdint>
#include <vector>

namespace oracles {

using Mat = std::vector<std::vector<double>>;  // row-major dense

Mat make_mat(int64_t rows, int64_t cols);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

/// All eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
std::vector<double> jacobi_eigenvalues(Mat a, int sweeps = 64);

/// Row softmax with max subtraction; live[i] selects participating columns.
std::vector<double> softmax_row(const std::vector<double>& scores,
                                const std::vector<bool>& live);

/// Adjacency reconstruction by explicit loops: q_i = Wq row_i(adj), scores
/// q_i . k_j, softmax over live columns, output rows sum alpha_ij v_j; masked
/// rows/columns zeroed.
Mat reconstruct_adjacency(const Mat& adj, const Mat& wq, const Mat& wk, const Mat& wv,
                          const std::vector<bool>& live);

/// Graph-attention coefficients by pairwise loops:
/// e_ij = leaky_relu(a . [W^T h_i, W^T h_j]), softmax over live nodes.
Mat gat_attention(const Mat& features, const Mat& w, const std::vector<double>& a,
                  const std::vector<bool>& live, double slope);

/// Trivariate normal log density via the explicit 3x3 inverse and
/// determinant of sigma = L L^T.
double trivariate_log_density(const double mu[3], const double lower[3][3], const double x[3]);

/// Sliding-sum convolution: out[o][t] = sum w[o][c][k] x[c][t + k - pad].
std::vector<std::vector<double>> conv1d(const std::vector<std::vector<double>>& x,
                                        const std::vector<std::vector<std::vector<double>>>& w,
                                        int64_t padding);

/// One Adam update for a single coordinate, bias-corrected.
struct AdamState {
    double m = 0.0, v = 0.0;
    int64_t t = 0;
};
double adam_step(double theta, double grad, AdamState& state, double lr, double beta1,
                 double beta2, double eps);

/// Piecewise-linear interpolation of (t, value) samples at query time.
double interpolate(const std::vector<std::pair<int64_t, double>>& samples, int64_t t);

/// Displacement errors by direct summation; pred/truth are [node][step][dim],
/// horizontal uses dims {0,1}, vertical uses dim 2.
double ade(const std::vector<std::vector<std::vector<double>>>& pred,
           const std::vector<std::vector<std::vector<double>>>& truth, bool horizontal);
double fde(const std::vector<std::vector<std::vector<double>>>& pred,
           const std::vector<std::vector<std::vector<double>>>& truth, bool horizontal);

}  // namespace oracles
