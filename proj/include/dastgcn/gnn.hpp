#pragma once

#include <vector>

#include "dastgcn/tape.hpp"

namespace dastgcn {

/// One graph-convolution layer: relu(A' H W) with padded rows re-zeroed.
/// a_prime: N x N, features: N x M (node rows), weight: M x M'.
Var stgcn_layer(Var a_prime, Var features, Var weight, const Tensor& mask);

/// One attention head: w is F x F', a is 2F' x 1 (source half on top).
struct GatHeadWeights {
    Var w;
    Var a;
};

/// Attention coefficients over all real nodes (self included):
/// e_ij = LeakyReLU(a^T [W h_i || W h_j]), row-softmaxed.
Var gat_attention(Var features, const GatHeadWeights& head, const Tensor& mask);

/// Multi-head layer: per head elu(alpha W H), heads concatenated on the
/// feature axis.
Var gat_layer(Var features, const std::vector<GatHeadWeights>& heads, const Tensor& mask);

/// Feature-axis concatenation of both branches followed by a linear
/// projection (no bias), relu, and mask re-application.
Var fuse(Var stgcn_out, Var gat_out, Var projection, const Tensor& mask);

/// Constant row-mask matrix: row i of an N x cols matrix is mask[i].
Tensor row_mask_matrix(const Tensor& mask, int64_t cols);

}  // namespace dastgcn
