#include "dastgcn/gnn.hpp"

namespace dastgcn {

namespace {
constexpr double kGatLeakySlope = 0.2;
}

Tensor row_mask_matrix(const Tensor& mask, int64_t cols) {
    const int64_t n = mask.numel();
    Tensor m({n, cols});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < cols; ++j) m.at(i, j) = mask[i];
    return m;
}

Var stgcn_layer(Var a_prime, Var features, Var weight, const Tensor& mask) {
    Var out = relu(matmul(matmul(a_prime, features), weight));
    Tape& t = *out.tape;
    return mul(out, t.leaf(row_mask_matrix(mask, out.value().dim(1)), "mask"));
}

Var gat_attention(Var features, const GatHeadWeights& head, const Tensor& mask) {
    Tape& t = *features.tape;
    const int64_t n = features.value().dim(0);
    const int64_t f_out = head.w.value().dim(1);
    if (head.a.value().dim(0) != 2 * f_out)
        throw ShapeMismatch("gat_attention: a must have 2 * F' entries");

    Var hw = matmul(features, head.w);  // N x F'
    // a^T [Wh_i || Wh_j] splits into a source term on rows and a destination
    // term on columns.
    Tensor sel_src({f_out, 2 * f_out});
    Tensor sel_dst({f_out, 2 * f_out});
    for (int64_t i = 0; i < f_out; ++i) {
        sel_src.at(i, i) = 1.0;
        sel_dst.at(i, f_out + i) = 1.0;
    }
    Var a_src = matmul(t.leaf(std::move(sel_src), "sel"), head.a);  // F' x 1
    Var a_dst = matmul(t.leaf(std::move(sel_dst), "sel"), head.a);
    Var s_src = matmul(hw, a_src);  // N x 1
    Var s_dst = matmul(hw, a_dst);
    Var ones_row = t.leaf(Tensor::full({1, n}, 1.0), "ones");
    Var ones_col = t.leaf(Tensor::full({n, 1}, 1.0), "ones");
    Var scores = add(matmul(s_src, ones_row), matmul(ones_col, transpose(s_dst)));
    return softmax_row(leaky_relu(scores, kGatLeakySlope), &mask, &mask);
}

Var gat_layer(Var features, const std::vector<GatHeadWeights>& heads, const Tensor& mask) {
    if (heads.empty()) throw ShapeMismatch("gat_layer: needs at least one head");
    Tape& t = *features.tape;
    std::vector<Var> outputs;
    outputs.reserve(heads.size());
    for (const GatHeadWeights& head : heads) {
        Var alpha = gat_attention(features, head, mask);
        Var hw = matmul(features, head.w);
        outputs.push_back(elu(matmul(alpha, hw)));
    }
    Var out = outputs.size() == 1 ? outputs[0] : concat(outputs, 1);
    return mul(out, t.leaf(row_mask_matrix(mask, out.value().dim(1)), "mask"));
}

Var fuse(Var stgcn_out, Var gat_out, Var projection, const Tensor& mask) {
    Tape& t = *stgcn_out.tape;
    Var joined = concat({stgcn_out, gat_out}, 1);
    Var out = relu(matmul(joined, projection));
    return mul(out, t.leaf(row_mask_matrix(mask, out.value().dim(1)), "mask"));
}

}  // namespace dastgcn
