#include "dastgcn/adjattn.hpp"

#include <cmath>

namespace dastgcn {

QkvProjection project_qkv(Var adj, const AdjAttnWeights& w) {
    const int64_t n = adj.value().dim(0);
    if (adj.value().rank() != 2 || adj.value().dim(1) != n)
        throw ShapeMismatch("project_qkv: adjacency must be square, got " +
                            adj.value().shape_str());
    if (w.wq.value().dim(1) != n || w.wk.value().dim(1) != n || w.wv.value().dim(1) != n)
        throw ShapeMismatch("project_qkv: weight columns must match node capacity");
    QkvProjection p;
    p.q = matmul(adj, transpose(w.wq));
    p.k = matmul(adj, transpose(w.wk));
    p.v = matmul(adj, transpose(w.wv));
    return p;
}

Var attention_weights(Var q, Var k, const Tensor& mask, bool scaled) {
    Var scores = matmul(q, transpose(k));
    if (scaled) scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(q.value().dim(1))));
    return softmax_row(scores, &mask, &mask);
}

Var reconstruct_step(Var adj, const AdjAttnWeights& w, const Tensor& mask, bool scaled) {
    QkvProjection p = project_qkv(adj, w);
    Var alpha = attention_weights(p.q, p.k, mask, scaled);
    Var mixed = matmul(alpha, p.v);
    // Padded rows are zero already (dead softmax rows); padded columns pick up
    // contributions from Wv and must be cleared explicitly.
    const int64_t n = mask.numel();
    Tensor keep({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) keep.at(i, j) = mask[i] * mask[j];
    return mul(mixed, adj.tape->leaf(std::move(keep), "adj_mask"));
}

}  // namespace dastgcn
