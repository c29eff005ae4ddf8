#pragma once

#include "dastgcn/tape.hpp"

namespace dastgcn {

/// Weights of the single-head self-attention that rebuilds the adjacency
/// matrix from the rows of the normalized one. wq, wk are d_k x N_max;
/// wv is N_max x N_max.
struct AdjAttnWeights {
    Var wq;
    Var wk;
    Var wv;
};

struct QkvProjection {
    Var q;  // N_max x d_k, row i = Wq * row_i(adj)
    Var k;  // N_max x d_k
    Var v;  // N_max x N_max
};

QkvProjection project_qkv(Var adj, const AdjAttnWeights& w);

/// Row-normalized attention over real nodes. Scores are plain dot products;
/// `scaled` divides by sqrt(d_k) (off by default).
Var attention_weights(Var q, Var k, const Tensor& mask, bool scaled = false);

/// Full reconstruction for one time step: rows of the output are the
/// attention-mixed value vectors; padded rows and columns are forced to zero.
Var reconstruct_step(Var adj, const AdjAttnWeights& w, const Tensor& mask, bool scaled = false);

}  // namespace dastgcn
