#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "dastgcn/tensor.hpp"

namespace dastgcn {

class DetachedLoss : public std::runtime_error {
public:
    DetachedLoss() : std::runtime_error("loss tensor was not produced under this tape") {}
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
};

/// Records primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so a reverse sweep visits every
/// node after all of its consumers. backward() accumulates adjoints into the
/// gradient sinks registered via leaf_grad(); calling it twice without
/// clearing the sinks doubles their contents.
///
/// Broadcasting: add/sub/mul accept a right operand whose shape is a trailing
/// suffix of the left operand's shape; no other broadcast is supported.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Constant input; receives no gradient.
    Var leaf(Tensor v, const char* name = "leaf");
    /// Trainable input; backward() adds its adjoint into *grad_sink.
    Var leaf_grad(const Tensor& v, Tensor* grad_sink, const char* name = "param");

    const Tensor& value(Var v) const;
    size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. `seed` scales every gradient.
    void backward(Var loss, double seed = 1.0);

    /// When set, every primitive checks its output and throws NonFiniteError
    /// naming the offending op. On by default.
    void set_check_finite(bool on) { check_finite_ = on; }

    /// Rows that were fully masked out in softmax_row while their row mask
    /// was on. Normally zero; nonzero indicates inconsistent masks upstream.
    int64_t softmax_dead_rows() const { return softmax_dead_rows_; }

private:
    friend struct Var;
    friend Var add(Var, Var);
    friend Var sub(Var, Var);
    friend Var mul(Var, Var);
    friend Var neg(Var);
    friend Var scale(Var, double);
    friend Var matmul(Var, Var);
    friend Var transpose(Var);
    friend Var exp(Var);
    friend Var log(Var);
    friend Var relu(Var);
    friend Var leaky_relu(Var, double);
    friend Var elu(Var);
    friend Var softmax_row(Var, const Tensor*, const Tensor*);
    friend Var concat(const std::vector<Var>&, int64_t);
    friend Var conv1d(Var, Var, int64_t);
    friend Var reduce_sum(Var);
    friend Var reduce_mean(Var);
    friend Var triangular_solve_lower(Var, Var);

    struct Node {
        Tensor value;
        std::function<void(const Tensor& gout)> back;  // empty for leaves
        const char* op = "leaf";
        Tensor* grad_sink = nullptr;
    };

    Var push(Tensor value, const char* op, std::function<void(const Tensor&)> back);
    void accumulate(int32_t id, const Tensor& g);
    const Tensor& val(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }

    // deque keeps value() references stable while later ops append nodes
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;  // live only during backward()
    bool check_finite_ = true;
    int64_t softmax_dead_rows_ = 0;
};

// Primitives. Inputs must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var elu(Var a);
/// Row softmax with optional column/row masks (entries > 0.5 are "on").
/// Masked-off columns get weight 0; masked-off rows are zeroed entirely.
Var softmax_row(Var x, const Tensor* col_mask = nullptr, const Tensor* row_mask = nullptr);
/// Concatenate 2-D tensors along axis 0 or 1.
Var concat(const std::vector<Var>& parts, int64_t axis);
/// x: C_in x L, w: C_out x C_in x K, zero padding on both ends.
Var conv1d(Var x, Var w, int64_t padding);
Var reduce_sum(Var a);
Var reduce_mean(Var a);
/// Solves L y = b for lower-triangular L (n x n); b is n x m.
Var triangular_solve_lower(Var lower, Var b);

}  // namespace dastgcn
