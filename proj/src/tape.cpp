#include "dastgcn/tape.hpp"

#include <cmath>
#include <limits>

namespace dastgcn {

namespace {

void require(bool ok, const char* op, const std::string& msg) {
    if (!ok) throw ShapeMismatch(std::string(op) + ": " + msg);
}

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw std::logic_error(std::string(op) + ": operands recorded on different tapes");
}

bool mask_on(const Tensor* m, int64_t i) { return m == nullptr || (*m)[i] > 0.5; }

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor v, const char* name) { return push(std::move(v), name, nullptr); }

Var Tape::leaf_grad(const Tensor& v, Tensor* grad_sink, const char* name) {
    Var out = push(v, name, nullptr);
    nodes_.back().grad_sink = grad_sink;
    return out;
}

const Tensor& Tape::value(Var v) const {
    if (v.tape != this) throw DetachedLoss();
    return nodes_[static_cast<size_t>(v.id)].value;
}

Var Tape::push(Tensor value, const char* op, std::function<void(const Tensor&)> back) {
    if (check_finite_ && !value.all_finite()) throw NonFiniteError(op);
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(int32_t id, const Tensor& g) {
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (!slot.defined())
        slot = g;
    else
        slot.add_inplace(g);
}

void Tape::backward(Var loss, double seed) {
    if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int32_t>(nodes_.size()))
        throw DetachedLoss();
    const Tensor& lv = val(loss.id);
    if (lv.numel() != 1)
        throw ShapeMismatch("backward: loss must be scalar, got shape " + lv.shape_str());

    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<size_t>(loss.id)] = Tensor::full(lv.shape(), seed);

    for (int32_t i = loss.id; i >= 0; --i) {
        Tensor& g = grads_[static_cast<size_t>(i)];
        if (!g.defined()) continue;
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.grad_sink != nullptr) n.grad_sink->add_inplace(g);
        if (n.back) n.back(g);
        g = Tensor{};  // release as we go
    }
    grads_.clear();
}

// --- elementwise helpers -----------------------------------------------------

namespace {

// Right operand of add/sub/mul may be a trailing suffix of the left shape.
void check_trailing(const Tensor& a, const Tensor& b, const char* op) {
    if (b.rank() > a.rank()) throw ShapeMismatch(std::string(op) + ": right operand has higher rank");
    int64_t off = a.rank() - b.rank();
    for (int64_t i = 0; i < b.rank(); ++i)
        if (a.dim(off + i) != b.dim(i))
            throw ShapeMismatch(std::string(op) + ": shapes " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    check_trailing(av, bv, "add");
    const int64_t bn = bv.numel();
    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i % bn];
    int32_t ia = a.id, ib = b.id;
    return t.push(std::move(out), "add", [&t, ia, ib, bn](const Tensor& g) {
        t.accumulate(ia, g);
        if (g.numel() == bn && g.same_shape(t.val(ib))) {
            t.accumulate(ib, g);
        } else {
            Tensor gb = Tensor::zeros(t.val(ib).shape());
            for (int64_t i = 0; i < g.numel(); ++i) gb[i % bn] += g[i];
            t.accumulate(ib, gb);
        }
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b, "sub");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    check_trailing(av, bv, "sub");
    const int64_t bn = bv.numel();
    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i % bn];
    int32_t ia = a.id, ib = b.id;
    return t.push(std::move(out), "sub", [&t, ia, ib, bn](const Tensor& g) {
        t.accumulate(ia, g);
        Tensor gb = Tensor::zeros(t.val(ib).shape());
        for (int64_t i = 0; i < g.numel(); ++i) gb[i % bn] -= g[i];
        t.accumulate(ib, gb);
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b, "mul");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    check_trailing(av, bv, "mul");
    const int64_t bn = bv.numel();
    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i % bn];
    int32_t ia = a.id, ib = b.id;
    return t.push(std::move(out), "mul", [&t, ia, ib, bn](const Tensor& g) {
        const Tensor &avv = t.val(ia), &bvv = t.val(ib);
        Tensor ga = Tensor::zeros(avv.shape());
        Tensor gb = Tensor::zeros(bvv.shape());
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga[i] = g[i] * bvv[i % bn];
            gb[i % bn] += g[i] * avv[i];
        }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    out.scale_inplace(c);
    int32_t ia = a.id;
    return t.push(std::move(out), "scale", [&t, ia, c](const Tensor& g) {
        Tensor ga = g;
        ga.scale_inplace(c);
        t.accumulate(ia, ga);
    });
}

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2, "matmul", "expects 2-D operands");
    require(av.dim(1) == bv.dim(0), "matmul",
            "inner dims differ: " + av.shape_str() + " x " + bv.shape_str());
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            const double aip = av.at(i, p);
            if (aip == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) out.at(i, j) += aip * bv.at(p, j);
        }
    int32_t ia = a.id, ib = b.id;
    return t.push(std::move(out), "matmul", [&t, ia, ib, m, k, n](const Tensor& g) {
        const Tensor &avv = t.val(ia), &bvv = t.val(ib);
        Tensor ga({m, k});
        Tensor gb({k, n});
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
                const double gij = g.at(i, j);
                if (gij == 0.0) continue;
                for (int64_t p = 0; p < k; ++p) {
                    ga.at(i, p) += gij * bvv.at(p, j);
                    gb.at(p, j) += gij * avv.at(i, p);
                }
            }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    require(av.rank() == 2, "transpose", "expects a 2-D operand");
    const int64_t m = av.dim(0), n = av.dim(1);
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
    int32_t ia = a.id;
    return t.push(std::move(out), "transpose", [&t, ia, m, n](const Tensor& g) {
        Tensor ga({m, n});
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) ga.at(i, j) = g.at(j, i);
        t.accumulate(ia, ga);
    });
}

Var exp(Var a) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    int32_t ia = a.id;
    Var res = t.push(std::move(out), "exp", nullptr);
    int32_t io = res.id;
    t.nodes_[static_cast<size_t>(io)].back = [&t, ia, io](const Tensor& g) {
        const Tensor& ov = t.val(io);
        Tensor ga = g;
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] *= ov[i];
        t.accumulate(ia, ga);
    };
    return res;
}

Var log(Var a) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    int32_t ia = a.id;
    return t.push(std::move(out), "log", [&t, ia](const Tensor& g) {
        const Tensor& av = t.val(ia);
        Tensor ga = g;
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] /= av[i];
        t.accumulate(ia, ga);
    });
}

Var relu(Var a) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
    int32_t ia = a.id;
    return t.push(std::move(out), "relu", [&t, ia](const Tensor& g) {
        const Tensor& av = t.val(ia);
        Tensor ga = g;
        for (int64_t i = 0; i < ga.numel(); ++i)
            if (av[i] <= 0.0) ga[i] = 0.0;
        t.accumulate(ia, ga);
    });
}

Var leaky_relu(Var a, double slope) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] < 0.0) out[i] *= slope;
    int32_t ia = a.id;
    return t.push(std::move(out), "leaky_relu", [&t, ia, slope](const Tensor& g) {
        const Tensor& av = t.val(ia);
        Tensor ga = g;
        for (int64_t i = 0; i < ga.numel(); ++i)
            if (av[i] <= 0.0) ga[i] *= slope;
        t.accumulate(ia, ga);
    });
}

Var elu(Var a) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] < 0.0) out[i] = std::expm1(out[i]);
    int32_t ia = a.id;
    Var res = t.push(std::move(out), "elu", nullptr);
    int32_t io = res.id;
    t.nodes_[static_cast<size_t>(io)].back = [&t, ia, io](const Tensor& g) {
        const Tensor &av = t.val(ia), &ov = t.val(io);
        Tensor ga = g;
        for (int64_t i = 0; i < ga.numel(); ++i)
            if (av[i] <= 0.0) ga[i] *= ov[i] + 1.0;  // d/dx (e^x - 1) = e^x
        t.accumulate(ia, ga);
    };
    return res;
}

Var softmax_row(Var x, const Tensor* col_mask, const Tensor* row_mask) {
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    require(xv.rank() == 2, "softmax_row", "expects a 2-D operand");
    const int64_t rows = xv.dim(0), cols = xv.dim(1);
    if (col_mask != nullptr)
        require(col_mask->numel() == cols, "softmax_row", "column mask length mismatch");
    if (row_mask != nullptr)
        require(row_mask->numel() == rows, "softmax_row", "row mask length mismatch");

    Tensor cm = col_mask ? *col_mask : Tensor{};
    Tensor rm = row_mask ? *row_mask : Tensor{};
    const Tensor* cmp = col_mask ? &cm : nullptr;
    const Tensor* rmp = row_mask ? &rm : nullptr;

    Tensor out({rows, cols});
    for (int64_t i = 0; i < rows; ++i) {
        if (!mask_on(rmp, i)) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < cols; ++j)
            if (mask_on(cmp, j)) mx = std::max(mx, xv.at(i, j));
        if (!std::isfinite(mx)) {  // no live column for a live row
            ++t.softmax_dead_rows_;
            continue;
        }
        double denom = 0.0;
        for (int64_t j = 0; j < cols; ++j)
            if (mask_on(cmp, j)) denom += std::exp(xv.at(i, j) - mx);
        for (int64_t j = 0; j < cols; ++j)
            if (mask_on(cmp, j)) out.at(i, j) = std::exp(xv.at(i, j) - mx) / denom;
    }
    int32_t ix = x.id;
    Var res = t.push(std::move(out), "softmax_row", nullptr);
    int32_t io = res.id;
    t.nodes_[static_cast<size_t>(io)].back = [&t, ix, io, rows, cols](const Tensor& g) {
        const Tensor& ov = t.val(io);
        Tensor gx({rows, cols});
        for (int64_t i = 0; i < rows; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < cols; ++j) dot += g.at(i, j) * ov.at(i, j);
            for (int64_t j = 0; j < cols; ++j)
                gx.at(i, j) = ov.at(i, j) * (g.at(i, j) - dot);
        }
        t.accumulate(ix, gx);
    };
    return res;
}

Var concat(const std::vector<Var>& parts, int64_t axis) {
    require(!parts.empty(), "concat", "needs at least one input");
    require(axis == 0 || axis == 1, "concat", "axis must be 0 or 1");
    Tape& t = *parts[0].tape;
    const int64_t other = 1 - axis;
    const int64_t fixed = parts[0].value().dim(other);
    int64_t total = 0;
    for (Var p : parts) {
        require_same_tape(parts[0], p, "concat");
        require(p.value().rank() == 2, "concat", "expects 2-D inputs");
        require(p.value().dim(other) == fixed, "concat", "off-axis extents differ");
        total += p.value().dim(axis);
    }
    Tensor out = axis == 0 ? Tensor({total, fixed}) : Tensor({fixed, total});
    std::vector<int32_t> ids;
    std::vector<int64_t> extents;
    int64_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = p.value();
        const int64_t e = pv.dim(axis);
        for (int64_t i = 0; i < pv.dim(0); ++i)
            for (int64_t j = 0; j < pv.dim(1); ++j) {
                if (axis == 0)
                    out.at(off + i, j) = pv.at(i, j);
                else
                    out.at(i, off + j) = pv.at(i, j);
            }
        ids.push_back(p.id);
        extents.push_back(e);
        off += e;
    }
    return t.push(std::move(out), "concat",
                  [&t, ids, extents, axis, fixed](const Tensor& g) {
                      int64_t off = 0;
                      for (size_t p = 0; p < ids.size(); ++p) {
                          const int64_t e = extents[p];
                          Tensor gp = axis == 0 ? Tensor({e, fixed}) : Tensor({fixed, e});
                          for (int64_t i = 0; i < gp.dim(0); ++i)
                              for (int64_t j = 0; j < gp.dim(1); ++j)
                                  gp.at(i, j) = axis == 0 ? g.at(off + i, j) : g.at(i, off + j);
                          t.accumulate(ids[p], gp);
                          off += e;
                      }
                  });
}

Var conv1d(Var x, Var w, int64_t padding) {
    require_same_tape(x, w, "conv1d");
    Tape& t = *x.tape;
    const Tensor &xv = x.value(), &wv = w.value();
    require(xv.rank() == 2, "conv1d", "signal must be C_in x L");
    require(wv.rank() == 3, "conv1d", "kernel must be C_out x C_in x K");
    require(xv.dim(0) == wv.dim(1), "conv1d", "channel counts differ");
    require(padding >= 0, "conv1d", "padding must be non-negative");
    const int64_t cin = xv.dim(0), len = xv.dim(1);
    const int64_t cout = wv.dim(0), k = wv.dim(2);
    const int64_t lout = len + 2 * padding - k + 1;
    require(lout >= 1, "conv1d", "kernel wider than padded signal");
    Tensor out({cout, lout});
    for (int64_t o = 0; o < cout; ++o)
        for (int64_t pos = 0; pos < lout; ++pos) {
            double acc = 0.0;
            for (int64_t c = 0; c < cin; ++c)
                for (int64_t kk = 0; kk < k; ++kk) {
                    const int64_t src = pos + kk - padding;
                    if (src >= 0 && src < len) acc += wv.at(o, c, kk) * xv.at(c, src);
                }
            out.at(o, pos) = acc;
        }
    int32_t ix = x.id, iw = w.id;
    return t.push(std::move(out), "conv1d",
                  [&t, ix, iw, cin, len, cout, k, lout, padding](const Tensor& g) {
                      const Tensor &xvv = t.val(ix), &wvv = t.val(iw);
                      Tensor gx({cin, len});
                      Tensor gw({cout, cin, k});
                      for (int64_t o = 0; o < cout; ++o)
                          for (int64_t pos = 0; pos < lout; ++pos) {
                              const double go = g.at(o, pos);
                              if (go == 0.0) continue;
                              for (int64_t c = 0; c < cin; ++c)
                                  for (int64_t kk = 0; kk < k; ++kk) {
                                      const int64_t src = pos + kk - padding;
                                      if (src < 0 || src >= len) continue;
                                      gx.at(c, src) += go * wvv.at(o, c, kk);
                                      gw.at(o, c, kk) += go * xvv.at(c, src);
                                  }
                          }
                      t.accumulate(ix, gx);
                      t.accumulate(iw, gw);
                  });
}

Var reduce_sum(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    double s = 0.0;
    for (int64_t i = 0; i < av.numel(); ++i) s += av[i];
    int32_t ia = a.id;
    return t.push(Tensor::scalar(s), "reduce_sum", [&t, ia](const Tensor& g) {
        t.accumulate(ia, Tensor::full(t.val(ia).shape(), g.item()));
    });
}

Var reduce_mean(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const int64_t n = av.numel();
    require(n > 0, "reduce_mean", "empty tensor");
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += av[i];
    int32_t ia = a.id;
    return t.push(Tensor::scalar(s / static_cast<double>(n)), "reduce_mean",
                  [&t, ia, n](const Tensor& g) {
                      t.accumulate(ia, Tensor::full(t.val(ia).shape(), g.item() / static_cast<double>(n)));
                  });
}

namespace {

// Solves L y = b in place of y (forward substitution).
void solve_lower(const Tensor& l, const Tensor& b, Tensor& y) {
    const int64_t n = l.dim(0), m = b.dim(1);
    for (int64_t j = 0; j < m; ++j)
        for (int64_t i = 0; i < n; ++i) {
            double acc = b.at(i, j);
            for (int64_t p = 0; p < i; ++p) acc -= l.at(i, p) * y.at(p, j);
            y.at(i, j) = acc / l.at(i, i);
        }
}

// Solves L^T x = g (back substitution on the transpose).
void solve_lower_transposed(const Tensor& l, const Tensor& g, Tensor& x) {
    const int64_t n = l.dim(0), m = g.dim(1);
    for (int64_t j = 0; j < m; ++j)
        for (int64_t i = n - 1; i >= 0; --i) {
            double acc = g.at(i, j);
            for (int64_t p = i + 1; p < n; ++p) acc -= l.at(p, i) * x.at(p, j);
            x.at(i, j) = acc / l.at(i, i);
        }
}

}  // namespace

Var triangular_solve_lower(Var lower, Var b) {
    require_same_tape(lower, b, "triangular_solve_lower");
    Tape& t = *lower.tape;
    const Tensor &lv = lower.value(), &bv = b.value();
    require(lv.rank() == 2 && lv.dim(0) == lv.dim(1), "triangular_solve_lower",
            "factor must be square");
    require(bv.rank() == 2 && bv.dim(0) == lv.dim(0), "triangular_solve_lower",
            "rhs rows must match factor");
    const int64_t n = lv.dim(0), m = bv.dim(1);
    Tensor y({n, m});
    solve_lower(lv, bv, y);
    int32_t il = lower.id, ib = b.id;
    Var res = t.push(std::move(y), "triangular_solve_lower", nullptr);
    int32_t io = res.id;
    t.nodes_[static_cast<size_t>(io)].back = [&t, il, ib, io, n, m](const Tensor& g) {
        const Tensor &lvv = t.val(il), &yv = t.val(io);
        Tensor gb({n, m});
        solve_lower_transposed(lvv, g, gb);
        // gL = -gb y^T restricted to the lower triangle; upper entries are not
        // free parameters of the factor.
        Tensor gl({n, n});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (int64_t c = 0; c < m; ++c) acc -= gb.at(i, c) * yv.at(j, c);
                gl.at(i, j) = acc;
            }
        t.accumulate(il, gl);
        t.accumulate(ib, gb);
    };
    return res;
}

}  // namespace dastgcn
