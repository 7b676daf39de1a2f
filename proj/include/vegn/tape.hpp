#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vegn/error.hpp"
#include "vegn/tensor.hpp"

namespace vegn {

// A named value with its gradient buffer. All learnable weights live in
// Parameters; gradients accumulate additively until zero_grad().
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a tensor recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    const Tensor& val() const;
    std::size_t rows() const { return val().rows(); }
    std::size_t cols() const { return val().cols(); }
};

// Ordered record of executed operations. Ops run eagerly and append a backward
// rule; backward() replays the rules in reverse and then flushes gradients into
// the bound Parameters. A tape is single-use: one forward build, one backward.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&)>;

    Var emit(std::string_view op, Tensor value) {
        if (!value.all_finite()) {
            throw Error(ErrorKind::non_finite,
                        std::string(op) + ": non-finite values in forward result");
        }
        nodes_.push_back(Node{Tensor(value.rows(), value.cols()), std::move(value), nullptr, nullptr});
        return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    void set_backward(Var v, BackwardFn fn) { nodes_[v.id].backward = std::move(fn); }

    Var constant(Tensor value) { return emit("constant", std::move(value)); }

    Var param(Parameter& p) {
        Var v = emit("parameter", p.value);
        nodes_[v.id].bound = &p;
        return v;
    }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    Tensor& grad(Var v) { return nodes_[v.id].grad; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a scalar loss. Parameter gradients accumulate; callers
    // zero_grad between steps.
    void backward(Var loss) {
        if (used_) {
            throw Error(ErrorKind::stale_tape, "backward already ran on this tape");
        }
        if (value(loss).size() != 1) {
            throw Error(ErrorKind::contract,
                        "backward requires a scalar loss, got " + value(loss).shape_str());
        }
        used_ = true;
        nodes_[loss.id].grad.values()[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward(*this);
        }
        for (auto& node : nodes_) {
            if (node.bound) node.bound->grad += node.grad;
        }
    }

    bool consumed() const { return used_; }

private:
    struct Node {
        Tensor grad;
        Tensor value;
        BackwardFn backward;
        Parameter* bound;
    };

    std::vector<Node> nodes_;
    bool used_ = false;
};

inline const Tensor& Var::val() const { return tape->value(*this); }

namespace detail {

enum class Broadcast { none, a_row, b_row };

inline Broadcast classify_broadcast(std::string_view op, const Tensor& a, const Tensor& b) {
    if (a.same_shape(b)) return Broadcast::none;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::b_row;
    if (a.rows() == 1 && a.cols() == b.cols()) return Broadcast::a_row;
    throw Error(ErrorKind::dimension, std::string(op) + ": shapes not broadcastable: " +
                                          a.shape_str() + " vs " + b.shape_str());
}

// Collapses a full-shape gradient onto a 1 x n row operand by summing rows.
inline Tensor collapse_to_row(const Tensor& g) {
    Tensor out(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) out.at(0, j) += g.at(i, j);
    return out;
}

inline void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape) {
        throw Error(ErrorKind::contract, "operands recorded on different tapes");
    }
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
    detail::check_same_tape(a, b);
    Tape& t = *a.tape;
    Var out = t.emit("matmul", matmul(a.val(), b.val()));
    t.set_backward(out, [a, b, out](Tape& tp) {
        const Tensor& g = tp.grad(out);
        tp.grad(a) += matmul(g, transpose(tp.value(b)));
        tp.grad(b) += matmul(transpose(tp.value(a)), g);
    });
    return out;
}

inline Var transpose(Var a) {
    Tape& t = *a.tape;
    Var out = t.emit("transpose", transpose(a.val()));
    t.set_backward(out, [a, out](Tape& tp) { tp.grad(a) += transpose(tp.grad(out)); });
    return out;
}

namespace detail {

template <typename Fwd>
Var binary_pointwise(std::string_view op, Var a, Var b, Fwd f,
                     const std::function<void(Tape&, Var, Var, Var, Broadcast)>& backward) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    const Broadcast bc = classify_broadcast(op, av, bv);
    const Tensor& big = (bc == Broadcast::a_row) ? bv : av;
    Tensor result(big.rows(), big.cols());
    for (std::size_t i = 0; i < big.rows(); ++i) {
        const std::size_t ia = (bc == Broadcast::a_row) ? 0 : i;
        const std::size_t ib = (bc == Broadcast::b_row) ? 0 : i;
        for (std::size_t j = 0; j < big.cols(); ++j) {
            result.at(i, j) = f(av.at(ia, j), bv.at(ib, j));
        }
    }
    Var out = t.emit(op, std::move(result));
    t.set_backward(out, [a, b, out, bc, backward](Tape& tp) { backward(tp, a, b, out, bc); });
    return out;
}

inline void accumulate_maybe_row(Tape& t, Var target, const Tensor& g, bool is_row) {
    if (is_row && g.rows() > 1) {
        t.grad(target) += collapse_to_row(g);
    } else {
        t.grad(target) += g;
    }
}

}  // namespace detail

inline Var add(Var a, Var b) {
    return detail::binary_pointwise(
        "add", a, b, [](double x, double y) { return x + y; },
        [](Tape& tp, Var a_, Var b_, Var out_, detail::Broadcast bc) {
            const Tensor& g = tp.grad(out_);
            detail::accumulate_maybe_row(tp, a_, g, bc == detail::Broadcast::a_row);
            detail::accumulate_maybe_row(tp, b_, g, bc == detail::Broadcast::b_row);
        });
}

inline Var sub(Var a, Var b) {
    return detail::binary_pointwise(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](Tape& tp, Var a_, Var b_, Var out_, detail::Broadcast bc) {
            const Tensor& g = tp.grad(out_);
            detail::accumulate_maybe_row(tp, a_, g, bc == detail::Broadcast::a_row);
            Tensor neg_g(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) neg_g.values()[i] = -g.values()[i];
            detail::accumulate_maybe_row(tp, b_, neg_g, bc == detail::Broadcast::b_row);
        });
}

inline Var mul(Var a, Var b) {
    return detail::binary_pointwise(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](Tape& tp, Var a_, Var b_, Var out_, detail::Broadcast bc) {
            const Tensor& g = tp.grad(out_);
            const Tensor& av = tp.value(a_);
            const Tensor& bv = tp.value(b_);
            Tensor ga(g.rows(), g.cols());
            Tensor gb(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i) {
                const std::size_t ia = (bc == detail::Broadcast::a_row) ? 0 : i;
                const std::size_t ib = (bc == detail::Broadcast::b_row) ? 0 : i;
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    ga.at(i, j) = g.at(i, j) * bv.at(ib, j);
                    gb.at(i, j) = g.at(i, j) * av.at(ia, j);
                }
            }
            detail::accumulate_maybe_row(tp, a_, ga, bc == detail::Broadcast::a_row);
            detail::accumulate_maybe_row(tp, b_, gb, bc == detail::Broadcast::b_row);
        });
}

namespace detail {

template <typename Fwd, typename Bwd>
Var unary_pointwise(std::string_view op, Var a, Fwd f, Bwd dfdx_from_in_out) {
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    Tensor result(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) result.values()[i] = f(av.values()[i]);
    Var out = t.emit(op, std::move(result));
    t.set_backward(out, [a, out, dfdx_from_in_out](Tape& tp) {
        const Tensor& g = tp.grad(out);
        const Tensor& x = tp.value(a);
        const Tensor& y = tp.value(out);
        Tensor ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.values()[i] = g.values()[i] * dfdx_from_in_out(x.values()[i], y.values()[i]);
        }
        tp.grad(a) += ga;
    });
    return out;
}

}  // namespace detail

inline Var add_scalar(Var a, double c) {
    return detail::unary_pointwise(
        "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var mul_scalar(Var a, double c) {
    return detail::unary_pointwise(
        "mul_scalar", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

inline Var neg(Var a) { return mul_scalar(a, -1.0); }

inline Var exp(Var a) {
    return detail::unary_pointwise(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
    return detail::unary_pointwise(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sigmoid(Var a) {
    return detail::unary_pointwise(
        "sigmoid", a, [](double x) { return sigmoid_value(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var leaky_relu(Var a, double slope) {
    return detail::unary_pointwise(
        "leaky_relu", a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
        [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

inline Var clamp(Var a, double lo, double hi) {
    return detail::unary_pointwise(
        "clamp", a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// Row-wise softmax with max-subtraction. mask (same shape, nonzero = keep) limits
// each row to its unmasked entries; masked outputs are exactly 0. A fully masked
// row is an error: callers own the degenerate-neighborhood rule.
inline Var softmax_rows(Var a, const Tensor* mask = nullptr) {
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    if (mask && !mask->same_shape(av)) {
        throw Error(ErrorKind::dimension, "softmax_rows: mask shape " + mask->shape_str() +
                                              " vs input " + av.shape_str());
    }
    Tensor result(av.rows(), av.cols());
    std::vector<char> keep(av.size(), 1);
    if (mask) {
        for (std::size_t i = 0; i < av.size(); ++i) keep[i] = mask->values()[i] != 0.0 ? 1 : 0;
    }
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < av.cols(); ++j) {
            if (keep[i * av.cols() + j]) mx = std::max(mx, av.at(i, j));
        }
        if (!std::isfinite(mx)) {
            throw Error(ErrorKind::empty_neighborhood,
                        "softmax_rows: row " + std::to_string(i) + " is fully masked");
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            if (keep[i * av.cols() + j]) {
                const double e = std::exp(av.at(i, j) - mx);
                result.at(i, j) = e;
                sum += e;
            }
        }
        for (std::size_t j = 0; j < av.cols(); ++j) {
            if (keep[i * av.cols() + j]) result.at(i, j) /= sum;
        }
    }
    Var out = t.emit("softmax_rows", std::move(result));
    t.set_backward(out, [a, out, keep = std::move(keep)](Tape& tp) {
        const Tensor& g = tp.grad(out);
        const Tensor& y = tp.value(out);
        Tensor ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) {
                if (keep[i * g.cols() + j]) dot += g.at(i, j) * y.at(i, j);
            }
            for (std::size_t j = 0; j < g.cols(); ++j) {
                if (keep[i * g.cols() + j]) ga.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
            }
        }
        tp.grad(a) += ga;
    });
    return out;
}

inline Var sum_all(Var a) {
    Tape& t = *a.tape;
    double s = 0.0;
    for (double v : a.val().values()) s += v;
    Var out = t.emit("sum_all", Tensor::scalar(s));
    t.set_backward(out, [a, out](Tape& tp) {
        const double g = tp.grad(out).values()[0];
        Tensor& ga = tp.grad(a);
        for (auto& v : ga.values()) v += g;
    });
    return out;
}

inline Var mean_all(Var a) {
    const double inv = 1.0 / static_cast<double>(a.val().size());
    return mul_scalar(sum_all(a), inv);
}

inline Var row_sums(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    Tensor result(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) s += av.at(i, j);
        result.at(i, 0) = s;
    }
    Var out = t.emit("row_sums", std::move(result));
    t.set_backward(out, [a, out](Tape& tp) {
        const Tensor& g = tp.grad(out);
        Tensor& ga = tp.grad(a);
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(i, 0);
    });
    return out;
}

inline Var col_sums(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    Tensor result(1, av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) result.at(0, j) += av.at(i, j);
    Var out = t.emit("col_sums", std::move(result));
    t.set_backward(out, [a, out](Tape& tp) {
        const Tensor& g = tp.grad(out);
        Tensor& ga = tp.grad(a);
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(0, j);
    });
    return out;
}

inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    for (std::size_t idx : indices) {
        if (idx >= av.rows()) {
            throw Error(ErrorKind::bounds, "gather_rows: index " + std::to_string(idx) +
                                               " out of range for " + av.shape_str());
        }
    }
    Tensor result(indices.size(), av.cols());
    for (std::size_t e = 0; e < indices.size(); ++e)
        for (std::size_t j = 0; j < av.cols(); ++j) result.at(e, j) = av.at(indices[e], j);
    Var out = t.emit("gather_rows", std::move(result));
    t.set_backward(out, [a, out, indices = std::move(indices)](Tape& tp) {
        const Tensor& g = tp.grad(out);
        Tensor& ga = tp.grad(a);
        for (std::size_t e = 0; e < indices.size(); ++e)
            for (std::size_t j = 0; j < g.cols(); ++j) ga.at(indices[e], j) += g.at(e, j);
    });
    return out;
}

// out[s] = sum of rows e with segments[e] == s. Rows of `a` are per-edge values;
// segments need not be sorted. Segments with no rows stay zero.
inline Var segment_sum(Var a, std::vector<std::size_t> segments, std::size_t n_segments) {
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    if (segments.size() != av.rows()) {
        throw Error(ErrorKind::dimension, "segment_sum: " + std::to_string(segments.size()) +
                                              " segment ids for " + av.shape_str());
    }
    for (std::size_t s : segments) {
        if (s >= n_segments) {
            throw Error(ErrorKind::bounds, "segment_sum: segment " + std::to_string(s) +
                                               " out of range " + std::to_string(n_segments));
        }
    }
    Tensor result(n_segments, av.cols());
    for (std::size_t e = 0; e < segments.size(); ++e)
        for (std::size_t j = 0; j < av.cols(); ++j) result.at(segments[e], j) += av.at(e, j);
    Var out = t.emit("segment_sum", std::move(result));
    t.set_backward(out, [a, out, segments = std::move(segments)](Tape& tp) {
        const Tensor& g = tp.grad(out);
        Tensor& ga = tp.grad(a);
        for (std::size_t e = 0; e < segments.size(); ++e)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(e, j) += g.at(segments[e], j);
    });
    return out;
}

// Softmax of an E x 1 logit column within each segment, with per-segment
// max-subtraction. The attention-normalization primitive for edge lists.
inline Var segment_softmax(Var logits, std::vector<std::size_t> segments,
                           std::size_t n_segments) {
    Tape& t = *logits.tape;
    const Tensor& lv = logits.val();
    if (lv.cols() != 1 || segments.size() != lv.rows()) {
        throw Error(ErrorKind::dimension,
                    "segment_softmax: logits must be Ex1 with one segment id per row, got " +
                        lv.shape_str() + " and " + std::to_string(segments.size()) + " ids");
    }
    std::vector<double> mx(n_segments, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < segments.size(); ++e) {
        if (segments[e] >= n_segments) {
            throw Error(ErrorKind::bounds, "segment_softmax: segment " +
                                               std::to_string(segments[e]) + " out of range " +
                                               std::to_string(n_segments));
        }
        mx[segments[e]] = std::max(mx[segments[e]], lv.at(e, 0));
    }
    std::vector<double> sums(n_segments, 0.0);
    Tensor result(lv.rows(), 1);
    for (std::size_t e = 0; e < segments.size(); ++e) {
        const double ev = std::exp(lv.at(e, 0) - mx[segments[e]]);
        result.at(e, 0) = ev;
        sums[segments[e]] += ev;
    }
    for (std::size_t e = 0; e < segments.size(); ++e) result.at(e, 0) /= sums[segments[e]];
    Var out = t.emit("segment_softmax", std::move(result));
    t.set_backward(out, [logits, out, segments = std::move(segments), n_segments](Tape& tp) {
        const Tensor& g = tp.grad(out);
        const Tensor& y = tp.value(out);
        std::vector<double> seg_dot(n_segments, 0.0);
        for (std::size_t e = 0; e < segments.size(); ++e)
            seg_dot[segments[e]] += g.at(e, 0) * y.at(e, 0);
        Tensor& ga = tp.grad(logits);
        for (std::size_t e = 0; e < segments.size(); ++e)
            ga.at(e, 0) += y.at(e, 0) * (g.at(e, 0) - seg_dot[segments[e]]);
    });
    return out;
}

// out[i][j] = a[i][j] * s[i] with s an m x 1 column.
inline Var scale_rows(Var a, Var s) {
    detail::check_same_tape(a, s);
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    const Tensor& sv = s.val();
    if (sv.cols() != 1 || sv.rows() != av.rows()) {
        throw Error(ErrorKind::dimension,
                    "scale_rows: scale must be " + std::to_string(av.rows()) + "x1, got " +
                        sv.shape_str());
    }
    Tensor result(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) result.at(i, j) = av.at(i, j) * sv.at(i, 0);
    Var out = t.emit("scale_rows", std::move(result));
    t.set_backward(out, [a, s, out](Tape& tp) {
        const Tensor& g = tp.grad(out);
        const Tensor& av_ = tp.value(a);
        const Tensor& sv_ = tp.value(s);
        Tensor& ga = tp.grad(a);
        Tensor& gs = tp.grad(s);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) {
                ga.at(i, j) += g.at(i, j) * sv_.at(i, 0);
                acc += g.at(i, j) * av_.at(i, j);
            }
            gs.at(i, 0) += acc;
        }
    });
    return out;
}

// out[i][j] = a[i][j] / s[i] with s an m x 1 column.
inline Var div_rows(Var a, Var s) {
    detail::check_same_tape(a, s);
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    const Tensor& sv = s.val();
    if (sv.cols() != 1 || sv.rows() != av.rows()) {
        throw Error(ErrorKind::dimension,
                    "div_rows: divisor must be " + std::to_string(av.rows()) + "x1, got " +
                        sv.shape_str());
    }
    Tensor result(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) result.at(i, j) = av.at(i, j) / sv.at(i, 0);
    Var out = t.emit("div_rows", std::move(result));
    t.set_backward(out, [a, s, out](Tape& tp) {
        const Tensor& g = tp.grad(out);
        const Tensor& av_ = tp.value(a);
        const Tensor& sv_ = tp.value(s);
        Tensor& ga = tp.grad(a);
        Tensor& gs = tp.grad(s);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            const double si = sv_.at(i, 0);
            double acc = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) {
                ga.at(i, j) += g.at(i, j) / si;
                acc += g.at(i, j) * av_.at(i, j);
            }
            gs.at(i, 0) -= acc / (si * si);
        }
    });
    return out;
}

inline Var concat_cols(Var a, Var b) {
    detail::check_same_tape(a, b);
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rows() != bv.rows()) {
        throw Error(ErrorKind::dimension,
                    "concat_cols: row counts disagree: " + av.shape_str() + " vs " + bv.shape_str());
    }
    const std::size_t split = av.cols();  // before emit: references into the tape
    Tensor result(av.rows(), av.cols() + bv.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 0; j < av.cols(); ++j) result.at(i, j) = av.at(i, j);
        for (std::size_t j = 0; j < bv.cols(); ++j) result.at(i, av.cols() + j) = bv.at(i, j);
    }
    Var out = t.emit("concat_cols", std::move(result));
    t.set_backward(out, [a, b, out, split](Tape& tp) {
        const Tensor& g = tp.grad(out);
        Tensor& ga = tp.grad(a);
        Tensor& gb = tp.grad(b);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < split; ++j) ga.at(i, j) += g.at(i, j);
            for (std::size_t j = split; j < g.cols(); ++j) gb.at(i, j - split) += g.at(i, j);
        }
    });
    return out;
}

// Inverted dropout; identity when not training or rate is 0.
inline Var dropout(Var a, double rate, std::mt19937_64& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) {
        throw Error(ErrorKind::contract, "dropout rate must be in [0,1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return a;
    Tape& t = *a.tape;
    const Tensor& av = a.val();
    const double keep = 1.0 - rate;
    const double inv_keep = 1.0 / keep;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> mask(av.size());
    Tensor result(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) {
        mask[i] = unif(rng) < keep ? inv_keep : 0.0;
        result.values()[i] = av.values()[i] * mask[i];
    }
    Var out = t.emit("dropout", std::move(result));
    t.set_backward(out, [a, out, mask = std::move(mask)](Tape& tp) {
        const Tensor& g = tp.grad(out);
        Tensor& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * mask[i];
    });
    return out;
}

}  // namespace vegn
