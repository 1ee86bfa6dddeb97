#pragma once

// Dense 2-D tensors with a define-by-run reverse-mode tape.
//
// A Tensor is a plain value (parameters, datasets, results). A Var is a handle
// to a node recorded on a Tape; every op appends one node whose inputs already
// exist on the tape, so the node order is a topological order and backward is
// a single reverse sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pf {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass touches it

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {
        for (auto d : shape)
            if (d == 0) throw DimensionError("tensor dimensions must be positive: " + to_string(shape));
    }
    Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (numel(shape) != data.size())
            throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                                 to_string(shape));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor({rows, cols}, std::move(values));
    }

    // 1-D tensors are treated as a single row.
    std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
    std::size_t size() const { return data.size(); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    void zero_grad() { grad.assign(data.size(), 0.0); }
};

class Tape;

// Handle to a tape node. Cheap to copy.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        BackwardFn backward;
        Tensor* sink = nullptr;  // parameter receiving accumulated grad
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf bound to a parameter. With trainable=false the value is a constant and
    // the parameter's grad is never touched.
    Var param(Tensor& t, bool trainable = true) {
        Node n{t.shape, t.data, {}, nullptr, trainable ? &t : nullptr};
        if (trainable && t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
        return push(std::move(n));
    }

    Var constant(const Tensor& t) { return push(Node{t.shape, t.data, {}, nullptr, nullptr}); }
    Var constant(Shape s, std::vector<double> values) { return constant(Tensor(std::move(s), std::move(values))); }

    Var record(Shape shape, std::vector<double> value, BackwardFn fn) {
        return push(Node{std::move(shape), std::move(value), {}, std::move(fn), nullptr});
    }

    const Node& node(std::size_t id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
    const Shape& shape(Var v) const { return nodes_[v.id].shape; }
    std::size_t rows(Var v) const { return rows_of(nodes_[v.id].shape); }
    std::size_t cols(Var v) const { return cols_of(nodes_[v.id].shape); }
    double scalar(Var v) const {
        if (nodes_[v.id].value.size() != 1) throw DimensionError("expected a scalar node");
        return nodes_[v.id].value[0];
    }
    Tensor to_tensor(Var v) const { return Tensor(nodes_[v.id].shape, nodes_[v.id].value); }

    // Gradient buffer of a node, allocated (zeroed) on first use.
    std::vector<double>& grad(std::size_t id) {
        auto& n = nodes_[id];
        if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }
    bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

    // Reverse sweep from a scalar loss. Parameter grads are accumulated (+=).
    void backward(Var loss) {
        if (loss.tape != this) throw std::invalid_argument("loss belongs to another tape");
        if (nodes_[loss.id].value.size() != 1)
            throw DimensionError("backward requires a scalar loss, got " + to_string(nodes_[loss.id].shape));
        for (auto& n : nodes_) n.grad.clear();
        grad(loss.id)[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.empty()) continue;
            if (n.backward) n.backward(*this, i);
            if (n.sink) {
                auto& g = n.sink->grad;
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
            }
        }
    }

    static std::size_t rows_of(const Shape& s) { return s.size() >= 2 ? s[0] : 1; }
    static std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

private:
    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
};

namespace detail {

inline Tape& tape_of(Var a) {
    if (!a.tape) throw std::invalid_argument("var is not attached to a tape");
    return *a.tape;
}

inline void same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::invalid_argument("vars belong to different tapes");
}

inline void require_same_shape(const Tape& t, Var a, Var b, const char* op) {
    const auto& sa = t.shape(a);
    const auto& sb = t.shape(b);
    if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b) || numel(sa) != numel(sb))
        throw DimensionError(std::string(op) + ": shape mismatch " + to_string(sa) + " vs " + to_string(sb));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Unary pointwise op given value fn and derivative expressed via (input, output).
template <class F, class DF>
Var unary(Var a, F f, DF df) {
    Tape& t = tape_of(a);
    const auto& x = t.value(a);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const std::size_t ia = a.id;
    return t.record(t.shape(a), std::move(y), [ia, df](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        const auto& yv = tp.node(self).value;
        const std::vector<double>& xv = tp.node(ia).value;
        auto& ga = tp.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix products

// a[m×k] · b[k×n]
inline Var matmul(Var a, Var b) {
    detail::same_tape(a, b);
    Tape& t = detail::tape_of(a);
    const std::size_t m = t.rows(a), k = t.cols(a), k2 = t.rows(b), n = t.cols(b);
    if (k != k2)
        throw DimensionError("matmul: inner dimensions differ " + to_string(t.shape(a)) + " x " +
                             to_string(t.shape(b)));
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    std::vector<double> C(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            const double* brow = &B[p * n];
            double* crow = &C[i * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    const std::size_t ia = a.id, ib = b.id;
    return t.record({m, n}, std::move(C), [ia, ib, m, k, n](Tape& tp, std::size_t self) {
        const auto& G = tp.node(self).grad;
        {
            auto& GA = tp.grad(ia);
            const auto& Bv = tp.node(ib).value;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * Bv[p * n + j];
                    GA[i * k + p] += s;
                }
        }
        {
            auto& GB = tp.grad(ib);
            const auto& Av = tp.node(ia).value;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = Av[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
                }
        }
    });
}

// a[m×k] · b[n×k]ᵀ; weights are stored [out×in] so layers call this directly.
inline Var matmul_nt(Var a, Var b) {
    detail::same_tape(a, b);
    Tape& t = detail::tape_of(a);
    const std::size_t m = t.rows(a), k = t.cols(a), n = t.rows(b), k2 = t.cols(b);
    if (k != k2)
        throw DimensionError("matmul_nt: inner dimensions differ " + to_string(t.shape(a)) + " x " +
                             to_string(t.shape(b)) + "^T");
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    std::vector<double> C(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            const double* arow = &A[i * k];
            const double* brow = &B[j * k];
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            C[i * n + j] = s;
        }
    const std::size_t ia = a.id, ib = b.id;
    return t.record({m, n}, std::move(C), [ia, ib, m, k, n](Tape& tp, std::size_t self) {
        const auto& G = tp.node(self).grad;
        {
            auto& GA = tp.grad(ia);
            const auto& Bv = tp.node(ib).value;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = G[i * n + j];
                    if (g == 0.0) continue;
                    const double* brow = &Bv[j * k];
                    double* garow = &GA[i * k];
                    for (std::size_t p = 0; p < k; ++p) garow[p] += g * brow[p];
                }
        }
        {
            auto& GB = tp.grad(ib);
            const auto& Av = tp.node(ia).value;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = G[i * n + j];
                    if (g == 0.0) continue;
                    const double* arow = &Av[i * k];
                    double* gbrow = &GB[j * k];
                    for (std::size_t p = 0; p < k; ++p) gbrow[p] += g * arow[p];
                }
        }
    });
}

// ---------------------------------------------------------------------------
// Pointwise ops

inline Var sigmoid(Var a) {
    return detail::unary(a, detail::sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
    return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
    return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var log(Var a) {
    for (double x : detail::tape_of(a).value(a))
        if (!(x > 0.0)) throw std::domain_error("log of non-positive value " + std::to_string(x));
    return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// Gradient is 1 strictly inside (lo, hi) and 0 elsewhere.
inline Var clip(Var a, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("clip: lo must be below hi");
    return detail::unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                         [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// scale * a + shift
inline Var affine(Var a, double scale, double shift = 0.0) {
    return detail::unary(a, [scale, shift](double x) { return scale * x + shift; },
                         [scale](double, double) { return scale; });
}

enum class Binary { Add, Sub, Mul };

inline Var binary(Binary kind, Var a, Var b) {
    detail::same_tape(a, b);
    Tape& t = detail::tape_of(a);
    detail::require_same_shape(t, a, b, kind == Binary::Add ? "add" : kind == Binary::Sub ? "sub" : "mul");
    const auto& x = t.value(a);
    const auto& y = t.value(b);
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        switch (kind) {
            case Binary::Add: z[i] = x[i] + y[i]; break;
            case Binary::Sub: z[i] = x[i] - y[i]; break;
            case Binary::Mul: z[i] = x[i] * y[i]; break;
        }
    }
    const std::size_t ia = a.id, ib = b.id;
    return t.record(t.shape(a), std::move(z), [ia, ib, kind](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        if (kind == Binary::Mul) {
            {
                auto& ga = tp.grad(ia);
                const auto& yv = tp.node(ib).value;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * yv[i];
            }
            auto& gb = tp.grad(ib);
            const auto& xv = tp.node(ia).value;
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xv[i];
            return;
        }
        {
            auto& ga = tp.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        auto& gb = tp.grad(ib);
        const double sign = kind == Binary::Sub ? -1.0 : 1.0;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
    });
}

inline Var add(Var a, Var b) { return binary(Binary::Add, a, b); }
inline Var sub(Var a, Var b) { return binary(Binary::Sub, a, b); }
inline Var mul(Var a, Var b) { return binary(Binary::Mul, a, b); }

// a[m×n] + bias[n], broadcast over rows.
inline Var add_row(Var a, Var bias) {
    detail::same_tape(a, bias);
    Tape& t = detail::tape_of(a);
    const std::size_t m = t.rows(a), n = t.cols(a);
    if (t.value(bias).size() != n)
        throw DimensionError("add_row: bias " + to_string(t.shape(bias)) + " does not match " +
                             to_string(t.shape(a)));
    std::vector<double> z = t.value(a);
    const auto& bv = t.value(bias);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) z[i * n + j] += bv[j];
    const std::size_t ia = a.id, ib = bias.id;
    return t.record(t.shape(a), std::move(z), [ia, ib, m, n](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        {
            auto& ga = tp.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        auto& gb = tp.grad(ib);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    });
}

// ---------------------------------------------------------------------------
// Structural ops

// Horizontal concatenation of equal-row-count matrices.
inline Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Tape& t = detail::tape_of(parts[0]);
    const std::size_t m = t.rows(parts[0]);
    std::vector<std::size_t> ids, widths;
    std::size_t total = 0;
    for (Var p : parts) {
        detail::same_tape(parts[0], p);
        if (t.rows(p) != m) throw DimensionError("concat_cols: row counts differ");
        ids.push_back(p.id);
        widths.push_back(t.cols(p));
        total += t.cols(p);
    }
    std::vector<double> z(m * total);
    for (std::size_t i = 0, off = 0; i < ids.size(); off += widths[i], ++i) {
        const auto& v = t.value(parts[i]);
        for (std::size_t r = 0; r < m; ++r)
            std::copy_n(&v[r * widths[i]], widths[i], &z[r * total + off]);
    }
    return t.record({m, total}, std::move(z), [ids, widths, m, total](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        for (std::size_t i = 0, off = 0; i < ids.size(); off += widths[i], ++i) {
            auto& gi = tp.grad(ids[i]);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < widths[i]; ++c) gi[r * widths[i] + c] += g[r * total + off + c];
        }
    });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
    return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

// Rows of table[n×d] selected by ids -> [len(ids)×d]. Used for embeddings.
inline Var gather_rows(Var table, std::span<const int> ids) {
    Tape& t = detail::tape_of(table);
    const std::size_t n = t.rows(table), d = t.cols(table);
    const auto& v = t.value(table);
    std::vector<double> z(ids.size() * d);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= n)
            throw std::out_of_range("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                                    std::to_string(n) + " rows");
        std::copy_n(&v[ids[r] * d], d, &z[r * d]);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    const std::size_t it = table.id;
    return t.record({ids.size(), d}, std::move(z), [it, idv = std::move(idv), d](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        auto& gt = tp.grad(it);
        for (std::size_t r = 0; r < idv.size(); ++r)
            for (std::size_t c = 0; c < d; ++c) gt[idv[r] * d + c] += g[r * d + c];
    });
}

// Same value, no gradient path back to the input.
inline Var detach(Var a) {
    Tape& t = detail::tape_of(a);
    return t.constant(t.shape(a), t.value(a));
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
    Tape& t = detail::tape_of(a);
    const auto& v = t.value(a);
    double s = 0.0;
    for (double x : v) s += x;
    const std::size_t ia = a.id;
    return t.record({1}, {s}, [ia](Tape& tp, std::size_t self) {
        const double g = tp.node(self).grad[0];
        for (auto& x : tp.grad(ia)) x += g;
    });
}

inline Var mean(Var a) {
    Tape& t = detail::tape_of(a);
    return affine(sum(a), 1.0 / static_cast<double>(t.value(a).size()));
}

// Elementwise sum of equally shaped vars.
inline Var add_n(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("add_n: no inputs");
    Tape& t = detail::tape_of(parts[0]);
    std::vector<double> z = t.value(parts[0]);
    std::vector<std::size_t> ids{parts[0].id};
    for (std::size_t i = 1; i < parts.size(); ++i) {
        detail::same_tape(parts[0], parts[i]);
        detail::require_same_shape(t, parts[0], parts[i], "add_n");
        const auto& v = t.value(parts[i]);
        for (std::size_t k = 0; k < z.size(); ++k) z[k] += v[k];
        ids.push_back(parts[i].id);
    }
    return t.record(t.shape(parts[0]), std::move(z), [ids](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        for (auto id : ids) {
            auto& gi = tp.grad(id);
            for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
        }
    });
}

// ---------------------------------------------------------------------------
// Softmax family (max-subtracted)

inline std::vector<double> softmax_values(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
    for (auto& x : p) x /= z;
    return p;
}

// Row-wise softmax of a [m×n] var.
inline Var softmax(Var a) {
    Tape& t = detail::tape_of(a);
    const std::size_t m = t.rows(a), n = t.cols(a);
    const auto& v = t.value(a);
    std::vector<double> z(m * n);
    for (std::size_t r = 0; r < m; ++r) {
        auto p = softmax_values(std::span<const double>(&v[r * n], n));
        std::copy(p.begin(), p.end(), &z[r * n]);
    }
    const std::size_t ia = a.id;
    return t.record(t.shape(a), std::move(z), [ia, m, n](Tape& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        const auto& y = tp.node(self).value;
        auto& ga = tp.grad(ia);
        for (std::size_t r = 0; r < m; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
            for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
        }
    });
}

// Per-row −log softmax(logits)[target] for logits [m×V]; returns [m×1].
inline Var softmax_cross_entropy(Var logits, std::span<const int> targets) {
    Tape& t = detail::tape_of(logits);
    const std::size_t m = t.rows(logits), n = t.cols(logits);
    if (targets.size() != m)
        throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(m) + " rows");
    const auto& v = t.value(logits);
    std::vector<double> loss(m);
    std::vector<double> probs(m * n);
    for (std::size_t r = 0; r < m; ++r) {
        if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= n)
            throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(targets[r]) +
                                    " outside vocabulary of " + std::to_string(n));
        const double* row = &v[r * n];
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
        const double lse = mx + std::log(z);
        loss[r] = lse - row[targets[r]];
        for (std::size_t c = 0; c < n; ++c) probs[r * n + c] = std::exp(row[c] - lse);
    }
    std::vector<int> tg(targets.begin(), targets.end());
    const std::size_t il = logits.id;
    return t.record({m, 1}, std::move(loss),
                    [il, m, n, tg = std::move(tg), probs = std::move(probs)](Tape& tp, std::size_t self) {
                        const auto& g = tp.node(self).grad;
                        auto& gl = tp.grad(il);
                        for (std::size_t r = 0; r < m; ++r) {
                            for (std::size_t c = 0; c < n; ++c) gl[r * n + c] += g[r] * probs[r * n + c];
                            gl[r * n + tg[r]] -= g[r];
                        }
                    });
}

inline Var softmax_cross_entropy(Var logits, int target) {
    return softmax_cross_entropy(logits, std::span<const int>(&target, 1));
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

// Builds the loss on a fresh tape for every probe. The builder binds the
// parameters itself; grads are reset here. Returns the worst relative error
// with denominator max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const std::function<Var(Tape&)>& build, std::span<Tensor* const> params,
                         double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
    for (Tensor* p : params) p->zero_grad();
    {
        Tape tape;
        tape.backward(build(tape));
    }
    auto eval = [&] {
        Tape tape;
        return tape.scalar(build(tape));
    };
    double worst = 0.0;
    for (Tensor* p : params) {
        const std::vector<double> analytic = p->grad;
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + epsilon;
            const double up = eval();
            p->data[i] = saved - epsilon;
            const double down = eval();
            p->data[i] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
        }
    }
    return worst;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace pf
