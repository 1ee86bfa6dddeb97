#pragma once

// Recurrent and feed-forward building blocks.
//
// Activations are batched row-wise: a hidden state is [B×H], one row per
// sequence. Weight matrices are stored [out×in] and applied as x·Wᵀ.

#include <cmath>
#include <span>
#include <vector>

#include "pf/rng.hpp"
#include "pf/tensor.hpp"

namespace pf {

enum class Init { Weight, Bias };

// Glorot-uniform weights, zero biases. For weights shape is [fan_out×fan_in].
inline Tensor init_params(Init kind, const Shape& shape, Rng& rng) {
    Tensor t(shape);
    if (kind == Init::Bias) return t;
    if (shape.size() != 2) throw DimensionError("weight init expects a 2-D shape, got " + to_string(shape));
    const double s = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    for (auto& x : t.data) x = rng.uniform(-s, s);
    return t;
}

struct Linear {
    Tensor W;  // [out×in]
    Tensor b;  // [out]

    static Linear init(std::size_t in, std::size_t out, Rng& rng) {
        return {init_params(Init::Weight, {out, in}, rng), init_params(Init::Bias, {out}, rng)};
    }
    std::size_t in() const { return W.cols(); }
    std::size_t out() const { return W.rows(); }
};

struct LinearVars {
    Var W, b;
};

inline LinearVars bind(Tape& t, Linear& p, bool trainable = true) {
    return {t.param(p.W, trainable), t.param(p.b, trainable)};
}

inline Var linear(const LinearVars& p, Var x) { return add_row(matmul_nt(x, p.W), p.b); }

// ---------------------------------------------------------------------------
// GRU cell

struct GruCellParams {
    Tensor W_z, W_r, W_c;  // [H×I]
    Tensor U_z, U_r, U_c;  // [H×H]
    Tensor b_z, b_r, b_c;  // [H]

    static GruCellParams init(std::size_t input, std::size_t hidden, Rng& rng) {
        GruCellParams p;
        p.W_z = init_params(Init::Weight, {hidden, input}, rng);
        p.W_r = init_params(Init::Weight, {hidden, input}, rng);
        p.W_c = init_params(Init::Weight, {hidden, input}, rng);
        p.U_z = init_params(Init::Weight, {hidden, hidden}, rng);
        p.U_r = init_params(Init::Weight, {hidden, hidden}, rng);
        p.U_c = init_params(Init::Weight, {hidden, hidden}, rng);
        p.b_z = init_params(Init::Bias, {hidden}, rng);
        p.b_r = init_params(Init::Bias, {hidden}, rng);
        p.b_c = init_params(Init::Bias, {hidden}, rng);
        return p;
    }

    std::size_t hidden() const { return U_z.rows(); }
    std::size_t input() const { return W_z.cols(); }

    std::vector<Tensor*> tensors() { return {&W_z, &W_r, &W_c, &U_z, &U_r, &U_c, &b_z, &b_r, &b_c}; }
};

struct GruCellVars {
    Var W_z, W_r, W_c, U_z, U_r, U_c, b_z, b_r, b_c;
    std::size_t hidden = 0, input = 0;
};

inline GruCellVars bind(Tape& t, GruCellParams& p, bool trainable = true) {
    return {t.param(p.W_z, trainable), t.param(p.W_r, trainable), t.param(p.W_c, trainable),
            t.param(p.U_z, trainable), t.param(p.U_r, trainable), t.param(p.U_c, trainable),
            t.param(p.b_z, trainable), t.param(p.b_r, trainable), t.param(p.b_c, trainable),
            p.hidden(),                p.input()};
}

struct GruStep {
    Var h;         // new state [B×H]
    Var pre_tanh;  // candidate pre-activation [B×H]
};

//   z = σ(x W_zᵀ + h U_zᵀ + b_z)
//   r = σ(x W_rᵀ + h U_rᵀ + b_r)
//   a = x W_cᵀ + (r⊙h) U_cᵀ + b_c
//   h' = (1−z)⊙h + z⊙tanh(a)
inline GruStep gru_step(const GruCellVars& p, Var h_prev, Var x) {
    Tape& t = *h_prev.tape;
    if (t.cols(h_prev) != p.hidden || t.cols(x) != p.input || t.rows(h_prev) != t.rows(x))
        throw DimensionError("gru_step: state " + to_string(t.shape(h_prev)) + " / input " +
                             to_string(t.shape(x)) + " do not match cell (H=" + std::to_string(p.hidden) +
                             ", I=" + std::to_string(p.input) + ")");
    const Var z = sigmoid(add_row(add(matmul_nt(x, p.W_z), matmul_nt(h_prev, p.U_z)), p.b_z));
    const Var r = sigmoid(add_row(add(matmul_nt(x, p.W_r), matmul_nt(h_prev, p.U_r)), p.b_r));
    const Var a = add_row(add(matmul_nt(x, p.W_c), matmul_nt(mul(r, h_prev), p.U_c)), p.b_c);
    const Var c = tanh(a);
    const Var h = add(h_prev, mul(z, sub(c, h_prev)));
    return {h, a};
}

inline Var zeros(Tape& t, std::size_t rows, std::size_t cols) { return t.constant(Tensor({rows, cols})); }

// ---------------------------------------------------------------------------
// Output head

struct OutputHeadParams {
    Linear proj;  // W_o [V×H], b_o [V]

    static OutputHeadParams init(std::size_t hidden, std::size_t vocab, Rng& rng) {
        return {Linear::init(hidden, vocab, rng)};
    }
    std::size_t vocab() const { return proj.out(); }
    std::vector<Tensor*> tensors() { return {&proj.W, &proj.b}; }
};

inline LinearVars bind(Tape& t, OutputHeadParams& p, bool trainable = true) { return bind(t, p.proj, trainable); }

inline Var output_head(const LinearVars& p, Var h) { return linear(p, h); }

// ---------------------------------------------------------------------------
// MLP: ReLU after every layer but the last.

struct MlpParams {
    std::vector<Linear> layers;

    // sizes = {in, h1, ..., out}
    static MlpParams init(std::span<const std::size_t> sizes, Rng& rng) {
        if (sizes.size() < 2) throw std::invalid_argument("MlpParams: need at least one layer");
        MlpParams p;
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i) p.layers.push_back(Linear::init(sizes[i], sizes[i + 1], rng));
        return p;
    }
    static MlpParams init(std::initializer_list<std::size_t> sizes, Rng& rng) {
        return init(std::span<const std::size_t>(sizes.begin(), sizes.size()), rng);
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers) {
            out.push_back(&l.W);
            out.push_back(&l.b);
        }
        return out;
    }
};

inline std::vector<LinearVars> bind(Tape& t, MlpParams& p, bool trainable = true) {
    std::vector<LinearVars> out;
    for (auto& l : p.layers) out.push_back(bind(t, l, trainable));
    return out;
}

inline Var mlp_forward(std::span<const LinearVars> layers, Var x) {
    if (layers.empty()) throw std::invalid_argument("mlp_forward: no layers");
    Var y = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        y = linear(layers[i], y);
        if (i + 1 < layers.size()) y = relu(y);
    }
    return y;
}

// ---------------------------------------------------------------------------
// Bidirectional GRU encoder

struct BiGruParams {
    GruCellParams forward_cell;
    GruCellParams backward_cell;

    static BiGruParams init(std::size_t input, std::size_t hidden, Rng& rng) {
        BiGruParams p;
        p.forward_cell = GruCellParams::init(input, hidden, rng);
        p.backward_cell = GruCellParams::init(input, hidden, rng);
        return p;
    }
    std::size_t hidden() const { return forward_cell.hidden(); }
    std::size_t input() const { return forward_cell.input(); }

    std::vector<Tensor*> tensors() {
        auto out = forward_cell.tensors();
        for (auto* t : backward_cell.tensors()) out.push_back(t);
        return out;
    }
};

struct BiGruVars {
    GruCellVars fwd, bwd;
};

inline BiGruVars bind(Tape& t, BiGruParams& p, bool trainable = true) {
    if (p.forward_cell.hidden() != p.backward_cell.hidden())
        throw DimensionError("BiGruParams: directions have different hidden sizes");
    return {bind(t, p.forward_cell, trainable), bind(t, p.backward_cell, trainable)};
}

// Output step t is [fwd_t | bwd_t], each direction starting from a zero state.
inline std::vector<Var> bigru_encode(const BiGruVars& p, std::span<const Var> seq) {
    if (seq.empty()) throw std::invalid_argument("bigru_encode: empty sequence");
    Tape& t = *seq[0].tape;
    const std::size_t B = t.rows(seq[0]);
    const std::size_t T = seq.size();
    std::vector<Var> fwd(T), bwd(T);
    Var h = zeros(t, B, p.fwd.hidden);
    for (std::size_t i = 0; i < T; ++i) fwd[i] = h = gru_step(p.fwd, h, seq[i]).h;
    h = zeros(t, B, p.bwd.hidden);
    for (std::size_t i = T; i-- > 0;) bwd[i] = h = gru_step(p.bwd, h, seq[i]).h;
    std::vector<Var> out(T);
    for (std::size_t i = 0; i < T; ++i) out[i] = concat_cols({fwd[i], bwd[i]});
    return out;
}

}  // namespace pf
