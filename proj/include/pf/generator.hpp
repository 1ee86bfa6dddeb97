#pragma once

// GRU generator: teacher-forced, free-running and scheduled-sampling unrolls,
// and extraction of the behavior sequence seen by the discriminator.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pf/recurrent.hpp"
#include "pf/rng.hpp"
#include "pf/tensor.hpp"

namespace pf {

using Sequence = std::vector<int>;

enum class Mode { TeacherForced, FreeRunning };

inline const char* to_string(Mode m) { return m == Mode::TeacherForced ? "tf" : "fr"; }

struct GeneratorParams {
    Tensor embedding;  // [(V+1)×E]; row V embeds the start token
    std::vector<GruCellParams> cells;
    OutputHeadParams head;
    std::size_t cond_dim = 0;  // width of optional per-step conditioning input x_t

    static GeneratorParams init(std::size_t vocab, std::size_t embed, std::size_t hidden, std::size_t layers,
                                Rng& rng, std::size_t cond_dim = 0) {
        if (vocab == 0 || embed == 0 || hidden == 0 || layers == 0)
            throw std::invalid_argument("GeneratorParams: sizes must be positive");
        GeneratorParams g;
        g.cond_dim = cond_dim;
        g.embedding = init_params(Init::Weight, {vocab + 1, embed}, rng);
        for (std::size_t l = 0; l < layers; ++l)
            g.cells.push_back(GruCellParams::init(l == 0 ? embed + cond_dim : hidden, hidden, rng));
        g.head = OutputHeadParams::init(hidden, vocab, rng);
        return g;
    }

    std::size_t vocab() const { return head.vocab(); }
    std::size_t hidden() const { return cells.back().hidden(); }
    std::size_t embed() const { return embedding.cols(); }
    int start_token() const { return static_cast<int>(vocab()); }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out{&embedding};
        for (auto& c : cells)
            for (auto* t : c.tensors()) out.push_back(t);
        for (auto* t : head.tensors()) out.push_back(t);
        return out;
    }
};

struct GeneratorVars {
    Var embedding;
    std::vector<GruCellVars> cells;
    LinearVars head;
    std::size_t vocab = 0, cond_dim = 0;
};

inline GeneratorVars bind(Tape& t, GeneratorParams& g, bool trainable = true) {
    if (g.embedding.rows() != g.vocab() + 1)
        throw DimensionError("GeneratorParams: embedding rows must be vocab+1");
    GeneratorVars v;
    v.embedding = t.param(g.embedding, trainable);
    for (auto& c : g.cells) v.cells.push_back(bind(t, c, trainable));
    v.head = bind(t, g.head, trainable);
    v.vocab = g.vocab();
    v.cond_dim = g.cond_dim;
    return v;
}

// Per-step features handed to the discriminator. Each step holds one row per
// sequence in the batch.
struct BehaviorSequence {
    std::vector<Var> steps;  // [B×width]
    Mode mode = Mode::TeacherForced;
    bool include_outputs = false;
    std::size_t width = 0;

    std::size_t length() const { return steps.size(); }
};

// Concatenates the candidate pre-activation of the top GRU layer with, when
// requested, the next-step softmax distribution.
inline BehaviorSequence extract_behavior(std::span<const Var> pre_tanh, std::span<const Var> softmax_out,
                                         bool include_outputs, Mode mode) {
    if (pre_tanh.empty()) throw std::invalid_argument("extract_behavior: empty sequence");
    if (include_outputs && softmax_out.size() != pre_tanh.size())
        throw std::invalid_argument("extract_behavior: " + std::to_string(pre_tanh.size()) + " hidden steps but " +
                                    std::to_string(softmax_out.size()) + " output steps");
    BehaviorSequence b;
    b.mode = mode;
    b.include_outputs = include_outputs;
    Tape& t = *pre_tanh[0].tape;
    for (std::size_t i = 0; i < pre_tanh.size(); ++i)
        b.steps.push_back(include_outputs ? concat_cols({pre_tanh[i], softmax_out[i]}) : pre_tanh[i]);
    b.width = t.cols(b.steps[0]);
    for (Var s : b.steps)
        if (t.cols(s) != b.width) throw DimensionError("extract_behavior: non-uniform step width");
    return b;
}

struct Unroll {
    std::vector<Var> logits;    // [B×V] per step; step t predicts y_t
    std::vector<Var> hidden;    // top-layer h_t [B×H]
    std::vector<Var> pre_tanh;  // top-layer candidate pre-activation [B×H]
    std::vector<Var> probs;     // softmax(logits) [B×V], filled when behavior includes outputs
    BehaviorSequence behavior;
    std::vector<Sequence> inputs;   // [T][B] symbol fed at each step (start token first)
    std::vector<Sequence> sampled;  // [T][B] draws made during the unroll (free-running/scheduled)
    std::size_t num_sampled_inputs = 0;
};

namespace detail {

// Runs the stacked cells one step; states is updated in place.
inline void generator_cell_step(const GeneratorVars& g, std::vector<Var>& states, Var input, Unroll& u) {
    Var x = input;
    GruStep st{};
    for (std::size_t l = 0; l < g.cells.size(); ++l) {
        st = gru_step(g.cells[l], states[l], x);
        states[l] = st.h;
        x = st.h;
    }
    u.hidden.push_back(st.h);
    u.pre_tanh.push_back(st.pre_tanh);
    u.logits.push_back(output_head(g.head, st.h));
}

inline Var generator_input(const GeneratorVars& g, std::span<const int> ids, std::span<const Tensor> x_seq,
                           std::size_t step) {
    Tape& t = *g.embedding.tape;
    Var e = gather_rows(g.embedding, ids);
    if (g.cond_dim == 0) {
        if (!x_seq.empty()) throw std::invalid_argument("generator has no conditioning input");
        return e;
    }
    if (step >= x_seq.size()) throw std::invalid_argument("conditioning sequence shorter than unroll");
    const Tensor& x = x_seq[step];
    if (x.rows() != ids.size() || x.cols() != g.cond_dim)
        throw DimensionError("conditioning input " + to_string(x.shape) + " does not match batch/cond_dim");
    return concat_cols({e, t.constant(x)});
}

inline std::vector<Var> initial_states(const GeneratorVars& g, std::size_t batch) {
    Tape& t = *g.embedding.tape;
    std::vector<Var> s;
    for (const auto& c : g.cells) s.push_back(zeros(t, batch, c.hidden));
    return s;
}

inline void finish_behavior(Unroll& u, bool include_outputs, Mode mode) {
    if (include_outputs)
        for (Var l : u.logits) u.probs.push_back(softmax(l));
    u.behavior = extract_behavior(u.pre_tanh, u.probs, include_outputs, mode);
}

inline int sample_symbol(const Tape& t, Var logits_row_block, std::size_t row, double temperature, Rng& rng) {
    const std::size_t V = t.cols(logits_row_block);
    const auto& v = t.value(logits_row_block);
    std::vector<double> scaled(V);
    for (std::size_t c = 0; c < V; ++c) scaled[c] = v[row * V + c] / temperature;
    return static_cast<int>(rng.categorical(softmax_values(scaled)));
}

inline void check_batch(std::span<const Sequence> y, std::size_t vocab) {
    if (y.empty()) throw std::invalid_argument("unroll: empty batch");
    const std::size_t T = y[0].size();
    if (T == 0) throw std::invalid_argument("unroll: empty target sequence");
    for (const auto& s : y) {
        if (s.size() != T) throw std::invalid_argument("unroll: sequences in a batch must share one length");
        for (int id : s)
            if (id < 0 || static_cast<std::size_t>(id) >= vocab)
                throw std::out_of_range("unroll: symbol " + std::to_string(id) + " outside vocabulary of " +
                                        std::to_string(vocab));
    }
}

}  // namespace detail

// Ground-truth y_{t−1} (start token at t = 1) is fed at every step.
inline Unroll unroll_teacher_forced(const GeneratorVars& g, std::span<const Sequence> y, bool include_outputs,
                                    std::span<const Tensor> x_seq = {}) {
    detail::check_batch(y, g.vocab);
    const std::size_t B = y.size(), T = y[0].size();
    Unroll u;
    auto states = detail::initial_states(g, B);
    Sequence ids(B, static_cast<int>(g.vocab));
    for (std::size_t t = 0; t < T; ++t) {
        u.inputs.push_back(ids);
        detail::generator_cell_step(g, states, detail::generator_input(g, ids, x_seq, t), u);
        for (std::size_t b = 0; b < B; ++b) ids[b] = y[b][t];
    }
    detail::finish_behavior(u, include_outputs, Mode::TeacherForced);
    return u;
}

// Each step samples y_t ~ softmax(logits/temperature) and feeds it back. The
// draw itself is not differentiated; gradients flow through the hidden chain.
// Targets are deliberately not a parameter: this path never sees ground truth.
inline Unroll unroll_free_running(const GeneratorVars& g, std::size_t batch, std::size_t steps, Rng& rng,
                                  double temperature, bool include_outputs, std::span<const Tensor> x_seq = {}) {
    if (steps == 0) throw std::invalid_argument("unroll_free_running: need at least one step");
    if (batch == 0) throw std::invalid_argument("unroll_free_running: empty batch");
    if (!(temperature > 0.0)) throw std::invalid_argument("unroll_free_running: temperature must be positive");
    Tape& tp = *g.embedding.tape;
    Unroll u;
    auto states = detail::initial_states(g, batch);
    Sequence ids(batch, static_cast<int>(g.vocab));
    for (std::size_t t = 0; t < steps; ++t) {
        u.inputs.push_back(ids);
        detail::generator_cell_step(g, states, detail::generator_input(g, ids, x_seq, t), u);
        for (std::size_t b = 0; b < batch; ++b) ids[b] = detail::sample_symbol(tp, u.logits.back(), b, temperature, rng);
        u.sampled.push_back(ids);
        if (t + 1 < steps) u.num_sampled_inputs += batch;
    }
    detail::finish_behavior(u, include_outputs, Mode::FreeRunning);
    return u;
}

// Scheduled sampling: before step t+1, each row independently feeds back its
// own sample with probability p_sample instead of y_t. Coin flips and symbol
// draws use separate streams so p_sample = 1 reproduces the free-running
// inputs of the same sample stream.
inline Unroll scheduled_sampling_unroll(const GeneratorVars& g, std::span<const Sequence> y, double p_sample,
                                        Rng& coin_rng, Rng& sample_rng, double temperature,
                                        bool include_outputs, std::span<const Tensor> x_seq = {}) {
    if (!(p_sample >= 0.0 && p_sample <= 1.0)) throw std::invalid_argument("p_sample must lie in [0,1]");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    detail::check_batch(y, g.vocab);
    Tape& tp = *g.embedding.tape;
    const std::size_t B = y.size(), T = y[0].size();
    Unroll u;
    auto states = detail::initial_states(g, B);
    Sequence ids(B, static_cast<int>(g.vocab));
    for (std::size_t t = 0; t < T; ++t) {
        u.inputs.push_back(ids);
        detail::generator_cell_step(g, states, detail::generator_input(g, ids, x_seq, t), u);
        if (t + 1 == T) break;
        Sequence drawn(B, -1);
        for (std::size_t b = 0; b < B; ++b) {
            if (coin_rng.bernoulli(p_sample)) {
                ids[b] = drawn[b] = detail::sample_symbol(tp, u.logits.back(), b, temperature, sample_rng);
                ++u.num_sampled_inputs;
            } else {
                ids[b] = y[b][t];
            }
        }
        u.sampled.push_back(std::move(drawn));
    }
    detail::finish_behavior(u, include_outputs, Mode::TeacherForced);
    return u;
}

struct NllResult {
    Var total;             // batch mean of per-sequence Σ_t −log P(y_t | y_<t)
    double per_step = 0;   // total / T
    double summed_nats = 0;  // Σ over batch and time
    std::size_t symbols = 0;
};

inline NllResult loss_nll(std::span<const Var> logits, std::span<const Sequence> y) {
    if (logits.empty()) throw std::invalid_argument("loss_nll: empty sequence");
    if (y.empty()) throw std::invalid_argument("loss_nll: empty batch");
    const std::size_t T = logits.size(), B = y.size();
    for (const auto& s : y)
        if (s.size() != T)
            throw std::invalid_argument("loss_nll: " + std::to_string(T) + " logit steps but target length " +
                                        std::to_string(s.size()));
    Tape& t = *logits[0].tape;
    std::vector<Var> per_step;
    Sequence targets(B);
    for (std::size_t i = 0; i < T; ++i) {
        for (std::size_t b = 0; b < B; ++b) targets[b] = y[b][i];
        per_step.push_back(sum(softmax_cross_entropy(logits[i], targets)));
    }
    NllResult r;
    const Var summed = add_n(per_step);
    r.summed_nats = t.scalar(summed);
    r.symbols = T * B;
    r.total = affine(summed, 1.0 / static_cast<double>(B));
    r.per_step = r.summed_nats / static_cast<double>(r.symbols);
    return r;
}

}  // namespace pf
