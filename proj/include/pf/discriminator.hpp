#pragma once

// Behavior discriminator, the adversarial losses and accuracy gating.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "pf/generator.hpp"
#include "pf/recurrent.hpp"
#include "pf/tensor.hpp"

namespace pf {

inline constexpr double kLogitClip = 10.0;
inline constexpr double kGateGenerator = 0.75;
inline constexpr double kGateDiscriminator = 0.99;

struct DiscriminatorParams {
    BiGruParams encoder;
    MlpParams classifier;  // 3 ReLU layers, then a linear scalar output

    static DiscriminatorParams init(std::size_t behavior_width, std::size_t hidden, std::size_t mlp_hidden,
                                    Rng& rng) {
        DiscriminatorParams d;
        d.encoder = BiGruParams::init(behavior_width, hidden, rng);
        d.classifier = MlpParams::init({2 * hidden, mlp_hidden, mlp_hidden, mlp_hidden, 1}, rng);
        return d;
    }

    std::size_t input_width() const { return encoder.input(); }

    std::vector<Tensor*> tensors() {
        auto out = encoder.tensors();
        for (auto* t : classifier.tensors()) out.push_back(t);
        return out;
    }
};

struct DiscriminatorVars {
    BiGruVars encoder;
    std::vector<LinearVars> classifier;
    std::size_t input_width = 0;
};

inline DiscriminatorVars bind(Tape& t, DiscriminatorParams& d, bool trainable = true) {
    if (d.classifier.layers.empty() || d.classifier.layers.front().in() != 2 * d.encoder.hidden() ||
        d.classifier.layers.back().out() != 1)
        throw DimensionError("DiscriminatorParams: classifier must map 2×encoder hidden to one logit");
    return {bind(t, d.encoder, trainable), bind(t, d.classifier, trainable), d.input_width()};
}

// Time-averaged per-step classifier logit, before clipping. [B×1]
inline Var discriminator_logit(const DiscriminatorVars& d, const BehaviorSequence& b) {
    if (b.steps.empty()) throw std::invalid_argument("discriminate: empty behavior sequence");
    if (b.width != d.input_width)
        throw DimensionError("discriminate: behavior width " + std::to_string(b.width) +
                             " does not match discriminator input " + std::to_string(d.input_width));
    const auto encoded = bigru_encode(d.encoder, b.steps);
    std::vector<Var> scores;
    scores.reserve(encoded.size());
    for (Var e : encoded) scores.push_back(mlp_forward(d.classifier, e));
    return affine(add_n(scores), 1.0 / static_cast<double>(scores.size()));
}

inline Var clipped_probability(Var logit) { return sigmoid(clip(logit, -kLogitClip, kLogitClip)); }

// Probability that each row of b came from teacher forcing. [B×1], always
// within [σ(−10), σ(10)].
inline Var discriminate(const DiscriminatorVars& d, const BehaviorSequence& b) {
    return clipped_probability(discriminator_logit(d, b));
}

// ---------------------------------------------------------------------------
// Losses over [N×1] probability columns

// C_d = mean(−log D_tf) + mean(−log(1 − D_fr))
inline Var loss_discriminator(Var d_tf, Var d_fr) {
    const Var tf_term = mean(affine(log(d_tf), -1.0));
    const Var fr_term = mean(affine(log(affine(d_fr, -1.0, 1.0)), -1.0));
    return add(tf_term, fr_term);
}

// C_f = mean(−log D_fr)
inline Var loss_fool_free_running(Var d_fr) { return mean(affine(log(d_fr), -1.0)); }

// C_t = mean(−log(1 − D_tf))
inline Var loss_match_teacher_forced(Var d_tf) { return mean(affine(log(affine(d_tf, -1.0, 1.0)), -1.0)); }

namespace detail {

inline Var probability_column(Tape& t, std::span<const double> p) {
    if (p.empty()) throw std::invalid_argument("loss: empty probability list");
    for (double x : p)
        if (!(x > 0.0 && x < 1.0)) throw std::domain_error("loss: probability outside (0,1): " + std::to_string(x));
    return t.constant({p.size(), 1}, std::vector<double>(p.begin(), p.end()));
}

}  // namespace detail

inline double loss_discriminator(std::span<const double> d_tf, std::span<const double> d_fr) {
    Tape t;
    return t.scalar(loss_discriminator(detail::probability_column(t, d_tf), detail::probability_column(t, d_fr)));
}

inline double loss_fool_free_running(std::span<const double> d_fr) {
    Tape t;
    return t.scalar(loss_fool_free_running(detail::probability_column(t, d_fr)));
}

inline double loss_match_teacher_forced(std::span<const double> d_tf) {
    Tape t;
    return t.scalar(loss_match_teacher_forced(detail::probability_column(t, d_tf)));
}

// ---------------------------------------------------------------------------
// Gating

struct GateState {
    double disc_accuracy = 0.0;
    bool adversarial_to_generator = false;
    bool update_discriminator = true;
};

inline GateState gate(double disc_accuracy) {
    if (!(disc_accuracy >= 0.0 && disc_accuracy <= 1.0))
        throw std::invalid_argument("gate: accuracy outside [0,1]");
    return {disc_accuracy, disc_accuracy > kGateGenerator, disc_accuracy <= kGateDiscriminator};
}

// Fraction of the 2N behaviors classified correctly at threshold 0.5. A value
// of exactly 0.5 is a tie and counts as wrong for both classes.
inline double disc_accuracy(std::span<const double> d_tf, std::span<const double> d_fr) {
    if (d_tf.empty() && d_fr.empty()) throw std::invalid_argument("disc_accuracy: empty batch");
    std::size_t correct = 0;
    for (double p : d_tf) correct += p > 0.5;
    for (double p : d_fr) correct += p < 0.5;
    return static_cast<double>(correct) / static_cast<double>(d_tf.size() + d_fr.size());
}

// N teacher-forced and N free-running behaviors forming one discriminator batch.
struct SequenceBatch {
    BehaviorSequence teacher_forced;
    BehaviorSequence free_running;
};

inline double disc_accuracy(const DiscriminatorVars& d, const SequenceBatch& batch) {
    if (batch.teacher_forced.width != batch.free_running.width)
        throw DimensionError("disc_accuracy: mixed behavior widths");
    Tape& t = *batch.teacher_forced.steps.at(0).tape;
    const Var tf = discriminate(d, batch.teacher_forced);
    const Var fr = discriminate(d, batch.free_running);
    return disc_accuracy(t.value(tf), t.value(fr));
}

}  // namespace pf
