#pragma once

// One Professor Forcing training step and the shared model/optimizer bundles.
//
// All three training modes run the same step. Teacher forcing and scheduled
// sampling differ from Professor Forcing only in which unroll feeds the NLL
// and in the adversarial term and discriminator update being switched off;
// the discriminator is still evaluated so every mode reports the same metrics.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pf/adam.hpp"
#include "pf/config.hpp"
#include "pf/discriminator.hpp"
#include "pf/generator.hpp"
#include "pf/rng.hpp"

namespace pf {

// Stream ids for per-step random sources derived from (seed, step).
enum Stream : std::uint64_t {
    kStreamInit = 1,
    kStreamFreeRun = 2,
    kStreamCoin = 3,
    kStreamScheduledSample = 4,
    kStreamDiscFreeRun = 5,
    kStreamData = 6,
};

struct Model {
    GeneratorParams gen;
    DiscriminatorParams disc;

    static std::size_t behavior_width(const TrainConfig& cfg, std::size_t vocab) {
        return cfg.gen_hidden + (cfg.include_outputs_in_behavior ? vocab : 0);
    }

    static Model init(const TrainConfig& cfg, std::size_t vocab) {
        Rng rng(derive_seed(cfg.require_seed(), kStreamInit));
        Model m;
        m.gen = GeneratorParams::init(vocab, cfg.embed, cfg.gen_hidden, cfg.gen_layers, rng);
        m.disc = DiscriminatorParams::init(behavior_width(cfg, vocab), cfg.disc_hidden, cfg.mlp_hidden(), rng);
        return m;
    }
};

struct Optimizers {
    AdamState gen, disc;

    static Optimizers init(Model& m, const TrainConfig& cfg) {
        const auto g = m.gen.tensors();
        const auto d = m.disc.tensors();
        return {AdamState::for_params(g, cfg.lr), AdamState::for_params(d, cfg.discriminator_lr())};
    }
};

struct StepMetrics {
    std::uint64_t step = 0;
    double nll_per_step = 0;
    double bpc = 0;
    double c_d = 0;
    double c_f = 0;
    double c_t = 0;
    double disc_acc = 0;
    bool gate_gen = false;
    bool gate_disc = false;
    double wallclock_ms = 0;
};

inline double nats_to_bits(double nats) { return nats / std::log(2.0); }

inline bool adversarial_mode(const TrainConfig& cfg) { return cfg.mode == TrainMode::ProfessorForcing; }

inline bool discriminator_trains(const TrainConfig& cfg) {
    return cfg.mode == TrainMode::ProfessorForcing && !cfg.freeze_discriminator;
}

struct DiscriminatorUpdate {
    double c_d = 0;
    double accuracy = 0;
};

// Runs both unrolls with the generator held constant and takes one Adam step
// on C_d. Returns loss and accuracy measured before the step.
inline DiscriminatorUpdate discriminator_update(Model& m, AdamState& opt, std::span<const Sequence> batch,
                                                const TrainConfig& cfg, Rng& free_run_rng) {
    Tape tape;
    const auto g = bind(tape, m.gen, /*trainable=*/false);
    const auto d = bind(tape, m.disc);
    const auto tf = unroll_teacher_forced(g, batch, cfg.include_outputs_in_behavior);
    const auto fr = unroll_free_running(g, batch.size(), batch[0].size(), free_run_rng, cfg.temperature,
                                        cfg.include_outputs_in_behavior);
    const Var d_tf = discriminate(d, tf.behavior);
    const Var d_fr = discriminate(d, fr.behavior);
    const Var c_d = loss_discriminator(d_tf, d_fr);
    DiscriminatorUpdate out{tape.scalar(c_d), disc_accuracy(tape.value(d_tf), tape.value(d_fr))};
    const auto params = m.disc.tensors();
    zero_grads(params);
    tape.backward(c_d);
    adam_step(opt, params);
    return out;
}

inline StepMetrics train_step(Model& m, Optimizers& opt, std::span<const Sequence> batch, const TrainConfig& cfg,
                              std::uint64_t step) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty minibatch");
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = cfg.require_seed();
    const std::size_t N = batch.size();
    const std::size_t T = batch[0].size();
    const bool with_outputs = cfg.include_outputs_in_behavior;

    StepMetrics out;
    out.step = step;

    Tape tape;
    const auto g = bind(tape, m.gen);
    const auto d = bind(tape, m.disc, /*trainable=*/false);

    Unroll forced;
    if (cfg.mode == TrainMode::ScheduledSampling) {
        Rng coin(derive_seed(seed, kStreamCoin, step));
        Rng draw(derive_seed(seed, kStreamScheduledSample, step));
        forced = scheduled_sampling_unroll(g, batch, cfg.p_sample(step), coin, draw, cfg.temperature, with_outputs);
    } else {
        forced = unroll_teacher_forced(g, batch, with_outputs);
    }
    Rng fr_rng(derive_seed(seed, kStreamFreeRun, step));
    const Unroll free = unroll_free_running(g, N, T, fr_rng, cfg.temperature, with_outputs);

    const NllResult nll = loss_nll(forced.logits, batch);
    const Var d_tf = discriminate(d, forced.behavior);
    const Var d_fr = discriminate(d, free.behavior);
    const Var c_d = loss_discriminator(d_tf, d_fr);
    const Var c_f = loss_fool_free_running(d_fr);
    const Var c_t = loss_match_teacher_forced(d_tf);

    out.nll_per_step = nll.per_step;
    out.bpc = nats_to_bits(nll.per_step);
    out.c_d = tape.scalar(c_d);
    out.c_f = tape.scalar(c_f);
    out.c_t = tape.scalar(c_t);
    out.disc_acc = disc_accuracy(tape.value(d_tf), tape.value(d_fr));
    const GateState gs = gate(out.disc_acc);
    out.gate_gen = gs.adversarial_to_generator;
    out.gate_disc = gs.update_discriminator;

    // Closed gate or zero weight: the adversarial nodes stay off the loss
    // graph, so the update equals a pure-NLL update bit for bit.
    Var loss = nll.total;
    if (adversarial_mode(cfg) && gs.adversarial_to_generator && cfg.adversarial_weight != 0.0) {
        Var adv = cfg.use_ct ? add(c_f, c_t) : c_f;
        loss = add(loss, affine(adv, cfg.adversarial_weight));
    }
    const auto gen_params = m.gen.tensors();
    zero_grads(gen_params);
    tape.backward(loss);
    adam_step(opt.gen, gen_params);

    if (discriminator_trains(cfg) && gs.update_discriminator) {
        Rng disc_rng(derive_seed(seed, kStreamDiscFreeRun, step));
        discriminator_update(m, opt.disc, batch, cfg, disc_rng);
    }

    for (double v : {out.nll_per_step, out.c_d, out.c_f, out.c_t})
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite metric at step " + std::to_string(step) +
                                     " (nll=" + std::to_string(out.nll_per_step) + ", c_d=" + std::to_string(out.c_d) +
                                     ", c_f=" + std::to_string(out.c_f) + ")");
    out.wallclock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

struct EvalResult {
    double nll_per_step = 0;
    double bpc = 0;
    double total_nats = 0;
    std::size_t symbols = 0;
};

// Teacher-forced NLL over a set of sequences, in fixed-size chunks.
inline EvalResult evaluate_nll(GeneratorParams& gen, std::span<const Sequence> seqs, std::size_t chunk = 32) {
    if (seqs.empty()) throw std::invalid_argument("evaluate_nll: no sequences");
    EvalResult r;
    for (std::size_t i = 0; i < seqs.size(); i += chunk) {
        const auto part = seqs.subspan(i, std::min(chunk, seqs.size() - i));
        Tape tape;
        const auto g = bind(tape, gen, false);
        const auto u = unroll_teacher_forced(g, part, false);
        const auto nll = loss_nll(u.logits, part);
        r.total_nats += nll.summed_nats;
        r.symbols += nll.symbols;
    }
    r.nll_per_step = r.total_nats / static_cast<double>(r.symbols);
    r.bpc = nats_to_bits(r.nll_per_step);
    return r;
}

}  // namespace pf
