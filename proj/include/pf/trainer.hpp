#pragma once

// Training session: task construction, the step loop with periodic validation,
// and checkpoint/curve output.

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pf/checkpoint.hpp"
#include "pf/config.hpp"
#include "pf/data.hpp"
#include "pf/diagnostics.hpp"
#include "pf/engine.hpp"
#include "pf/log.hpp"

namespace pf {

enum TaskStream : std::uint64_t { kStreamTaskTrain = 101, kStreamTaskValid = 102 };

struct TaskData {
    SequenceDataset train, valid;
    std::size_t vocab = 0;
    std::string symbols;  // id -> byte, corpus task only
};

inline TaskData build_task(const TrainConfig& cfg) {
    const std::uint64_t seed = cfg.require_seed();
    TaskData d;
    switch (cfg.task) {
        case Task::Corpus: {
            const auto corpus = load_corpus(cfg.corpus_path, {cfg.split_train, cfg.split_valid});
            d.vocab = corpus.vocab.size();
            d.symbols = corpus.vocab.symbols();
            d.train = chunk_sequences(corpus.train_ids, cfg.seq_len);
            d.valid = chunk_sequences(corpus.valid_ids, cfg.seq_len);
            break;
        }
        case Task::Copy: {
            Rng tr(derive_seed(seed, kStreamTaskTrain));
            Rng va(derive_seed(seed, kStreamTaskValid));
            d.vocab = cfg.vocab;
            d.train = synth_copy_task(cfg.vocab, cfg.pattern_len, cfg.seq_len, cfg.train_count, tr);
            d.valid = synth_copy_task(cfg.vocab, cfg.pattern_len, cfg.seq_len, cfg.valid_count, va);
            break;
        }
        case Task::Raster: {
            Rng tr(derive_seed(seed, kStreamTaskTrain));
            Rng va(derive_seed(seed, kStreamTaskValid));
            const auto shape = parse_raster_shape(cfg.raster_shape);
            d.vocab = 2;
            d.train = raster_dataset(synth_raster_task(cfg.raster_width, cfg.raster_height, shape, cfg.train_count, tr));
            d.valid = raster_dataset(synth_raster_task(cfg.raster_width, cfg.raster_height, shape, cfg.valid_count, va));
            break;
        }
    }
    if (d.train.empty())
        throw ConfigError("training set is empty (corpus shorter than seq_len=" + std::to_string(cfg.seq_len) + "?)");
    return d;
}

struct ValidationRecord {
    std::uint64_t step = 0;
    double nll_per_step = 0;
    double bpc = 0;
};

class Trainer {
public:
    explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        data_ = build_task(cfg_);
        model_ = Model::init(cfg_, data_.vocab);
        optim_ = Optimizers::init(model_, cfg_);
    }

    // Resume; the config may differ from the checkpoint's only in max_steps.
    Trainer(Checkpoint ck, std::optional<std::size_t> max_steps = std::nullopt)
        : cfg_(ck.config), model_(std::move(ck.model)), optim_(std::move(ck.optim)), step_(ck.step),
          best_valid_(ck.best_valid_nll) {
        if (max_steps) cfg_.max_steps = *max_steps;
        cfg_.validate();
        data_ = build_task(cfg_);
        if (data_.vocab != ck.vocab) throw CheckpointError("checkpoint vocabulary does not match the task data");
    }

    const TrainConfig& config() const { return cfg_; }
    const TaskData& data() const { return data_; }
    Model& model() { return model_; }
    Optimizers& optimizers() { return optim_; }
    std::uint64_t step() const { return step_; }
    bool done() const { return step_ >= cfg_.max_steps; }
    double best_valid_nll() const { return best_valid_; }

    StepMetrics step_once() {
        if (!schedule_)
            schedule_.emplace(data_.train.size(), cfg_.batch_n, cfg_.require_seed(), kStreamData);
        const auto batch = schedule_->gather(data_.train, step_);
        auto m = train_step(model_, optim_, batch, cfg_, step_);
        ++step_;
        return m;
    }

    ValidationRecord validate() {
        const auto& seqs = data_.valid.empty() ? data_.train.sequences : data_.valid.sequences;
        const auto r = evaluate_nll(model_.gen, seqs);
        return {step_, r.nll_per_step, r.bpc};
    }

    Checkpoint checkpoint() const {
        Checkpoint ck;
        ck.config = cfg_;
        ck.vocab = data_.vocab;
        ck.symbols = data_.symbols;
        ck.model = model_;
        ck.optim = optim_;
        ck.step = step_;
        ck.best_valid_nll = best_valid_;
        return ck;
    }

    // True when the record improves on the best validation NLL so far.
    bool note_validation(const ValidationRecord& v) {
        if (v.nll_per_step < best_valid_) {
            best_valid_ = v.nll_per_step;
            return true;
        }
        return false;
    }

private:
    TrainConfig cfg_;
    TaskData data_;
    Model model_;
    Optimizers optim_;
    std::uint64_t step_ = 0;
    double best_valid_ = std::numeric_limits<double>::infinity();
    std::optional<BatchSchedule> schedule_;
};

struct RunResult {
    std::vector<StepMetrics> history;
    std::vector<ValidationRecord> validation;
    bool aborted = false;
    std::string error;
};

inline constexpr const char* kValidHeader = "step,valid_nll_per_step,valid_bpc";

// Runs until max_steps, writing into out_dir:
//   curves.csv  one row per step (rows from earlier runs are kept on resume)
//   valid.csv   periodic validation
//   final.ckpt  state after the last step
//   best.ckpt   state with the lowest validation NLL
inline RunResult run_training(Trainer& tr, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    RunResult res;
    const auto curves_path = out_dir / "curves.csv";
    if (tr.step() > 0 && std::filesystem::exists(curves_path)) {
        for (const auto& m : read_curves(curves_path))
            if (m.step < tr.step()) res.history.push_back(m);
    }
    const auto every = tr.config().valid_every;
    auto write_outputs = [&] {
        if (!res.history.empty()) emit_curves(res.history, curves_path);
        std::string v = std::string(kValidHeader) + "\n";
        for (const auto& r : res.validation)
            v += std::to_string(r.step) + "," + fmt_double(r.nll_per_step) + "," + fmt_double(r.bpc) + "\n";
        write_file_atomic(out_dir / "valid.csv", v);
    };
    auto validate = [&] {
        const auto v = tr.validate();
        res.validation.push_back(v);
        logging::info("step ", v.step, " valid nll/step ", v.nll_per_step, " bpc ", v.bpc);
        if (tr.note_validation(v)) {
            auto ck = tr.checkpoint();
            save_checkpoint(ck, out_dir / "best.ckpt");
        }
    };
    try {
        while (!tr.done()) {
            const auto m = tr.step_once();
            res.history.push_back(m);
            logging::debug("step ", m.step, " nll ", m.nll_per_step, " c_d ", m.c_d, " acc ", m.disc_acc);
            if (every > 0 && tr.step() % every == 0) validate();
        }
        if (res.validation.empty() || res.validation.back().step != tr.step()) validate();
    } catch (const std::exception& e) {
        res.aborted = true;
        res.error = e.what();
        logging::error("training aborted: ", e.what());
    }
    write_outputs();
    auto ck = tr.checkpoint();
    save_checkpoint(ck, out_dir / (res.aborted ? "aborted.ckpt" : "final.ckpt"));
    return res;
}

}  // namespace pf
