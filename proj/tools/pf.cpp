// Command-line front end: train, sample, diagnose, inspect-checkpoint.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pf/checkpoint.hpp"
#include "pf/config.hpp"
#include "pf/diagnostics.hpp"
#include "pf/log.hpp"
#include "pf/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAborted = 1;
constexpr int kExitUsage = 2;

struct TrainArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    std::optional<std::size_t> steps;
    std::optional<std::string> mode;
    std::vector<std::string> sets;
    std::string resume;
};

// defaults < config file < --set < dedicated flags
pf::TrainConfig resolve_config(const TrainArgs& a) {
    pf::TrainConfig cfg = a.config_path.empty() ? pf::TrainConfig{} : pf::load_config_file(a.config_path);
    for (const auto& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw pf::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(pf::detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    if (a.seed) cfg.seed = *a.seed;
    if (a.steps) cfg.max_steps = *a.steps;
    if (a.mode) cfg.mode = pf::parse_mode(*a.mode);
    cfg.validate();
    return cfg;
}

int cmd_train(const TrainArgs& a) {
    std::optional<pf::Trainer> tr;
    if (!a.resume.empty()) {
        if (!a.config_path.empty() || !a.sets.empty() || a.seed || a.mode)
            throw pf::ConfigError("--resume takes its configuration from the checkpoint; only --steps may be given");
        tr.emplace(pf::load_checkpoint(a.resume), a.steps);
        pf::logging::info("resuming from step ", tr->step());
    } else {
        tr.emplace(resolve_config(a));
    }
    const auto& cfg = tr->config();
    pf::logging::info("task=", pf::to_string(cfg.task), " mode=", pf::to_string(cfg.mode), " vocab=", tr->data().vocab,
                  " train_seqs=", tr->data().train.size(), " steps=", cfg.max_steps);
    const auto res = pf::run_training(*tr, a.out);
    if (res.aborted) {
        std::cerr << "error: " << res.error << "\n";
        return kExitAborted;
    }
    if (!res.history.empty()) {
        const auto& last = res.history.back();
        std::cout << "step=" << tr->step() << " nll_per_step=" << last.nll_per_step << " bpc=" << last.bpc
                  << " disc_acc=" << last.disc_acc << "\n";
    }
    return kExitOk;
}

struct SampleArgs {
    std::string checkpoint;
    std::optional<std::size_t> length;
    std::optional<double> bias;
    std::optional<std::uint64_t> seed;
    std::size_t count = 1;
    std::string output;
};

int cmd_sample(const SampleArgs& a) {
    auto ck = pf::load_checkpoint(a.checkpoint);
    const std::size_t length = a.length.value_or(ck.config.seq_len);
    const double bias = a.bias.value_or(ck.config.bias);
    if (bias <= -1.0) throw pf::ConfigError("bias must exceed -1");
    if (length == 0 || a.count == 0) throw pf::ConfigError("length and count must be positive");
    const double temperature = 1.0 / (1.0 + bias);
    pf::Rng rng(a.seed.value_or(ck.config.require_seed()));
    pf::Tape tape;
    const auto g = pf::bind(tape, ck.model.gen, false);
    const auto u = pf::unroll_free_running(g, a.count, length, rng, temperature, false);

    std::string text;
    for (std::size_t b = 0; b < a.count; ++b) {
        pf::Sequence ids;
        for (const auto& step : u.sampled) ids.push_back(step[b]);
        if (!ck.symbols.empty()) {
            for (int id : ids) text.push_back(ck.symbols.at(static_cast<std::size_t>(id)));
        } else {
            for (std::size_t i = 0; i < ids.size(); ++i) text += (i ? " " : "") + std::to_string(ids[i]);
        }
        text += "\n";
    }
    if (a.output.empty()) {
        std::cout << text;
    } else {
        pf::write_file_atomic(a.output, text);
    }
    pf::logging::info("sampled ", a.count, " x ", length, " symbols at temperature ", temperature);
    return kExitOk;
}

struct DiagnoseArgs {
    std::string checkpoint;
    std::optional<std::size_t> timestep;
    std::size_t samples = 64;
    std::optional<std::uint64_t> seed;
    std::string out = "diag";
    bool self_check = false;
};

int cmd_diagnose(const DiagnoseArgs& a) {
    auto ck = pf::load_checkpoint(a.checkpoint);
    const auto data = pf::build_task(ck.config);
    const auto& pool = data.valid.empty() ? data.train.sequences : data.valid.sequences;
    const std::size_t n = std::min(a.samples, pool.size());
    if (n == 0) throw pf::ConfigError("no sequences available for diagnosis");
    const std::vector<pf::Sequence> sample(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    const std::size_t t = a.timestep.value_or(ck.config.seq_len);
    if (t == 0 || t > sample[0].size())
        throw pf::ConfigError("timestep " + std::to_string(t) + " beyond sequence length " +
                              std::to_string(sample[0].size()));

    pf::Rng rng(pf::derive_seed(a.seed.value_or(ck.config.require_seed()), 0xd1a6));
    auto clouds = a.self_check ? pf::collect_teacher_forced_pair(ck.model.gen, sample, t)
                               : pf::collect_state_clouds(ck.model.gen, sample, t, rng, ck.config.temperature);
    const auto report = pf::divergence(clouds.first, clouds.second);

    const std::vector<pf::StateCloud> both{clouds.first, clouds.second};
    std::vector<std::vector<double>> all;
    for (const auto& c : both) all.insert(all.end(), c.points.begin(), c.points.end());
    const auto proj = pf::project_2d(all);

    fs::create_directories(a.out);
    pf::write_file_atomic(fs::path(a.out) / "clouds.csv", pf::clouds_csv(both, t));
    pf::write_file_atomic(fs::path(a.out) / "projection.csv", pf::projection_csv(both, proj));

    std::cout << "timestep=" << t << "\n"
              << "n_tf=" << report.n_tf << "\n"
              << "n_fr=" << report.n_fr << "\n"
              << "centroid_distance=" << pf::fmt_double(report.centroid_distance) << "\n"
              << "mean_cross_distance=" << pf::fmt_double(report.mean_cross_distance) << "\n"
              << "explained_variance_1=" << pf::fmt_double(proj.explained_variance[0]) << "\n"
              << "explained_variance_2=" << pf::fmt_double(proj.explained_variance[1]) << "\n";
    return kExitOk;
}

int cmd_inspect(const std::string& path) {
    auto ck = pf::load_checkpoint(path);
    std::size_t gen_params = 0, disc_params = 0;
    for (auto* t : ck.model.gen.tensors()) gen_params += t->size();
    for (auto* t : ck.model.disc.tensors()) disc_params += t->size();
    std::cout << "format=" << pf::kCheckpointMagic << "\n"
              << "step=" << ck.step << "\n"
              << "vocab=" << ck.vocab << "\n"
              << "generator_params=" << gen_params << "\n"
              << "discriminator_params=" << disc_params << "\n"
              << "adam_gen_t=" << ck.optim.gen.t << "\n"
              << "adam_disc_t=" << ck.optim.disc.t << "\n"
              << "best_valid_nll=" << pf::fmt_double(ck.best_valid_nll) << "\n"
              << "# config\n"
              << ck.config.canonical_text();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Professor Forcing trainer for GRU sequence generators"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a generator (and discriminator)");
    train->add_option("--config", ta.config_path, "key=value config file");
    train->add_option("--seed", ta.seed, "Random seed");
    train->add_option("--out", ta.out, "Output directory")->capture_default_str();
    train->add_option("--steps", ta.steps, "Number of updates (max_steps)");
    train->add_option("--mode", ta.mode, "tf | pf | ss")->check(CLI::IsMember({"tf", "pf", "ss"}));
    train->add_option("--set", ta.sets, "Override a config key (key=value), repeatable");
    train->add_option("--resume", ta.resume, "Continue from a checkpoint");

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "Free-running generation from a checkpoint");
    sample->add_option("--checkpoint", sa.checkpoint, "Checkpoint file")->required();
    sample->add_option("--length", sa.length, "Steps to generate (default: training seq_len)");
    sample->add_option("--bias", sa.bias, "Sampling bias; temperature = 1/(1+bias)");
    sample->add_option("--seed", sa.seed, "Random seed (default: training seed)");
    sample->add_option("--count", sa.count, "Number of sequences")->capture_default_str();
    sample->add_option("--output", sa.output, "Write to file instead of stdout");

    DiagnoseArgs da;
    auto* diag = app.add_subcommand("diagnose", "Teacher-forced vs free-running hidden-state divergence");
    diag->add_option("--checkpoint", da.checkpoint, "Checkpoint file")->required();
    diag->add_option("--timestep", da.timestep, "1-based timestep (default: last)");
    diag->add_option("--samples", da.samples, "Number of sequences per mode")->capture_default_str();
    diag->add_option("--seed", da.seed, "Random seed for free-running unrolls");
    diag->add_option("--out", da.out, "Output directory")->capture_default_str();
    diag->add_flag("--self-check", da.self_check, "Compare teacher forcing against itself");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect-checkpoint", "Print checkpoint metadata");
    inspect->add_option("checkpoint", inspect_path, "Checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(ta);
        if (*sample) return cmd_sample(sa);
        if (*diag) return cmd_diagnose(da);
        if (*inspect) return cmd_inspect(inspect_path);
    } catch (const pf::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAborted;
    }
    return kExitUsage;
}
