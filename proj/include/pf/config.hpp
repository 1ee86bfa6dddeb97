#pragma once

// Run configuration. Files are flat `key = value` text with `#` comments;
// the canonical form (sorted keys, round-trippable numbers) is what checkpoints
// store.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pf {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TrainMode { TeacherForcing, ProfessorForcing, ScheduledSampling };
enum class Task { Corpus, Copy, Raster };

inline std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::TeacherForcing: return "teacher_forcing";
        case TrainMode::ProfessorForcing: return "professor_forcing";
        case TrainMode::ScheduledSampling: return "scheduled_sampling";
    }
    return "?";
}

inline std::string to_string(Task t) {
    switch (t) {
        case Task::Corpus: return "corpus";
        case Task::Copy: return "copy";
        case Task::Raster: return "raster";
    }
    return "?";
}

inline TrainMode parse_mode(std::string_view s) {
    if (s == "teacher_forcing" || s == "tf") return TrainMode::TeacherForcing;
    if (s == "professor_forcing" || s == "pf") return TrainMode::ProfessorForcing;
    if (s == "scheduled_sampling" || s == "ss") return TrainMode::ScheduledSampling;
    throw ConfigError("unknown mode '" + std::string(s) + "' (expected tf|pf|ss)");
}

inline Task parse_task(std::string_view s) {
    if (s == "corpus") return Task::Corpus;
    if (s == "copy") return Task::Copy;
    if (s == "raster") return Task::Raster;
    throw ConfigError("unknown task '" + std::string(s) + "' (expected corpus|copy|raster)");
}

struct TrainConfig {
    Task task = Task::Copy;
    std::string corpus_path;
    double split_train = 0.9;
    double split_valid = 0.05;

    std::size_t seq_len = 50;
    std::size_t vocab = 8;  // fixed for copy/raster; derived from the corpus otherwise
    std::size_t pattern_len = 5;
    std::size_t train_count = 256;
    std::size_t valid_count = 64;
    std::size_t raster_width = 10;
    std::size_t raster_height = 10;
    std::string raster_shape = "mixed";

    std::size_t embed = 16;
    std::size_t gen_hidden = 64;
    std::size_t gen_layers = 1;
    std::size_t disc_hidden = 128;
    std::size_t disc_mlp_hidden = 0;  // 0: same as disc_hidden

    TrainMode mode = TrainMode::ProfessorForcing;
    bool include_outputs_in_behavior = false;
    bool use_ct = false;
    double adversarial_weight = 1.0;
    bool freeze_discriminator = false;
    double ss_start = 0.0;
    double ss_end = 0.25;

    double lr = 1e-4;
    double disc_lr = 0.0;  // 0: same as lr
    std::size_t batch_n = 16;
    std::size_t max_steps = 1000;
    std::size_t valid_every = 100;
    std::optional<std::uint64_t> seed;
    double temperature = 1.0;
    double bias = 0.0;

    std::size_t mlp_hidden() const { return disc_mlp_hidden ? disc_mlp_hidden : disc_hidden; }
    double discriminator_lr() const { return disc_lr > 0.0 ? disc_lr : lr; }

    // Linear ramp from ss_start to ss_end over max_steps.
    double p_sample(std::uint64_t step) const {
        if (max_steps <= 1) return ss_end;
        const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(max_steps - 1));
        return ss_start + (ss_end - ss_start) * f;
    }

    void set(std::string_view key, std::string_view value);
    std::map<std::string, std::string> entries() const;
    std::string canonical_text() const;
    void validate() const;

    std::uint64_t require_seed() const {
        if (!seed) throw ConfigError("seed is required");
        return *seed;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline double parse_double(std::string_view key, std::string_view v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("key '" + std::string(key) + "': not a number: '" + std::string(v) + "'");
    return out;
}

inline std::uint64_t parse_u64(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("key '" + std::string(key) + "': not a non-negative integer: '" + std::string(v) + "'");
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + std::string(key) + "': not a boolean: '" + std::string(v) + "'");
}

}  // namespace detail

inline void TrainConfig::set(std::string_view key, std::string_view raw) {
    using namespace detail;
    const std::string v = trim(raw);
    auto sz = [&](std::size_t& f) { f = static_cast<std::size_t>(parse_u64(key, v)); };
    auto dbl = [&](double& f) { f = parse_double(key, v); };
    auto bl = [&](bool& f) { f = parse_bool(key, v); };

    if (key == "task") task = parse_task(v);
    else if (key == "corpus_path") corpus_path = v;
    else if (key == "split_train") dbl(split_train);
    else if (key == "split_valid") dbl(split_valid);
    else if (key == "seq_len") sz(seq_len);
    else if (key == "vocab") sz(vocab);
    else if (key == "pattern_len") sz(pattern_len);
    else if (key == "train_count") sz(train_count);
    else if (key == "valid_count") sz(valid_count);
    else if (key == "raster_width") sz(raster_width);
    else if (key == "raster_height") sz(raster_height);
    else if (key == "raster_shape") raster_shape = v;
    else if (key == "embed") sz(embed);
    else if (key == "gen_hidden") sz(gen_hidden);
    else if (key == "gen_layers") sz(gen_layers);
    else if (key == "disc_hidden") sz(disc_hidden);
    else if (key == "disc_mlp_hidden") sz(disc_mlp_hidden);
    else if (key == "mode") mode = parse_mode(v);
    else if (key == "include_outputs_in_behavior") bl(include_outputs_in_behavior);
    else if (key == "use_ct") bl(use_ct);
    else if (key == "adversarial_weight") dbl(adversarial_weight);
    else if (key == "freeze_discriminator") bl(freeze_discriminator);
    else if (key == "ss_start") dbl(ss_start);
    else if (key == "ss_end") dbl(ss_end);
    else if (key == "lr") dbl(lr);
    else if (key == "disc_lr") dbl(disc_lr);
    else if (key == "batch_n") sz(batch_n);
    else if (key == "max_steps") sz(max_steps);
    else if (key == "valid_every") sz(valid_every);
    else if (key == "seed") seed = parse_u64(key, v);
    else if (key == "temperature") dbl(temperature);
    else if (key == "bias") dbl(bias);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline std::map<std::string, std::string> TrainConfig::entries() const {
    using detail::format_double;
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    std::map<std::string, std::string> m{
        {"task", to_string(task)},
        {"corpus_path", corpus_path},
        {"split_train", format_double(split_train)},
        {"split_valid", format_double(split_valid)},
        {"seq_len", std::to_string(seq_len)},
        {"vocab", std::to_string(vocab)},
        {"pattern_len", std::to_string(pattern_len)},
        {"train_count", std::to_string(train_count)},
        {"valid_count", std::to_string(valid_count)},
        {"raster_width", std::to_string(raster_width)},
        {"raster_height", std::to_string(raster_height)},
        {"raster_shape", raster_shape},
        {"embed", std::to_string(embed)},
        {"gen_hidden", std::to_string(gen_hidden)},
        {"gen_layers", std::to_string(gen_layers)},
        {"disc_hidden", std::to_string(disc_hidden)},
        {"disc_mlp_hidden", std::to_string(disc_mlp_hidden)},
        {"mode", to_string(mode)},
        {"include_outputs_in_behavior", b(include_outputs_in_behavior)},
        {"use_ct", b(use_ct)},
        {"adversarial_weight", format_double(adversarial_weight)},
        {"freeze_discriminator", b(freeze_discriminator)},
        {"ss_start", format_double(ss_start)},
        {"ss_end", format_double(ss_end)},
        {"lr", format_double(lr)},
        {"disc_lr", format_double(disc_lr)},
        {"batch_n", std::to_string(batch_n)},
        {"max_steps", std::to_string(max_steps)},
        {"valid_every", std::to_string(valid_every)},
        {"temperature", format_double(temperature)},
        {"bias", format_double(bias)},
    };
    if (seed) m["seed"] = std::to_string(*seed);
    return m;
}

inline std::string TrainConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
    return out;
}

inline void TrainConfig::validate() const {
    require_seed();
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(seq_len, "seq_len");
    positive(embed, "embed");
    positive(gen_hidden, "gen_hidden");
    positive(gen_layers, "gen_layers");
    positive(disc_hidden, "disc_hidden");
    positive(batch_n, "batch_n");
    positive(max_steps, "max_steps");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (disc_lr < 0.0) throw ConfigError("disc_lr must be non-negative");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (bias <= -1.0) throw ConfigError("bias must exceed -1");
    if (adversarial_weight < 0.0) throw ConfigError("adversarial_weight must be non-negative");
    if (!(ss_start >= 0.0 && ss_start <= 1.0 && ss_end >= 0.0 && ss_end <= 1.0))
        throw ConfigError("ss_start/ss_end must lie in [0,1]");
    switch (task) {
        case Task::Corpus:
            if (corpus_path.empty()) throw ConfigError("task=corpus requires corpus_path");
            if (!(split_train > 0.0 && split_valid >= 0.0 && split_train + split_valid <= 1.0))
                throw ConfigError("invalid split fractions");
            break;
        case Task::Copy:
            positive(vocab, "vocab");
            positive(train_count, "train_count");
            if (pattern_len == 0 || pattern_len > seq_len) throw ConfigError("copy task needs 1 <= pattern_len <= seq_len");
            break;
        case Task::Raster:
            positive(train_count, "train_count");
            if (raster_width < 4 || raster_height < 4) throw ConfigError("raster sides must be at least 4");
            break;
    }
}

// Applies `key = value` lines; blank lines and `#` comments are skipped.
inline void apply_config_text(TrainConfig& cfg, std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string s = detail::trim(line);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        cfg.set(detail::trim(std::string_view(s).substr(0, eq)), std::string_view(s).substr(eq + 1));
    }
}

inline TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    TrainConfig cfg;
    apply_config_text(cfg, ss.str());
    return cfg;
}

inline TrainConfig config_from_text(std::string_view text) {
    TrainConfig cfg;
    apply_config_text(cfg, text);
    return cfg;
}

}  // namespace pf
