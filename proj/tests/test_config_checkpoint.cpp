#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pf/checkpoint.hpp"
#include "pf/config.hpp"
#include "pf/trainer.hpp"

using namespace pf;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string& name) {
    const auto p = fs::path(PF_TEST_TMP) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.seed = 11;
    c.vocab = 5;
    c.seq_len = 8;
    c.pattern_len = 3;
    c.train_count = 12;
    c.valid_count = 4;
    c.embed = 4;
    c.gen_hidden = 6;
    c.disc_hidden = 5;
    c.batch_n = 4;
    c.lr = 3e-3;
    c.max_steps = 5;
    return c;
}

std::vector<double> all_values(Model& m) {
    std::vector<double> out;
    for (auto* t : m.gen.tensors()) out.insert(out.end(), t->data.begin(), t->data.end());
    for (auto* t : m.disc.tensors()) out.insert(out.end(), t->data.begin(), t->data.end());
    return out;
}

}  // namespace

TEST(Config, ParsesKeyValueText) {
    const auto c = config_from_text("# comment\n task = raster \nseed=42\nlr=0.001 # trailing\nmode=ss\n\n");
    EXPECT_EQ(c.task, Task::Raster);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.lr, 0.001);
    EXPECT_EQ(c.mode, TrainMode::ScheduledSampling);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(config_from_text("learning_rate=1"), ConfigError);
    EXPECT_THROW(config_from_text("lr=fast"), ConfigError);
    EXPECT_THROW(config_from_text("seq_len=-3"), ConfigError);
    EXPECT_THROW(config_from_text("use_ct=maybe"), ConfigError);
    EXPECT_THROW(config_from_text("mode=gan"), ConfigError);
    EXPECT_THROW(config_from_text("just words"), ConfigError);
}

TEST(Config, SeedIsRequired) {
    TrainConfig c;
    EXPECT_THROW(c.validate(), ConfigError);
    c.seed = 1;
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, ValidationCatchesInconsistentSettings) {
    auto c = tiny_config();
    c.pattern_len = 9;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config();
    c.task = Task::Corpus;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_config();
    c.temperature = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, CanonicalTextRoundTrips) {
    auto c = tiny_config();
    c.lr = 0.1 + 0.2;  // not exactly representable in short decimal
    c.adversarial_weight = 1.0 / 3.0;
    const auto text = c.canonical_text();
    const auto back = config_from_text(text);
    EXPECT_EQ(back.canonical_text(), text);
    EXPECT_EQ(back.lr, c.lr);
    EXPECT_EQ(back.adversarial_weight, c.adversarial_weight);
}

TEST(Config, ScheduledSamplingRamp) {
    auto c = tiny_config();
    c.ss_start = 0.0;
    c.ss_end = 0.25;
    c.max_steps = 101;
    EXPECT_EQ(c.p_sample(0), 0.0);
    EXPECT_DOUBLE_EQ(c.p_sample(50), 0.125);
    EXPECT_DOUBLE_EQ(c.p_sample(100), 0.25);
    EXPECT_DOUBLE_EQ(c.p_sample(500), 0.25);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Trainer tr(tiny_config());
    for (int i = 0; i < 3; ++i) tr.step_once();
    tr.note_validation(tr.validate());
    auto ck = tr.checkpoint();
    const auto bytes = serialize_checkpoint(ck);
    auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(all_values(back.model), all_values(ck.model));
    EXPECT_EQ(back.optim.gen.m, ck.optim.gen.m);
    EXPECT_EQ(back.optim.disc.v, ck.optim.disc.v);
    EXPECT_EQ(back.optim.gen.t, 3u);
    EXPECT_EQ(back.step, 3u);
    EXPECT_EQ(back.best_valid_nll, ck.best_valid_nll);
    EXPECT_EQ(back.config.canonical_text(), ck.config.canonical_text());
}

TEST(Checkpoint, FileRoundTrip) {
    const auto dir = tmp_dir("ckpt_file");
    Trainer tr(tiny_config());
    tr.step_once();
    auto ck = tr.checkpoint();
    save_checkpoint(ck, dir / "a.ckpt");
    auto back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(all_values(back.model), all_values(ck.model));
    EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST(Checkpoint, FlippedByteFailsChecksum) {
    Trainer tr(tiny_config());
    auto ck = tr.checkpoint();
    auto bytes = serialize_checkpoint(ck);
    bytes[bytes.size() / 2] ^= 0x01;
    try {
        deserialize_checkpoint(bytes);
        FAIL() << "corruption not detected";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, RejectsOtherFormatVersion) {
    Trainer tr(tiny_config());
    auto ck = tr.checkpoint();
    auto bytes = serialize_checkpoint(ck);
    bytes[7] = '2';
    try {
        deserialize_checkpoint(bytes);
        FAIL() << "version mismatch not detected";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("PFCK0002"), std::string::npos) << e.what();
    }
    EXPECT_THROW(deserialize_checkpoint("GARBAGE!abcd"), CheckpointError);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
    Trainer tr(tiny_config());
    auto ck = tr.checkpoint();
    const auto bytes = serialize_checkpoint(ck);
    for (std::size_t keep : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
        EXPECT_THROW(deserialize_checkpoint(std::string_view(bytes).substr(0, keep)), CheckpointError) << keep;
}

TEST(Checkpoint, ResumeContinuesBitExactly) {
    auto cfg = tiny_config();
    cfg.max_steps = 12;
    Trainer full(cfg);
    std::vector<StepMetrics> ref;
    while (!full.done()) ref.push_back(full.step_once());

    Trainer first(cfg);
    for (int i = 0; i < 5; ++i) first.step_once();
    auto ck = first.checkpoint();
    Trainer resumed(deserialize_checkpoint(serialize_checkpoint(ck)));
    std::vector<StepMetrics> tail;
    while (!resumed.done()) tail.push_back(resumed.step_once());
    ASSERT_EQ(tail.size(), 7u);
    for (std::size_t i = 0; i < tail.size(); ++i) {
        EXPECT_EQ(curves_row(tail[i], false), curves_row(ref[5 + i], false));
    }
    EXPECT_EQ(all_values(resumed.model()), all_values(full.model()));
}

TEST(Trainer, RunWritesOutputs) {
    const auto dir = tmp_dir("run_outputs");
    auto cfg = tiny_config();
    cfg.max_steps = 6;
    cfg.valid_every = 4;
    Trainer tr(cfg);
    const auto res = run_training(tr, dir);
    EXPECT_FALSE(res.aborted);
    EXPECT_EQ(read_curves(dir / "curves.csv").size(), 6u);
    EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
    ASSERT_EQ(res.validation.size(), 2u);
    EXPECT_EQ(res.validation[0].step, 4u);
    EXPECT_EQ(res.validation[1].step, 6u);
}
