#include "setforge/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace setforge {
namespace {

namespace fs = std::filesystem;

TEST(Config, DefaultsAreValid) {
    RunConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_DOUBLE_EQ(cfg.range_l, 0.1);
    EXPECT_DOUBLE_EQ(cfg.range_m, 1.0);
    EXPECT_DOUBLE_EQ(cfg.range_h, 7.0);
    EXPECT_EQ(cfg.beam, 10);
    EXPECT_DOUBLE_EQ(cfg.alpha, -0.9);
    EXPECT_EQ(cfg.model.patch, 8);
    EXPECT_EQ(cfg.model.dim, 128);
}

TEST(Config, ApplyEntries) {
    RunConfig cfg;
    apply_config_entry(cfg, "seed", "1234");
    apply_config_entry(cfg, "data.attempts", "10, 20,30");
    apply_config_entry(cfg, "decode.alpha", "-0.5");
    apply_config_entry(cfg, "model.dim", "64");
    EXPECT_EQ(cfg.seed, 1234u);
    EXPECT_EQ(cfg.attempts_per_count, (std::vector<int>{10, 20, 30}));
    EXPECT_DOUBLE_EQ(cfg.alpha, -0.5);
    EXPECT_EQ(cfg.model.dim, 64);

    EXPECT_THROW(apply_config_entry(cfg, "no.such.key", "1"), ConfigError);
    EXPECT_THROW(apply_config_entry(cfg, "model.dim", "abc"), ConfigError);
    EXPECT_THROW(apply_config_entry(cfg, "data.attempts", "1,,2"), ConfigError);
    EXPECT_THROW(apply_config_entry(cfg, "threads", "0"), ConfigError);
}

TEST(Config, FileRoundTrip) {
    RunConfig cfg;
    cfg.seed = 99;
    cfg.attempts_per_count = {5, 6, 7};
    cfg.train_lr = 1e-4;
    cfg.model.enc_blocks = 2;

    const fs::path path = fs::temp_directory_path() / "setforge_cfg_echo.cfg";
    write_config_echo(cfg, path);

    RunConfig back;
    load_config_file(back, path);
    EXPECT_EQ(back.seed, cfg.seed);
    EXPECT_EQ(back.attempts_per_count, cfg.attempts_per_count);
    EXPECT_DOUBLE_EQ(back.train_lr, cfg.train_lr);
    EXPECT_EQ(back.model.enc_blocks, cfg.model.enc_blocks);
    fs::remove(path);
}

TEST(Config, FileSyntax) {
    const fs::path path = fs::temp_directory_path() / "setforge_cfg_syntax.cfg";
    {
        std::ofstream out(path);
        out << "# comment line\n";
        out << "\n";
        out << "seed = 7   # trailing comment\n";
        out << "decode.beam=3\n";
    }
    RunConfig cfg;
    load_config_file(cfg, path);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.beam, 3);

    {
        std::ofstream out(path);
        out << "seed 7\n";
    }
    RunConfig bad;
    EXPECT_THROW(load_config_file(bad, path), ConfigError);
    EXPECT_THROW(load_config_file(bad, path.string() + ".missing"), ConfigError);
    fs::remove(path);
}

TEST(Config, Validation) {
    RunConfig cfg;
    cfg.range_m = 9.0;  // violates M < H
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.model.dim = 30;  // not divisible by heads = 4
    EXPECT_THROW(cfg.validate(), ShapeError);
    cfg = RunConfig{};
    cfg.image_resolution = 30;  // not divisible by patch
    EXPECT_THROW(cfg.validate(), ShapeError);
}

TEST(Config, ModelConfigTracksResolution) {
    RunConfig cfg;
    cfg.image_resolution = 16;
    const ModelConfig m = cfg.model_config();
    EXPECT_EQ(m.image_h, 16);
    EXPECT_EQ(m.image_w, 16);
    EXPECT_EQ(m.image_c, 4);
    EXPECT_EQ(m.patches(), 4);
}

}  // namespace
}  // namespace setforge
