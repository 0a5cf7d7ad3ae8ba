#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "resmotion/cli/commands.hpp"
#include "resmotion/cli/config.hpp"
#include "resmotion/core/errors.hpp"
#include "test_support.hpp"

using namespace resmotion;
using resmotion::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"([synth]
task = motion_labels
num_classes = 2
videos_per_class = 5
frames_per_video = 17
frame_size = 32
motion_families = up_fast, down_fast
val_fraction = 0.4
seed = 5

[input]
mode = residual
frames = 4
resize_width = 18
resize_height = 18
crop_width = 16
crop_height = 16
frame_resize_width = 18
frame_resize_height = 18
frame_crop_width = 16
frame_crop_height = 16
num_clips = 2

[model]
width_multiplier = 0.125
blocks_per_stage = 1

[train]
batch_size = 3
epochs = 2
initial_lr = 0.05
val_every = 1
val_clips = 1
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Runs the built binary; returns its exit status.
int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + RESMOTION_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// path -> hash of every output listed in a run manifest.
std::map<std::string, std::string> output_hashes(const fs::path& dir) {
  const auto j = nlohmann::json::parse(slurp(dir / "run_manifest.json"));
  std::map<std::string, std::string> out;
  for (const auto& o : j.at("outputs")) out[o.at("path")] = o.at("hash");
  return out;
}

}  // namespace

TEST(Config, IniRoundTripIsExact) {
  const auto c = cli::parse_config(kTinyConfig);
  EXPECT_EQ(c.synth.num_classes, 2u);
  EXPECT_EQ(c.input.clip.frames, 4u);
  EXPECT_DOUBLE_EQ(c.model.width_multiplier, 0.125);
  const std::string ini = cli::to_ini(c);
  EXPECT_EQ(cli::to_ini(cli::parse_config(ini)), ini);
  const std::string defaults = cli::to_ini(cli::RunConfig{});
  EXPECT_EQ(cli::to_ini(cli::parse_config(defaults)), defaults);
}

TEST(Config, RejectsUnknownKeysSectionsAndBadValues) {
  EXPECT_THROW(cli::parse_config("[train]\nlearning_rate = 0.1\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[optimizer]\nmomentum = 0.9\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[train]\nepochs = ten\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[model]\nactivation = tanh\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[input]\nnum_clips = 0\n"), ConfigError);
  EXPECT_THROW(cli::parse_config("[synth]\ncolors = ff00\n"), ConfigError);
  EXPECT_THROW(cli::load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Config, PartialFileKeepsDefaults) {
  const auto c = cli::parse_config("[train]\nepochs = 3\n");
  const cli::RunConfig d;
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.batch_size, d.train.batch_size);
  EXPECT_DOUBLE_EQ(c.train.initial_lr, d.train.initial_lr);
}

TEST(Config, ExampleConfigsLoad) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(RESMOTION_SOURCE_DIR) / "tools" / "configs")) {
    const auto c = cli::load_config(e.path());
    EXPECT_NO_THROW(c.synth.validate()) << e.path();
    EXPECT_NO_THROW(c.resolved_model(c.synth.num_classes).validate()) << e.path();
    ++n;
  }
  EXPECT_GE(n, 3u);
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli_codes");
  write_file(dir.path() / "bad.ini", "[train]\nlearning_rate = 0.1\n");
  EXPECT_EQ(run_cli("synth --config " + q(dir.path() / "bad.ini") + " --out " + q(dir.path() / "s")), 2);
  EXPECT_EQ(run_cli("synth"), 2);             // missing --out
  EXPECT_EQ(run_cli("frobnicate --out x"), 2);  // unknown subcommand
  EXPECT_EQ(run_cli("train --dataset " + q(dir.path() / "missing") + " --out " + q(dir.path() / "t")), 3);
}

TEST(Cli, SynthTrainEvalFuseCorrelate) {
  TempDir dir("cli_e2e");
  const fs::path cfg = dir.path() / "tiny.ini", data = dir.path() / "data";
  write_file(cfg, kTinyConfig);
  ASSERT_EQ(run_cli("synth --config " + q(cfg) + " --out " + q(data)), 0);
  for (const char* f : {"manifest.txt", "train.txt", "val.txt", "classes.txt", "run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(data / f)) << f;
  }

  const fs::path run = dir.path() / "run";
  ASSERT_EQ(run_cli("train --config " + q(cfg) + " --dataset " + q(data) + " --out " + q(run) + " --deterministic"), 0);
  for (const char* f : {"train_log.jsonl", "model.rmp", "checkpoint.rmk", "config.ini", "val_predictions.jsonl",
                        "val_report.txt"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  // Two epochs with validation each epoch: train and val lines for both.
  std::ifstream log(run / "train_log.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(log, l);) lines += !l.empty();
  EXPECT_EQ(lines, 4u);

  const fs::path ev = dir.path() / "eval";
  ASSERT_EQ(run_cli("eval --params " + q(run / "model.rmp") + " --dataset " + q(data) + " --out " + q(ev)), 0);
  // Same clips per video as the train command's val pass.
  EXPECT_EQ(slurp(ev / "report.txt"), slurp(run / "val_report.txt"));
  EXPECT_EQ(slurp(ev / "predictions.jsonl"), slurp(run / "val_predictions.jsonl"));

  const fs::path fu = dir.path() / "fuse";
  ASSERT_EQ(run_cli("fuse --a " + q(ev / "predictions.jsonl") + " --b " + q(ev / "predictions.jsonl") + " --dataset " +
                q(data) + " --out " + q(fu)),
            0);
  EXPECT_EQ(slurp(fu / "report.txt"), slurp(ev / "report.txt"));

  const fs::path co = dir.path() / "corr";
  const int rc = run_cli("correlate --a " + q(ev / "report.txt") + " --b " + q(fu / "report.txt") + " --classes " +
                     q(data / "classes.txt") + " --out " + q(co));
  // A constant per-category vector (e.g. one class always right) has no correlation.
  if (rc == 0) {
    const std::string kv = slurp(co / "correlation.txt");
    ASSERT_EQ(kv.rfind("pearson_r=", 0), 0u);
    EXPECT_NEAR(std::stod(kv.substr(10)), 1.0, 1e-12);
    EXPECT_TRUE(fs::exists(co / "difference_table.txt"));
  } else {
    EXPECT_EQ(rc, 1);
  }

  const auto m = nlohmann::json::parse(slurp(run / "run_manifest.json"));
  EXPECT_EQ(m.at("command"), "train");
  EXPECT_EQ(m.at("tool_version"), cli::kToolVersion);
  EXPECT_EQ(m.at("outputs").size(), 6u);
  EXPECT_EQ(cli::to_ini(cli::parse_config(m.at("config").get<std::string>())), m.at("config"));

  // Rerunning the same command reproduces every output byte for byte.
  const fs::path run2 = dir.path() / "run2";
  ASSERT_EQ(run_cli("train --config " + q(cfg) + " --dataset " + q(data) + " --out " + q(run2) + " --deterministic"), 0);
  EXPECT_EQ(output_hashes(run), output_hashes(run2));

  // Resuming from the final checkpoint with more epochs continues training.
  std::string longer = kTinyConfig;
  longer.replace(longer.find("epochs = 2"), 10, "epochs = 3");
  write_file(dir.path() / "longer.ini", longer);
  const fs::path run3 = dir.path() / "run3";
  ASSERT_EQ(run_cli("train --config " + q(dir.path() / "longer.ini") + " --dataset " + q(data) + " --resume " +
                q(run / "checkpoint.rmk") + " --out " + q(run3)),
            0);
  std::ifstream log3(run3 / "train_log.jsonl");
  std::string first;
  std::getline(log3, first);
  EXPECT_EQ(nlohmann::json::parse(first).at("epoch"), 2);  // zero-based
}

TEST(Cli, PackWritesOneClipPerVideo) {
  TempDir dir("cli_pack");
  const fs::path cfg = dir.path() / "tiny.ini", data = dir.path() / "data", out = dir.path() / "pack";
  write_file(cfg, kTinyConfig);
  ASSERT_EQ(run_cli("synth --config " + q(cfg) + " --out " + q(data)), 0);
  ASSERT_EQ(run_cli("pack --config " + q(cfg) + " --dataset " + q(data) + " --out " + q(out)), 0);
  std::ifstream index(out / "clips_index.txt");
  std::size_t n = 0;
  for (std::string l; std::getline(index, l);) n += !l.empty();
  EXPECT_EQ(n, 10u);
  EXPECT_TRUE(fs::exists(out / "clips.rmc"));
}
