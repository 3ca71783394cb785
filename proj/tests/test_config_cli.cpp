#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdseg/cli/commands.hpp"

using namespace cdseg;
using namespace cdseg::config;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("cdseg_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string config_error_path(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI binary with stdout and stderr captured together.
Run run_cli(const std::string& args, const std::string& env = "") {
  const auto log = fs::temp_directory_path() / "cdseg_cli_out.txt";
  const std::string cmd = env + " '" CDSEG_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  r.out = ss.str();
  return r;
}

const std::string kSmall =
    " --set data.train_scenes=2 --set data.val_scenes=1 --set data.scene.num_points=400 --set train.max_steps=3";

}  // namespace

TEST(Config, PresetsValidateAndRoundTrip) {
  for (const char* name : {"tiny", "paper"}) {
    auto c = preset(name);
    EXPECT_NO_THROW(validate(c)) << name;
    auto back = parse_strict<ExperimentConfig>(write(c), "");
    EXPECT_EQ(write(back), write(c)) << name;
  }
  EXPECT_EQ(preset("paper").network.ffm_heads, 32);
  EXPECT_EQ(preset("paper").schedule.kind, diffusion::ScheduleKind::cosine);
  EXPECT_THROW(preset("huge"), ConfigError);
}

TEST(Config, UnknownKeysReportTheirPath) {
  EXPECT_EQ(config_error_path([] { parse_strict<ExperimentConfig>(json{{"trian", json::object()}}, ""); }), "trian");
  EXPECT_EQ(config_error_path([] { parse_strict<ExperimentConfig>(json{{"train", {{"lr", 1e-3}, {"momentum", 0.9}}}}, ""); }),
            "train.momentum");
  EXPECT_EQ(config_error_path([] {
              parse_strict<ExperimentConfig>(json{{"data", {{"scene", {{"num_pointz", 3}}}}}}, "");
            }),
            "data.scene.num_pointz");
  EXPECT_EQ(config_error_path([] { parse_strict<ExperimentConfig>(json{{"train", {{"lr", "fast"}}}}, ""); }), "train.lr");
  EXPECT_EQ(config_error_path([] { parse_strict<ExperimentConfig>(json{{"inference", {{"mode", "FAST"}}}}, ""); }),
            "inference.mode");
}

TEST(Config, OverridesAndFileLayering) {
  auto dir = fresh_dir("cfg");
  auto file = write_file(dir / "c.json", R"({"train": {"lr": 0.01}, "seed": 4})");
  auto c = load_config("tiny", file, {"train.batch_size=3", "inference.mode=MSAI", "inference.steps=5", "output_dir=abc"});
  EXPECT_DOUBLE_EQ(c.train.lr, 0.01);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.train.batch_size, 3);
  EXPECT_EQ(c.inference.mode, inference::Mode::msai);
  EXPECT_EQ(c.output_dir, "abc");
  EXPECT_EQ(c.network.ffm_channels, tiny_preset().network.ffm_channels);
  EXPECT_EQ(config_error_path([&] { load_config("tiny", std::nullopt, {"train.lrr=1"}); }), "train.lrr");
  EXPECT_EQ(config_error_path([&] { load_config("tiny", std::nullopt, {"novalue"}); }), "novalue");
  EXPECT_EQ(config_error_path([&] { load_config("tiny", write_file(dir / "t.json", R"({"trian": {}})"), {}); }), "trian");
  EXPECT_EQ(config_error_path([&] { load_config("tiny", write_file(dir / "b.json", "{"), {}); }), "--config");
  fs::remove_all(dir);
}

TEST(Config, CrossFieldValidation) {
  auto path_of = [](const std::vector<std::string>& sets) {
    return config_error_path([&] { load_config("tiny", std::nullopt, sets); });
  };
  EXPECT_EQ(path_of({"network.framework=ncf", "network.nn_input=labels"}), "inference.mode");
  EXPECT_EQ(path_of({"network.framework=ncf"}), "network.nn_input");
  EXPECT_EQ(path_of({"inference.mode=MSAI", "inference.steps=5000"}), "inference.steps");
  EXPECT_EQ(path_of({"data.scene.num_classes=7"}), "data.scene.num_classes");
  EXPECT_EQ(path_of({"sweeps.sparsity.fractions=[0.5, 1.5]"}), "sweeps.sparsity.fractions[1]");
  EXPECT_EQ(path_of({"compare.ncf_steps=0"}), "compare.ncf_steps");
  EXPECT_EQ(path_of({"train.voxel_size=0"}), "train.voxel_size");
  EXPECT_NO_THROW(load_config("tiny", std::nullopt, {"network.framework=ncf", "network.nn_input=labels", "inference.mode=NCF", "inference.steps=10"}));
}

TEST(Config, OutputRootPrecedence) {
  auto c = tiny_preset();
  c.output_dir = "from_config";
  ::unsetenv(kOutputRootEnv);
  EXPECT_EQ(output_root(c), "from_config");
  ::setenv(kOutputRootEnv, "/tmp/from_env", 1);
  EXPECT_EQ(output_root(c), "/tmp/from_env");
  cli::Options o;
  o.out = "/tmp/from_flag";
  EXPECT_EQ(cli::resolve(o).output_dir, "/tmp/from_flag");
  EXPECT_EQ(cli::resolve(cli::Options{}).output_dir, "/tmp/from_env");
  ::unsetenv(kOutputRootEnv);
}

TEST(Config, SynthesizedSplits) {
  auto c = tiny_preset();
  c.data.train_scenes = 3;
  c.data.val_scenes = 2;
  c.data.scene.num_points = 200;
  auto d = synthesize(c.data, 1);
  ASSERT_EQ(d.size(), 5u);
  EXPECT_EQ(geometry::filter_split(d, "train").size(), 3u);
  EXPECT_EQ(geometry::filter_split(d, "val").size(), 2u);
  EXPECT_EQ(synthesize(c.data, 1)[4].cloud.positions, d[4].cloud.positions);
  EXPECT_NE(synthesize(c.data, 2)[4].cloud.positions, d[4].cloud.positions);
}

TEST(Cli, HelpListsSubcommands) {
  auto r = run_cli(" --help");
  EXPECT_EQ(r.code, 0);
  for (const auto& s : cli::subcommands()) EXPECT_NE(r.out.find(s), std::string::npos) << s;
  EXPECT_EQ(run_cli("").code, cli::kExitConfig);
  EXPECT_EQ(run_cli("frobnicate").code, cli::kExitConfig);
}

TEST(Cli, ConfigErrorsExitOneWithFieldPath) {
  auto dir = fresh_dir("cli_err");
  auto r = run_cli("train --out '" + dir.string() + "' --set train.lrr=0.1");
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.out.find("train.lrr"), std::string::npos) << r.out;
  r = run_cli("train --out '" + dir.string() + "' --set train.lr=-1");
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.out.find("train.lr"), std::string::npos) << r.out;
  r = run_cli("eval --out '" + dir.string() + "' --checkpoint '" + (dir / "none.ckpt").string() + "'");
  EXPECT_EQ(r.code, cli::kExitRuntime);
  fs::remove_all(dir);
}

TEST(Cli, PipelineAndSnapshotReproduce) {
  auto dir = fresh_dir("cli_pipe");
  const std::string out = " --out '" + dir.string() + "'" + kSmall;
  ASSERT_EQ(run_cli("synth" + out).code, 0);
  EXPECT_TRUE(fs::exists(dir / "synth" / "data"));
  auto tr = run_cli("train" + out);
  ASSERT_EQ(tr.code, 0) << tr.out;
  EXPECT_TRUE(fs::exists(dir / "train" / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "train" / "config.resolved.json"));
  auto ev = run_cli("eval" + out + " --predictions");
  ASSERT_EQ(ev.code, 0) << ev.out;
  EXPECT_NE(ev.out.find("mIoU"), std::string::npos);
  auto metrics = evaluation::read_json(dir / "eval" / "metrics.json");
  EXPECT_EQ(metrics.at("mode"), "SSI");

  // the resolved snapshot alone reproduces the evaluation
  auto dir2 = fresh_dir("cli_pipe2");
  auto snap = dir / "train" / "config.resolved.json";
  auto ev2 = run_cli("eval --config '" + snap.string() + "' --out '" + dir2.string() + "' --checkpoint '" +
                 (dir / "train" / "last.ckpt").string() + "'");
  ASSERT_EQ(ev2.code, 0) << ev2.out;
  auto metrics2 = evaluation::read_json(dir2 / "eval" / "metrics.json");
  EXPECT_EQ(metrics2.at("metrics"), metrics.at("metrics"));

  // a different network cannot load the checkpoint
  auto bad = run_cli("eval" + out + " --set network.ffm_channels=16");
  EXPECT_EQ(bad.code, cli::kExitRuntime);
  EXPECT_NE(bad.out.find("network"), std::string::npos);

  // the environment sets the output root when --out is absent
  auto dir3 = fresh_dir("cli_env");
  ASSERT_EQ(run_cli("synth" + kSmall, std::string(kOutputRootEnv) + "='" + dir3.string() + "'").code, 0);
  EXPECT_TRUE(fs::exists(dir3 / "synth" / "data"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
  fs::remove_all(dir3);
}

TEST(Cli, PlotWithoutResultsFails) {
  auto dir = fresh_dir("cli_plot");
  auto r = run_cli("plot --out '" + dir.string() + "' --results '" + dir.string() + "'");
  EXPECT_EQ(r.code, cli::kExitRuntime);
  fs::remove_all(dir);
}
