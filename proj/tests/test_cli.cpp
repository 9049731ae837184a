#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "turbo_twin/cli.hpp"
#include "turbo_twin/error.hpp"
#include "turbo_twin/trainer.hpp"

using namespace turbo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class F>
void expect_code(ErrorCode code, F&& f, const std::string& mention = "") {
  try {
    f();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
    if (!mention.empty()) {
      EXPECT_NE(std::string(e.what()).find(mention), std::string::npos) << e.what();
    }
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json tiny(const std::string& name) {
  return json{{"schema_version", 1},
              {"model.base_width", 4},
              {"model.residual_blocks", 1},
              {"critic.base_width", 4},
              {"optimizer.batch_size", 2},
              {"optimizer.total_steps", 4},
              {"simulate.n", 10},
              {"simulate.m", 32},
              {"simulate.train_fraction", 0.6},
              {"channel.blur_sigma", 0.8},
              {"data.root", "data"},
              {"run.name", name}};
}

// A scratch directory holding config files; the dataset lives under it.
struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("turbo_twin_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  fs::path write(const std::string& file, const json& j) const {
    std::ofstream(dir / file) << j.dump(2);
    return dir / file;
  }
};

int run_binary(const std::string& args, const fs::path& stderr_file) {
  const std::string cmd = std::string(TURBO_TWIN_BIN) + " " + args + " > /dev/null 2> " + stderr_file.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, UnknownKeyRejected) {
  auto j = tiny("x");
  j["simulate.densty"] = 0.5;
  expect_code(ErrorCode::ConfigError, [&] { experiment_from_json(j); }, "simulate.densty");
}

TEST(Config, BadValueNamesField) {
  auto j = tiny("x");
  j["simulate.density"] = 1.5;
  expect_code(ErrorCode::RangeError, [&] { experiment_from_json(j); }, "simulate.density");
  j = tiny("x");
  j["channel.gamma"] = "two";
  expect_code(ErrorCode::ConfigError, [&] { experiment_from_json(j); }, "channel.gamma");
  j = tiny("x");
  j["critic.kind"] = "patch";
  j["loss.gan"] = "wgan_gp";
  EXPECT_THROW(experiment_from_json(j), ConfigValidationError);
}

TEST(Config, RoundTripAndHash) {
  const auto cfg = experiment_from_json(tiny("rt"));
  const auto j = experiment_to_json(cfg);
  const auto back = experiment_from_json(j);
  EXPECT_EQ(experiment_to_json(back), j);
  EXPECT_EQ(config_hash(j), config_hash(experiment_to_json(experiment_from_json(tiny("rt")))));
  auto other = tiny("rt");
  other["loss.alpha"] = 0.5;
  EXPECT_NE(config_hash(j), config_hash(experiment_to_json(experiment_from_json(other))));
  EXPECT_EQ(config_hash(j).size(), 16u);
}

TEST(Config, RunRootOverride) {
  ::setenv(kRunRootEnv, "/tmp/somewhere", 1);
  EXPECT_EQ(run_root(), fs::path("/tmp/somewhere"));
  ::unsetenv(kRunRootEnv);
  EXPECT_EQ(run_root(), fs::path("runs"));
}

TEST(Commands, SimulateTrainEvaluateReport) {
  Workspace ws("e2e");
  const auto cfg = ws.write("a.json", tiny("a"));
  std::ostringstream log;
  const auto m1 = cmd_simulate(cfg, log);
  EXPECT_EQ(m1.size(), 10u);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(ws.dir / "data" / "templates")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 10u);
  const auto manifest_bytes = slurp(ws.dir / "data" / kManifestFile);
  cmd_simulate(cfg, log);
  EXPECT_EQ(slurp(ws.dir / "data" / kManifestFile), manifest_bytes);

  TrainCommandOptions topts;
  topts.run_dir = ws.dir / "run_a";
  const auto record = cmd_train(cfg, topts, log);
  for (const char* f : {"config.echo", "losses.csv", "report.json", "report.csv", "run_record.json",
                        "checkpoints/latest.ckpt", "grids/samples.png"}) {
    EXPECT_TRUE(fs::exists(ws.dir / "run_a" / f)) << f;
  }
  ASSERT_TRUE(record.report.has_value());
  EXPECT_EQ(record.report->n_samples, 4u);
  EXPECT_EQ(read_run_record(ws.dir / "run_a").config_hash, record.config_hash);

  // Evaluating twice gives identical reports; --grid 2 gives two sample blocks.
  EvaluateCommandOptions eopts;
  eopts.out_dir = ws.dir / "eval";
  eopts.grid = 2;
  eopts.embed = true;
  const auto r1 = cmd_evaluate(ws.dir / "run_a", ws.dir / "data", eopts, log);
  const auto first = slurp(ws.dir / "eval" / "report.json");
  const auto r2 = cmd_evaluate(ws.dir / "run_a" / "checkpoints" / kLatestCheckpoint, ws.dir / "data", eopts, log);
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(r1, *record.report);
  EXPECT_EQ(slurp(ws.dir / "eval" / "report.json"), first);
  const auto grid = read_canvas_png(ws.dir / "eval" / "grids" / "samples.png");
  EXPECT_EQ(grid.width, 2u * 2u * 32u);
  EXPECT_TRUE(fs::exists(ws.dir / "eval" / "embedding.csv"));

  auto b = tiny("b");
  b["loss.preset"] = "cyclegan";
  const auto cfg_b = ws.write("b.json", b);
  topts.run_dir = ws.dir / "run_b";
  cmd_train(cfg_b, topts, log);
  std::ifstream losses(ws.dir / "run_b" / "losses.csv");
  std::string header;
  std::getline(losses, header);
  EXPECT_EQ(header.find("D_t_hat"), std::string::npos);
  EXPECT_NE(header.find("D_t_tilde"), std::string::npos);

  const auto table = cmd_report({ws.dir / "run_a", ws.dir / "run_b"}, ws.dir / "table.csv", log);
  EXPECT_EQ(table.values.size(), 2u);
  EXPECT_EQ(table.values[0].size(), 5u);
  EXPECT_TRUE(fs::exists(ws.dir / "table.csv"));
  EXPECT_EQ(cmd_report({ws.dir / "run_a"}, std::nullopt, log).values.size(), 1u);
}

TEST(Commands, TrainingIsReproducible) {
  Workspace ws("repro");
  const auto cfg = ws.write("c.json", tiny("c"));
  std::ostringstream log;
  cmd_simulate(cfg, log);
  TrainCommandOptions topts;
  topts.evaluate = false;
  topts.run_dir = ws.dir / "r1";
  cmd_train(cfg, topts, log);
  topts.run_dir = ws.dir / "r2";
  cmd_train(cfg, topts, log);
  EXPECT_EQ(slurp(ws.dir / "r1" / "losses.csv"), slurp(ws.dir / "r2" / "losses.csv"));
  EXPECT_EQ(slurp(ws.dir / "r1" / "config.echo"), slurp(ws.dir / "r2" / "config.echo"));
  EXPECT_EQ(slurp(ws.dir / "r1" / "checkpoints" / kLatestCheckpoint),
            slurp(ws.dir / "r2" / "checkpoints" / kLatestCheckpoint));
}

TEST(Commands, ResumeContinuesInterruptedRun) {
  Workspace ws("resume");
  auto j = tiny("r");
  j["optimizer.total_steps"] = 6;
  j["train.checkpoint_every"] = 3;
  const auto cfg = ws.write("r.json", j);
  std::ostringstream log;
  cmd_simulate(cfg, log);
  TrainCommandOptions topts;
  topts.evaluate = false;
  topts.run_dir = ws.dir / "full";
  cmd_train(cfg, topts, log);

  topts.run_dir = ws.dir / "cut";
  cmd_train(cfg, topts, log);
  // Pretend the run died after the step-3 checkpoint.
  const auto ck = ws.dir / "cut" / "checkpoints";
  fs::remove(ck / "step_00000006.ckpt");
  fs::copy_file(ck / "step_00000003.ckpt", ck / kLatestCheckpoint, fs::copy_options::overwrite_existing);
  topts.resume = true;
  cmd_train(cfg, topts, log);
  EXPECT_NE(log.str().find("at step 3"), std::string::npos);
  EXPECT_EQ(slurp(ws.dir / "full" / "losses.csv"), slurp(ws.dir / "cut" / "losses.csv"));
}

TEST(Commands, SmokeTrainingLowersTemplateLoss) {
  Workspace ws("smoke");
  auto j = tiny("smoke");
  j["channel.blur_sigma"] = 0.0;
  j["optimizer.total_steps"] = 200;
  j["optimizer.batch_size"] = 4;
  j["optimizer.learning_rate"] = 1e-3;
  j["loss.recon_weight"] = 10.0;
  const auto cfg = ws.write("s.json", j);
  std::ostringstream log;
  cmd_simulate(cfg, log);
  TrainCommandOptions topts;
  topts.run_dir = ws.dir / "run";
  topts.evaluate = false;
  cmd_train(cfg, topts, log);
  std::ifstream in(ws.dir / "run" / "losses.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> l_t;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    l_t.push_back(std::stod(line.substr(a + 1, line.find(',', a + 1) - a - 1)));
  }
  ASSERT_EQ(l_t.size(), 200u);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += l_t[i] / 20;
    tail += l_t[l_t.size() - 1 - i] / 20;
  }
  EXPECT_LT(tail, head);
}

TEST(Commands, Errors) {
  Workspace ws("errors");
  std::ostringstream log;
  fs::create_directories(ws.dir / "empty");
  expect_code(ErrorCode::MissingRunRecord, [&] { cmd_report({ws.dir / "empty"}, std::nullopt, log); });
  expect_code(ErrorCode::MissingCheckpoint,
              [&] { cmd_evaluate(ws.dir / "empty", ws.dir / "data", EvaluateCommandOptions{}, log); });

  const auto cfg = ws.write("e.json", tiny("e"));
  cmd_simulate(cfg, log);
  TrainCommandOptions topts;
  topts.run_dir = ws.dir / "run";
  topts.evaluate = false;
  cmd_train(cfg, topts, log);
  expect_code(ErrorCode::MissingRunRecord, [&] { cmd_report({ws.dir / "run"}, std::nullopt, log); });

  EvaluateCommandOptions eopts;
  eopts.split = "validation";
  expect_code(ErrorCode::EmptyTestSet, [&] { cmd_evaluate(ws.dir / "run", ws.dir / "data", eopts, log); });

  auto odd = tiny("odd");
  odd["simulate.m"] = 30;
  odd["data.root"] = "odd_data";
  cmd_simulate(ws.write("odd.json", odd), log);
  expect_code(ErrorCode::ShapeMismatch,
              [&] { cmd_evaluate(ws.dir / "run", ws.dir / "odd_data", EvaluateCommandOptions{}, log); });

  topts.resume = true;
  topts.run_dir = ws.dir / "never";
  expect_code(ErrorCode::MissingCheckpoint, [&] { cmd_train(cfg, topts, log); });
}

TEST(Binary, ExitStatus) {
  Workspace ws("bin");
  const auto err = ws.dir / "stderr.txt";
  auto bad = tiny("bad");
  bad["simulate.density"] = 1.5;
  const auto bad_cfg = ws.write("bad.json", bad);
  EXPECT_NE(run_binary("simulate " + bad_cfg.string(), err), 0);
  EXPECT_NE(slurp(err).find("simulate.density"), std::string::npos) << slurp(err);

  const auto good = ws.write("good.json", tiny("good"));
  EXPECT_EQ(run_binary("simulate " + good.string(), err), 0);
  EXPECT_NE(run_binary("report " + (ws.dir / "nothing").string(), err), 0);
  EXPECT_NE(run_binary("frobnicate", err), 0);
  EXPECT_NE(run_binary("evaluate " + (ws.dir / "nothing").string() + " " + (ws.dir / "data").string(), err), 0);
  EXPECT_NE(slurp(err).find("MissingCheckpoint"), std::string::npos) << slurp(err);
}
