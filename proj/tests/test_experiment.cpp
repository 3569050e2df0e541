#include "torch_doctest.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "lungct/error.hpp"
#include "lungct/experiment.hpp"
#include "lungct/synthetic.hpp"
#include "support.hpp"

using namespace lungct;

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string cmd = fmt::format("{} {} 2>&1", LUNGCT_CLI, args);
  CommandResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_toy(const std::filesystem::path& root, int per_class) {
  SyntheticDatasetOptions opts;
  opts.images_per_class = per_class;
  opts.sides = {112, 299};
  write_synthetic_dataset(root, opts);
}

std::string tiny_config(const std::filesystem::path& data, const std::filesystem::path& runs) {
  return fmt::format(
      "dataset_root: {}\noutput_dir: {}\nbackbone: densenet201\nbackbone_scale: reduced\npretrained: false\n"
      "unfreeze_fraction: 1.0\nmax_epochs: 2\nbatch_size: 8\ninitial_lr: 0.001\ndense_units: 16\n",
      data.string(), runs.string());
}

} // namespace

TEST_CASE("run_experiment writes every artifact") {
  testing::TempDir dir("experiment");
  write_toy(dir / "data", 8);
  std::istringstream text(tiny_config(dir / "data", dir / "runs"));
  const ExperimentConfig cfg = parse_config(text);
  std::ostringstream log;
  const auto outcome = run_experiment(cfg, "toy", &log);
  CHECK(outcome.artifacts.missing().empty());
  CHECK(outcome.artifacts.directory == dir / "runs" / "toy");
  CHECK(log.str().find("epoch   1") != std::string::npos);

  CHECK(slurp(outcome.artifacts.history_csv).rfind("epoch,train_loss,train_acc,val_loss,val_acc,lr\n", 0) == 0);
  const auto json = nlohmann::json::parse(slurp(outcome.artifacts.metrics_json));
  for (const char* key : {"backbone", "accuracy", "per_class", "macro", "weighted", "confusion_matrix"}) {
    CHECK(json.contains(key));
  }
  CHECK(json["per_class"].size() == 4);
  CHECK(load_config(outcome.artifacts.config_snapshot) == cfg);

  // Re-evaluating the saved checkpoint reproduces the report.
  const auto again = evaluate_run(outcome.artifacts.directory);
  CHECK(again.accuracy == outcome.report.accuracy);
  CHECK(again.confusion == outcome.report.confusion);
  CHECK(report_run(outcome.artifacts.directory).accuracy == outcome.report.accuracy);

  CHECK(default_run_id(cfg).rfind("DENSENET201-", 0) == 0);
  CHECK(default_run_id(cfg).ends_with("-42"));
}

TEST_CASE("missing dataset is a data error") {
  ExperimentConfig cfg;
  cfg.dataset_root = "/nonexistent/lungct-data";
  cfg.pretrained = false;
  try {
    run_experiment(cfg, "x");
    FAIL("expected MissingRoot");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingRoot);
    CHECK(exit_code(e.kind()) == 2);
  }
}

TEST_CASE("command-line workflow") {
  testing::TempDir dir("cli");
  const auto data = dir / "data";
  const auto runs = dir / "runs";

  auto r = run_cli(fmt::format("synth --out {} --per-class 8", data.string()));
  REQUIRE(r.exit_code == 0);
  std::ofstream(dir / "c.cfg") << tiny_config(data, runs) << "seed: 3\n";

  r = run_cli(fmt::format("ingest --config {} --manifest {}", (dir / "c.cfg").string(), (dir / "m.csv").string()));
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "m.csv"));
  CHECK(r.output.find("NORMAL") != std::string::npos);

  r = run_cli(fmt::format("augment-preview --config {} --image {} --out {} --count 3", (dir / "c.cfg").string(),
                          (data / "normal" / "img_000.png").string(), (dir / "preview.png").string()));
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir / "preview.png"));

  r = run_cli(fmt::format("train --config {} --backbone densenet201 --seed 7 --run-id a", (dir / "c.cfg").string()));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(load_config(runs / "a" / "config.snapshot").seed == 7);

  r = run_cli(fmt::format("train --config {} --max_epochs 1 --run-id b", (dir / "c.cfg").string()));
  REQUIRE(r.exit_code == 0);
  CHECK(load_config(runs / "b" / "config.snapshot").seed == 3);

  r = run_cli(fmt::format("compare {} {}", (runs / "a").string(), (runs / "b").string()));
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(runs / "comparison.csv"));
  CHECK(std::filesystem::exists(runs / "comparison.png"));
  CHECK(r.output.find("98.95") != std::string::npos);

  r = run_cli(fmt::format("predict --run {} --image {}", (runs / "a").string(), (data / "adenocarcinoma" / "img_001.png").string()));
  CHECK(r.exit_code == 0);
  CHECK(std::regex_match(r.output, std::regex(R"((ADC|LCC|NORMAL|SCC), [01]\.\d{6} [01]\.\d{6} [01]\.\d{6} [01]\.\d{6}\n)")));

  r = run_cli(fmt::format("evaluate --run {}", (runs / "a").string()));
  CHECK(r.exit_code == 0);
  r = run_cli(fmt::format("report --run {}", (runs / "a").string()));
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("accuracy") != std::string::npos);

  // Exit codes: usage/config 1, data 2, I/O 4.
  CHECK(run_cli("").exit_code == 1);
  CHECK(run_cli("train --no-such-flag 1").exit_code == 1);
  CHECK(run_cli(fmt::format("train --config {} --gamma -1", (dir / "c.cfg").string())).exit_code == 1);
  CHECK(run_cli(fmt::format("train --config {}", (dir / "absent.cfg").string())).exit_code == 1);
  CHECK(run_cli(fmt::format("train --config {} --dataset_root {}", (dir / "c.cfg").string(), (dir / "nowhere").string()))
            .exit_code == 2);
  CHECK(run_cli(fmt::format("predict --run {} --image {}", (runs / "a").string(), (dir / "c.cfg").string())).exit_code == 2);
  CHECK(run_cli(fmt::format("report --run {}", (dir / "empty").string())).exit_code == 1);

  // No command writes into the dataset directory.
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(data)) files += e.is_regular_file() ? 1 : 0;
  CHECK(files == 32);
}
