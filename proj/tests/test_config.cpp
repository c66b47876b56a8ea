#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "streamsgd/config.hpp"

using namespace streamsgd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("streamsgd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json small_doc() {
  return json::parse(R"({
    "n_devices": 3,
    "seed": 4,
    "rates": {"values": [20, 30, 15]},
    "dataset": {"n_classes": 3, "feature_dim": 4, "samples_per_class": 40},
    "model": {"hidden": [6]},
    "stop": {"max_epochs": 2}
  })");
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + STREAMSGD_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("parse_config fills defaults and round-trips through render_config") {
  const auto c = parse_config(small_doc());
  CHECK(c.n_devices == 3);
  CHECK(c.rate_values == std::vector<std::int64_t>{20, 30, 15});
  CHECK(c.b_min == SimConfig{}.b_min);
  CHECK(parse_config(render_config(c)) == c);

  SimConfig full;
  full.compression = {true, 0.05, 0.2, 0.8, GateMode::kRaw};
  full.injection = {true, 0.3, 0.7};
  full.partition_mode = PartitionMode::kNonIid;
  full.labels_per_device = 5;
  full.n_devices = 10;
  full.optimizer.schedule = {{5, 0.1}, {8, 0.5}};
  full.target_accuracy = 0.8;
  full.retention = RetentionPolicy::kTruncation;
  full.mode = TrainingMode::kDdlFixedBatch;
  CHECK(parse_config(render_config(full)) == full);
}

TEST_CASE("unknown keys and bad values name the offending key") {
  auto doc = small_doc();
  doc["batchsz"] = 64;
  try {
    parse_config(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "batchsz");
    CHECK(std::string(e.what()).find("batchsz") != std::string::npos);
  }

  doc = small_doc();
  doc["batch"] = {{"size", 64}};
  CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("batch.size"), ConfigError);

  doc = small_doc();
  doc["n_devices"] = "four";
  CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("n_devices"), ConfigError);

  doc = small_doc();
  doc["mode"] = "async";
  CHECK_THROWS_AS(parse_config(doc), ConfigError);

  doc = small_doc();
  doc["batch"] = {{"min", 0}};
  CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("batch.min"), ConfigError);
}

TEST_CASE("expand_sweep") {
  const auto grid = expand_sweep(json::parse(R"({"grid": {"mode": ["scadles", "ddl_fixed_batch"],
      "retention": ["persistence", "truncation"], "seed": [1, 2]}})"));
  CHECK(grid.size() == 8);
  for (const auto& p : grid) CHECK(p.assignments.size() == 3);

  const auto pts = expand_sweep(json::parse(
      R"({"points": [{"compression.delta": 0.1}, {"compression.delta": 0.2}, {"compression.delta": 0.3},
                     {"compression.delta": 0.4}]})"));
  CHECK(pts.size() == 4);

  const auto both = expand_sweep(json::parse(R"({"grid": {"seed": [1, 2]}, "points": [{"n_devices": 3}, {"n_devices": 6}]})"));
  CHECK(both.size() == 4);

  CHECK_THROWS_AS(expand_sweep(json::object()), ConfigError);
  CHECK_THROWS_AS(expand_sweep(json::parse(R"({"grid": {"seed": []}})")), ConfigError);
  CHECK_THROWS_AS(expand_sweep(json::parse(R"({"grids": {}})")), ConfigError);

  const auto c = apply_sweep_point(small_doc(), SweepPoint{{{"compression.delta", 0.4}, {"retention", "truncation"}}});
  CHECK(c.compression.delta == 0.4);
  CHECK(c.retention == RetentionPolicy::kTruncation);
  CHECK_THROWS_AS(apply_sweep_point(small_doc(), SweepPoint{{{"batch.size", 3}}}), ConfigError);
}

TEST_CASE("cmd_run writes metrics, summary, config and parameters") {
  const auto dir = scratch("run");
  write_file(dir / "cfg.json", small_doc().dump());
  std::ostringstream log;
  RunOptions opts;
  opts.quiet = true;
  REQUIRE(cmd_run((dir / "cfg.json").string(), (dir / "out").string(), opts, log) == kExitOk);

  const auto lines = read_lines(dir / "out" / "metrics.csv");
  REQUIRE(lines.size() > 2);
  std::string header;
  for (const auto& col : metrics_columns(3)) header += (header.empty() ? "" : ",") + col;
  CHECK(lines[0] == header);
  const auto cols = std::count(header.begin(), header.end(), ',');
  for (std::size_t i = 1; i < lines.size(); ++i) CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == cols);

  std::ifstream sj(dir / "out" / "summary.json");
  const auto summary = json::parse(sj);
  CHECK(summary["iterations"].get<std::int64_t>() == static_cast<std::int64_t>(lines.size() - 1));
  CHECK(fs::exists(dir / "out" / "model.params"));
  std::ifstream cj(dir / "out" / "config.json");
  CHECK(parse_config(json::parse(cj)) == parse_config(small_doc()));

  write_file(dir / "bad.json", R"({"batchsz": 3})");
  CHECK(cmd_run((dir / "bad.json").string(), (dir / "out2").string(), opts, log) == kExitConfigError);
  CHECK(cmd_run((dir / "missing.json").string(), (dir / "out2").string(), opts, log) == kExitConfigError);
}

TEST_CASE("cmd_sweep writes one row per point") {
  const auto dir = scratch("sweep");
  write_file(dir / "cfg.json", small_doc().dump());
  write_file(dir / "grid.json", R"({"grid": {"mode": ["scadles", "ddl_fixed_batch"], "retention": ["persistence", "truncation"]}})");
  std::ostringstream log;
  RunOptions opts;
  opts.quiet = true;
  REQUIRE(cmd_sweep((dir / "cfg.json").string(), (dir / "grid.json").string(), (dir / "out").string(), opts, log) ==
          kExitOk);
  const auto lines = read_lines(dir / "out" / "sweep_summary.csv");
  REQUIRE(lines.size() == 5);
  CHECK(lines[0].rfind("run,mode,retention,status,iterations", 0) == 0);
  CHECK(lines[1].rfind("run_000,scadles,persistence,0,", 0) == 0);
  for (int i = 0; i < 4; ++i) CHECK(fs::exists(dir / "out" / ("run_00" + std::to_string(i)) / "metrics.csv"));

  write_file(dir / "empty.json", "{}");
  CHECK(cmd_sweep((dir / "cfg.json").string(), (dir / "empty.json").string(), (dir / "out2").string(), opts, log) ==
        kExitConfigError);
}

TEST_CASE("cmd_buffer_model table") {
  BufferModelArgs a;  // t 1.2, S 100, b 64, T up to 1000 by 100
  std::ostringstream table, log;
  REQUIRE(cmd_buffer_model(a, table, "", log) == kExitOk);
  std::istringstream in(table.str());
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 12);
  CHECK(lines[0] == "T,Q_exact,Q_approx,GB,log10_Q");
  CHECK(lines[1].rfind("0,100,100,", 0) == 0);
  CHECK(lines[11].rfind("1000,56100,120100,", 0) == 0);

  a.t = 0.5;
  std::ostringstream t2;
  REQUIRE(cmd_buffer_model(a, t2, "", log) == kExitOk);
  CHECK(t2.str().find("n/a") != std::string::npos);

  a.S = 0;
  CHECK(cmd_buffer_model(a, t2, "", log) == kExitConfigError);
}

TEST_CASE("CLI exit codes") {
  const auto dir = scratch("cli");
  write_file(dir / "cfg.json", small_doc().dump());
  auto bad = small_doc();
  bad["batchsz"] = 4;
  write_file(dir / "bad.json", bad.dump());
  auto diverge = small_doc();
  diverge["optimizer"] = {{"lr", 1e30}, {"momentum", 0.99}};
  diverge["stop"] = {{"max_epochs", 30}};
  write_file(dir / "diverge.json", diverge.dump());
  write_file(dir / "grid.json", R"({"grid": {"seed": [1, 2]}})");

  const std::string d = "\"" + dir.string() + "\"";
  CHECK(run_cli("run --config " + d + "/cfg.json --out " + d + "/a --quiet") == 0);
  CHECK(run_cli("run --config " + d + "/cfg.json --out " + d + "/b --seed 9 --quiet") == 0);
  CHECK(run_cli("run --config " + d + "/bad.json --out " + d + "/c") == 1);
  CHECK(run_cli("run --out " + d + "/c") == 1);
  CHECK(run_cli("run --config " + d + "/diverge.json --out " + d + "/d --quiet") == 2);
  CHECK(run_cli("sweep --config " + d + "/cfg.json --grid " + d + "/grid.json --out " + d + "/e --quiet") == 0);
  CHECK(run_cli("analyze buffer-model --t 1.2 --S 100 --b 64 --T-max 1000 --out " + d + "/bm.csv") == 0);
  CHECK(read_lines(dir / "bm.csv").size() == 12);
  CHECK(run_cli("bogus") == 1);

  std::ifstream sa(dir / "b" / "config.json");
  CHECK(json::parse(sa)["seed"] == 9);
}
