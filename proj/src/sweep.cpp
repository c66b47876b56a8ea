#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "streamsgd/config.hpp"
#include "streamsgd/seeds.hpp"

namespace streamsgd {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", "malformed JSON in " + path + ": " + e.what());
  }
}

void set_dotted(json& doc, const std::string& key, const json& value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "malformed sweep key");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError(key, "sweep key descends into a non-object");
    start = dot + 1;
  }
}

struct RunOutcome {
  int status = kExitOk;
  RunSummary summary;
};

// Runs one config into `dir`: metrics.csv, summary.json, config.json, model.params.
RunOutcome run_into(const SimConfig& config, const fs::path& dir, const RunOptions& opts, std::ostream& log) {
  fs::create_directories(dir);
  {
    std::ofstream cfg_out(dir / "config.json");
    cfg_out << render_config(config).dump(2) << '\n';
  }
  Simulator sim(config);
  if (!opts.dump_dataset.empty()) write_table(opts.dump_dataset, sim.dataset().train);

  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  MetricsCsvWriter writer(csv, static_cast<std::size_t>(config.n_devices));

  RunOutcome outcome;
  try {
    while (!sim.finished()) {
      const auto row = sim.step();
      writer.write(row);
      if (!opts.quiet && row.test_accuracy)
        log << "iter " << row.iteration << " epoch " << row.epoch << " t=" << format_number(row.sim_time_s)
            << "s loss=" << format_number(row.train_loss) << " acc=" << format_number(*row.test_accuracy) << '\n';
    }
  } catch (const DivergenceError& e) {
    log << "error: training diverged: " << e.what() << '\n';
    outcome.status = kExitDiverged;
  }
  outcome.summary = sim.summary();
  std::ofstream(dir / "summary.json") << summary_to_json(outcome.summary).dump(2) << '\n';
  save_checkpoint((dir / "model.params").string(), sim.replicas().front());
  return outcome;
}

}  // namespace

std::vector<SweepPoint> expand_sweep(const json& spec) {
  if (!spec.is_object()) throw ConfigError("<sweep>", "sweep spec must be an object");
  for (const auto& [key, value] : spec.items())
    if (key != "grid" && key != "points") throw ConfigError(key, "unknown sweep key '" + key + "'");

  std::vector<SweepPoint> points{SweepPoint{}};
  bool any = false;
  if (spec.contains("grid")) {
    const json& grid = spec["grid"];
    if (!grid.is_object()) throw ConfigError("grid", "expected an object of key -> value list");
    for (const auto& [key, values] : grid.items()) {
      if (!values.is_array() || values.empty()) throw ConfigError("grid." + key, "expected a non-empty list");
      std::vector<SweepPoint> next;
      for (const auto& p : points)
        for (const auto& v : values) {
          SweepPoint q = p;
          q.assignments.emplace_back(key, v);
          next.push_back(std::move(q));
        }
      points = std::move(next);
      any = true;
    }
  }
  if (spec.contains("points")) {
    const json& list = spec["points"];
    if (!list.is_array()) throw ConfigError("points", "expected a list of objects");
    if (!list.empty()) {
      std::vector<SweepPoint> next;
      for (const auto& p : points)
        for (const auto& item : list) {
          if (!item.is_object() || item.empty()) throw ConfigError("points", "each point must be a non-empty object");
          SweepPoint q = p;
          for (const auto& [key, v] : item.items()) q.assignments.emplace_back(key, v);
          next.push_back(std::move(q));
        }
      points = std::move(next);
      any = true;
    }
  }
  if (!any) throw ConfigError("grid", "empty sweep grid");
  return points;
}

SimConfig apply_sweep_point(const json& base, const SweepPoint& point) {
  json doc = base;
  for (const auto& [key, value] : point.assignments) set_dotted(doc, key, value);
  return parse_config(doc);
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const RunOptions& opts, std::ostream& log) {
  SimConfig config;
  try {
    config = load_config(config_path);
    if (opts.seed_override) config.seed = *opts.seed_override;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
  try {
    const auto outcome = run_into(config, out_dir, opts, log);
    if (!opts.quiet && outcome.status == kExitOk)
      log << "done: " << outcome.summary.iterations << " iterations, accuracy "
          << format_number(outcome.summary.final_accuracy) << ", sim time " << format_number(outcome.summary.sim_time_s)
          << " s\n";
    return outcome.status;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

int cmd_sweep(const std::string& config_path, const std::string& sweep_path, const std::string& out_dir,
              const RunOptions& opts, std::ostream& log) {
  json base;
  std::vector<SweepPoint> points;
  std::vector<SimConfig> configs;
  try {
    base = read_json_file(config_path);
    parse_config(base);
    points = expand_sweep(read_json_file(sweep_path));
    for (const auto& p : points) {
      configs.push_back(apply_sweep_point(base, p));
      if (opts.seed_override) configs.back().seed = *opts.seed_override;
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }

  std::vector<std::string> keys;
  for (const auto& p : points)
    for (const auto& [k, v] : p.assignments)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);

  fs::create_directories(out_dir);
  std::ofstream table(fs::path(out_dir) / "sweep_summary.csv", std::ios::binary);
  table << "run";
  for (const auto& k : keys) table << ',' << k;
  table << ",status,iterations,epochs,final_accuracy,sim_time_s,time_to_target_s,floats_sent,bytes_sent,"
           "buffer_bytes,cnc,injection_bytes\n";

  int worst = kExitOk;
  for (std::size_t i = 0; i < points.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "run_%03zu", i);
    if (!opts.quiet) log << "[" << (i + 1) << "/" << points.size() << "] " << name << '\n';
    RunOptions quiet_opts = opts;
    quiet_opts.quiet = true;
    const auto outcome = run_into(configs[i], fs::path(out_dir) / name, quiet_opts, log);
    worst = std::max(worst, outcome.status);

    table << name;
    for (const auto& k : keys) {
      std::string cell;
      for (const auto& [ak, av] : points[i].assignments)
        if (ak == k) cell = av.is_string() ? av.get<std::string>() : av.dump();
      table << ',' << cell;
    }
    const auto& s = outcome.summary;
    table << ',' << outcome.status << ',' << s.iterations << ',' << s.epochs << ',' << format_number(s.final_accuracy)
          << ',' << format_number(s.sim_time_s) << ',' << (s.time_to_target_s ? format_number(*s.time_to_target_s) : "")
          << ',' << s.floats_sent << ',' << s.bytes_sent << ',' << format_number(s.buffer_bytes) << ','
          << format_number(s.cnc) << ',' << s.injection_bytes << '\n';
  }
  return worst;
}

int cmd_buffer_model(const BufferModelArgs& a, std::ostream& table, const std::string& csv_path, std::ostream& log) {
  if (!(a.S > 0.0) || !(a.t >= 0.0) || a.b < 1 || a.T_max < 0 || a.step < 1 || !(a.sample_bytes > 0.0)) {
    log << "config error: need S > 0, t >= 0, b >= 1, T_max >= 0, step >= 1, sample_bytes > 0\n";
    return kExitConfigError;
  }
  std::ostringstream csv;
  csv << "T,Q_exact,Q_approx,GB,log10_Q\n";
  const bool exact_ok = a.t > 0.0 && a.t * a.S >= static_cast<double>(a.b);
  auto emit = [&](std::int64_t T) {
    QueueModelParams p{a.t, a.S, a.b, T};
    const double approx = analytic_queue_size(p, QueueForm::kApprox).samples;
    csv << T << ',' << (exact_ok ? format_number(analytic_queue_size(p, QueueForm::kExact).samples) : "n/a") << ','
        << format_number(approx) << ',' << format_number(samples_to_gib(approx, a.sample_bytes)) << ','
        << format_number(std::log10(approx)) << '\n';
  };
  std::int64_t T = 0;
  for (; T <= a.T_max; T += a.step) emit(T);
  if (T - a.step != a.T_max) emit(a.T_max);

  table << csv.str();
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) {
      log << "error: cannot write " << csv_path << '\n';
      return kExitConfigError;
    }
    out << csv.str();
  }
  return kExitOk;
}

}  // namespace streamsgd
