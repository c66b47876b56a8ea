#include "streamsgd/config.hpp"

#include <fstream>
#include <set>

namespace streamsgd {
namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Reads fields out of one JSON object and rejects whatever is left over.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  void read(const std::string& key, T& dst) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    dst = convert<T>(*it, join(path_, key));
  }

  template <typename T>
  void read_optional(const std::string& key, std::optional<T>& dst) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      dst.reset();
      return;
    }
    dst = convert<T>(*it, join(path_, key));
  }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    static const json empty = json::object();
    return ObjectReader(it == obj_.end() ? empty : *it, join(path_, key));
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) throw ConfigError(join(path_, key), "unknown key '" + key + "'");
  }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0) throw ConfigError(where, "expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where, "expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& text, const std::string& where,
             std::initializer_list<std::pair<const char*, E>> options) {
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (text == name) return value;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(where, "unknown value '" + text + "' (expected one of: " + allowed + ")");
}

}  // namespace

SimConfig parse_config(const json& doc) {
  SimConfig c;
  ObjectReader root(doc, "");
  root.read("n_devices", c.n_devices);
  root.read("seed", c.seed);
  root.read("sample_bytes", c.sample_bytes);

  std::string mode = to_string(c.mode);
  root.read("mode", mode);
  c.mode = parse_enum<TrainingMode>(mode, "mode",
                                    {{"scadles", TrainingMode::kScadles}, {"ddl_fixed_batch", TrainingMode::kDdlFixedBatch}});

  std::string retention = to_string(c.retention);
  root.read("retention", retention);
  c.retention = parse_enum<RetentionPolicy>(
      retention, "retention",
      {{"persistence", RetentionPolicy::kPersistence}, {"truncation", RetentionPolicy::kTruncation}});

  {
    auto r = root.child("rates");
    std::string kind = to_string(c.rate_dist.kind);
    r.read("distribution", kind);
    c.rate_dist.kind =
        parse_enum<RateKind>(kind, r.path("distribution"), {{"uniform", RateKind::kUniform}, {"normal", RateKind::kNormal}});
    r.read("mean", c.rate_dist.mean);
    r.read("std", c.rate_dist.std);
    r.read("jitter", c.rate_jitter);
    if (const json* v = r.raw("values")) {
      if (!v->is_array()) throw ConfigError(r.path("values"), "expected an array of rates");
      c.rate_values.clear();
      for (const auto& x : *v) {
        if (!x.is_number_integer()) throw ConfigError(r.path("values"), "rates must be integers");
        c.rate_values.push_back(x.get<std::int64_t>());
      }
    }
    r.finish();
  }
  {
    auto r = root.child("batch");
    r.read("fixed", c.fixed_batch);
    r.read("min", c.b_min);
    r.read("max", c.b_max);
    r.finish();
  }
  {
    auto r = root.child("compression");
    r.read("enabled", c.compression.enabled);
    r.read("cr", c.compression.cr);
    r.read("delta", c.compression.delta);
    r.read("ewma_factor", c.compression.ewma_factor);
    std::string gate = c.compression.gate_mode == GateMode::kSmoothed ? "smoothed" : "raw";
    r.read("gate", gate);
    c.compression.gate_mode =
        parse_enum<GateMode>(gate, r.path("gate"), {{"smoothed", GateMode::kSmoothed}, {"raw", GateMode::kRaw}});
    r.finish();
  }
  {
    auto r = root.child("injection");
    r.read("enabled", c.injection.enabled);
    r.read("alpha", c.injection.alpha);
    r.read("beta", c.injection.beta);
    r.finish();
  }
  {
    auto r = root.child("partition");
    std::string pmode = c.partition_mode == PartitionMode::kIid ? "iid" : "noniid";
    r.read("mode", pmode);
    c.partition_mode =
        parse_enum<PartitionMode>(pmode, r.path("mode"), {{"iid", PartitionMode::kIid}, {"noniid", PartitionMode::kNonIid}});
    r.read("labels_per_device", c.labels_per_device);
    r.finish();
  }
  {
    auto r = root.child("dataset");
    r.read("n_classes", c.dataset.n_classes);
    r.read("feature_dim", c.dataset.feature_dim);
    r.read("samples_per_class", c.dataset.samples_per_class);
    r.read("cluster_spread", c.dataset.cluster_spread);
    r.read("augment_noise", c.augment_noise);
    r.finish();
  }
  {
    auto r = root.child("model");
    if (const json* h = r.raw("hidden")) {
      if (!h->is_array()) throw ConfigError(r.path("hidden"), "expected an array of widths");
      c.model.hidden.clear();
      for (const auto& w : *h) {
        if (!w.is_number_integer()) throw ConfigError(r.path("hidden"), "widths must be integers");
        c.model.hidden.push_back(w.get<int>());
      }
    }
    r.finish();
  }
  {
    auto r = root.child("optimizer");
    r.read("lr", c.optimizer.base_lr);
    r.read("momentum", c.optimizer.momentum);
    r.read("weight_decay", c.optimizer.weight_decay);
    r.read("base_global_batch", c.optimizer.base_global_batch);
    if (const json* s = r.raw("schedule")) {
      if (!s->is_array()) throw ConfigError(r.path("schedule"), "expected an array of milestones");
      c.optimizer.schedule.clear();
      for (std::size_t i = 0; i < s->size(); ++i) {
        ObjectReader m((*s)[i], r.path("schedule") + "[" + std::to_string(i) + "]");
        Milestone ms;
        m.read("epoch", ms.epoch);
        m.read("factor", ms.factor);
        m.finish();
        c.optimizer.schedule.push_back(ms);
      }
    }
    r.finish();
  }
  {
    auto r = root.child("cost");
    r.read("c0", c.cost.c0);
    r.read("c1", c.cost.c1);
    r.read("latency", c.cost.link.latency);
    r.read("bandwidth", c.cost.link.bandwidth);
    r.finish();
  }
  {
    auto r = root.child("stop");
    r.read("max_epochs", c.max_epochs);
    r.read("max_iterations", c.max_iterations);
    r.read_optional("target_accuracy", c.target_accuracy);
    r.read("eval_every", c.eval_every);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON in ") + path + ": " + e.what());
  }
  return parse_config(doc);
}

json render_config(const SimConfig& c) {
  json schedule = json::array();
  for (const auto& m : c.optimizer.schedule) schedule.push_back({{"epoch", m.epoch}, {"factor", m.factor}});
  return json{
      {"n_devices", c.n_devices},
      {"seed", c.seed},
      {"mode", to_string(c.mode)},
      {"retention", to_string(c.retention)},
      {"sample_bytes", c.sample_bytes},
      {"rates",
       {{"distribution", to_string(c.rate_dist.kind)},
        {"mean", c.rate_dist.mean},
        {"std", c.rate_dist.std},
        {"jitter", c.rate_jitter},
        {"values", c.rate_values}}},
      {"batch", {{"fixed", c.fixed_batch}, {"min", c.b_min}, {"max", c.b_max}}},
      {"compression",
       {{"enabled", c.compression.enabled},
        {"cr", c.compression.cr},
        {"delta", c.compression.delta},
        {"ewma_factor", c.compression.ewma_factor},
        {"gate", c.compression.gate_mode == GateMode::kSmoothed ? "smoothed" : "raw"}}},
      {"injection", {{"enabled", c.injection.enabled}, {"alpha", c.injection.alpha}, {"beta", c.injection.beta}}},
      {"partition",
       {{"mode", c.partition_mode == PartitionMode::kIid ? "iid" : "noniid"},
        {"labels_per_device", c.labels_per_device}}},
      {"dataset",
       {{"n_classes", c.dataset.n_classes},
        {"feature_dim", c.dataset.feature_dim},
        {"samples_per_class", c.dataset.samples_per_class},
        {"cluster_spread", c.dataset.cluster_spread},
        {"augment_noise", c.augment_noise}}},
      {"model", {{"hidden", c.model.hidden}}},
      {"optimizer",
       {{"lr", c.optimizer.base_lr},
        {"momentum", c.optimizer.momentum},
        {"weight_decay", c.optimizer.weight_decay},
        {"schedule", schedule},
        {"base_global_batch", c.optimizer.base_global_batch}}},
      {"cost",
       {{"c0", c.cost.c0}, {"c1", c.cost.c1}, {"latency", c.cost.link.latency}, {"bandwidth", c.cost.link.bandwidth}}},
      {"stop",
       {{"max_epochs", c.max_epochs},
        {"max_iterations", c.max_iterations},
        {"target_accuracy", c.target_accuracy ? json(*c.target_accuracy) : json(nullptr)},
        {"eval_every", c.eval_every}}},
  };
}

}  // namespace streamsgd
