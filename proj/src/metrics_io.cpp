#include <array>
#include <charconv>
#include <cmath>
#include <ostream>

#include "streamsgd/config.hpp"

namespace streamsgd {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_number: conversion failed");
  return std::string(buf.data(), end);
}

std::vector<std::string> metrics_columns(std::size_t n_devices) {
  std::vector<std::string> cols{"iteration",       "sim_time_s",     "epoch",          "global_batch",
                                "lr_used",         "train_loss",     "test_accuracy",  "buffer_samples",
                                "buffer_bytes",    "floats_sent_cum", "bytes_sent_cum", "cnc_cum",
                                "injection_bytes", "injection_bytes_cum", "wait_time_s", "compute_time_s",
                                "comm_time_s"};
  for (std::size_t d = 0; d < n_devices; ++d) cols.push_back("buffer_" + std::to_string(d));
  return cols;
}

MetricsCsvWriter::MetricsCsvWriter(std::ostream& out, std::size_t n_devices) : out_(out), n_devices_(n_devices) {
  const auto cols = metrics_columns(n_devices);
  for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
  out_ << '\n';
}

void MetricsCsvWriter::write(const IterationMetrics& m) {
  if (m.buffer_occupancy.size() != n_devices_) throw std::invalid_argument("metrics row has wrong device count");
  std::string line;
  auto put = [&line](const std::string& cell) {
    if (!line.empty()) line += ',';
    line += cell;
  };
  put(std::to_string(m.iteration));
  put(format_number(m.sim_time_s));
  put(std::to_string(m.epoch));
  put(std::to_string(m.global_batch));
  put(format_number(m.lr_used));
  put(format_number(m.train_loss));
  // Empty on rows without an evaluation. put() would drop the separator for an empty cell.
  line += ',';
  if (m.test_accuracy) line += format_number(*m.test_accuracy);
  put(std::to_string(m.buffer_samples));
  put(format_number(m.buffer_bytes));
  put(std::to_string(m.floats_sent_cum));
  put(std::to_string(m.bytes_sent_cum));
  put(format_number(m.cnc_cum));
  put(std::to_string(m.injection_bytes));
  put(std::to_string(m.injection_bytes_cum));
  put(format_number(m.wait_time_s));
  put(format_number(m.compute_time_s));
  put(format_number(m.comm_time_s));
  for (auto occ : m.buffer_occupancy) put(std::to_string(occ));
  out_ << line << '\n';
}

nlohmann::json summary_to_json(const RunSummary& s) {
  return nlohmann::json{
      {"iterations", s.iterations},
      {"epochs", s.epochs},
      {"final_accuracy", s.final_accuracy},
      {"sim_time_s", s.sim_time_s},
      {"time_to_target_s", s.time_to_target_s ? nlohmann::json(*s.time_to_target_s) : nlohmann::json(nullptr)},
      {"floats_sent", s.floats_sent},
      {"bytes_sent", s.bytes_sent},
      {"buffer_bytes", s.buffer_bytes},
      {"buffer_samples", s.buffer_samples},
      {"cnc", s.cnc},
      {"injection_bytes", s.injection_bytes},
  };
}

}  // namespace streamsgd
