#include "streamsgd/datagen.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace streamsgd {

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.n_classes < 2) throw std::invalid_argument("dataset: n_classes must be >= 2");
  if (spec.feature_dim < 1) throw std::invalid_argument("dataset: feature_dim must be >= 1");
  if (spec.samples_per_class < 2) throw std::invalid_argument("dataset: samples_per_class must be >= 2");
  if (!(spec.cluster_spread > 0.0)) throw std::invalid_argument("dataset: cluster_spread must be > 0");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int C = spec.n_classes;
  const int D = spec.feature_dim;
  const int per = spec.samples_per_class;
  const int n_train_per = per * 4 / 5;
  const int n_test_per = per - n_train_per;

  Matrix<double> means(C, D);
  for (int c = 0; c < C; ++c)
    for (int d = 0; d < D; ++d) means(c, d) = gauss(rng);

  Dataset ds;
  ds.n_classes = C;
  ds.train.features.resize(static_cast<Eigen::Index>(C) * n_train_per, D);
  ds.test.features.resize(static_cast<Eigen::Index>(C) * n_test_per, D);
  std::vector<int> train_labels, test_labels;
  Eigen::Index tr = 0, te = 0;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < per; ++i) {
      auto& dst = i < n_train_per ? ds.train.features : ds.test.features;
      Eigen::Index& row = i < n_train_per ? tr : te;
      for (int d = 0; d < D; ++d) dst(row, d) = means(c, d) + spec.cluster_spread * gauss(rng);
      ++row;
      (i < n_train_per ? train_labels : test_labels).push_back(c);
    }
  }

  // Interleave classes in the train split.
  std::vector<Eigen::Index> order(train_labels.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  Matrix<double> shuffled(ds.train.features.rows(), D);
  ds.train.labels.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = ds.train.features.row(order[i]);
    ds.train.labels[i] = train_labels[static_cast<std::size_t>(order[i])];
  }
  ds.train.features = std::move(shuffled);
  ds.test.labels = std::move(test_labels);
  return ds;
}

std::vector<std::vector<std::size_t>> partition(const LabeledData& train, int n_classes,
                                                const PartitionPlan& plan, std::uint64_t seed) {
  if (plan.n_devices < 1) throw std::invalid_argument("partition: n_devices must be >= 1");
  std::mt19937_64 rng(seed);
  const auto n_dev = static_cast<std::size_t>(plan.n_devices);
  std::vector<std::vector<std::size_t>> pools(n_dev);

  if (plan.mode == PartitionMode::kIid) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i) pools[i % n_dev].push_back(idx[i]);
    return pools;
  }

  const int L = plan.labels_per_device;
  if (L < 1) throw std::invalid_argument("partition: labels_per_device must be >= 1");
  if (n_classes % L != 0)
    throw std::invalid_argument("partition: n_classes (" + std::to_string(n_classes) +
                                ") must be divisible by labels_per_device (" + std::to_string(L) + ")");
  const int n_groups = n_classes / L;
  if (plan.n_devices < n_groups)
    throw std::invalid_argument("partition: n_devices * labels_per_device must be >= n_classes");

  std::vector<int> labels(static_cast<std::size_t>(n_classes));
  std::iota(labels.begin(), labels.end(), 0);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::vector<int> group_of(static_cast<std::size_t>(n_classes));
  for (int i = 0; i < n_classes; ++i) group_of[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] = i / L;

  // Devices assigned to each group, in device order.
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_groups));
  for (std::size_t d = 0; d < n_dev; ++d) members[d % static_cast<std::size_t>(n_groups)].push_back(d);

  std::vector<std::vector<std::size_t>> by_group(static_cast<std::size_t>(n_groups));
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int y = train.labels[i];
    if (y < 0 || y >= n_classes) throw std::invalid_argument("partition: label out of range");
    by_group[static_cast<std::size_t>(group_of[static_cast<std::size_t>(y)])].push_back(i);
  }
  for (std::size_t g = 0; g < by_group.size(); ++g) {
    auto& idx = by_group[g];
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto& m = members[g];
    for (std::size_t i = 0; i < idx.size(); ++i) pools[m[i % m.size()]].push_back(idx[i]);
  }
  return pools;
}

void write_table(const std::string& path, const LabeledData& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index d = 0; d < data.features.cols(); ++d) out << data.features(i, d) << ',';
    out << data.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

LabeledData read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  in.imbue(std::locale::classic());
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw std::runtime_error("table row needs features and a label: " + path);
    if (width == 0) width = cells.size();
    if (cells.size() != width) throw std::runtime_error("ragged table: " + path);
    std::vector<double> feats;
    for (std::size_t k = 0; k + 1 < cells.size(); ++k) {
      std::istringstream cs(cells[k]);
      cs.imbue(std::locale::classic());
      double v;
      if (!(cs >> v)) throw std::runtime_error("bad number in " + path);
      feats.push_back(v);
    }
    rows.push_back(std::move(feats));
    labels.push_back(std::stoi(cells.back()));
  }
  LabeledData out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width ? width - 1 : 0));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t d = 0; d < rows[i].size(); ++d)
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rows[i][d];
  out.labels = std::move(labels);
  return out;
}

}  // namespace streamsgd
