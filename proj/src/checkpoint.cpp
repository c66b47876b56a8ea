#include "streamsgd/nn.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace streamsgd {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian host");

void save_checkpoint(const std::string& path, const Model<double>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  const Architecture& a = model.architecture();
  out << "streamsgd-params 1\n";
  out << "arch " << a.input_dim << ' ' << a.hidden.size();
  for (int h : a.hidden) out << ' ' << h;
  out << ' ' << a.n_classes << '\n';
  out << "count " << model.params().size() << '\n';
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(model.params().size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Model<double> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "streamsgd-params 1")
    throw std::runtime_error("not a parameter checkpoint: " + path);

  Architecture arch;
  std::getline(in, line);
  {
    std::istringstream ss(line);
    std::string tag;
    std::size_t n_hidden = 0;
    ss >> tag >> arch.input_dim >> n_hidden;
    if (tag != "arch" || !ss || n_hidden > 2) throw std::runtime_error("bad arch line in " + path);
    arch.hidden.resize(n_hidden);
    for (auto& h : arch.hidden) ss >> h;
    ss >> arch.n_classes;
    if (!ss) throw std::runtime_error("bad arch line in " + path);
  }
  std::size_t count = 0;
  std::getline(in, line);
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag >> count;
    if (tag != "count" || !ss) throw std::runtime_error("bad count line in " + path);
  }
  arch.validate();
  if (count != arch.parameter_count()) throw std::runtime_error("parameter count does not match architecture");

  Vector<double> params(static_cast<Eigen::Index>(count));
  in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
    throw std::runtime_error("truncated checkpoint: " + path);
  return Model<double>(std::move(arch), std::move(params));
}

}  // namespace streamsgd
