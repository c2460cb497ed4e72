#include "preln/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "preln/config.hpp"

namespace preln {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
    return r;
  }
  return v;
}

void write_tensor(std::ostream& out, const MatrixD& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(m.data()[i]));
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
}

void read_tensor(std::istream& in, MatrixD& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    char buf[8];
    if (!in.read(buf, 8)) throw std::runtime_error("checkpoint: truncated tensor data");
    std::uint64_t bits = 0;
    std::memcpy(&bits, buf, 8);
    m.data()[i] = std::bit_cast<double>(to_little(bits));
  }
}

}  // namespace

template <typename S>
void write_checkpoint(std::ostream& out, const ModelConfig& config, const Parameters<S>& params) {
  const Parameters<double> p = cast_parameters<double>(params);
  out << "preln-checkpoint\n" << "format_version = " << kCheckpointVersion << '\n';
  for (const auto& [k, v] : model_config_entries(config)) out << "model." << k << " = " << v << '\n';
  for_each_tensor(p, [&](const std::string& name, const MatrixD& m) {
    out << "tensor = " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  });
  out << "end_header\n";
  for_each_tensor(p, [&](const std::string&, const MatrixD& m) { write_tensor(out, m); });
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "preln-checkpoint") throw std::runtime_error("checkpoint: bad magic line");
  Checkpoint c;
  struct Shape {
    std::string name;
    long rows, cols;
  };
  std::vector<Shape> shapes;
  bool version_seen = false;
  while (true) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing end_header");
    if (line == "end_header") break;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: bad header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key == "format_version") {
      if (value != std::to_string(kCheckpointVersion)) throw std::runtime_error("checkpoint: unsupported version " + value);
      version_seen = true;
    } else if (key.rfind("model.", 0) == 0) {
      set_model_config_value(c.config, key.substr(6), value);
    } else if (key == "tensor") {
      std::istringstream ss(value);
      Shape s;
      if (!(ss >> s.name >> s.rows >> s.cols)) throw std::runtime_error("checkpoint: bad tensor line");
      shapes.push_back(s);
    } else {
      throw std::runtime_error("checkpoint: unknown header key '" + key + "'");
    }
  }
  if (!version_seen) throw std::runtime_error("checkpoint: missing format_version");
  c.config.validate();
  c.params = init_parameters<double>(c.config, Initializer::MegatronSmall, RandomSource(0));
  std::size_t i = 0;
  for_each_tensor(c.params, [&](const std::string& name, MatrixD& m) {
    if (i >= shapes.size() || shapes[i].name != name || shapes[i].rows != m.rows() || shapes[i].cols != m.cols()) {
      throw std::runtime_error("checkpoint: tensor list does not match the model config at " + name);
    }
    ++i;
  });
  if (i != shapes.size()) throw std::runtime_error("checkpoint: extra tensors in header");
  for_each_tensor(c.params, [&](const std::string&, MatrixD& m) { read_tensor(in, m); });
  return c;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters<S>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(out, config, params);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

template void write_checkpoint<float>(std::ostream&, const ModelConfig&, const Parameters<float>&);
template void write_checkpoint<double>(std::ostream&, const ModelConfig&, const Parameters<double>&);
template void save_checkpoint<float>(const std::filesystem::path&, const ModelConfig&, const Parameters<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const ModelConfig&, const Parameters<double>&);

}  // namespace preln
