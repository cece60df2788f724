#include <cstdint>
#include <cstring>
#include <fstream>

#include "zslmetric/model.hpp"

namespace zslmetric {

namespace {

constexpr std::uint32_t kMagic = 0x5a534c4d;  // "ZSLM"
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ofstream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(path + ": truncated header");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError(path + ": truncated field");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

double read_f64(std::ifstream& in, const std::string& path) {
  const std::uint64_t bits = read_u64(in, path);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_model(Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  write_u32(out, kMagic);
  write_u32(out, kVersion);
  write_u64(out, config_hash(model.config()));
  const std::string cfg_text = model.config().serialize();
  write_u64(out, cfg_text.size());
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  write_u64(out, model.input_dim());
  write_u64(out, model.n_train_classes());

  auto params = model.named_params();
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (auto& [name, tensor] : params) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.ndim()));
    for (std::size_t d : tensor.shape()) write_u64(out, d);
    for (double v : tensor.values()) write_f64(out, v);
  }
  if (!out.good()) throw IoError("checkpoint write failed: " + path);
}

LoadedModel load_model(const std::string& path, const ExperimentConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  if (read_u32(in, path) != kMagic) throw FormatError(path + ": bad magic at offset 0");
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t stored_hash = read_u64(in, path);
  const std::uint64_t cfg_len = read_u64(in, path);
  std::string cfg_text(cfg_len, '\0');
  if (!in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len))) {
    throw FormatError(path + ": truncated config section");
  }

  LoadedModel loaded;
  loaded.config = parse_config(cfg_text);
  if (config_hash(loaded.config) != stored_hash) {
    throw CheckpointError(path + ": config hash mismatch (corrupted checkpoint)");
  }
  if (expected != nullptr && config_hash(*expected) != stored_hash) {
    throw CheckpointError(path + ": checkpoint was produced by a different configuration");
  }
  loaded.input_dim = read_u64(in, path);
  loaded.n_train_classes = read_u64(in, path);
  loaded.model = std::make_unique<Model>(loaded.config, loaded.input_dim,
                                         loaded.n_train_classes);

  auto params = loaded.model->named_params();
  const std::uint32_t count = read_u32(in, path);
  if (count != params.size()) {
    throw FormatError(path + ": parameter count " + std::to_string(count) +
                      " does not match model (" + std::to_string(params.size()) + ")");
  }
  for (auto& [name, tensor] : params) {
    const std::uint32_t name_len = read_u32(in, path);
    std::string stored_name(name_len, '\0');
    if (!in.read(stored_name.data(), name_len)) throw FormatError(path + ": truncated name");
    if (stored_name != name) {
      throw FormatError(path + ": expected parameter '" + name + "', found '" + stored_name + "'");
    }
    const std::uint32_t ndim = read_u32(in, path);
    Shape shape(ndim);
    for (auto& d : shape) d = read_u64(in, path);
    if (shape != tensor.shape()) {
      throw FormatError(path + ": parameter '" + name + "' has shape " + shape_str(shape) +
                        ", model expects " + shape_str(tensor.shape()));
    }
    auto& vals = tensor.mutable_values();
    for (double& v : vals) v = read_f64(in, path);
  }
  return loaded;
}

}  // namespace zslmetric
