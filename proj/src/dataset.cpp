#include "zslmetric/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>

#include "zslmetric/errors.hpp"

namespace zslmetric {

std::size_t Dataset::n_classes() const {
  int mx = -1;
  for (int y : labels) mx = std::max(mx, y);
  return static_cast<std::size_t>(mx + 1);
}

void Dataset::validate() const {
  if (samples.size() != n * dim) throw ContractError("dataset: sample buffer size mismatch");
  if (labels.size() != n) throw ContractError("dataset: one label per sample required");
  std::set<int> seen(labels.begin(), labels.end());
  if (seen.empty()) throw ContractError("dataset: empty");
  if (*seen.begin() < 0) throw ContractError("dataset: negative class id");
  // labels dense in [0, C)
  int expect = 0;
  for (int y : seen) {
    if (y != expect++) {
      throw ContractError("dataset: class ids must be dense in [0,C), missing " +
                          std::to_string(expect - 1));
    }
  }
}

ZslSplit zsl_split(const Dataset& data, double train_fraction) {
  data.validate();
  const std::size_t c = data.n_classes();
  if (c < 2) throw ProtocolError("zsl_split: need at least two classes");
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(c) * train_fraction));
  if (n_train == 0 || n_train >= c) {
    throw ProtocolError("zsl_split: fraction " + std::to_string(train_fraction) +
                        " leaves an empty side for C=" + std::to_string(c));
  }
  ZslSplit split;
  for (std::size_t y = 0; y < c; ++y) {
    if (y < n_train) split.train_classes.push_back(static_cast<int>(y));
    else split.test_classes.push_back(static_cast<int>(y));
  }
  for (std::size_t i = 0; i < data.n; ++i) {
    if (static_cast<std::size_t>(data.labels[i]) < n_train) split.train_indices.push_back(i);
    else split.test_indices.push_back(i);
  }
  return split;
}

Dataset synth_dataset(std::size_t n_classes, std::size_t per_class, double noise, Rng& rng) {
  if (n_classes < 2) throw ParamError("synth_dataset: need at least two classes");
  if (per_class < 2) throw ParamError("synth_dataset: per_class must be >= 2");
  if (noise < 0.0) throw ParamError("synth_dataset: noise must be nonnegative");

  const std::size_t dim = std::max<std::size_t>(32, 2 * n_classes);
  const std::size_t support = 3;      // active coordinates per prototype
  const std::size_t n_nuisance = 6;   // shared nuisance directions
  const double amplitude = 2.0;

  // Sparse prototypes, re-drawn on collision so prototypes stay distinct.
  std::vector<std::vector<double>> protos;
  std::set<std::vector<int>> used_patterns;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<int> pattern;
    do {
      pattern.clear();
      std::set<std::size_t> coords;
      while (coords.size() < support) coords.insert(rng.uniform_index(dim));
      for (std::size_t coord : coords) {
        const int sign = rng.uniform() < 0.5 ? -1 : 1;
        pattern.push_back(static_cast<int>(coord) * 2 + (sign > 0 ? 1 : 0));
      }
    } while (!used_patterns.insert(pattern).second);
    std::vector<double> proto(dim, 0.0);
    for (int p : pattern) proto[static_cast<std::size_t>(p / 2)] = amplitude * (p % 2 ? 1.0 : -1.0);
    protos.push_back(std::move(proto));
  }

  // Shared nuisance directions, unit length, identical across classes.
  std::vector<std::vector<double>> nuisance(n_nuisance, std::vector<double>(dim));
  for (auto& dir : nuisance) {
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
  }
  const double nuisance_gain = 1.6;  // strong shared structure vs class signal

  Dataset out;
  out.n = n_classes * per_class;
  out.dim = dim;
  out.samples.reserve(out.n * dim);
  out.labels.reserve(out.n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      std::vector<double> x = protos[c];
      for (const auto& dir : nuisance) {
        const double coeff = noise * nuisance_gain * rng.normal();
        for (std::size_t d = 0; d < dim; ++d) x[d] += coeff * dir[d];
      }
      for (std::size_t d = 0; d < dim; ++d) x[d] += noise * rng.normal();
      out.samples.insert(out.samples.end(), x.begin(), x.end());
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(path + ": truncated at offset " + std::to_string(offset));
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path);
  std::ifstream lbl(labels_path, std::ios::binary);
  if (!lbl) throw IoError("cannot open " + labels_path);

  const std::uint32_t img_magic = read_be32(img, images_path, 0);
  if (img_magic != 0x00000803u) {
    throw FormatError(images_path + ": bad magic at offset 0 (expected 0x00000803)");
  }
  const std::uint32_t n_images = read_be32(img, images_path, 4);
  const std::uint32_t rows = read_be32(img, images_path, 8);
  const std::uint32_t cols = read_be32(img, images_path, 12);

  const std::uint32_t lbl_magic = read_be32(lbl, labels_path, 0);
  if (lbl_magic != 0x00000801u) {
    throw FormatError(labels_path + ": bad magic at offset 0 (expected 0x00000801)");
  }
  const std::uint32_t n_labels = read_be32(lbl, labels_path, 4);
  if (n_labels != n_images) {
    throw FormatError("image count " + std::to_string(n_images) + " != label count " +
                      std::to_string(n_labels));
  }

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  if (dim == 0 || n_images == 0) throw FormatError(images_path + ": empty dimensions");
  std::vector<unsigned char> pixel_buf(dim);
  Dataset out;
  out.n = n_images;
  out.dim = dim;
  out.samples.reserve(out.n * dim);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!img.read(reinterpret_cast<char*>(pixel_buf.data()), static_cast<std::streamsize>(dim))) {
      throw FormatError(images_path + ": truncated at offset " +
                        std::to_string(16 + std::size_t(i) * dim));
    }
    for (unsigned char p : pixel_buf) out.samples.push_back(static_cast<double>(p) / 255.0);
  }
  std::vector<unsigned char> raw_labels(n_labels);
  if (!lbl.read(reinterpret_cast<char*>(raw_labels.data()),
                static_cast<std::streamsize>(n_labels))) {
    throw FormatError(labels_path + ": truncated label payload");
  }
  // Remap to dense ids in encounter-sorted order; keep originals as names.
  std::map<unsigned char, int> remap;
  for (unsigned char y : raw_labels) remap.emplace(y, 0);
  int next = 0;
  for (auto& [orig, id] : remap) id = next++;
  out.class_names.resize(remap.size());
  for (const auto& [orig, id] : remap) {
    out.class_names[static_cast<std::size_t>(id)] = std::to_string(int(orig));
  }
  for (unsigned char y : raw_labels) out.labels.push_back(remap[y]);
  out.validate();
  return out;
}

}  // namespace zslmetric
