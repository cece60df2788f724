#ifndef ZSLMETRIC_DATASET_HPP
#define ZSLMETRIC_DATASET_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "zslmetric/rng.hpp"

namespace zslmetric {

/// Input vectors with dense class ids in [0, C).
struct Dataset {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> samples;  // n x dim, row-major
  std::vector<int> labels;
  std::vector<std::string> class_names;  // optional, per class id

  std::size_t n_classes() const;
  const double* row(std::size_t i) const { return samples.data() + i * dim; }
  void validate() const;
};

/// Class-disjoint zero-shot split: the first floor(C * fraction) class ids
/// train, the rest test.
struct ZslSplit {
  std::vector<int> train_classes;
  std::vector<int> test_classes;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

ZslSplit zsl_split(const Dataset& data, double train_fraction = 0.5);

/// Synthetic benchmark: each class is a sparse prototype; samples add
/// shared nuisance directions (identically distributed across classes)
/// plus isotropic noise, both scaled by `noise`. The shared nuisance keeps
/// raw-input neighbors imperfect, which is what makes the seen/unseen
/// generalization gap visible at this scale.
Dataset synth_dataset(std::size_t n_classes, std::size_t per_class, double noise, Rng& rng);

/// IDX-format reader (images magic 0x00000803, labels magic 0x00000801,
/// big-endian extents, unsigned byte payload). Pixels scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace zslmetric

#endif  // ZSLMETRIC_DATASET_HPP
