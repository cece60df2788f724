#ifndef ZSLMETRIC_TUPLES_HPP
#define ZSLMETRIC_TUPLES_HPP

#include <cstddef>
#include <vector>

#include "zslmetric/rng.hpp"

namespace zslmetric {

/// A mini-batch of embedded features with class labels; rows are f_i.
/// Sampling works on the row values exactly as given (the caller decides
/// whether rows are L2-normalized).
struct FeatureBatch {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> features;  // n x dim, row-major
  std::vector<int> labels;       // n class ids

  const double* row(std::size_t i) const { return features.data() + i * dim; }
  void validate() const;
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  bool fallback = false;  // semi-hard sampler fell back to an easy negative
};

struct NTuple {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;  // one per distinct non-anchor class
};

struct TripletSet {
  std::vector<Triplet> items;
  bool single_class = false;  // batch had no usable negative class
};

/// n x n symmetric Euclidean distance matrix over batch rows.
std::vector<double> pairwise_distances(const FeatureBatch& batch);

/// Random positive/negative per anchor based on labels alone.
TripletSet sample_easy(const FeatureBatch& batch, std::size_t per_anchor, Rng& rng);

/// For every same-class (anchor, positive) pair, a negative with
/// d(a,n) < d(a,p); pairs without one are skipped.
TripletSet sample_hard(const FeatureBatch& batch, Rng& rng);

/// Negatives satisfying d+ < d- and d- - d+ < margin; pairs without one
/// fall back to an easy negative, flagged on the triplet.
TripletSet sample_semihard(const FeatureBatch& batch, double margin, Rng& rng);

/// Per anchor: one positive plus exactly one negative from every other
/// class present in the batch. Classes with a single member cannot anchor.
std::vector<NTuple> sample_npair(const FeatureBatch& batch, Rng& rng);

}  // namespace zslmetric

#endif  // ZSLMETRIC_TUPLES_HPP
