#ifndef ZSLMETRIC_LOSSES_HPP
#define ZSLMETRIC_LOSSES_HPP

#include <string>
#include <vector>

#include "zslmetric/tensor.hpp"
#include "zslmetric/tuples.hpp"

namespace zslmetric {

enum class MetricLossKind {
  kContrastive,
  kTripletHinge,
  kNPair,
  kAngular,
  kProxyNca,
};

MetricLossKind metric_loss_from_name(const std::string& name);
std::string metric_loss_name(MetricLossKind k);

struct MetricLossConfig {
  MetricLossKind kind = MetricLossKind::kTripletHinge;
  double margin = 0.01;     // triplet hinge / semi-hard sampling
  double q = 2.0;           // contrastive Q (upper bound of E on unit embeddings)
  double angle_deg = 45.0;  // angular loss alpha
};

/// (1-Y) (2/Q) E^2 + Y 2Q exp(-2.77 E / Q), E = ||e1 - e2||.
Tensor contrastive_loss(const Tensor& e1, const Tensor& e2, int similar_y, double q);

/// max(0, margin - (||a-n|| - ||a-p||)).
Tensor triplet_hinge(const Tensor& anchor, const Tensor& positive,
                     const Tensor& negative, double margin);

/// ln(1 + sum_j exp(S_j^- - S^+)) with dot-product similarities.
Tensor npair_loss(const Tensor& anchor, const Tensor& positive,
                  std::span<const Tensor> negatives);

/// ln(1 + sum_j exp(4 tan^2(a) (x+p)^T n_j - 2 (1+tan^2(a)) x^T p)).
Tensor angular_loss(const Tensor& anchor, const Tensor& positive,
                    std::span<const Tensor> negatives, double angle_deg);

/// -ln( exp(-d(f,p_y)^2) / sum_{z != y} exp(-d(f,p_z)^2) ); f and proxy rows
/// are L2-normalized inside the loss so gradients reach the raw proxies.
Tensor proxy_nca_loss(const Tensor& embedding, int label, const Tensor& proxies);

/// Mean squared distance between all cross-class pairs of the two index
/// sets (rows of a differentiable embedding matrix).
Tensor energy_confusion(const Tensor& embeddings, std::span<const std::size_t> class_i_rows,
                        std::span<const std::size_t> class_j_rows);

/// Metric embedding layer g: affine map to the embedding space, optionally
/// followed by row-wise L2 normalization.
class EmbeddingLayer {
 public:
  EmbeddingLayer(std::size_t in_dim, std::size_t out_dim, bool normalize, Rng& init_rng);

  /// features: (n, in_dim) -> (n, out_dim)
  Tensor forward(const Tensor& features) const;

  std::size_t out_dim() const { return weight_.shape()[0]; }
  bool normalized() const { return normalize_; }
  std::vector<std::pair<std::string, Tensor>> named_params();

 private:
  Tensor weight_;  // (out, in)
  Tensor bias_;    // (out)
  bool normalize_;
};

/// Mean metric loss over the sampled tuples of a batch, built on embedding
/// matrix rows. Triplet-style configs consume `triplets`; N-tuple configs
/// consume `ntuples`; proxy-NCA scores every batch row against `proxies`.
Tensor mean_tuple_loss(const Tensor& embeddings, const MetricLossConfig& config,
                       std::span<const Triplet> triplets,
                       std::span<const NTuple> ntuples,
                       std::span<const int> labels, const Tensor* proxies);

}  // namespace zslmetric

#endif  // ZSLMETRIC_LOSSES_HPP
