#ifndef ZSLMETRIC_EXTRACTOR_HPP
#define ZSLMETRIC_EXTRACTOR_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "zslmetric/rng.hpp"
#include "zslmetric/tensor.hpp"

namespace zslmetric {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);
Tensor apply_activation(Activation a, const Tensor& x);

enum class AttentionKind {
  kMultiplicative,        // <W1 q_j, W2 u>
  kMultiplicativeSimple,  // <W1 q_j, u>
  kAdditive,              // w^T sigma(W1 q_j + W2 u)
  kAdditiveSimple,        // w^T sigma(W1 q_j + u)
  kMultiDim,              // Wmd^T sigma(W1 q_j + u), one score per feature
};

AttentionKind attention_kind_from_name(const std::string& name);
std::string attention_kind_name(AttentionKind k);

/// Normalization axis for multi-dimensional attention weights: per location
/// over features (as printed) or per feature over locations.
enum class MultiDimAxis { kFeature, kLocation };

struct StageShape {
  std::size_t channels = 1;  // C
  std::size_t rows = 1;      // H
  std::size_t cols = 1;      // V
  std::size_t flat() const { return channels * rows * cols; }
};

struct BackboneConfig {
  std::size_t input_dim = 0;
  std::vector<StageShape> stages;    // m >= 1
  std::size_t hidden_dim = 0;        // l, dimension of u
  Activation activation = Activation::kRelu;

  void validate() const;
};

/// One backbone stage output viewed as H*V channel vectors q_j in R^C
/// (rows of `map`), plus the stage geometry for heatmap export.
struct StageOutput {
  Tensor map;  // (H*V, C)
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Per-stage attention parameters; presence of W2 / w / Wmd matches the kind.
struct AttentionParams {
  AttentionKind kind = AttentionKind::kAdditiveSimple;
  Activation sigma = Activation::kTanh;
  MultiDimAxis multidim_axis = MultiDimAxis::kFeature;
  Tensor w1;                  // (l, C)
  std::optional<Tensor> w2;   // (l, l)
  std::optional<Tensor> w;    // (l)
  std::optional<Tensor> wmd;  // (l, C)

  void validate(std::size_t channels, std::size_t hidden_dim) const;
};

/// Unnormalized attention scores: a vector of length H*V for the scalar
/// kinds, or an (H*V, C) matrix for multi-dimensional attention.
Tensor attention_scores(const StageOutput& stage, const Tensor& u,
                        const AttentionParams& params);

/// Softmax normalization of scores: over locations for the scalar kinds,
/// along the configured axis for multi-dimensional scores.
Tensor normalize_scores(const Tensor& scores, MultiDimAxis axis = MultiDimAxis::kFeature);

/// Weighted pooling of channel vectors: p = sum_j alpha_j q_j, or the
/// per-feature sum when weights form a matrix.
Tensor attend_pool(const StageOutput& stage, const Tensor& weights);

/// Concatenation [p^(1); ...; p^(m)] with u appended when include_u.
Tensor fuse(std::span<const Tensor> attended, const Tensor& u, bool include_u);

/// Writes location weights as an HxV CSV grid plus a linearly rescaled
/// 8-bit binary PGM (P5) next to it (path + ".csv" / ".pgm").
void export_attention(std::span<const double> weights, std::size_t rows,
                      std::size_t cols, const std::string& path_stem);

/// Blocked dense feature extractor: per stage an affine map + activation on
/// the previous stage's flattened output, reshaped to (C,H,V); a final affine
/// map produces the last-hidden vector u. Per-stage attention pools each map
/// against u and the pooled vectors are fused into the output feature.
class FeatureExtractor {
 public:
  FeatureExtractor(BackboneConfig config, AttentionKind kind, bool include_u,
                   Rng& init_rng, Activation attention_sigma = Activation::kTanh,
                   MultiDimAxis multidim_axis = MultiDimAxis::kFeature);

  struct Forward {
    std::vector<std::vector<StageOutput>> stages;  // [sample][stage]
    Tensor u;         // (n, l)
    Tensor features;  // (n, feature_dim)
  };

  /// x: (n, input_dim) batch. Gradients flow when a tape is active.
  Forward forward(const Tensor& x) const;

  /// Convenience single-sample path; returns the fused feature vector.
  Tensor forward_single(const Tensor& x) const;

  /// Normalized location weights per stage for one input (inference only);
  /// scalar attention kinds only.
  std::vector<std::vector<double>> attention_weights(const Tensor& x) const;

  std::size_t feature_dim() const;
  const BackboneConfig& config() const { return config_; }
  AttentionKind attention_kind() const { return kind_; }
  bool include_u() const { return include_u_; }

  std::vector<std::pair<std::string, Tensor>> named_params();
  const std::vector<AttentionParams>& attention_params() const { return attn_; }
  std::vector<AttentionParams>& attention_params() { return attn_; }

 private:
  BackboneConfig config_;
  AttentionKind kind_;
  bool include_u_;
  std::vector<Tensor> stage_weights_;  // (out, in)
  std::vector<Tensor> stage_bias_;     // (out)
  Tensor u_weight_;                    // (l, last_stage_flat)
  Tensor u_bias_;                      // (l)
  std::vector<AttentionParams> attn_;
};

/// Glorot-style uniform init in [-a, a], a = sqrt(6/(fan_in+fan_out)).
Tensor init_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace zslmetric

#endif  // ZSLMETRIC_EXTRACTOR_HPP
