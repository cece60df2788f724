#ifndef ZSLMETRIC_MODEL_HPP
#define ZSLMETRIC_MODEL_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zslmetric/adversary.hpp"
#include "zslmetric/config.hpp"
#include "zslmetric/extractor.hpp"
#include "zslmetric/losses.hpp"

namespace zslmetric {

/// The three parameter groups: extractor (theta_f), embedding (theta_m,
/// including proxies when the loss learns them), classifier (theta_c,
/// present in the adversarial modes).
class Model {
 public:
  /// n_train_classes sizes the classifier head and the proxy matrix.
  Model(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t n_train_classes);

  const FeatureExtractor& extractor() const { return *extractor_; }
  FeatureExtractor& extractor() { return *extractor_; }
  const EmbeddingLayer& embedding() const { return *embedding_; }
  EmbeddingLayer& embedding() { return *embedding_; }
  Classifier* classifier() { return classifier_ ? classifier_.get() : nullptr; }
  const Classifier* classifier() const { return classifier_ ? classifier_.get() : nullptr; }
  Tensor* proxies() { return proxies_.has_value() ? &*proxies_ : nullptr; }
  const Tensor* proxies() const { return proxies_.has_value() ? &*proxies_ : nullptr; }

  /// Raw inputs (n, input_dim) -> embeddings (n, embedding_dim), through
  /// the extractor and metric embedding layer.
  Tensor embed(const Tensor& inputs) const;

  /// Inference-mode embedding of plain row-major data; no tape recording.
  std::vector<double> embed_values(const std::vector<double>& rows, std::size_t n,
                                   std::size_t dim) const;

  std::vector<std::pair<std::string, Tensor>> named_params();
  std::vector<Tensor> extractor_params();
  std::vector<Tensor> embedding_params();  // affine map only
  std::vector<Tensor> classifier_params();

  const ExperimentConfig& config() const { return cfg_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t n_train_classes() const { return n_train_classes_; }
  std::size_t feature_dim() const { return extractor_->feature_dim(); }

 private:
  ExperimentConfig cfg_;
  std::size_t input_dim_;
  std::size_t n_train_classes_;
  std::unique_ptr<FeatureExtractor> extractor_;
  std::unique_ptr<EmbeddingLayer> embedding_;
  std::unique_ptr<Classifier> classifier_;
  std::optional<Tensor> proxies_;
};

/// Versioned binary checkpoint: header (magic, version, config hash) +
/// embedded canonical config text + named 64-bit little-endian blobs.
void save_model(Model& model, const std::string& path);

struct LoadedModel {
  ExperimentConfig config;
  std::unique_ptr<Model> model;
  std::size_t input_dim = 0;
  std::size_t n_train_classes = 0;
};

/// Rebuilds the model from the embedded config; verifies the stored hash
/// and, when `expected` is given, that the checkpoint matches it.
LoadedModel load_model(const std::string& path,
                       const ExperimentConfig* expected = nullptr);

}  // namespace zslmetric

#endif  // ZSLMETRIC_MODEL_HPP
