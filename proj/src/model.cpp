#include "zslmetric/model.hpp"

namespace zslmetric {

Model::Model(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t n_train_classes)
    : cfg_(cfg), input_dim_(input_dim), n_train_classes_(n_train_classes) {
  cfg_.validate();
  if (input_dim_ == 0) throw ConfigError("model: input_dim must be resolved before build");
  cfg_.input_dim = input_dim_;

  BackboneConfig backbone;
  backbone.input_dim = input_dim_;
  backbone.stages = cfg_.stages;
  backbone.hidden_dim = cfg_.hidden_dim;
  backbone.activation = activation_from_name(cfg_.activation);

  // One init stream, consumed in a fixed construction order.
  Rng init_rng(derive_seed(cfg_.seed, 0x1717));
  extractor_ = std::make_unique<FeatureExtractor>(
      backbone, attention_kind_from_name(cfg_.attention), cfg_.include_u, init_rng,
      activation_from_name(cfg_.attention_sigma),
      cfg_.multidim_axis == "location" ? MultiDimAxis::kLocation : MultiDimAxis::kFeature);
  embedding_ = std::make_unique<EmbeddingLayer>(extractor_->feature_dim(), cfg_.embedding_dim,
                                                cfg_.normalize_embedding, init_rng);

  const AdversarialMode mode = cfg_.mode_enum();
  if (mode == AdversarialMode::kSoftAdv || mode == AdversarialMode::kAdaptAdv) {
    if (n_train_classes_ < 2) {
      throw ConfigError("model: adversarial modes need at least two training classes");
    }
    const std::size_t hidden =
        cfg_.classifier_hidden ? cfg_.classifier_hidden
                               : std::max<std::size_t>(2, extractor_->feature_dim() / 2);
    classifier_ = std::make_unique<Classifier>(extractor_->feature_dim(), hidden,
                                               n_train_classes_, cfg_.dropout, init_rng);
  }
  if (cfg_.loss_enum() == MetricLossKind::kProxyNca) {
    if (n_train_classes_ < 2) throw ConfigError("model: proxy loss needs >= 2 classes");
    proxies_ = init_uniform({n_train_classes_, cfg_.embedding_dim}, cfg_.embedding_dim,
                            n_train_classes_, init_rng);
  }
}

Tensor Model::embed(const Tensor& inputs) const {
  return embedding_->forward(extractor_->forward(inputs).features);
}

std::vector<double> Model::embed_values(const std::vector<double>& rows, std::size_t n,
                                        std::size_t dim) const {
  if (rows.size() != n * dim) throw ContractError("embed_values: buffer size mismatch");
  // No TapeScope: forward stays untracked regardless of parameter flags.
  Tensor x({n, dim}, rows);
  Tensor e = embed(x);
  return {e.values().begin(), e.values().end()};
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() {
  auto out = extractor_->named_params();
  for (auto& p : embedding_->named_params()) out.push_back(p);
  if (classifier_) {
    for (auto& p : classifier_->named_params()) out.push_back(p);
  }
  if (proxies_) out.emplace_back("proxies", *proxies_);
  return out;
}

std::vector<Tensor> Model::extractor_params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : extractor_->named_params()) out.push_back(t);
  return out;
}

std::vector<Tensor> Model::embedding_params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : embedding_->named_params()) out.push_back(t);
  return out;
}

std::vector<Tensor> Model::classifier_params() {
  std::vector<Tensor> out;
  if (classifier_) {
    for (auto& [name, t] : classifier_->named_params()) out.push_back(t);
  }
  return out;
}

}  // namespace zslmetric
