#include "zslmetric/adversary.hpp"

#include <cmath>

#include "zslmetric/errors.hpp"

namespace zslmetric {

Classifier::Classifier(std::size_t feature_dim, std::size_t hidden_dim,
                       std::size_t n_classes, double dropout_rate, Rng& init_rng,
                       Activation activation)
    : dropout_rate_(dropout_rate), activation_(activation) {
  if (feature_dim == 0 || hidden_dim == 0) throw ConfigError("classifier: zero dimension");
  if (n_classes < 2) throw ConfigError("classifier: needs at least two classes");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ParamError("classifier: dropout rate must lie in [0,1)");
  }
  hidden_weight_ = init_uniform({hidden_dim, feature_dim}, feature_dim, hidden_dim, init_rng);
  hidden_bias_ = Tensor::param({hidden_dim}, std::vector<double>(hidden_dim, 0.0));
  out_weight_ = init_uniform({n_classes, hidden_dim}, hidden_dim, n_classes, init_rng);
  out_bias_ = Tensor::param({n_classes}, std::vector<double>(n_classes, 0.0));
}

Tensor Classifier::forward(const Tensor& features, bool training, Rng& rng) const {
  if (features.ndim() != 2 || features.shape()[1] != hidden_weight_.shape()[1]) {
    throw ContractError("classifier: features must be (n, " +
                        std::to_string(hidden_weight_.shape()[1]) + "), got " +
                        shape_str(features.shape()));
  }
  Tensor h = apply_activation(
      activation_, add_rowwise(matmul(features, transpose(hidden_weight_)), hidden_bias_));
  h = dropout(h, dropout_rate_, training, rng);
  Tensor logits = add_rowwise(matmul(h, transpose(out_weight_)), out_bias_);
  return softmax(logits, 1);
}

Tensor Classifier::classify(const Tensor& feature, bool training, Rng& rng) const {
  if (feature.ndim() != 1) throw ContractError("classify: expects a 1-D feature vector");
  Tensor probs = forward(reshape(feature, {1, feature.size()}), training, rng);
  return reshape(probs, {probs.shape()[1]});
}

std::vector<std::pair<std::string, Tensor>> Classifier::named_params() {
  return {{"classifier.hidden.weight", hidden_weight_},
          {"classifier.hidden.bias", hidden_bias_},
          {"classifier.out.weight", out_weight_},
          {"classifier.out.bias", out_bias_}};
}

namespace {
constexpr double kProbFloor = 1e-12;
}

Tensor cross_entropy(const Tensor& probs, int label) {
  if (probs.ndim() != 1) throw ContractError("cross_entropy: expects a probability vector");
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw ContractError("cross_entropy: label " + std::to_string(label) +
                        " outside [0," + std::to_string(probs.size()) + ")");
  }
  std::vector<double> onehot(probs.size(), 0.0);
  onehot[static_cast<std::size_t>(label)] = 1.0;
  return soft_ce(probs, onehot);
}

std::vector<double> smooth_labels(int label, double alpha, std::size_t n_classes) {
  if (alpha < 0.0 || alpha >= 1.0) {
    throw ParamError("smooth_labels: alpha must lie in [0,1), got " + std::to_string(alpha));
  }
  if (n_classes < 2) throw ParamError("smooth_labels: C must be at least 2");
  if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
    throw ContractError("smooth_labels: label outside [0,C)");
  }
  std::vector<double> y(n_classes, alpha / static_cast<double>(n_classes));
  y[static_cast<std::size_t>(label)] += 1.0 - alpha;
  return y;
}

Tensor soft_ce(const Tensor& probs, std::span<const double> target) {
  if (probs.ndim() != 1 || probs.size() != target.size()) {
    throw ContractError("soft_ce: probability/target length mismatch");
  }
  Tensor t({target.size()}, std::vector<double>(target.begin(), target.end()));
  return neg(sum(mul(t, log(clamp_min(probs, kProbFloor)))));
}

Tensor mean_ce(const Tensor& probs, const Tensor& targets) {
  if (probs.shape() != targets.shape()) {
    throw ContractError("mean_ce: shape mismatch " + shape_str(probs.shape()) + " vs " +
                        shape_str(targets.shape()));
  }
  const double n = static_cast<double>(probs.shape()[0]);
  return mul_scalar(sum(mul(targets, log(clamp_min(probs, kProbFloor)))), -1.0 / n);
}

Tensor target_matrix(std::span<const int> labels, std::size_t n_classes, double alpha) {
  std::vector<double> rows;
  rows.reserve(labels.size() * n_classes);
  for (int y : labels) {
    auto r = smooth_labels(y, alpha, n_classes);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return Tensor({labels.size(), n_classes}, std::move(rows));
}

double lambda_schedule(double classifier_loss, double loss_threshold, double lambda0) {
  if (lambda0 <= 0.0) throw ParamError("lambda_schedule: lambda0 must be positive");
  return -std::tanh(classifier_loss - loss_threshold) * lambda0;
}

AdversarialMode mode_from_name(const std::string& name) {
  if (name == "base") return AdversarialMode::kBase;
  if (name == "energy") return AdversarialMode::kEnergy;
  if (name == "soft_adv") return AdversarialMode::kSoftAdv;
  if (name == "adapt_adv") return AdversarialMode::kAdaptAdv;
  throw ConfigError("unknown mode '" + name + "'");
}

std::string mode_name(AdversarialMode m) {
  switch (m) {
    case AdversarialMode::kBase: return "base";
    case AdversarialMode::kEnergy: return "energy";
    case AdversarialMode::kSoftAdv: return "soft_adv";
    case AdversarialMode::kAdaptAdv: return "adapt_adv";
  }
  return "?";
}

void AdversarialSchedule::validate() const {
  if (lambda0 <= 0.0 || lambda0 > 1.0) {
    throw ParamError("schedule: lambda0 must lie in (0,1]");
  }
}

}  // namespace zslmetric
