#ifndef ZSLMETRIC_ADVERSARY_HPP
#define ZSLMETRIC_ADVERSARY_HPP

#include <string>
#include <vector>

#include "zslmetric/extractor.hpp"
#include "zslmetric/tensor.hpp"

namespace zslmetric {

/// Feed-forward classifier with one hidden layer, dropout after the hidden
/// activation, and a softmax output row per sample.
class Classifier {
 public:
  Classifier(std::size_t feature_dim, std::size_t hidden_dim, std::size_t n_classes,
             double dropout_rate, Rng& init_rng,
             Activation activation = Activation::kRelu);

  /// features: (n, feature_dim) -> probabilities (n, C), rows sum to 1.
  Tensor forward(const Tensor& features, bool training, Rng& rng) const;

  /// Single feature vector -> probability vector of length C.
  Tensor classify(const Tensor& feature, bool training, Rng& rng) const;

  std::size_t n_classes() const { return out_weight_.shape()[0]; }
  std::size_t feature_dim() const { return hidden_weight_.shape()[1]; }
  double dropout_rate() const { return dropout_rate_; }
  std::vector<std::pair<std::string, Tensor>> named_params();

 private:
  Tensor hidden_weight_;  // (hidden, feature)
  Tensor hidden_bias_;    // (hidden)
  Tensor out_weight_;     // (C, hidden)
  Tensor out_bias_;       // (C)
  double dropout_rate_;
  Activation activation_;
};

/// -ln(probs[y]) with the probability floored at 1e-12 before the log.
Tensor cross_entropy(const Tensor& probs, int label);

/// (1-alpha) one_hot(y) + alpha/C.
std::vector<double> smooth_labels(int label, double alpha, std::size_t n_classes);

/// -sum_k target[k] ln(probs[k]), probabilities floored at 1e-12.
Tensor soft_ce(const Tensor& probs, std::span<const double> target);

/// Batch mean of -sum_k target ln(probs) given a dense (n, C) target matrix.
Tensor mean_ce(const Tensor& probs, const Tensor& targets);

/// Dense (n, C) target matrix from labels; alpha = 0 gives one-hot rows.
Tensor target_matrix(std::span<const int> labels, std::size_t n_classes, double alpha);

inline double soft_adv_loss(double metric_loss, double classifier_loss, double lambda) {
  return metric_loss + lambda * classifier_loss;
}

/// Eq-structure identity: the adaptive adversarial objective is the soft
/// objective with the sign of lambda flipped.
inline double adapt_adv_loss(double metric_loss, double classifier_loss, double lambda) {
  return soft_adv_loss(metric_loss, classifier_loss, -lambda);
}

/// lambda = -tanh(l_c - l_thresh) * lambda0.
double lambda_schedule(double classifier_loss, double loss_threshold, double lambda0);

enum class AdversarialMode { kBase, kEnergy, kSoftAdv, kAdaptAdv };
AdversarialMode mode_from_name(const std::string& name);
std::string mode_name(AdversarialMode m);

/// Adaptive schedule state: lambda is refreshed once per epoch from the
/// epoch-mean classification loss.
struct AdversarialSchedule {
  double lambda0 = 0.5;
  double loss_threshold = 1.5;
  double lambda = 0.0;

  void validate() const;
  void update(double epoch_mean_classifier_loss) {
    lambda = lambda_schedule(epoch_mean_classifier_loss, loss_threshold, lambda0);
  }
};

}  // namespace zslmetric

#endif  // ZSLMETRIC_ADVERSARY_HPP
