#ifndef ZSLMETRIC_TRAIN_HPP
#define ZSLMETRIC_TRAIN_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zslmetric/dataset.hpp"
#include "zslmetric/metrics.hpp"
#include "zslmetric/model.hpp"
#include "zslmetric/optim.hpp"

namespace zslmetric {

/// Per-group optimizers (backbone, embedding 10x by default, classifier,
/// proxies with their own rate).
struct Optimizers {
  std::unique_ptr<Adam> extractor;
  std::unique_ptr<Adam> embedding;
  std::unique_ptr<Adam> classifier;
  std::unique_ptr<Adam> proxies;

  static Optimizers build(Model& model);
};

struct SampledTuples {
  TripletSet triplets;
  std::vector<NTuple> ntuples;
  std::size_t count() const { return triplets.items.size() + ntuples.size(); }
};

/// Mines tuples for the configured loss from embedded batch rows.
SampledTuples sample_for_loss(MetricLossKind kind, const FeatureBatch& batch,
                              const ExperimentConfig& cfg, Rng& rng);

struct StepResult {
  bool stepped = false;        // false when no tuples could be mined
  double metric_loss = 0.0;
  double classifier_loss = 0.0;  // NaN when the mode has no classifier
  double lambda = 0.0;
  double r_adv = 0.0;          // adapt mode objective l_m - lambda l_c
  double energy = 0.0;         // energy mode added term
  std::size_t tuple_count = 0;
};

/// One step of Eq-17-style metric minimization (base mode; energy mode adds
/// the confusion term when `with_energy`).
StepResult minimize_metric(Model& model, Optimizers& opt, const Tensor& inputs,
                           const std::vector<int>& labels, Rng& rng,
                           bool with_energy = false);

/// One step of the joint label-smoothing objective l_m + lambda l_c.
StepResult train_step_soft(Model& model, Optimizers& opt, const Tensor& inputs,
                           const std::vector<int>& labels, Rng& rng);

/// One two-phase adversarial step: phase 1 updates (theta_f, theta_m) on
/// R_adv through the gradient-reversal routing with theta_c frozen; phase 2
/// updates theta_c alone on the classification loss (scaled by lambda when
/// lambda > 0). run_classifier_phase=false stops after phase 1.
StepResult train_step_adversarial(Model& model, Optimizers& opt, const Tensor& inputs,
                                  const std::vector<int>& labels,
                                  const AdversarialSchedule& schedule, Rng& rng,
                                  bool run_classifier_phase = true);

/// R_adv = mean l_m - lambda * mean l_c on a fixed batch, dropout off, no
/// parameter updates (numerical descent checks).
double adversarial_objective(Model& model, const Tensor& inputs,
                             const std::vector<int>& labels, double lambda, Rng& rng);

/// Class-balanced batch maker: every included class contributes >= 2 (and
/// up to `per_class`) distinct samples per batch.
std::vector<std::vector<std::size_t>> balanced_batches(const std::vector<int>& labels,
                                                       std::size_t batch_size,
                                                       std::size_t per_class, Rng& rng);

/// Retrieval evaluation of a dataset subset; kmeans k = #classes present.
/// When train_classes is nonempty the subset's classes must be disjoint
/// from it (ZSL protocol assertion).
EvalReport evaluate_split(const Model& model, const Dataset& data,
                          std::span<const std::size_t> indices, const std::string& split_id,
                          std::size_t epoch, const std::vector<std::size_t>& ks,
                          std::uint64_t eval_seed,
                          std::span<const int> train_classes = {});

struct EpochLog {
  std::size_t epoch = 0;
  double metric_loss = 0.0;
  double classifier_loss = 0.0;
  double lambda = 0.0;
  double energy = 0.0;
  std::size_t steps = 0;
  std::size_t skipped = 0;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<EpochLog> epochs;
  std::vector<EvalReport> reports;
  std::string train_log_csv;  // exact text written to train_log.csv
  std::string metrics_csv;    // exact text written to metrics.csv
};

/// Full training run per the experiment config; writes config.toml,
/// train_log.csv, metrics.csv, model.bin and final JSON reports into
/// out_dir when it is nonempty.
TrainResult train(const ExperimentConfig& cfg, const Dataset& data,
                  const std::string& out_dir = "");

}  // namespace zslmetric

#endif  // ZSLMETRIC_TRAIN_HPP
