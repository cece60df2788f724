#ifndef ZSLMETRIC_CONFIG_HPP
#define ZSLMETRIC_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "zslmetric/adversary.hpp"
#include "zslmetric/extractor.hpp"
#include "zslmetric/losses.hpp"

namespace zslmetric {

/// Full experiment description. Defaults reproduce the reference training
/// setup at desk scale; every field maps one-to-one onto a config-file key.
struct ExperimentConfig {
  // run
  std::uint64_t seed = 7;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t samples_per_class = 4;  // K in class-balanced batching
  double train_fraction = 0.5;
  double val_fraction = 0.1;
  std::size_t eval_every = 1;  // 0 = final epoch only
  std::vector<std::size_t> eval_ks = {1, 2, 4, 8};

  // synthetic data source
  std::size_t synth_classes = 20;
  std::size_t synth_per_class = 50;
  double synth_noise = 0.4;

  // backbone
  std::size_t input_dim = 0;  // 0 = derive from dataset
  std::vector<StageShape> stages = {{8, 2, 2}, {8, 2, 2}};
  std::size_t hidden_dim = 32;
  std::string activation = "relu";

  // attention
  std::string attention = "additive_simple";
  std::string attention_sigma = "tanh";
  std::string multidim_axis = "feature";
  bool include_u = false;

  // embedding
  std::size_t embedding_dim = 64;
  bool normalize_embedding = true;

  // metric loss
  std::string loss = "triplet";
  double margin = 0.01;
  double contrastive_q = 2.0;
  double angle_deg = 45.0;
  std::size_t easy_per_anchor = 1;

  // integration mode
  std::string mode = "base";
  double lambda = 0.5;   // fixed weight for soft_adv / energy modes
  double lambda0 = 0.5;  // adaptive schedule magnitude
  double l_thresh = 1.5;
  double smoothing = 0.15;
  double dropout = 0.1;
  std::size_t classifier_hidden = 0;  // 0 = feature_dim / 2

  // learning rates
  double backbone_lr = 1e-4;
  double embedding_lr = 1e-3;
  double classifier_lr = 1e-3;
  double proxy_lr = 0.01;

  void validate() const;
  AdversarialMode mode_enum() const { return mode_from_name(mode); }
  MetricLossKind loss_enum() const { return metric_loss_from_name(loss); }

  /// Canonical key = value form (fixed key order, full precision).
  std::string serialize() const;
};

/// Parses the TOML-style key = value text produced by serialize() or
/// written by hand. Unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

/// ZSLMETRIC_SEED, when set, overrides the config seed.
void apply_env_overrides(ExperimentConfig& cfg);

/// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const ExperimentConfig& cfg);

std::string stages_to_string(const std::vector<StageShape>& stages);
std::vector<StageShape> stages_from_string(const std::string& text);

}  // namespace zslmetric

#endif  // ZSLMETRIC_CONFIG_HPP
