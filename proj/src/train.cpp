#include "zslmetric/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "zslmetric/errors.hpp"

namespace zslmetric {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

FeatureBatch to_feature_batch(const Tensor& embeddings, const std::vector<int>& labels) {
  FeatureBatch fb;
  fb.n = embeddings.shape()[0];
  fb.dim = embeddings.shape()[1];
  fb.features.assign(embeddings.values().begin(), embeddings.values().end());
  fb.labels = labels;
  return fb;
}

// Two distinct classes present in the batch, each with its member rows.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> pick_confusion_classes(
    const std::vector<int>& labels, Rng& rng) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) throw ContractError("energy term needs two classes in the batch");
  std::vector<int> classes;
  for (const auto& [c, rows] : groups) classes.push_back(c);
  const std::size_t i = rng.uniform_index(classes.size());
  std::size_t j;
  do {
    j = rng.uniform_index(classes.size());
  } while (j == i);
  return {groups[classes[i]], groups[classes[j]]};
}

}  // namespace

Optimizers Optimizers::build(Model& model) {
  const auto& cfg = model.config();
  Optimizers opt;
  opt.extractor = std::make_unique<Adam>(model.extractor_params(), cfg.backbone_lr);
  opt.embedding = std::make_unique<Adam>(model.embedding_params(), cfg.embedding_lr);
  if (model.classifier() != nullptr) {
    opt.classifier = std::make_unique<Adam>(model.classifier_params(), cfg.classifier_lr);
  }
  if (model.proxies() != nullptr) {
    opt.proxies = std::make_unique<Adam>(std::vector<Tensor>{*model.proxies()}, cfg.proxy_lr);
  }
  return opt;
}

SampledTuples sample_for_loss(MetricLossKind kind, const FeatureBatch& batch,
                              const ExperimentConfig& cfg, Rng& rng) {
  SampledTuples out;
  switch (kind) {
    case MetricLossKind::kContrastive:
      out.triplets = sample_easy(batch, cfg.easy_per_anchor, rng);
      break;
    case MetricLossKind::kTripletHinge:
      // semi-hard mining with the loss margin, per the reference setup
      out.triplets = sample_semihard(batch, cfg.margin, rng);
      break;
    case MetricLossKind::kNPair:
    case MetricLossKind::kAngular:
      out.ntuples = sample_npair(batch, rng);
      break;
    case MetricLossKind::kProxyNca:
      break;  // proxy loss scores the batch directly
  }
  return out;
}

namespace {

struct ForwardState {
  Tensor features;    // (n, feature_dim)
  Tensor embeddings;  // (n, e)
  SampledTuples tuples;
  Tensor metric_loss;  // scalar
  bool have_loss = false;
};

MetricLossConfig loss_config(const ExperimentConfig& cfg) {
  MetricLossConfig lc;
  lc.kind = cfg.loss_enum();
  lc.margin = cfg.margin;
  lc.q = cfg.contrastive_q;
  lc.angle_deg = cfg.angle_deg;
  return lc;
}

// Shared forward + sampling + metric-loss construction on the active tape.
ForwardState forward_metric(Model& model, const Tensor& inputs,
                            const std::vector<int>& labels, Rng& rng) {
  ForwardState st;
  st.features = model.extractor().forward(inputs).features;
  st.embeddings = model.embedding().forward(st.features);
  const auto& cfg = model.config();
  const MetricLossKind kind = cfg.loss_enum();
  st.tuples = sample_for_loss(kind, to_feature_batch(st.embeddings, labels), cfg, rng);
  const bool proxy = kind == MetricLossKind::kProxyNca;
  if (!proxy && st.tuples.count() == 0) return st;  // caller skips the step
  st.metric_loss = mean_tuple_loss(st.embeddings, loss_config(cfg), st.tuples.triplets.items,
                                   st.tuples.ntuples, labels, model.proxies());
  st.have_loss = true;
  return st;
}

}  // namespace

StepResult minimize_metric(Model& model, Optimizers& opt, const Tensor& inputs,
                           const std::vector<int>& labels, Rng& rng, bool with_energy) {
  StepResult res;
  res.classifier_loss = std::numeric_limits<double>::quiet_NaN();
  Tape tape;
  TapeScope scope(tape);
  ForwardState st = forward_metric(model, inputs, labels, rng);
  if (!st.have_loss) return res;  // no-op, reported to the caller
  res.tuple_count = st.tuples.count();
  Tensor total = st.metric_loss;
  if (with_energy) {
    auto [rows_i, rows_j] = pick_confusion_classes(labels, rng);
    Tensor ec = energy_confusion(st.embeddings, rows_i, rows_j);
    res.energy = ec.value();
    total = add(total, mul_scalar(ec, model.config().lambda));
  }
  res.metric_loss = st.metric_loss.value();
  tape.backward(total);
  opt.extractor->step();
  opt.embedding->step();
  if (opt.proxies) opt.proxies->step();
  res.stepped = true;
  return res;
}

StepResult train_step_soft(Model& model, Optimizers& opt, const Tensor& inputs,
                           const std::vector<int>& labels, Rng& rng) {
  if (model.classifier() == nullptr) {
    throw ContractError("train_step_soft: model has no classifier");
  }
  StepResult res;
  Tape tape;
  TapeScope scope(tape);
  ForwardState st = forward_metric(model, inputs, labels, rng);
  if (!st.have_loss) return res;
  res.tuple_count = st.tuples.count();
  const auto& cfg = model.config();
  Tensor probs = model.classifier()->forward(st.features, /*training=*/true, rng);
  Tensor targets = target_matrix(labels, model.classifier()->n_classes(), cfg.smoothing);
  Tensor lc = mean_ce(probs, targets);
  res.metric_loss = st.metric_loss.value();
  res.classifier_loss = lc.value();
  res.lambda = cfg.lambda;
  Tensor total = add(st.metric_loss, mul_scalar(lc, cfg.lambda));
  tape.backward(total);
  opt.extractor->step();
  opt.embedding->step();
  opt.classifier->step();
  if (opt.proxies) opt.proxies->step();
  res.stepped = true;
  return res;
}

StepResult train_step_adversarial(Model& model, Optimizers& opt, const Tensor& inputs,
                                  const std::vector<int>& labels,
                                  const AdversarialSchedule& schedule, Rng& rng,
                                  bool run_classifier_phase) {
  if (model.classifier() == nullptr) {
    throw ContractError("train_step_adversarial: model has no classifier");
  }
  if (labels.empty()) throw ContractError("train_step_adversarial: empty batch");
  StepResult res;
  const double lambda = schedule.lambda;
  Tape tape;
  TapeScope scope(tape);
  ForwardState st = forward_metric(model, inputs, labels, rng);
  if (!st.have_loss) return res;
  res.tuple_count = st.tuples.count();

  // Classifier input routed through the reversal layer: one backward yields
  // d(R_adv)/d(theta_f, theta_m) and d(mean l_c)/d(theta_c) simultaneously.
  Tensor reversed = grad_reverse(st.features, lambda);
  Tensor probs = model.classifier()->forward(reversed, /*training=*/true, rng);
  Tensor targets = target_matrix(labels, model.classifier()->n_classes(), /*alpha=*/0.0);
  Tensor lc = mean_ce(probs, targets);
  Tensor total = add(st.metric_loss, lc);
  res.metric_loss = st.metric_loss.value();
  res.classifier_loss = lc.value();
  res.lambda = lambda;
  res.r_adv = adapt_adv_loss(res.metric_loss, res.classifier_loss, lambda);
  tape.backward(total);

  // Phase 1: feature extractor + embedding (+ proxies); theta_c untouched.
  opt.extractor->step();
  opt.embedding->step();
  if (opt.proxies) opt.proxies->step();
  // Phase 2: classifier alone; lambda scales its objective when positive,
  // otherwise it keeps minimizing the plain classification loss.
  if (run_classifier_phase) opt.classifier->step(lambda > 0.0 ? lambda : 1.0);
  res.stepped = true;
  return res;
}

double adversarial_objective(Model& model, const Tensor& inputs,
                             const std::vector<int>& labels, double lambda, Rng& rng) {
  if (model.classifier() == nullptr) {
    throw ContractError("adversarial_objective: model has no classifier");
  }
  // Evaluation only: no tape, dropout inactive.
  Tensor features = model.extractor().forward(inputs).features;
  Tensor embeddings = model.embedding().forward(features);
  Rng sample_rng(rng.next_u64());
  const auto& cfg = model.config();
  SampledTuples tuples = sample_for_loss(cfg.loss_enum(),
                                         to_feature_batch(embeddings, labels), cfg, sample_rng);
  Tensor lm = mean_tuple_loss(embeddings, loss_config(cfg), tuples.triplets.items,
                              tuples.ntuples, labels, model.proxies());
  Rng dropout_rng(0);
  Tensor probs = model.classifier()->forward(features, /*training=*/false, dropout_rng);
  Tensor targets = target_matrix(labels, model.classifier()->n_classes(), 0.0);
  Tensor lc = mean_ce(probs, targets);
  return adapt_adv_loss(lm.value(), lc.value(), lambda);
}

std::vector<std::vector<std::size_t>> balanced_batches(const std::vector<int>& labels,
                                                       std::size_t batch_size,
                                                       std::size_t per_class, Rng& rng) {
  if (per_class < 2) throw ParamError("balanced_batches: per_class must be >= 2");
  if (batch_size < 2 * per_class) {
    throw ParamError("balanced_batches: batch_size must fit at least two classes");
  }
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::vector<int> usable;
  std::size_t usable_total = 0;
  for (auto& [c, members] : groups) {
    if (members.size() >= 2) {
      usable.push_back(c);
      usable_total += members.size();
    }
  }
  if (usable.size() < 2) {
    throw ContractError("balanced_batches: need two classes with >= 2 samples each");
  }

  const std::size_t classes_per_batch =
      std::max<std::size_t>(2, std::min(usable.size(), batch_size / per_class));
  const std::size_t n_batches =
      (usable_total + classes_per_batch * per_class - 1) / (classes_per_batch * per_class);

  // Per-class shuffled queues, refilled when exhausted.
  std::map<int, std::vector<std::size_t>> queues;
  for (int c : usable) {
    queues[c] = groups[c];
    rng.shuffle(queues[c]);
  }
  std::vector<int> rotation = usable;
  rng.shuffle(rotation);
  std::size_t rot_pos = 0;

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<int> chosen;
    std::set<int> chosen_set;
    while (chosen.size() < std::min(classes_per_batch, usable.size())) {
      if (rot_pos == rotation.size()) {
        rng.shuffle(rotation);
        rot_pos = 0;
      }
      const int c = rotation[rot_pos++];
      if (chosen_set.insert(c).second) chosen.push_back(c);
    }
    std::vector<std::size_t> batch;
    for (int c : chosen) {
      const std::size_t want = std::min(per_class, groups[c].size());
      std::set<std::size_t> taken;
      while (taken.size() < want) {
        if (queues[c].empty()) {
          queues[c] = groups[c];
          rng.shuffle(queues[c]);
        }
        const std::size_t idx = queues[c].back();
        queues[c].pop_back();
        if (taken.insert(idx).second) batch.push_back(idx);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

EvalReport evaluate_split(const Model& model, const Dataset& data,
                          std::span<const std::size_t> indices, const std::string& split_id,
                          std::size_t epoch, const std::vector<std::size_t>& ks,
                          std::uint64_t eval_seed, std::span<const int> train_classes) {
  if (indices.size() < 2) throw ContractError("evaluate_split: need at least two points");
  std::set<int> present;
  std::vector<int> labels;
  std::vector<double> rows;
  rows.reserve(indices.size() * data.dim);
  for (std::size_t i : indices) {
    labels.push_back(data.labels[i]);
    present.insert(data.labels[i]);
    const double* r = data.row(i);
    rows.insert(rows.end(), r, r + data.dim);
  }
  if (!train_classes.empty()) {
    for (int c : train_classes) {
      if (present.count(c)) {
        throw ProtocolError("evaluate_split: class " + std::to_string(c) +
                            " appears in both train and eval splits");
      }
    }
  }
  const std::size_t n = indices.size();
  std::vector<double> embedded = model.embed_values(rows, n, data.dim);
  const std::size_t e_dim = model.config().embedding_dim;

  EvalReport report;
  report.split_id = split_id;
  report.epoch = epoch;
  report.n_queries = n;
  std::vector<std::size_t> usable_ks;
  for (std::size_t k : ks)
    if (k < n) usable_ks.push_back(k);
  if (usable_ks.empty()) throw ParamError("evaluate_split: every k exceeds the split size");
  report.recall_at = recall_at_k(embedded, n, e_dim, labels, usable_ks);
  Rng km_rng(eval_seed);
  const auto clustering = kmeans(embedded, n, e_dim, present.size(), km_rng);
  report.nmi = nmi(clustering.assignments, labels);
  report.knn_acc = knn_acc(embedded, n, e_dim, labels);
  return report;
}

TrainResult train(const ExperimentConfig& raw_cfg, const Dataset& data,
                  const std::string& out_dir) {
  ExperimentConfig cfg = raw_cfg;
  cfg.validate();
  data.validate();
  if (cfg.input_dim != 0 && cfg.input_dim != data.dim) {
    throw ConfigError("train: config input_dim " + std::to_string(cfg.input_dim) +
                      " != dataset dim " + std::to_string(data.dim));
  }
  cfg.input_dim = data.dim;

  const ZslSplit split = zsl_split(data, cfg.train_fraction);
  // Protocol assertion, independent of the split construction.
  {
    std::set<int> train_set(split.train_classes.begin(), split.train_classes.end());
    for (int c : split.test_classes) {
      if (train_set.count(c)) throw ProtocolError("train/test class sets overlap");
    }
  }

  // Seen-validation holdout: a per-class slice of the training samples kept
  // out of fitting, evaluated alongside the unseen test split.
  std::map<int, std::vector<std::size_t>> train_by_class;
  for (std::size_t i : split.train_indices) train_by_class[data.labels[i]].push_back(i);
  std::vector<std::size_t> fit_indices, val_indices;
  for (auto& [c, members] : train_by_class) {
    std::size_t hold = static_cast<std::size_t>(
        std::floor(static_cast<double>(members.size()) * cfg.val_fraction));
    if (members.size() < 4 || members.size() - hold < 2) hold = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < hold ? val_indices : fit_indices).push_back(members[i]);
    }
  }

  const AdversarialMode mode = cfg.mode_enum();
  auto model = std::make_unique<Model>(cfg, data.dim, split.train_classes.size());
  Optimizers opt = Optimizers::build(*model);
  Rng train_rng(derive_seed(cfg.seed, 0x7e41));

  AdversarialSchedule schedule;
  schedule.lambda0 = cfg.lambda0;
  schedule.loss_threshold = cfg.l_thresh;
  schedule.validate();
  // Before the first epoch the classification loss is unobserved; the
  // untrained-classifier level ln(C) stands in for it.
  schedule.update(std::log(static_cast<double>(split.train_classes.size())));

  std::vector<int> fit_labels;
  for (std::size_t i : fit_indices) fit_labels.push_back(data.labels[i]);

  TrainResult result;
  std::ostringstream train_log;
  train_log << "epoch,l_m";
  if (mode == AdversarialMode::kEnergy) train_log << ",l_ec";
  if (mode == AdversarialMode::kSoftAdv || mode == AdversarialMode::kAdaptAdv) {
    train_log << ",l_c,lambda";
  }
  train_log << '\n';
  std::ostringstream metrics_csv;
  metrics_csv << EvalReport::csv_header() << '\n';

  auto run_evals = [&](std::size_t epoch) {
    if (val_indices.size() >= 8) {
      EvalReport seen = evaluate_split(*model, data, val_indices, "seen", epoch, cfg.eval_ks,
                                       derive_seed(cfg.seed, 0xe5e0 + epoch));
      metrics_csv << seen.csv_row() << '\n';
      result.reports.push_back(std::move(seen));
    }
    EvalReport unseen =
        evaluate_split(*model, data, split.test_indices, "unseen", epoch, cfg.eval_ks,
                       derive_seed(cfg.seed, 0xe5f0 + epoch), split.train_classes);
    metrics_csv << unseen.csv_row() << '\n';
    result.reports.push_back(std::move(unseen));
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto batches = balanced_batches(fit_labels, cfg.batch_size, cfg.samples_per_class,
                                    train_rng);
    EpochLog log;
    log.epoch = epoch;
    double lm_sum = 0.0, lc_sum = 0.0, ec_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<double> rows;
      std::vector<int> labels;
      rows.reserve(batches[b].size() * data.dim);
      for (std::size_t local : batches[b]) {
        const std::size_t i = fit_indices[local];
        const double* r = data.row(i);
        rows.insert(rows.end(), r, r + data.dim);
        labels.push_back(data.labels[i]);
      }
      Tensor inputs({batches[b].size(), data.dim}, std::move(rows));
      StepResult step;
      try {
        switch (mode) {
          case AdversarialMode::kBase:
            step = minimize_metric(*model, opt, inputs, labels, train_rng);
            break;
          case AdversarialMode::kEnergy:
            step = minimize_metric(*model, opt, inputs, labels, train_rng, true);
            break;
          case AdversarialMode::kSoftAdv:
            step = train_step_soft(*model, opt, inputs, labels, train_rng);
            break;
          case AdversarialMode::kAdaptAdv:
            step = train_step_adversarial(*model, opt, inputs, labels, schedule, train_rng);
            break;
        }
      } catch (const DomainError& e) {
        throw DomainError("training diverged at epoch " + std::to_string(epoch) + " step " +
                          std::to_string(b + 1) + ": " + e.what());
      }
      if (!step.stepped) {
        ++log.skipped;
        continue;
      }
      ++log.steps;
      lm_sum += step.metric_loss;
      if (!std::isnan(step.classifier_loss)) lc_sum += step.classifier_loss;
      ec_sum += step.energy;
    }
    if (log.steps == 0) {
      throw ContractError("train: epoch " + std::to_string(epoch) +
                          " produced no usable tuples");
    }
    log.metric_loss = lm_sum / static_cast<double>(log.steps);
    log.classifier_loss = lc_sum / static_cast<double>(log.steps);
    log.energy = ec_sum / static_cast<double>(log.steps);
    log.lambda = schedule.lambda;

    train_log << log.epoch << ',' << fmt_double(log.metric_loss);
    if (mode == AdversarialMode::kEnergy) train_log << ',' << fmt_double(log.energy);
    if (mode == AdversarialMode::kSoftAdv) {
      train_log << ',' << fmt_double(log.classifier_loss) << ',' << fmt_double(cfg.lambda);
      log.lambda = cfg.lambda;
    } else if (mode == AdversarialMode::kAdaptAdv) {
      train_log << ',' << fmt_double(log.classifier_loss) << ',' << fmt_double(log.lambda);
    }
    train_log << '\n';
    result.epochs.push_back(log);

    // Eq 25 refresh from the epoch-mean classification loss.
    if (mode == AdversarialMode::kAdaptAdv) schedule.update(log.classifier_loss);

    const bool last = epoch == cfg.epochs;
    if ((cfg.eval_every != 0 && epoch % cfg.eval_every == 0) || last) run_evals(epoch);
  }

  result.train_log_csv = train_log.str();
  result.metrics_csv = metrics_csv.str();
  result.model = std::move(model);

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir);
    auto write_file = [&](const std::string& name, const std::string& text) {
      std::ofstream f(out_dir + "/" + name, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot write " + out_dir + "/" + name);
      f << text;
    };
    write_file("config.toml", cfg.serialize());
    write_file("train_log.csv", result.train_log_csv);
    write_file("metrics.csv", result.metrics_csv);
    for (auto it = result.reports.rbegin(); it != result.reports.rend(); ++it) {
      if (it->epoch == cfg.epochs) {
        write_file("report_" + it->split_id + ".json", it->to_json() + "\n");
      }
    }
    save_model(*result.model, out_dir + "/model.bin");
  }
  return result;
}

}  // namespace zslmetric
