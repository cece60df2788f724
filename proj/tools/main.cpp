#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "zslmetric/selftest.hpp"
#include "zslmetric/train.hpp"

namespace {

using namespace zslmetric;

// --data synth | idx:<images>,<labels>
Dataset load_data(const std::string& spec, const ExperimentConfig& cfg) {
  if (spec == "synth") {
    Rng rng(derive_seed(cfg.seed, 0xda7a));
    return synth_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.synth_noise, rng);
  }
  if (spec.rfind("idx:", 0) == 0) {
    const std::string rest = spec.substr(4);
    const std::size_t comma = rest.find(',');
    if (comma == std::string::npos) {
      throw ConfigError("--data idx: expects idx:<images>,<labels>");
    }
    return load_idx(rest.substr(0, comma), rest.substr(comma + 1));
  }
  throw ConfigError("--data must be 'synth' or 'idx:<images>,<labels>'");
}

std::vector<double> read_vector_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input vector file " + path);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  if (out.empty()) throw FormatError(path + ": no numbers found");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Deep metric learning with attention-fused features and a class-adversarial classifier"};
  app.require_subcommand(1);

  std::string config_path, data_spec = "synth", out_dir = "run";
  std::string mode_flag, loss_flag;
  std::int64_t seed_flag = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (TOML key = value)");
    cmd->add_option("--data", data_spec, "synth | idx:<images>,<labels>");
    cmd->add_option("--seed", seed_flag, "override config seed");
  };

  auto* cmd_train = app.add_subcommand("train", "train a model and write logs + checkpoint");
  add_common(cmd_train);
  cmd_train->add_option("--mode", mode_flag, "base | energy | soft_adv | adapt_adv");
  cmd_train->add_option("--loss", loss_flag, "contrastive | triplet | npair | angular | proxy_nca");
  cmd_train->add_option("--out", out_dir, "output directory");

  std::string model_path, ks_flag = "1,2,4,8";
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(cmd_eval);
  cmd_eval->add_option("--model", model_path, "checkpoint path")->required();
  cmd_eval->add_option("--ks", ks_flag, "comma-separated recall cutoffs");

  auto* cmd_grid = app.add_subcommand("grid", "sweep lambda0 over {0.1, 0.5, 1}");
  add_common(cmd_grid);
  std::string seeds_flag = "1,2,3";
  cmd_grid->add_option("--loss", loss_flag, "metric loss");
  cmd_grid->add_option("--seeds", seeds_flag, "comma-separated seeds");
  cmd_grid->add_option("--out", out_dir, "output directory");

  std::string input_path;
  auto* cmd_attn = app.add_subcommand("export-attn", "write attention heatmaps for one input");
  cmd_attn->add_option("--model", model_path, "checkpoint path")->required();
  cmd_attn->add_option("--input", input_path, "whitespace-separated input vector file")->required();
  cmd_attn->add_option("--out", out_dir, "output directory");

  auto* cmd_selftest = app.add_subcommand("selftest", "run the gradient and oracle suites");
  (void)cmd_selftest;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = load_config_file(config_path);
  apply_env_overrides(cfg);
  if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
  if (!mode_flag.empty()) cfg.mode = mode_flag;
  if (!loss_flag.empty()) cfg.loss = loss_flag;
  cfg.validate();

  if (app.got_subcommand(cmd_train)) {
    Dataset data = load_data(data_spec, cfg);
    TrainResult result = train(cfg, data, out_dir);
    const EvalReport& final_unseen = result.reports.back();
    std::cout << "done: " << out_dir << "/model.bin\n"
              << "final " << final_unseen.split_id << " r@1="
              << (final_unseen.recall_at.count(1) ? final_unseen.recall_at.at(1) : 0.0)
              << " nmi=" << final_unseen.nmi << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_eval)) {
    LoadedModel loaded = load_model(model_path);
    Dataset data = load_data(data_spec, loaded.config);
    std::vector<std::size_t> ks;
    {
      std::istringstream in(ks_flag);
      std::string part;
      while (std::getline(in, part, ',')) ks.push_back(std::stoull(part));
    }
    const ZslSplit split = zsl_split(data, loaded.config.train_fraction);
    EvalReport report = evaluate_split(*loaded.model, data, split.test_indices, "unseen",
                                       loaded.config.epochs, ks,
                                       derive_seed(loaded.config.seed, 0xeea1),
                                       split.train_classes);
    std::cout << report.to_json() << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_grid)) {
    cfg.mode = "adapt_adv";
    std::vector<std::uint64_t> seeds;
    {
      std::istringstream in(seeds_flag);
      std::string part;
      while (std::getline(in, part, ',')) seeds.push_back(std::stoull(part));
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream grid_csv(out_dir + "/grid.csv", std::ios::trunc);
    if (!grid_csv) throw IoError("cannot write " + out_dir + "/grid.csv");
    grid_csv << "lambda0,seed," << EvalReport::csv_header() << "\n";
    for (double lambda0 : {0.1, 0.5, 1.0}) {
      for (std::uint64_t seed : seeds) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.lambda0 = lambda0;
        run_cfg.seed = seed;
        Dataset data = load_data(data_spec, run_cfg);
        TrainResult result = train(run_cfg, data);
        const EvalReport& unseen = result.reports.back();
        grid_csv << lambda0 << ',' << seed << ',' << unseen.csv_row() << "\n";
        std::cout << "lambda0=" << lambda0 << " seed=" << seed
                  << " unseen r@1=" << unseen.recall_at.at(1) << "\n";
      }
    }
    std::cout << "wrote " << out_dir << "/grid.csv\n";
    return 0;
  }

  if (app.got_subcommand(cmd_attn)) {
    LoadedModel loaded = load_model(model_path);
    std::vector<double> input = read_vector_file(input_path);
    if (input.size() != loaded.input_dim) {
      throw ConfigError("input vector has " + std::to_string(input.size()) +
                        " values, model expects " + std::to_string(loaded.input_dim));
    }
    std::filesystem::create_directories(out_dir);
    Tensor x({input.size()}, input);
    auto grids = loaded.model->extractor().attention_weights(x);
    const auto& stages = loaded.model->config().stages;
    for (std::size_t s = 0; s < grids.size(); ++s) {
      export_attention(grids[s], stages[s].rows, stages[s].cols,
                       out_dir + "/attn_stage" + std::to_string(s));
    }
    std::cout << "wrote " << grids.size() << " heatmap pairs under " << out_dir << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_selftest)) {
    const int failures = run_selftest(std::cout);
    std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures == 0 ? 0 : 2;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParamError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
