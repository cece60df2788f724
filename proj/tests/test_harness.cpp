#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "zslmetric/selftest.hpp"
#include "zslmetric/train.hpp"

using namespace zslmetric;

namespace {

namespace fs = std::filesystem;

std::string temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("zslm_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

ExperimentConfig smoke_config() {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.samples_per_class = 2;
  cfg.synth_classes = 6;
  cfg.synth_per_class = 8;
  cfg.synth_noise = 0.3;
  cfg.stages = {{4, 2, 1}};
  cfg.hidden_dim = 8;
  cfg.embedding_dim = 8;
  cfg.eval_every = 0;
  cfg.val_fraction = 0.0;
  return cfg;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("zsl split: protocol and partition") {
  Dataset d;
  d.n = 400;
  d.dim = 1;
  d.samples.assign(400, 0.0);
  for (int i = 0; i < 400; ++i) d.labels.push_back(i / 2);  // 200 classes x 2
  auto split = zsl_split(d, 0.5);
  CHECK(split.train_classes.size() == 100);
  CHECK(split.test_classes.size() == 100);
  CHECK(split.train_classes.front() == 0);
  CHECK(split.train_classes.back() == 99);
  CHECK(split.test_classes.front() == 100);
  CHECK(split.test_classes.back() == 199);

  // index lists partition [0, n)
  std::set<std::size_t> all;
  for (std::size_t i : split.train_indices) all.insert(i);
  for (std::size_t i : split.test_indices) CHECK(all.insert(i).second);
  CHECK(all.size() == 400);

  Dataset two;
  two.n = 4;
  two.dim = 1;
  two.samples.assign(4, 0.0);
  two.labels = {0, 0, 1, 1};
  auto s2 = zsl_split(two, 0.5);
  CHECK(s2.train_classes.size() == 1);
  CHECK(s2.test_classes.size() == 1);

  CHECK_THROWS_AS(zsl_split(two, 0.0), ProtocolError);
  CHECK_THROWS_AS(zsl_split(two, 1.0), ProtocolError);
}

TEST_CASE("synthetic dataset construction") {
  Rng rng(3);
  CHECK_THROWS_AS(synth_dataset(1, 5, 0.1, rng), ParamError);
  CHECK_THROWS_AS(synth_dataset(5, 1, 0.1, rng), ParamError);

  // noise 0: identical samples within a class
  Rng zero_rng(11);
  Dataset clean = synth_dataset(4, 3, 0.0, zero_rng);
  clean.validate();
  for (std::size_t c = 0; c < 4; ++c) {
    const double* first = clean.row(c * 3);
    for (std::size_t s = 1; s < 3; ++s) {
      const double* other = clean.row(c * 3 + s);
      for (std::size_t d = 0; d < clean.dim; ++d) CHECK(first[d] == other[d]);
    }
  }
  // prototypes pairwise distinct
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      double dist = 0.0;
      for (std::size_t d = 0; d < clean.dim; ++d) {
        const double diff = clean.row(a * 3)[d] - clean.row(b * 3)[d];
        dist += diff * diff;
      }
      CHECK(dist > 0.0);
    }
  }

  // with default-scale noise, raw-input 1-NN sits strictly between chance and 1
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    Rng r(seed);
    Dataset data = synth_dataset(10, 20, 0.4, r);
    auto recall = recall_at_k(data.samples, data.n, data.dim, data.labels, {1});
    CHECK(recall[1] > 0.1);  // better than the class prior
    CHECK(recall[1] < 1.0);  // but not perfectly separable
  }
}

TEST_CASE("idx loader round-trips a hand-built fixture") {
  const std::string dir = temp_dir("idx");
  std::vector<unsigned char> img;
  push_be32(img, 0x00000803u);
  push_be32(img, 4);  // count
  push_be32(img, 2);  // rows
  push_be32(img, 3);  // cols
  for (int i = 0; i < 4 * 6; ++i) img.push_back(static_cast<unsigned char>(i * 4 + 3));
  write_bytes(dir + "/img.idx", img);

  std::vector<unsigned char> lbl;
  push_be32(lbl, 0x00000801u);
  push_be32(lbl, 4);
  for (unsigned char y : {5, 9, 9, 5}) lbl.push_back(y);
  write_bytes(dir + "/lbl.idx", lbl);

  Dataset d = load_idx(dir + "/img.idx", dir + "/lbl.idx");
  CHECK(d.n == 4);
  CHECK(d.dim == 6);
  for (int i = 0; i < 24; ++i) {
    CHECK(d.samples[i] == static_cast<double>(i * 4 + 3) / 255.0);
  }
  // sparse original ids remapped to dense ids, originals kept as names
  CHECK(d.labels == std::vector<int>{0, 1, 1, 0});
  REQUIRE(d.class_names.size() == 2);
  CHECK(d.class_names[0] == "5");
  CHECK(d.class_names[1] == "9");

  // truncated image payload
  std::vector<unsigned char> cut(img.begin(), img.end() - 5);
  write_bytes(dir + "/cut.idx", cut);
  CHECK_THROWS_AS(load_idx(dir + "/cut.idx", dir + "/lbl.idx"), FormatError);

  // count mismatch
  std::vector<unsigned char> extra = lbl;
  extra[7] = 5;  // count = 5
  extra.push_back(1);
  write_bytes(dir + "/extra.idx", extra);
  CHECK_THROWS_AS(load_idx(dir + "/img.idx", dir + "/extra.idx"), FormatError);

  // wrong magic
  std::vector<unsigned char> bad = img;
  bad[3] = 0x01;
  write_bytes(dir + "/bad.idx", bad);
  CHECK_THROWS_AS(load_idx(dir + "/bad.idx", dir + "/lbl.idx"), FormatError);
}

TEST_CASE("config defaults, round-trip, and errors") {
  ExperimentConfig cfg;
  // reference hyperparameters
  CHECK(cfg.backbone_lr == 1e-4);
  CHECK(cfg.embedding_lr == 1e-3);
  CHECK(cfg.margin == 0.01);
  CHECK(cfg.angle_deg == 45.0);
  CHECK(cfg.smoothing == 0.15);
  CHECK(cfg.dropout == 0.1);
  CHECK(cfg.l_thresh == 1.5);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.embedding_dim == 64);
  CHECK(cfg.embedding_lr == doctest::Approx(10.0 * cfg.backbone_lr));

  ExperimentConfig parsed = parse_config(cfg.serialize());
  CHECK(parsed.serialize() == cfg.serialize());
  CHECK(config_hash(parsed) == config_hash(cfg));

  ExperimentConfig from_text = parse_config(
      "# comment\n"
      "seed = 42\n"
      "stages = \"6x3x2,4x1x1\"\n"
      "loss = \"angular\"\n"
      "mode = \"soft_adv\"\n"
      "lambda = 0.1\n");
  CHECK(from_text.seed == 42);
  REQUIRE(from_text.stages.size() == 2);
  CHECK(from_text.stages[0].channels == 6);
  CHECK(from_text.stages[0].rows == 3);
  CHECK(from_text.stages[0].cols == 2);
  CHECK(from_text.loss == "angular");

  CHECK_THROWS_AS(parse_config("unknown_key = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("margin = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("stages = \"4x2\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dropout = 1.5\n"), ConfigError);

  // environment override
  setenv("ZSLMETRIC_SEED", "20209", 1);
  ExperimentConfig env_cfg;
  apply_env_overrides(env_cfg);
  unsetenv("ZSLMETRIC_SEED");
  CHECK(env_cfg.seed == 20209);
}

TEST_CASE("balanced batches contain at least two samples per included class") {
  Rng rng(5);
  std::vector<int> labels;
  for (int c = 0; c < 7; ++c)
    for (int s = 0; s < 10; ++s) labels.push_back(c);
  labels.push_back(7);  // a singleton class cannot contribute positives

  auto batches = balanced_batches(labels, 12, 3, rng);
  CHECK(!batches.empty());
  for (const auto& batch : batches) {
    std::map<int, std::size_t> counts;
    std::set<std::size_t> unique(batch.begin(), batch.end());
    CHECK(unique.size() == batch.size());  // no duplicate rows in a batch
    for (std::size_t i : batch) {
      REQUIRE(i < labels.size());
      ++counts[labels[i]];
      CHECK(labels[i] != 7);
    }
    for (const auto& [c, cnt] : counts) CHECK(cnt >= 2);
  }
  // the epoch covers roughly every usable sample
  std::size_t covered = 0;
  for (const auto& b : batches) covered += b.size();
  CHECK(covered >= 70);
}

TEST_CASE("checkpoint round-trip is byte-identical and metric-preserving") {
  const std::string dir = temp_dir("ckpt");
  ExperimentConfig cfg = smoke_config();
  Rng data_rng(derive_seed(cfg.seed, 0xda7a));
  Dataset data = synth_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.synth_noise,
                               data_rng);
  TrainResult run = train(cfg, data, dir);

  const std::string p1 = dir + "/model.bin";
  LoadedModel loaded = load_model(p1);
  const std::string p2 = dir + "/model2.bin";
  save_model(*loaded.model, p2);
  CHECK(slurp(p1) == slurp(p2));

  // bit-identical evaluation before and after the round trip
  auto split = zsl_split(data, cfg.train_fraction);
  EvalReport a = evaluate_split(*run.model, data, split.test_indices, "unseen", 0,
                                cfg.eval_ks, 4242, split.train_classes);
  EvalReport b = evaluate_split(*loaded.model, data, split.test_indices, "unseen", 0,
                                cfg.eval_ks, 4242, split.train_classes);
  CHECK(a.csv_row() == b.csv_row());

  // truncated payload is rejected
  std::string bytes = slurp(p1);
  {
    std::ofstream cut(dir + "/cut.bin", std::ios::binary | std::ios::trunc);
    cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
  }
  CHECK_THROWS_AS(load_model(dir + "/cut.bin"), FormatError);

  // a different expected config is an incompatible checkpoint
  ExperimentConfig other = cfg;
  other.margin = 0.5;
  CHECK_THROWS_AS(load_model(p1, &other), CheckpointError);
}

TEST_CASE("training is deterministic and logs by mode") {
  ExperimentConfig cfg = smoke_config();

  // base mode: no lambda column
  Rng r1(derive_seed(cfg.seed, 0xda7a));
  Dataset data = synth_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.synth_noise, r1);
  TrainResult base_run = train(cfg, data);
  auto base_rows = parse_csv(base_run.train_log_csv);
  REQUIRE(!base_rows.empty());
  CHECK(base_rows[0] == std::vector<std::string>{"epoch", "l_m"});

  TrainResult again = train(cfg, data);
  CHECK(again.train_log_csv == base_run.train_log_csv);
  CHECK(again.metrics_csv == base_run.metrics_csv);

  // adaptive mode: lambda column present and the Eq-25 replay holds exactly
  ExperimentConfig adv = cfg;
  adv.mode = "adapt_adv";
  adv.lambda0 = 0.5;
  adv.epochs = 4;
  TrainResult adv_run = train(adv, data);
  auto rows = parse_csv(adv_run.train_log_csv);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == std::vector<std::string>{"epoch", "l_m", "l_c", "lambda"});
  const std::size_t n_train_classes = 3;
  double prev_lc = std::log(static_cast<double>(n_train_classes));
  for (std::size_t e = 1; e < rows.size(); ++e) {
    const double logged_lambda = std::stod(rows[e][3]);
    CHECK(logged_lambda == lambda_schedule(prev_lc, adv.l_thresh, adv.lambda0));
    prev_lc = std::stod(rows[e][2]);
  }

  // soft mode: fixed lambda in every row
  ExperimentConfig soft = cfg;
  soft.mode = "soft_adv";
  soft.lambda = 0.1;
  TrainResult soft_run = train(soft, data);
  auto soft_rows = parse_csv(soft_run.train_log_csv);
  for (std::size_t e = 1; e < soft_rows.size(); ++e) {
    CHECK(std::stod(soft_rows[e][3]) == 0.1);
  }

  // energy mode: confusion column
  ExperimentConfig energy = cfg;
  energy.mode = "energy";
  TrainResult energy_run = train(energy, data);
  auto energy_rows = parse_csv(energy_run.train_log_csv);
  CHECK(energy_rows[0] == std::vector<std::string>{"epoch", "l_m", "l_ec"});
}

TEST_CASE("metrics csv rows carry both splits when validation exists") {
  ExperimentConfig cfg = smoke_config();
  cfg.val_fraction = 0.25;
  cfg.synth_per_class = 12;
  Rng r(derive_seed(cfg.seed, 0xda7a));
  Dataset data = synth_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.synth_noise, r);
  TrainResult run = train(cfg, data);
  auto rows = parse_csv(run.metrics_csv);
  REQUIRE(rows.size() >= 3);
  CHECK(rows[0][0] == "split_id");
  std::set<std::string> splits;
  for (std::size_t i = 1; i < rows.size(); ++i) splits.insert(rows[i][0]);
  CHECK(splits == std::set<std::string>{"seen", "unseen"});
  // report invariants: every metric in [0,1], monotone recall over k
  for (const auto& rep : run.reports) {
    CHECK(rep.nmi >= 0.0);
    CHECK(rep.nmi <= 1.0);
    CHECK(rep.knn_acc >= 0.0);
    CHECK(rep.knn_acc <= 1.0);
    double prev = 0.0;
    for (const auto& [k, v] : rep.recall_at) {
      CHECK(v >= prev);
      CHECK(v <= 1.0);
      prev = v;
    }
  }
}

TEST_CASE("untrained model scores near chance on unstructured data") {
  // noise far above the prototype amplitude drowns the class signal, so an
  // untrained embedding cannot beat the class prior by much
  double total = 0.0;
  int runs = 0;
  for (std::uint64_t seed : {11, 12, 13, 14, 15}) {
    Rng rng(seed);
    Dataset data = synth_dataset(5, 20, 25.0, rng);
    ExperimentConfig cfg = smoke_config();
    cfg.synth_classes = 5;
    Model model(cfg, data.dim, 5);
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < data.n; ++i) all.push_back(i);
    EvalReport rep = evaluate_split(model, data, all, "probe", 0, {1}, seed);
    total += rep.recall_at.at(1);
    ++runs;
  }
  const double chance = 1.0 / 5.0;
  CHECK(std::abs(total / runs - chance) <= 0.1);
}

TEST_CASE("library selftest passes") {
  std::ostringstream sink;
  CHECK(run_selftest(sink) == 0);
}
