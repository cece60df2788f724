#include "zslmetric/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "zslmetric/errors.hpp"

namespace zslmetric {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

std::string stages_to_string(const std::vector<StageShape>& stages) {
  std::ostringstream os;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) os << ',';
    os << stages[i].channels << 'x' << stages[i].rows << 'x' << stages[i].cols;
  }
  return os.str();
}

std::vector<StageShape> stages_from_string(const std::string& text) {
  std::vector<StageShape> out;
  for (const auto& part : split_list(text, ',')) {
    auto dims = split_list(part, 'x');
    if (dims.size() != 3) {
      throw ConfigError("config: stage '" + part + "' must be CxHxV");
    }
    StageShape s;
    s.channels = parse_u64("stages", dims[0]);
    s.rows = parse_u64("stages", dims[1]);
    s.cols = parse_u64("stages", dims[2]);
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("config: stages must list at least one CxHxV triple");
  return out;
}

void ExperimentConfig::validate() const {
  if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
  if (samples_per_class < 2) throw ConfigError("config: samples_per_class must be >= 2");
  if (backbone_lr <= 0 || embedding_lr <= 0 || classifier_lr <= 0 || proxy_lr <= 0) {
    throw ConfigError("config: learning rates must be positive");
  }
  if (margin <= 0) throw ConfigError("config: margin must be positive");
  if (contrastive_q <= 0) throw ConfigError("config: contrastive_q must be positive");
  if (angle_deg <= 0 || angle_deg >= 90) throw ConfigError("config: angle_deg in (0,90)");
  if (smoothing < 0 || smoothing >= 1) throw ConfigError("config: smoothing in [0,1)");
  if (dropout < 0 || dropout >= 1) throw ConfigError("config: dropout in [0,1)");
  if (train_fraction <= 0 || train_fraction >= 1) {
    throw ConfigError("config: train_fraction in (0,1)");
  }
  if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("config: val_fraction in [0,1)");
  if (epochs == 0) throw ConfigError("config: epochs must be positive");
  if (embedding_dim == 0) throw ConfigError("config: embedding_dim must be positive");
  if (hidden_dim == 0) throw ConfigError("config: hidden_dim must be positive");
  if (eval_ks.empty()) throw ConfigError("config: eval_ks must be nonempty");
  if (lambda0 <= 0 || lambda0 > 1) throw ConfigError("config: lambda0 in (0,1]");
  if (lambda < 0) throw ConfigError("config: lambda must be nonnegative");
  if (synth_classes < 2 || synth_per_class < 2) {
    throw ConfigError("config: synthetic source needs >=2 classes and >=2 per class");
  }
  mode_from_name(mode);
  metric_loss_from_name(loss);
  activation_from_name(activation);
  attention_kind_from_name(attention);
  activation_from_name(attention_sigma);
  if (multidim_axis != "feature" && multidim_axis != "location") {
    throw ConfigError("config: multidim_axis must be 'feature' or 'location'");
  }
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os << "seed = " << seed << '\n';
  os << "epochs = " << epochs << '\n';
  os << "batch_size = " << batch_size << '\n';
  os << "samples_per_class = " << samples_per_class << '\n';
  os << "train_fraction = " << fmt_double(train_fraction) << '\n';
  os << "val_fraction = " << fmt_double(val_fraction) << '\n';
  os << "eval_every = " << eval_every << '\n';
  os << "eval_ks = \"";
  for (std::size_t i = 0; i < eval_ks.size(); ++i) os << (i ? "," : "") << eval_ks[i];
  os << "\"\n";
  os << "synth_classes = " << synth_classes << '\n';
  os << "synth_per_class = " << synth_per_class << '\n';
  os << "synth_noise = " << fmt_double(synth_noise) << '\n';
  os << "input_dim = " << input_dim << '\n';
  os << "stages = \"" << stages_to_string(stages) << "\"\n";
  os << "hidden_dim = " << hidden_dim << '\n';
  os << "activation = \"" << activation << "\"\n";
  os << "attention = \"" << attention << "\"\n";
  os << "attention_sigma = \"" << attention_sigma << "\"\n";
  os << "multidim_axis = \"" << multidim_axis << "\"\n";
  os << "include_u = " << (include_u ? "true" : "false") << '\n';
  os << "embedding_dim = " << embedding_dim << '\n';
  os << "normalize_embedding = " << (normalize_embedding ? "true" : "false") << '\n';
  os << "loss = \"" << loss << "\"\n";
  os << "margin = " << fmt_double(margin) << '\n';
  os << "contrastive_q = " << fmt_double(contrastive_q) << '\n';
  os << "angle_deg = " << fmt_double(angle_deg) << '\n';
  os << "easy_per_anchor = " << easy_per_anchor << '\n';
  os << "mode = \"" << mode << "\"\n";
  os << "lambda = " << fmt_double(lambda) << '\n';
  os << "lambda0 = " << fmt_double(lambda0) << '\n';
  os << "l_thresh = " << fmt_double(l_thresh) << '\n';
  os << "smoothing = " << fmt_double(smoothing) << '\n';
  os << "dropout = " << fmt_double(dropout) << '\n';
  os << "classifier_hidden = " << classifier_hidden << '\n';
  os << "backbone_lr = " << fmt_double(backbone_lr) << '\n';
  os << "embedding_lr = " << fmt_double(embedding_lr) << '\n';
  os << "classifier_lr = " << fmt_double(classifier_lr) << '\n';
  os << "proxy_lr = " << fmt_double(proxy_lr) << '\n';
  return os.str();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') continue;  // section headers carry no data
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    // strip trailing comment on unquoted values
    if (!value.empty() && value[0] != '"' && value[0] != '\'') {
      const std::size_t hash = value.find('#');
      if (hash != std::string::npos) value = trim(value.substr(0, hash));
    }
    value = unquote(value);

    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "epochs") cfg.epochs = parse_u64(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_u64(key, value);
    else if (key == "samples_per_class") cfg.samples_per_class = parse_u64(key, value);
    else if (key == "train_fraction") cfg.train_fraction = parse_double(key, value);
    else if (key == "val_fraction") cfg.val_fraction = parse_double(key, value);
    else if (key == "eval_every") cfg.eval_every = parse_u64(key, value);
    else if (key == "eval_ks") {
      cfg.eval_ks.clear();
      for (const auto& part : split_list(value, ',')) cfg.eval_ks.push_back(parse_u64(key, part));
    }
    else if (key == "synth_classes") cfg.synth_classes = parse_u64(key, value);
    else if (key == "synth_per_class") cfg.synth_per_class = parse_u64(key, value);
    else if (key == "synth_noise") cfg.synth_noise = parse_double(key, value);
    else if (key == "input_dim") cfg.input_dim = parse_u64(key, value);
    else if (key == "stages") cfg.stages = stages_from_string(value);
    else if (key == "hidden_dim") cfg.hidden_dim = parse_u64(key, value);
    else if (key == "activation") cfg.activation = value;
    else if (key == "attention") cfg.attention = value;
    else if (key == "attention_sigma") cfg.attention_sigma = value;
    else if (key == "multidim_axis") cfg.multidim_axis = value;
    else if (key == "include_u") cfg.include_u = parse_bool(key, value);
    else if (key == "embedding_dim") cfg.embedding_dim = parse_u64(key, value);
    else if (key == "normalize_embedding") cfg.normalize_embedding = parse_bool(key, value);
    else if (key == "loss") cfg.loss = value;
    else if (key == "margin") cfg.margin = parse_double(key, value);
    else if (key == "contrastive_q") cfg.contrastive_q = parse_double(key, value);
    else if (key == "angle_deg") cfg.angle_deg = parse_double(key, value);
    else if (key == "easy_per_anchor") cfg.easy_per_anchor = parse_u64(key, value);
    else if (key == "mode") cfg.mode = value;
    else if (key == "lambda") cfg.lambda = parse_double(key, value);
    else if (key == "lambda0") cfg.lambda0 = parse_double(key, value);
    else if (key == "l_thresh") cfg.l_thresh = parse_double(key, value);
    else if (key == "smoothing") cfg.smoothing = parse_double(key, value);
    else if (key == "dropout") cfg.dropout = parse_double(key, value);
    else if (key == "classifier_hidden") cfg.classifier_hidden = parse_u64(key, value);
    else if (key == "backbone_lr") cfg.backbone_lr = parse_double(key, value);
    else if (key == "embedding_lr") cfg.embedding_lr = parse_double(key, value);
    else if (key == "classifier_lr") cfg.classifier_lr = parse_double(key, value);
    else if (key == "proxy_lr") cfg.proxy_lr = parse_double(key, value);
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* env = std::getenv("ZSLMETRIC_SEED")) {
    cfg.seed = parse_u64("ZSLMETRIC_SEED", env);
  }
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string text = cfg.serialize();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace zslmetric
