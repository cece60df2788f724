#include "zslmetric/extractor.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace zslmetric {

Activation activation_from_name(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

Tensor apply_activation(Activation a, const Tensor& x) {
  switch (a) {
    case Activation::kIdentity: return mul_scalar(x, 1.0);
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  throw ConfigError("bad activation enum");
}

AttentionKind attention_kind_from_name(const std::string& name) {
  if (name == "multiplicative") return AttentionKind::kMultiplicative;
  if (name == "multiplicative_simple") return AttentionKind::kMultiplicativeSimple;
  if (name == "additive") return AttentionKind::kAdditive;
  if (name == "additive_simple") return AttentionKind::kAdditiveSimple;
  if (name == "multidim") return AttentionKind::kMultiDim;
  throw ConfigError("unknown attention kind '" + name + "'");
}

std::string attention_kind_name(AttentionKind k) {
  switch (k) {
    case AttentionKind::kMultiplicative: return "multiplicative";
    case AttentionKind::kMultiplicativeSimple: return "multiplicative_simple";
    case AttentionKind::kAdditive: return "additive";
    case AttentionKind::kAdditiveSimple: return "additive_simple";
    case AttentionKind::kMultiDim: return "multidim";
  }
  return "?";
}

void BackboneConfig::validate() const {
  if (input_dim == 0) throw ConfigError("backbone: input_dim must be positive");
  if (stages.empty()) throw ConfigError("backbone: at least one stage required");
  if (hidden_dim == 0) throw ConfigError("backbone: hidden_dim must be positive");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.channels == 0 || s.rows == 0 || s.cols == 0) {
      throw ConfigError("backbone: stage " + std::to_string(i) + " has a zero extent");
    }
  }
}

void AttentionParams::validate(std::size_t channels, std::size_t hidden_dim) const {
  auto expect = [&](bool cond, const char* what) {
    if (!cond) {
      throw ConfigError(std::string("attention params for kind '") +
                        attention_kind_name(kind) + "': " + what);
    }
  };
  expect(w1.defined() && w1.ndim() == 2 && w1.shape()[0] == hidden_dim &&
             w1.shape()[1] == channels,
         "W1 must be (l, C)");
  const bool needs_w2 =
      kind == AttentionKind::kMultiplicative || kind == AttentionKind::kAdditive;
  const bool needs_w =
      kind == AttentionKind::kAdditive || kind == AttentionKind::kAdditiveSimple;
  const bool needs_wmd = kind == AttentionKind::kMultiDim;
  expect(w2.has_value() == needs_w2, "W2 presence must match the kind");
  expect(w.has_value() == needs_w, "w presence must match the kind");
  expect(wmd.has_value() == needs_wmd, "Wmd presence must match the kind");
  if (w2) {
    expect(w2->ndim() == 2 && w2->shape()[0] == hidden_dim && w2->shape()[1] == hidden_dim,
           "W2 must be (l, l)");
  }
  if (w) expect(w->ndim() == 1 && w->shape()[0] == hidden_dim, "w must be (l)");
  if (wmd) {
    expect(wmd->ndim() == 2 && wmd->shape()[0] == hidden_dim && wmd->shape()[1] == channels,
           "Wmd must be (l, C)");
  }
}

Tensor attention_scores(const StageOutput& stage, const Tensor& u,
                        const AttentionParams& params) {
  const Tensor& q = stage.map;  // (HV, C)
  if (q.ndim() != 2) throw ConfigError("attention_scores: stage map must be 2-D");
  const std::size_t hidden = u.shape()[0];
  params.validate(q.shape()[1], hidden);
  // (HV, l): W1 q_j for every location at once.
  Tensor projected = matmul(q, transpose(params.w1));
  switch (params.kind) {
    case AttentionKind::kMultiplicative:
      return matmul(projected, matmul(*params.w2, u));
    case AttentionKind::kMultiplicativeSimple:
      return matmul(projected, u);
    case AttentionKind::kAdditive: {
      Tensor z = apply_activation(params.sigma,
                                  add_rowwise(projected, matmul(*params.w2, u)));
      return matmul(z, *params.w);
    }
    case AttentionKind::kAdditiveSimple: {
      Tensor z = apply_activation(params.sigma, add_rowwise(projected, u));
      return matmul(z, *params.w);
    }
    case AttentionKind::kMultiDim: {
      Tensor z = apply_activation(params.sigma, add_rowwise(projected, u));
      return matmul(z, *params.wmd);  // (HV, C)
    }
  }
  throw ConfigError("bad attention kind enum");
}

Tensor normalize_scores(const Tensor& scores, MultiDimAxis axis) {
  if (scores.ndim() == 1) return softmax(scores, 0);
  if (scores.ndim() == 2) {
    return softmax(scores, axis == MultiDimAxis::kFeature ? 1 : 0);
  }
  throw ConfigError("normalize_scores: expects 1-D or 2-D scores");
}

Tensor attend_pool(const StageOutput& stage, const Tensor& weights) {
  if (weights.ndim() == 1) {
    if (weights.shape()[0] != stage.map.shape()[0]) {
      throw ShapeError("attend_pool: weight count " + shape_str(weights.shape()) +
                       " does not match locations " + shape_str(stage.map.shape()));
    }
    return matmul(weights, stage.map);  // (C)
  }
  if (weights.shape() != stage.map.shape()) {
    throw ShapeError("attend_pool: multidim weights " + shape_str(weights.shape()) +
                     " do not match map " + shape_str(stage.map.shape()));
  }
  return sum_axis(mul(weights, stage.map), 0);  // (C)
}

Tensor fuse(std::span<const Tensor> attended, const Tensor& u, bool include_u) {
  if (attended.empty()) throw ContractError("fuse: no attended vectors");
  std::vector<Tensor> parts(attended.begin(), attended.end());
  if (include_u) parts.push_back(u);
  return concat(parts, 0);
}

void export_attention(std::span<const double> weights, std::size_t rows,
                      std::size_t cols, const std::string& path_stem) {
  if (weights.size() != rows * cols) {
    throw ShapeError("export_attention: " + std::to_string(weights.size()) +
                     " weights for a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " grid");
  }
  {
    std::ofstream csv(path_stem + ".csv");
    if (!csv) throw IoError("export_attention: cannot open " + path_stem + ".csv");
    char buf[40];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", weights[r * cols + c]);
        csv << buf << (c + 1 == cols ? "" : ",");
      }
      csv << '\n';
    }
    if (!csv.good()) throw IoError("export_attention: write failed for " + path_stem + ".csv");
  }
  {
    double lo = weights[0], hi = weights[0];
    for (double v : weights) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::ofstream pgm(path_stem + ".pgm", std::ios::binary);
    if (!pgm) throw IoError("export_attention: cannot open " + path_stem + ".pgm");
    pgm << "P5\n" << cols << " " << rows << "\n255\n";
    for (double v : weights) {
      unsigned char px =
          hi > lo ? static_cast<unsigned char>(std::lround((v - lo) / (hi - lo) * 255.0))
                  : static_cast<unsigned char>(128);
      pgm.write(reinterpret_cast<const char*>(&px), 1);
    }
    if (!pgm.good()) throw IoError("export_attention: write failed for " + path_stem + ".pgm");
  }
}

Tensor init_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::param(std::move(shape), std::move(v));
}

FeatureExtractor::FeatureExtractor(BackboneConfig config, AttentionKind kind,
                                   bool include_u, Rng& init_rng,
                                   Activation attention_sigma, MultiDimAxis multidim_axis)
    : config_(std::move(config)), kind_(kind), include_u_(include_u) {
  config_.validate();
  std::size_t in = config_.input_dim;
  for (const auto& s : config_.stages) {
    const std::size_t out = s.flat();
    stage_weights_.push_back(init_uniform({out, in}, in, out, init_rng));
    stage_bias_.push_back(Tensor::param({out}, std::vector<double>(out, 0.0)));
    in = out;
  }
  const std::size_t l = config_.hidden_dim;
  u_weight_ = init_uniform({l, in}, in, l, init_rng);
  u_bias_ = Tensor::param({l}, std::vector<double>(l, 0.0));
  for (const auto& s : config_.stages) {
    AttentionParams p;
    p.kind = kind_;
    p.sigma = attention_sigma;
    p.multidim_axis = multidim_axis;
    const std::size_t c = s.channels;
    p.w1 = init_uniform({l, c}, c, l, init_rng);
    if (kind_ == AttentionKind::kMultiplicative || kind_ == AttentionKind::kAdditive) {
      p.w2 = init_uniform({l, l}, l, l, init_rng);
    }
    if (kind_ == AttentionKind::kAdditive || kind_ == AttentionKind::kAdditiveSimple) {
      p.w = init_uniform({l}, l, 1, init_rng);
    }
    if (kind_ == AttentionKind::kMultiDim) {
      p.wmd = init_uniform({l, c}, l, c, init_rng);
    }
    attn_.push_back(std::move(p));
  }
}

std::size_t FeatureExtractor::feature_dim() const {
  std::size_t d = 0;
  for (const auto& s : config_.stages) d += s.channels;
  if (include_u_) d += config_.hidden_dim;
  return d;
}

FeatureExtractor::Forward FeatureExtractor::forward(const Tensor& x) const {
  if (x.ndim() != 2 || x.shape()[1] != config_.input_dim) {
    throw ConfigError("extractor: input must be (n, " + std::to_string(config_.input_dim) +
                      "), got " + shape_str(x.shape()));
  }
  const std::size_t n = x.shape()[0];
  Forward out;
  // Backbone runs batched; attention runs per sample on its (HV, C) map view.
  std::vector<Tensor> stage_acts;
  Tensor h = x;
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    h = apply_activation(config_.activation,
                         add_rowwise(matmul(h, transpose(stage_weights_[s])), stage_bias_[s]));
    stage_acts.push_back(h);
  }
  out.u = apply_activation(config_.activation,
                           add_rowwise(matmul(h, transpose(u_weight_)), u_bias_));

  out.stages.resize(n);
  std::vector<Tensor> fused_rows;
  fused_rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row[] = {i};
    Tensor u_i = reshape(gather_rows(out.u, row), {config_.hidden_dim});
    std::vector<Tensor> pooled;
    for (std::size_t s = 0; s < config_.stages.size(); ++s) {
      const auto& ss = config_.stages[s];
      // Row layout is (C,H,V) flattened: channels vary slowest, so the
      // (HV, C) view of q_j vectors is the transpose of the (C, HV) reshape.
      Tensor block = reshape(gather_rows(stage_acts[s], row),
                             {ss.channels, ss.rows * ss.cols});
      StageOutput stage{transpose(block), ss.rows, ss.cols};
      Tensor scores = attention_scores(stage, u_i, attn_[s]);
      Tensor weights = normalize_scores(scores, attn_[s].multidim_axis);
      pooled.push_back(attend_pool(stage, weights));
      out.stages[i].push_back(std::move(stage));
    }
    Tensor f = fuse(pooled, u_i, include_u_);
    fused_rows.push_back(reshape(f, {1, f.size()}));
  }
  out.features = concat(fused_rows, 0);
  return out;
}

Tensor FeatureExtractor::forward_single(const Tensor& x) const {
  if (x.ndim() != 1) throw ConfigError("forward_single: expects a 1-D input");
  Forward f = forward(reshape(x, {1, x.size()}));
  return reshape(f.features, {f.features.shape()[1]});
}

std::vector<std::vector<double>> FeatureExtractor::attention_weights(const Tensor& x) const {
  if (kind_ == AttentionKind::kMultiDim) {
    throw ConfigError("attention_weights: multidim attention has no scalar location weights");
  }
  Forward f = forward(reshape(x, {1, x.size()}));
  std::vector<std::vector<double>> grids;
  const std::size_t row[] = {0};
  Tensor u0 = reshape(gather_rows(f.u, row), {config_.hidden_dim});
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    Tensor scores = attention_scores(f.stages[0][s], u0, attn_[s]);
    Tensor weights = normalize_scores(scores, attn_[s].multidim_axis);
    grids.emplace_back(weights.values().begin(), weights.values().end());
  }
  return grids;
}

std::vector<std::pair<std::string, Tensor>> FeatureExtractor::named_params() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t s = 0; s < stage_weights_.size(); ++s) {
    out.emplace_back("extractor.stage" + std::to_string(s) + ".weight", stage_weights_[s]);
    out.emplace_back("extractor.stage" + std::to_string(s) + ".bias", stage_bias_[s]);
  }
  out.emplace_back("extractor.u.weight", u_weight_);
  out.emplace_back("extractor.u.bias", u_bias_);
  for (std::size_t s = 0; s < attn_.size(); ++s) {
    const std::string stem = "extractor.attn" + std::to_string(s);
    out.emplace_back(stem + ".w1", attn_[s].w1);
    if (attn_[s].w2) out.emplace_back(stem + ".w2", *attn_[s].w2);
    if (attn_[s].w) out.emplace_back(stem + ".w", *attn_[s].w);
    if (attn_[s].wmd) out.emplace_back(stem + ".wmd", *attn_[s].wmd);
  }
  return out;
}

}  // namespace zslmetric
