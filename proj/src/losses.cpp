#include "zslmetric/losses.hpp"

#include <cmath>
#include <numbers>

#include "zslmetric/errors.hpp"
#include "zslmetric/extractor.hpp"

namespace zslmetric {

MetricLossKind metric_loss_from_name(const std::string& name) {
  if (name == "contrastive") return MetricLossKind::kContrastive;
  if (name == "triplet") return MetricLossKind::kTripletHinge;
  if (name == "npair") return MetricLossKind::kNPair;
  if (name == "angular") return MetricLossKind::kAngular;
  if (name == "proxy_nca") return MetricLossKind::kProxyNca;
  throw ConfigError("unknown metric loss '" + name + "'");
}

std::string metric_loss_name(MetricLossKind k) {
  switch (k) {
    case MetricLossKind::kContrastive: return "contrastive";
    case MetricLossKind::kTripletHinge: return "triplet";
    case MetricLossKind::kNPair: return "npair";
    case MetricLossKind::kAngular: return "angular";
    case MetricLossKind::kProxyNca: return "proxy_nca";
  }
  return "?";
}

namespace {

Tensor euclidean(const Tensor& a, const Tensor& b) {
  return sqrt(squared_norm(sub(a, b)));
}

}  // namespace

Tensor contrastive_loss(const Tensor& e1, const Tensor& e2, int similar_y, double q) {
  if (q <= 0.0) throw ParamError("contrastive_loss: Q must be positive");
  if (similar_y != 0 && similar_y != 1) {
    throw ParamError("contrastive_loss: Y must be 0 (genuine) or 1 (impostor)");
  }
  if (similar_y == 0) {
    // genuine branch works on E^2 directly, keeping the gradient finite at E=0
    return mul_scalar(squared_norm(sub(e1, e2)), 2.0 / q);
  }
  Tensor e = euclidean(e1, e2);
  return mul_scalar(exp(mul_scalar(e, -2.77 / q)), 2.0 * q);
}

Tensor triplet_hinge(const Tensor& anchor, const Tensor& positive,
                     const Tensor& negative, double margin) {
  if (margin <= 0.0) throw ParamError("triplet_hinge: margin must be positive");
  Tensor dpos = euclidean(anchor, positive);
  Tensor dneg = euclidean(anchor, negative);
  return relu(add_scalar(sub(dpos, dneg), margin));
}

Tensor npair_loss(const Tensor& anchor, const Tensor& positive,
                  std::span<const Tensor> negatives) {
  if (negatives.empty()) throw ContractError("npair_loss: at least one negative required");
  Tensor s_pos = dot(anchor, positive);
  std::vector<Tensor> terms;
  terms.reserve(negatives.size());
  for (const auto& n : negatives) {
    terms.push_back(exp(sub(dot(anchor, n), s_pos)));
  }
  Tensor acc = concat(terms, 0);
  return log(add_scalar(sum(acc), 1.0));
}

Tensor angular_loss(const Tensor& anchor, const Tensor& positive,
                    std::span<const Tensor> negatives, double angle_deg) {
  if (angle_deg <= 0.0 || angle_deg >= 90.0) {
    throw ParamError("angular_loss: angle must lie in (0, 90) degrees");
  }
  if (negatives.empty()) throw ContractError("angular_loss: at least one negative required");
  const double t2 = std::pow(std::tan(angle_deg * std::numbers::pi / 180.0), 2.0);
  Tensor ap = add(anchor, positive);
  Tensor s_pos = mul_scalar(dot(anchor, positive), 2.0 * (1.0 + t2));
  std::vector<Tensor> terms;
  terms.reserve(negatives.size());
  for (const auto& n : negatives) {
    terms.push_back(exp(sub(mul_scalar(dot(ap, n), 4.0 * t2), s_pos)));
  }
  return log(add_scalar(sum(concat(terms, 0)), 1.0));
}

Tensor proxy_nca_loss(const Tensor& embedding, int label, const Tensor& proxies) {
  if (proxies.ndim() != 2) throw ContractError("proxy_nca_loss: proxies must be (C, d)");
  const std::size_t n_classes = proxies.shape()[0];
  if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
    throw ContractError("proxy_nca_loss: label " + std::to_string(label) +
                        " outside proxy range [0," + std::to_string(n_classes) + ")");
  }
  if (n_classes < 2) throw ContractError("proxy_nca_loss: needs at least two proxies");
  Tensor f = l2_normalize(embedding);
  Tensor p = l2_normalize(proxies);
  const std::size_t y = static_cast<std::size_t>(label);
  const std::size_t d = proxies.shape()[1];
  auto proxy_row = [&](std::size_t z) {
    const std::size_t row[] = {z};
    return reshape(gather_rows(p, row), {d});
  };
  Tensor d_pos = squared_norm(sub(f, proxy_row(y)));
  std::vector<Tensor> terms;
  for (std::size_t z = 0; z < n_classes; ++z) {
    if (z == y) continue;
    terms.push_back(exp(neg(squared_norm(sub(f, proxy_row(z))))));
  }
  // -ln(exp(-d+)/sum) = d+ + ln(sum of exp(-d-))
  return add(d_pos, log(sum(concat(terms, 0))));
}

Tensor energy_confusion(const Tensor& embeddings, std::span<const std::size_t> class_i_rows,
                        std::span<const std::size_t> class_j_rows) {
  if (class_i_rows.empty() || class_j_rows.empty()) {
    throw ContractError("energy_confusion: both classes must be nonempty");
  }
  const std::size_t d = embeddings.shape()[1];
  std::vector<Tensor> sq;
  sq.reserve(class_i_rows.size() * class_j_rows.size());
  for (std::size_t i : class_i_rows) {
    const std::size_t ri[] = {i};
    Tensor xi = reshape(gather_rows(embeddings, ri), {d});
    for (std::size_t j : class_j_rows) {
      const std::size_t rj[] = {j};
      Tensor xj = reshape(gather_rows(embeddings, rj), {d});
      sq.push_back(squared_norm(sub(xi, xj)));
    }
  }
  return mean(concat(sq, 0));
}

EmbeddingLayer::EmbeddingLayer(std::size_t in_dim, std::size_t out_dim, bool normalize,
                               Rng& init_rng)
    : normalize_(normalize) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("embedding layer: zero dimension");
  weight_ = init_uniform({out_dim, in_dim}, in_dim, out_dim, init_rng);
  bias_ = Tensor::param({out_dim}, std::vector<double>(out_dim, 0.0));
}

Tensor EmbeddingLayer::forward(const Tensor& features) const {
  Tensor e = add_rowwise(matmul(features, transpose(weight_)), bias_);
  return normalize_ ? l2_normalize(e) : e;
}

std::vector<std::pair<std::string, Tensor>> EmbeddingLayer::named_params() {
  return {{"embedding.weight", weight_}, {"embedding.bias", bias_}};
}

Tensor mean_tuple_loss(const Tensor& embeddings, const MetricLossConfig& config,
                       std::span<const Triplet> triplets,
                       std::span<const NTuple> ntuples,
                       std::span<const int> labels, const Tensor* proxies) {
  const std::size_t d = embeddings.shape()[1];
  auto embedding_row = [&](std::size_t i) {
    const std::size_t row[] = {i};
    return reshape(gather_rows(embeddings, row), {d});
  };
  std::vector<Tensor> losses;
  switch (config.kind) {
    case MetricLossKind::kContrastive:
      // each triplet contributes one genuine and one impostor pair
      for (const auto& t : triplets) {
        Tensor a = embedding_row(t.anchor);
        losses.push_back(contrastive_loss(a, embedding_row(t.positive), 0, config.q));
        losses.push_back(contrastive_loss(a, embedding_row(t.negative), 1, config.q));
      }
      break;
    case MetricLossKind::kTripletHinge:
      for (const auto& t : triplets) {
        losses.push_back(triplet_hinge(embedding_row(t.anchor), embedding_row(t.positive),
                                       embedding_row(t.negative), config.margin));
      }
      break;
    case MetricLossKind::kNPair:
    case MetricLossKind::kAngular:
      for (const auto& t : ntuples) {
        std::vector<Tensor> negs;
        negs.reserve(t.negatives.size());
        for (std::size_t n : t.negatives) negs.push_back(embedding_row(n));
        if (config.kind == MetricLossKind::kNPair) {
          losses.push_back(npair_loss(embedding_row(t.anchor), embedding_row(t.positive), negs));
        } else {
          losses.push_back(angular_loss(embedding_row(t.anchor), embedding_row(t.positive),
                                        negs, config.angle_deg));
        }
      }
      break;
    case MetricLossKind::kProxyNca: {
      if (proxies == nullptr) throw ContractError("mean_tuple_loss: proxy matrix required");
      for (std::size_t i = 0; i < labels.size(); ++i) {
        losses.push_back(proxy_nca_loss(embedding_row(i), labels[i], *proxies));
      }
      break;
    }
  }
  if (losses.empty()) throw ContractError("mean_tuple_loss: no tuples to score");
  return mean(concat(losses, 0));
}

}  // namespace zslmetric
