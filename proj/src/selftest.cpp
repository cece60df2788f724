#include "zslmetric/selftest.hpp"

#include <cmath>
#include <ostream>

#include "zslmetric/adversary.hpp"
#include "zslmetric/metrics.hpp"
#include "zslmetric/model.hpp"
#include "zslmetric/tuples.hpp"

namespace zslmetric {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

int run_selftest(std::ostream& out) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    out << (ok ? "ok   " : "FAIL ") << name << '\n';
    if (!ok) ++failures;
  };

  Rng rng(20240913);

  // gradient suite over the full extractor for every attention kind
  for (auto kind : {AttentionKind::kMultiplicative, AttentionKind::kMultiplicativeSimple,
                    AttentionKind::kAdditive, AttentionKind::kAdditiveSimple,
                    AttentionKind::kMultiDim}) {
    BackboneConfig bc;
    bc.input_dim = 6;
    bc.stages = {{3, 2, 2}, {4, 2, 1}};
    bc.hidden_dim = 5;
    bc.activation = Activation::kTanh;
    Rng init(42);
    FeatureExtractor fx(bc, kind, true, init);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      Tensor x = random_tensor({6}, rng);
      worst = std::max(worst, grad_check(
          [&](const Tensor& xx) { return squared_norm(fx.forward_single(xx)); }, x));
    }
    check((std::string("extractor grad (") + attention_kind_name(kind) + ")").c_str(),
          worst < 1e-4);
  }

  // GRL contract
  {
    bool ok = true;
    for (double lambda : {-1.0, 0.0, 0.5, 1.0}) {
      Tensor x({3}, {0.25, -1.5, 3.0});
      Tensor y = grad_reverse(x, lambda);
      for (std::size_t i = 0; i < 3; ++i) ok = ok && y.at(i) == x.at(i);
      Tape tape;
      TapeScope scope(tape);
      Tensor xt = Tensor::param({3}, {0.25, -1.5, 3.0});
      Tensor up({3}, {2.0, -3.0, 0.5});
      tape.backward(sum(mul(grad_reverse(xt, lambda), up)));
      for (std::size_t i = 0; i < 3; ++i) ok = ok && xt.grad()[i] == -lambda * up.at(i);
    }
    check("grad_reverse forward identity / backward -lambda", ok);
  }

  // softmax + label smoothing normalization
  {
    bool ok = true;
    for (int t = 0; t < 20; ++t) {
      Tensor x = random_tensor({7}, rng, 1000.0);
      Tensor s = softmax(x, 0);
      double tot = 0.0;
      for (double v : s.values()) tot += v;
      ok = ok && std::abs(tot - 1.0) < 1e-12;
    }
    auto y = smooth_labels(1, 0.15, 4);
    double tot = 0.0;
    for (double v : y) tot += v;
    ok = ok && std::abs(tot - 1.0) < 1e-12 && std::abs(y[0] - 0.15 / 4) < 1e-15;
    check("softmax rows and smoothed labels sum to 1", ok);
  }

  // lambda schedule vs direct evaluation
  {
    bool ok = true;
    for (int i = 0; i <= 100; ++i) {
      const double lc = 3.0 * i / 100.0;
      const double got = lambda_schedule(lc, 1.5, 0.5);
      ok = ok && got == -std::tanh(lc - 1.5) * 0.5 && std::abs(got) <= 0.5 + 1e-15;
    }
    ok = ok && lambda_schedule(1.5, 1.5, 1.0) == 0.0;
    check("lambda schedule matches -tanh(l_c - l_thresh) * lambda0", ok);
  }

  // sampler inequalities re-checked from raw distances
  {
    bool ok = true;
    for (int t = 0; t < 25 && ok; ++t) {
      FeatureBatch fb;
      fb.n = 12;
      fb.dim = 3;
      for (std::size_t i = 0; i < fb.n * fb.dim; ++i)
        fb.features.push_back(rng.uniform(-1, 1));
      for (std::size_t i = 0; i < fb.n; ++i) fb.labels.push_back(static_cast<int>(i % 3));
      auto d = pairwise_distances(fb);
      auto hard = sample_hard(fb, rng);
      for (const auto& tr : hard.items) {
        ok = ok && d[tr.anchor * fb.n + tr.negative] < d[tr.anchor * fb.n + tr.positive];
      }
      auto semi = sample_semihard(fb, 0.35, rng);
      for (const auto& tr : semi.items) {
        if (tr.fallback) continue;
        const double dp = d[tr.anchor * fb.n + tr.positive];
        const double dn = d[tr.anchor * fb.n + tr.negative];
        ok = ok && dp < dn && dn - dp < 0.35;
      }
    }
    check("hard/semi-hard samples satisfy their inequalities", ok);
  }

  // tiny retrieval oracles
  {
    std::vector<double> pts = {0.0, 0.1, 2.0, 2.1, 4.0, 4.1};
    std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    auto r = recall_at_k(pts, 6, 1, labels, {1});
    bool ok = r[1] == 1.0;
    ok = ok && nmi({0, 0, 1, 1}, {int(0), 0, 1, 1}) == 1.0;
    ok = ok && nmi({0, 0, 0, 0}, {int(0), 0, 1, 1}) == 0.0;
    check("recall@1 / NMI identities on planted data", ok);
  }

  return failures;
}

}  // namespace zslmetric
