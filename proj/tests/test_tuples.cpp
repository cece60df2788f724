#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "zslmetric/errors.hpp"
#include "zslmetric/tuples.hpp"

using namespace zslmetric;

namespace {

FeatureBatch make_batch(std::size_t dim, const std::vector<std::vector<double>>& rows,
                        const std::vector<int>& labels) {
  FeatureBatch fb;
  fb.n = rows.size();
  fb.dim = dim;
  for (const auto& r : rows) fb.features.insert(fb.features.end(), r.begin(), r.end());
  fb.labels = labels;
  return fb;
}

FeatureBatch random_batch(std::size_t n, std::size_t dim, std::size_t n_classes, Rng& rng) {
  FeatureBatch fb;
  fb.n = n;
  fb.dim = dim;
  for (std::size_t i = 0; i < n * dim; ++i) fb.features.push_back(rng.uniform(-1, 1));
  for (std::size_t i = 0; i < n; ++i)
    fb.labels.push_back(static_cast<int>(rng.uniform_index(n_classes)));
  return fb;
}

// independent double-loop distance
double naive_dist(const FeatureBatch& fb, std::size_t i, std::size_t j) {
  double acc = 0.0;
  for (std::size_t k = 0; k < fb.dim; ++k) {
    const double d = fb.features[i * fb.dim + k] - fb.features[j * fb.dim + k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("pairwise distances: trivial and oracle cases") {
  auto same = make_batch(2, {{1, 2}, {1, 2}, {1, 2}}, {0, 1, 2});
  for (double v : pairwise_distances(same)) CHECK(v == 0.0);

  auto basis = make_batch(3, {{1, 0, 0}, {0, 1, 0}}, {0, 1});
  auto d = pairwise_distances(basis);
  CHECK(d[0 * 2 + 1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(d[1 * 2 + 0] == d[0 * 2 + 1]);
  CHECK(d[0] == 0.0);

  Rng rng(17);
  auto fb = random_batch(5, 3, 2, rng);
  auto m = pairwise_distances(fb);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(std::abs(m[i * 5 + j] - naive_dist(fb, i, j)) < 1e-12);
}

TEST_CASE("easy sampling: contracts and selection frequencies") {
  Rng rng(23);
  auto single = make_batch(1, {{0}, {1}, {2}}, {4, 4, 4});
  auto empty = sample_easy(single, 2, rng);
  CHECK(empty.items.empty());
  CHECK(empty.single_class);

  auto small = make_batch(1, {{0}, {0.1}, {5}, {5.1}}, {0, 0, 1, 1});
  auto ts = sample_easy(small, 3, rng);
  CHECK_FALSE(ts.single_class);
  CHECK(ts.items.size() == 4 * 3);
  for (const auto& t : ts.items) {
    CHECK(t.anchor != t.positive);
    CHECK(small.labels[t.anchor] == small.labels[t.positive]);
    CHECK(small.labels[t.anchor] != small.labels[t.negative]);
    CHECK(t.anchor < small.n);
    CHECK(t.positive < small.n);
    CHECK(t.negative < small.n);
  }

  // negative choice is uniform over eligible rows: 1/#eligible +- 3 sigma
  auto fb = make_batch(1, {{0}, {0.5}, {1}, {2}, {3}, {4}}, {0, 0, 1, 1, 2, 2});
  const std::size_t draws = 10000;
  std::map<std::size_t, std::size_t> counts;
  Rng freq_rng(31);
  for (std::size_t i = 0; i < draws; ++i) {
    auto one = sample_easy(fb, 1, freq_rng);
    for (const auto& t : one.items) {
      if (t.anchor == 0) ++counts[t.negative];
    }
  }
  const double p = 1.0 / 4.0;  // rows 2..5 eligible for anchor 0
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (std::size_t neg : {2, 3, 4, 5}) {
    const double freq = static_cast<double>(counts[neg]) / draws;
    CHECK(std::abs(freq - p) <= 3 * sigma);
  }
}

TEST_CASE("hard sampling: eligibility by d- < d+") {
  Rng rng(29);
  // well separated clusters: every d- > d+ -> empty
  auto separated = make_batch(1, {{0}, {0.1}, {100}, {100.1}}, {0, 0, 1, 1});
  CHECK(sample_hard(separated, rng).items.empty());

  // 1-D points a=0, p=1.0, candidates 0.5 (eligible) and 2.0 (not)
  auto fb = make_batch(1, {{0}, {1.0}, {0.5}, {2.0}}, {0, 0, 1, 2});
  auto ts = sample_hard(fb, rng);
  bool saw_a0_p1 = false;
  for (const auto& t : ts.items) {
    if (t.anchor == 0 && t.positive == 1) {
      saw_a0_p1 = true;
      CHECK(t.negative == 2);
    }
  }
  CHECK(saw_a0_p1);

  // every emitted triplet satisfies the inequality recomputed independently
  for (int trial = 0; trial < 50; ++trial) {
    auto rb = random_batch(10, 2, 3, rng);
    auto emitted = sample_hard(rb, rng);
    for (const auto& t : emitted.items) {
      CHECK(naive_dist(rb, t.anchor, t.negative) < naive_dist(rb, t.anchor, t.positive));
    }
  }
}

TEST_CASE("semi-hard sampling: margin window, fallback flag, enumeration oracle") {
  Rng rng(37);
  CHECK_THROWS_AS(sample_semihard(random_batch(4, 2, 2, rng), 0.0, rng), ParamError);
  CHECK_THROWS_AS(sample_semihard(random_batch(4, 2, 2, rng), -1.0, rng), ParamError);

  // alpha = 0.01, d+ = 0.5, candidates 0.502 (in window) and 0.6 (outside)
  auto fb = make_batch(1, {{0}, {0.5}, {0.502}, {0.6}}, {0, 0, 1, 2});
  auto ts = sample_semihard(fb, 0.01, rng);
  for (const auto& t : ts.items) {
    if (t.anchor == 0 && t.positive == 1) {
      CHECK_FALSE(t.fallback);
      CHECK(t.negative == 2);
    }
  }

  // huge margin degenerates to d+ < d-
  auto loose = sample_semihard(fb, 1e9, rng);
  for (const auto& t : loose.items) {
    if (!t.fallback) {
      CHECK(naive_dist(fb, t.anchor, t.positive) < naive_dist(fb, t.anchor, t.negative));
    }
  }

  // emitted negatives equal the brute-force eligible set on a 6-point batch
  auto six = make_batch(1, {{0}, {0.3}, {0.35}, {0.55}, {0.9}, {2.0}}, {0, 0, 1, 1, 2, 2});
  const double margin = 0.3;
  auto d = pairwise_distances(six);
  std::map<std::pair<std::size_t, std::size_t>, std::set<std::size_t>> eligible;
  for (std::size_t a : {0, 1}) {
    for (std::size_t p : {0, 1}) {
      if (a == p) continue;
      for (std::size_t n = 2; n < 6; ++n) {
        const double dp = d[a * 6 + p], dn = d[a * 6 + n];
        if (dp < dn && dn - dp < margin) eligible[{a, p}].insert(n);
      }
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    auto got = sample_semihard(six, margin, rng);
    for (const auto& t : got.items) {
      if (six.labels[t.anchor] != 0) continue;
      auto it = eligible.find({t.anchor, t.positive});
      if (t.fallback) {
        CHECK((it == eligible.end() || it->second.empty()));
      } else {
        REQUIRE(it != eligible.end());
        CHECK(it->second.count(t.negative) == 1);
      }
    }
  }
}

TEST_CASE("n-pair sampling: one negative per non-anchor class") {
  Rng rng(41);
  auto fb = make_batch(1, {{0}, {0.1}, {1}, {1.1}, {2}, {2.1}}, {0, 0, 1, 1, 2, 2});
  auto tuples = sample_npair(fb, rng);
  CHECK(tuples.size() == 6);
  for (const auto& t : tuples) {
    CHECK(t.negatives.size() == 2);  // N-1 with 3 classes
    std::set<int> neg_classes;
    for (std::size_t n : t.negatives) neg_classes.insert(fb.labels[n]);
    std::set<int> expect;
    for (int c : {0, 1, 2})
      if (c != fb.labels[t.anchor]) expect.insert(c);
    CHECK(neg_classes == expect);
  }

  // two classes: the tuple degenerates to a triplet
  auto two = make_batch(1, {{0}, {0.1}, {5}, {5.1}}, {0, 0, 1, 1});
  for (const auto& t : sample_npair(two, rng)) CHECK(t.negatives.size() == 1);

  // negatives' labels are a permutation of the non-anchor class set
  for (int trial = 0; trial < 100; ++trial) {
    auto rb = random_batch(12, 2, 4, rng);
    std::set<int> classes(rb.labels.begin(), rb.labels.end());
    for (const auto& t : sample_npair(rb, rng)) {
      std::set<int> neg_classes;
      for (std::size_t n : t.negatives) {
        CHECK(n < rb.n);
        neg_classes.insert(rb.labels[n]);
      }
      std::set<int> expect = classes;
      expect.erase(rb.labels[t.anchor]);
      CHECK(neg_classes == expect);
      CHECK(t.negatives.size() == expect.size());
    }
  }
}

TEST_CASE("fixed seeds give identical tuple streams") {
  auto collect = [](std::uint64_t seed) {
    Rng data_rng(3);
    auto fb = random_batch(16, 3, 4, data_rng);
    Rng rng(seed);
    std::vector<std::size_t> signature;
    for (const auto& t : sample_easy(fb, 2, rng).items) {
      signature.insert(signature.end(), {t.anchor, t.positive, t.negative});
    }
    for (const auto& t : sample_semihard(fb, 0.2, rng).items) {
      signature.insert(signature.end(), {t.anchor, t.positive, t.negative,
                                         static_cast<std::size_t>(t.fallback)});
    }
    for (const auto& t : sample_npair(fb, rng)) {
      signature.push_back(t.anchor);
      signature.push_back(t.positive);
      signature.insert(signature.end(), t.negatives.begin(), t.negatives.end());
    }
    return signature;
  };
  CHECK(collect(555) == collect(555));
  CHECK(collect(555) != collect(556));
}

TEST_CASE("sampler soundness over many random batches") {
  Rng rng(43);
  for (int trial = 0; trial < 300; ++trial) {
    auto fb = random_batch(4 + rng.uniform_index(10), 3, 2 + rng.uniform_index(3), rng);
    const double margin = 0.05 + rng.uniform() * 0.5;
    auto hard = sample_hard(fb, rng);
    auto semi = sample_semihard(fb, margin, rng);
    auto easy = sample_easy(fb, 1, rng);
    auto all_label_ok = [&](const Triplet& t) {
      return fb.labels[t.anchor] == fb.labels[t.positive] &&
             fb.labels[t.anchor] != fb.labels[t.negative] && t.anchor != t.positive &&
             t.anchor < fb.n && t.positive < fb.n && t.negative < fb.n;
    };
    for (const auto& t : hard.items) {
      CHECK(all_label_ok(t));
      CHECK(naive_dist(fb, t.anchor, t.negative) < naive_dist(fb, t.anchor, t.positive));
    }
    for (const auto& t : semi.items) {
      CHECK(all_label_ok(t));
      if (!t.fallback) {
        const double dp = naive_dist(fb, t.anchor, t.positive);
        const double dn = naive_dist(fb, t.anchor, t.negative);
        CHECK(dp < dn);
        CHECK(dn - dp < margin);
      }
    }
    for (const auto& t : easy.items) CHECK(all_label_ok(t));
  }
}
