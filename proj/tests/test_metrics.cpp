#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "zslmetric/errors.hpp"
#include "zslmetric/metrics.hpp"

using namespace zslmetric;

namespace {

// Brute-force neighbor sort: full pair enumeration, insertion-ordered,
// ties by lower index. Written independently of metrics.cpp.
std::vector<std::size_t> oracle_neighbors(const std::vector<double>& e, std::size_t n,
                                          std::size_t dim, std::size_t q) {
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < n; ++j)
    if (j != q) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double da = 0, db = 0;
    for (std::size_t k = 0; k < dim; ++k) {
      da += (e[q * dim + k] - e[a * dim + k]) * (e[q * dim + k] - e[a * dim + k]);
      db += (e[q * dim + k] - e[b * dim + k]) * (e[q * dim + k] - e[b * dim + k]);
    }
    if (da != db) return da < db;
    return a < b;
  });
  return order;
}

double oracle_recall(const std::vector<double>& e, std::size_t n, std::size_t dim,
                     const std::vector<int>& labels, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < n; ++q) {
    auto order = oracle_neighbors(e, n, dim, q);
    for (std::size_t i = 0; i < k; ++i) {
      if (labels[order[i]] == labels[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / n;
}

double oracle_knn_acc(const std::vector<double>& e, std::size_t n, std::size_t dim,
                      const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t q = 0; q < n; ++q) {
    auto order = oracle_neighbors(e, n, dim, q);
    std::size_t same = 0;
    for (std::size_t i = 0; i < 5; ++i)
      if (labels[order[i]] == labels[q]) ++same;
    if (same >= 3) ++correct;
  }
  return static_cast<double>(correct) / n;
}

double oracle_nmi(const std::vector<std::size_t>& c, const std::vector<int>& y) {
  const double n = static_cast<double>(c.size());
  std::map<std::pair<long, long>, double> joint;
  std::map<long, double> pc, py;
  for (std::size_t i = 0; i < c.size(); ++i) {
    joint[{static_cast<long>(c[i]), y[i]}] += 1.0 / n;
    pc[static_cast<long>(c[i])] += 1.0 / n;
    py[y[i]] += 1.0 / n;
  }
  double hc = 0, hy = 0, mi = 0;
  for (auto& [k, p] : pc) hc -= p * std::log(p);
  for (auto& [k, p] : py) hy -= p * std::log(p);
  for (auto& [k, p] : joint) mi += p * std::log(p / (pc[k.first] * py[k.second]));
  if (hc + hy == 0.0) return 1.0;
  return 2.0 * mi / (hc + hy);
}

}  // namespace

TEST_CASE("recall@k trivial cases") {
  // tight same-label pairs: nearest neighbor always matches
  std::vector<double> e = {0.0, 0.01, 5.0, 5.01, 9.0, 9.01};
  std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  auto r = recall_at_k(e, 6, 1, labels, {1, 5});
  CHECK(r[1] == 1.0);
  CHECK(r[5] == 1.0);  // recall@(n-1) with every class of size >= 2

  CHECK_THROWS_AS(recall_at_k(e, 6, 1, labels, {6}), ParamError);
  CHECK_THROWS_AS(recall_at_k(e, 6, 1, labels, {0}), ParamError);
}

TEST_CASE("recall@k matches the exhaustive oracle on a planted 6-point instance") {
  std::vector<double> e = {0.0, 0.0, 1.0, 0.0, 0.9, 0.1,
                           3.0, 3.0, 3.1, 3.0, 0.2, 0.1};
  std::vector<int> labels = {0, 1, 0, 2, 2, 1};
  auto r = recall_at_k(e, 6, 2, labels, {1, 2, 3});
  for (std::size_t k : {1, 2, 3}) CHECK(r[k] == oracle_recall(e, 6, 2, labels, k));
}

TEST_CASE("kmeans contracts") {
  Rng rng(3);
  std::vector<double> pts;
  for (int i = 0; i < 8; ++i) {
    pts.push_back(rng.uniform(-1, 1));
    pts.push_back(rng.uniform(-1, 1));
  }
  // k = n: every point its own cluster, WCSS 0
  auto each = kmeans(pts, 8, 2, 8, rng);
  CHECK(each.wcss == doctest::Approx(0.0).epsilon(1e-12));
  std::set<std::size_t> distinct(each.assignments.begin(), each.assignments.end());
  CHECK(distinct.size() == 8);

  CHECK_THROWS_AS(kmeans(pts, 8, 2, 9, rng), ParamError);

  // two far blobs: pure assignment
  std::vector<double> blobs;
  Rng blob_rng(5);
  for (int i = 0; i < 10; ++i) {
    const double cx = i < 5 ? 0.0 : 100.0;
    blobs.push_back(cx + blob_rng.uniform(-1, 1));
    blobs.push_back(blob_rng.uniform(-1, 1));
  }
  auto two = kmeans(blobs, 10, 2, 2, blob_rng);
  for (int i = 1; i < 5; ++i) CHECK(two.assignments[i] == two.assignments[0]);
  for (int i = 6; i < 10; ++i) CHECK(two.assignments[i] == two.assignments[5]);
  CHECK(two.assignments[0] != two.assignments[5]);

  // deterministic under the seed
  Rng s1(77), s2(77);
  auto a = kmeans(blobs, 10, 2, 3, s1);
  auto b = kmeans(blobs, 10, 2, 3, s2);
  CHECK(a.assignments == b.assignments);
  CHECK(a.wcss == b.wcss);
}

TEST_CASE("nmi identities and hand-computed cases") {
  std::vector<int> y = {0, 0, 1, 1};
  CHECK(nmi({0, 0, 1, 1}, y) == 1.0);
  CHECK(nmi({7, 7, 3, 3}, y) == 1.0);  // relabeling invariance
  CHECK(nmi({0, 0, 0, 0}, y) == 0.0);  // one cluster, zero information
  CHECK(nmi({0, 1, 0, 1}, y) == doctest::Approx(0.0).epsilon(1e-14));  // independent

  // symmetry in the two partitions
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> c;
    std::vector<int> labels;
    const std::size_t n = 3 + rng.uniform_index(9);
    for (std::size_t i = 0; i < n; ++i) {
      c.push_back(rng.uniform_index(3));
      labels.push_back(static_cast<int>(rng.uniform_index(3)));
    }
    std::vector<std::size_t> as_cluster(labels.begin(), labels.end());
    std::vector<int> as_labels(c.begin(), c.end());
    CHECK(nmi(c, labels) == doctest::Approx(nmi(as_cluster, as_labels)).epsilon(1e-12));
    CHECK(std::abs(nmi(c, labels) - oracle_nmi(c, labels)) < 1e-12);
  }
  CHECK_THROWS_AS(nmi({0, 1}, {0}), ContractError);
}

TEST_CASE("knn accuracy rule: 3 of 5") {
  // six tight clusters of 6: every query sees 5 same-label neighbors
  std::vector<double> e;
  std::vector<int> labels;
  Rng rng(13);
  for (int c = 0; c < 3; ++c) {
    for (int s = 0; s < 6; ++s) {
      e.push_back(10.0 * c + 0.01 * rng.uniform(-1, 1));
      labels.push_back(c);
    }
  }
  CHECK(knn_acc(e, 18, 1, labels) == 1.0);

  // a query with exactly 2 same-label points among its 5 nearest is incorrect
  // layout: query at 0; same-label at 0.1, 0.2; other-label at 0.3, 0.4, 0.5;
  // the rest far away
  std::vector<double> e2 = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 50.0, 51.0, 52.0, 60.0, 61.0, 62.0};
  std::vector<int> l2 = {0, 0, 0, 1, 1, 1, 0, 1, 1, 0, 0, 1};
  auto order = nearest_neighbors(e2, 12, 1, 0, 5);
  std::size_t same = 0;
  for (std::size_t j : order)
    if (l2[j] == l2[0]) ++same;
  REQUIRE(same == 2);
  CHECK(oracle_knn_acc(e2, 12, 1, l2) == knn_acc(e2, 12, 1, l2));

  CHECK_THROWS_AS(knn_acc(e2, 5, 1, l2, 5), ParamError);
}

TEST_CASE("isometry invariance of knn accuracy") {
  Rng rng(17);
  const std::size_t n = 14, dim = 2;
  std::vector<double> e;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    e.push_back(rng.uniform(-2, 2));
    e.push_back(rng.uniform(-2, 2));
    labels.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  const double theta = 0.73, tx = 4.2, ty = -1.1;
  std::vector<double> rotated(e.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double x = e[i * 2], y = e[i * 2 + 1];
    rotated[i * 2] = std::cos(theta) * x - std::sin(theta) * y + tx;
    rotated[i * 2 + 1] = std::sin(theta) * x + std::cos(theta) * y + ty;
  }
  CHECK(knn_acc(e, n, dim, labels) == knn_acc(rotated, n, dim, labels));
  auto r1 = recall_at_k(e, n, dim, labels, {1, 3});
  auto r2 = recall_at_k(rotated, n, dim, labels, {1, 3});
  CHECK(r1[1] == r2[1]);
  CHECK(r1[3] == r2[3]);
}

TEST_CASE("metrics match brute-force oracles on random small instances") {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 7 + rng.uniform_index(6);  // 7..12
    const std::size_t dim = 1 + rng.uniform_index(3);
    std::vector<double> e;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) e.push_back(rng.uniform(-1, 1));
      labels.push_back(static_cast<int>(rng.uniform_index(3)));
    }
    for (std::size_t k : {1, 2, 4}) {
      if (k >= n) continue;
      auto r = recall_at_k(e, n, dim, labels, {k});
      CHECK(r[k] == oracle_recall(e, n, dim, labels, k));
    }
    CHECK(knn_acc(e, n, dim, labels) == oracle_knn_acc(e, n, dim, labels));
  }
}

TEST_CASE("recall@k is nondecreasing in k") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 8;
    std::vector<double> e;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      e.push_back(rng.uniform(-1, 1));
      labels.push_back(static_cast<int>(rng.uniform_index(3)));
    }
    auto r = recall_at_k(e, n, 1, labels, {1, 2, 3, 4, 5, 6, 7});
    double prev = 0.0;
    for (std::size_t k = 1; k <= 7; ++k) {
      CHECK(r[k] >= prev);
      prev = r[k];
    }
  }
}

TEST_CASE("eval report serialization") {
  EvalReport rep;
  rep.split_id = "unseen";
  rep.epoch = 3;
  rep.recall_at = {{1, 0.5}, {2, 0.75}, {4, 0.875}, {8, 1.0}};
  rep.nmi = 0.625;
  rep.knn_acc = 0.375;
  rep.n_queries = 16;
  CHECK(EvalReport::csv_header() == "split_id,epoch,nmi,r@1,r@2,r@4,r@8,knn_acc");
  CHECK(rep.csv_row() == "unseen,3,0.625,0.5,0.75,0.875,1,0.375");
  const std::string json = rep.to_json();
  CHECK(json.find("\"split_id\":\"unseen\"") != std::string::npos);
  CHECK(json.find("\"nmi\":0.625") != std::string::npos);
  CHECK(json.find("\"1\":0.5") != std::string::npos);
}
