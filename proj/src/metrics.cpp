#include "zslmetric/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "zslmetric/errors.hpp"

namespace zslmetric {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(const std::vector<double>& embeddings,
                                           std::size_t n, std::size_t dim,
                                           std::size_t query, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n - 1);
  const double* q = embeddings.data() + query * dim;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == query) continue;
    cand.emplace_back(sq_dist(q, embeddings.data() + j * dim, dim), j);
  }
  std::partial_sort(cand.begin(), cand.begin() + std::min(k, cand.size()), cand.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, cand.size()); ++i) out.push_back(cand[i].second);
  return out;
}

std::map<std::size_t, double> recall_at_k(const std::vector<double>& embeddings,
                                          std::size_t n, std::size_t dim,
                                          const std::vector<int>& labels,
                                          const std::vector<std::size_t>& ks) {
  if (n < 2) throw ParamError("recall_at_k: need at least two points");
  if (labels.size() != n) throw ContractError("recall_at_k: label count mismatch");
  std::size_t k_max = 0;
  for (std::size_t k : ks) {
    if (k == 0 || k >= n) {
      throw ParamError("recall_at_k: k=" + std::to_string(k) + " must lie in [1, n)");
    }
    k_max = std::max(k_max, k);
  }
  std::map<std::size_t, std::size_t> hits;
  for (std::size_t k : ks) hits[k] = 0;
  for (std::size_t q = 0; q < n; ++q) {
    auto nn = nearest_neighbors(embeddings, n, dim, q, k_max);
    for (std::size_t k : ks) {
      bool hit = false;
      for (std::size_t i = 0; i < k && i < nn.size(); ++i) {
        if (labels[nn[i]] == labels[q]) {
          hit = true;
          break;
        }
      }
      if (hit) ++hits[k];
    }
  }
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) out[k] = static_cast<double>(hits[k]) / static_cast<double>(n);
  return out;
}

KMeansResult kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim,
                    std::size_t k, Rng& rng, std::size_t restarts,
                    std::size_t max_iters, double rel_tol) {
  if (k == 0 || k > n) {
    throw ParamError("kmeans: k=" + std::to_string(k) + " must lie in [1, n]");
  }
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  std::vector<double> centroids(k * dim);
  std::vector<std::size_t> assign(n, 0);
  std::vector<double> min_d(n);
  for (std::size_t r = 0; r < restarts; ++r) {
    // k-means++ seeding
    const std::size_t first = rng.uniform_index(n);
    std::copy_n(points.data() + first * dim, dim, centroids.data());
    for (std::size_t i = 0; i < n; ++i)
      min_d[i] = sq_dist(points.data() + i * dim, centroids.data(), dim);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (double v : min_d) total += v;
      std::size_t chosen;
      if (total <= 0.0) {
        chosen = rng.uniform_index(n);  // duplicate points: seed uniformly
      } else {
        double target = rng.uniform() * total;
        chosen = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          target -= min_d[i];
          if (target <= 0.0) {
            chosen = i;
            break;
          }
        }
      }
      std::copy_n(points.data() + chosen * dim, dim, centroids.data() + c * dim);
      for (std::size_t i = 0; i < n; ++i) {
        min_d[i] = std::min(min_d[i],
                            sq_dist(points.data() + i * dim, centroids.data() + c * dim, dim));
      }
    }
    // Lloyd iterations
    double prev_wcss = std::numeric_limits<double>::infinity();
    double wcss = 0.0;
    std::size_t iter = 0;
    for (; iter < max_iters; ++iter) {
      wcss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double bd = std::numeric_limits<double>::infinity();
        std::size_t bc = 0;
        for (std::size_t c = 0; c < k; ++c) {
          const double d = sq_dist(points.data() + i * dim, centroids.data() + c * dim, dim);
          if (d < bd) {
            bd = d;
            bc = c;
          }
        }
        assign[i] = bc;
        wcss += bd;
      }
      std::vector<double> sums(k * dim, 0.0);
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++counts[assign[i]];
        for (std::size_t d = 0; d < dim; ++d) sums[assign[i] * dim + d] += points[i * dim + d];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
          // re-seed an empty cluster at the point farthest from its centroid
          std::size_t far = 0;
          double fd = -1.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double d =
                sq_dist(points.data() + i * dim, centroids.data() + assign[i] * dim, dim);
            if (d > fd) {
              fd = d;
              far = i;
            }
          }
          std::copy_n(points.data() + far * dim, dim, centroids.data() + c * dim);
        } else {
          for (std::size_t d = 0; d < dim; ++d)
            centroids[c * dim + d] = sums[c * dim + d] / static_cast<double>(counts[c]);
        }
      }
      if (prev_wcss - wcss <= rel_tol * std::max(1.0, prev_wcss) && iter > 0) break;
      prev_wcss = wcss;
    }
    // final assignment pass under the converged centroids
    wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double bd = std::numeric_limits<double>::infinity();
      std::size_t bc = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(points.data() + i * dim, centroids.data() + c * dim, dim);
        if (d < bd) {
          bd = d;
          bc = c;
        }
      }
      assign[i] = bc;
      wcss += bd;
    }
    if (wcss < best.wcss) {
      best.wcss = wcss;
      best.assignments = assign;
      best.centroids = centroids;
      best.iterations = iter + 1;
    }
  }
  return best;
}

double nmi(const std::vector<std::size_t>& assignments, const std::vector<int>& labels) {
  if (assignments.size() != labels.size()) {
    throw ContractError("nmi: partition length mismatch");
  }
  const std::size_t n = assignments.size();
  if (n == 0) throw ContractError("nmi: empty partitions");
  std::map<std::size_t, std::size_t> c_count;
  std::map<int, std::size_t> y_count;
  std::map<std::pair<std::size_t, int>, std::size_t> joint;
  for (std::size_t i = 0; i < n; ++i) {
    ++c_count[assignments[i]];
    ++y_count[labels[i]];
    ++joint[{assignments[i], labels[i]}];
  }
  const double dn = static_cast<double>(n);
  double h_c = 0.0, h_y = 0.0, mi = 0.0;
  for (const auto& [c, cnt] : c_count) {
    const double p = static_cast<double>(cnt) / dn;
    h_c -= p * std::log(p);
  }
  for (const auto& [y, cnt] : y_count) {
    const double p = static_cast<double>(cnt) / dn;
    h_y -= p * std::log(p);
  }
  for (const auto& [cy, cnt] : joint) {
    const double pxy = static_cast<double>(cnt) / dn;
    const double pc = static_cast<double>(c_count[cy.first]) / dn;
    const double py = static_cast<double>(y_count[cy.second]) / dn;
    mi += pxy * std::log(pxy / (pc * py));
  }
  if (h_c + h_y == 0.0) return 1.0;  // both partitions single-block
  return 2.0 * mi / (h_y + h_c);
}

double knn_acc(const std::vector<double>& embeddings, std::size_t n, std::size_t dim,
               const std::vector<int>& labels, std::size_t k) {
  if (n <= k) throw ParamError("knn_acc: need more than k points");
  if (labels.size() != n) throw ContractError("knn_acc: label count mismatch");
  const std::size_t needed = k / 2 + 1;  // "3 or more" of the 5-top results
  std::size_t correct = 0;
  for (std::size_t q = 0; q < n; ++q) {
    auto nn = nearest_neighbors(embeddings, n, dim, q, k);
    std::size_t same = 0;
    for (std::size_t j : nn)
      if (labels[j] == labels[q]) ++same;
    if (same >= needed) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::string EvalReport::to_json() const {
  std::ostringstream os;
  os << "{\"split_id\":\"" << split_id << "\",\"epoch\":" << epoch << ",\"recall_at\":{";
  bool first = true;
  for (const auto& [k, v] : recall_at) {
    if (!first) os << ',';
    first = false;
    os << '"' << k << "\":" << fmt_double(v);
  }
  os << "},\"nmi\":" << fmt_double(nmi) << ",\"knn_acc\":" << fmt_double(knn_acc)
     << ",\"n_queries\":" << n_queries << "}";
  return os.str();
}

std::string EvalReport::csv_header() {
  return "split_id,epoch,nmi,r@1,r@2,r@4,r@8,knn_acc";
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os << split_id << ',' << epoch << ',' << fmt_double(nmi);
  for (std::size_t k : {1u, 2u, 4u, 8u}) {
    auto it = recall_at.find(k);
    os << ',' << (it == recall_at.end() ? "" : fmt_double(it->second));
  }
  os << ',' << fmt_double(knn_acc);
  return os.str();
}

}  // namespace zslmetric
