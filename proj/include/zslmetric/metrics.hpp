#ifndef ZSLMETRIC_METRICS_HPP
#define ZSLMETRIC_METRICS_HPP

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "zslmetric/rng.hpp"

namespace zslmetric {

/// Retrieval evaluation record for one split.
struct EvalReport {
  std::string split_id;
  std::size_t epoch = 0;
  std::map<std::size_t, double> recall_at;
  double nmi = 0.0;
  double knn_acc = 0.0;
  std::size_t n_queries = 0;

  std::string to_json() const;
  /// Fixed header: split_id,epoch,nmi,r@1,r@2,r@4,r@8,knn_acc
  static std::string csv_header();
  std::string csv_row() const;
};

/// Fraction of queries with at least one same-label point among their k
/// nearest neighbors (self excluded; ties broken by lower index).
std::map<std::size_t, double> recall_at_k(const std::vector<double>& embeddings,
                                          std::size_t n, std::size_t dim,
                                          const std::vector<int>& labels,
                                          const std::vector<std::size_t>& ks);

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<double> centroids;  // k x dim
  double wcss = 0.0;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm from k-means++ seeding, best of `restarts` by WCSS.
KMeansResult kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim,
                    std::size_t k, Rng& rng, std::size_t restarts = 8,
                    std::size_t max_iters = 100, double rel_tol = 1e-6);

/// 2 I(Y;C) / (H(Y) + H(C)) with natural-log entropies from empirical
/// counts. Both partitions single-block -> 1; one degenerate side with
/// zero information -> 0.
double nmi(const std::vector<std::size_t>& assignments, const std::vector<int>& labels);

/// Fraction of queries with >= 3 same-label points among their 5 nearest
/// neighbors (self excluded).
double knn_acc(const std::vector<double>& embeddings, std::size_t n, std::size_t dim,
               const std::vector<int>& labels, std::size_t k = 5);

/// Neighbor ranking by distance with index tie-break; first k entries.
std::vector<std::size_t> nearest_neighbors(const std::vector<double>& embeddings,
                                           std::size_t n, std::size_t dim,
                                           std::size_t query, std::size_t k);

}  // namespace zslmetric

#endif  // ZSLMETRIC_METRICS_HPP
