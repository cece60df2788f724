#include "zslmetric/tuples.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "zslmetric/errors.hpp"

namespace zslmetric {

void FeatureBatch::validate() const {
  if (n < 2) throw ContractError("feature batch needs n >= 2");
  if (features.size() != n * dim) {
    throw ContractError("feature batch: values size does not match n x dim");
  }
  if (labels.size() != n) throw ContractError("feature batch: one label per row required");
  for (double v : features) {
    if (!std::isfinite(v)) throw ContractError("feature batch: non-finite feature value");
  }
}

std::vector<double> pairwise_distances(const FeatureBatch& batch) {
  batch.validate();
  std::vector<double> d(batch.n * batch.n, 0.0);
  for (std::size_t i = 0; i < batch.n; ++i) {
    const double* ri = batch.row(i);
    for (std::size_t j = i + 1; j < batch.n; ++j) {
      const double* rj = batch.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < batch.dim; ++k) {
        const double diff = ri[k] - rj[k];
        acc += diff * diff;
      }
      const double dist = std::sqrt(acc);
      d[i * batch.n + j] = dist;
      d[j * batch.n + i] = dist;
    }
  }
  return d;
}

namespace {

// class id -> member row indices, in row order
std::map<int, std::vector<std::size_t>> group_by_class(const FeatureBatch& batch) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < batch.n; ++i) groups[batch.labels[i]].push_back(i);
  return groups;
}

std::size_t pick_other(const std::vector<std::size_t>& pool, std::size_t exclude, Rng& rng) {
  // pool has >= 2 members including exclude
  std::size_t r;
  do {
    r = pool[rng.uniform_index(pool.size())];
  } while (r == exclude);
  return r;
}

std::vector<std::size_t> rows_not_in_class(const FeatureBatch& batch, int cls) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < batch.n; ++i)
    if (batch.labels[i] != cls) out.push_back(i);
  return out;
}

}  // namespace

TripletSet sample_easy(const FeatureBatch& batch, std::size_t per_anchor, Rng& rng) {
  batch.validate();
  TripletSet out;
  auto groups = group_by_class(batch);
  if (groups.size() < 2) {
    out.single_class = true;
    return out;
  }
  for (std::size_t a = 0; a < batch.n; ++a) {
    const auto& mine = groups[batch.labels[a]];
    if (mine.size() < 2) continue;  // no positive exists
    auto others = rows_not_in_class(batch, batch.labels[a]);
    for (std::size_t k = 0; k < per_anchor; ++k) {
      Triplet t;
      t.anchor = a;
      t.positive = pick_other(mine, a, rng);
      t.negative = others[rng.uniform_index(others.size())];
      out.items.push_back(t);
    }
  }
  return out;
}

TripletSet sample_hard(const FeatureBatch& batch, Rng& rng) {
  batch.validate();
  TripletSet out;
  auto groups = group_by_class(batch);
  if (groups.size() < 2) {
    out.single_class = true;
    return out;
  }
  const auto dist = pairwise_distances(batch);
  for (const auto& [cls, members] : groups) {
    if (members.size() < 2) continue;
    auto others = rows_not_in_class(batch, cls);
    for (std::size_t a : members) {
      for (std::size_t p : members) {
        if (p == a) continue;
        const double dpos = dist[a * batch.n + p];
        std::vector<std::size_t> eligible;
        for (std::size_t neg : others) {
          if (dist[a * batch.n + neg] < dpos) eligible.push_back(neg);
        }
        if (eligible.empty()) continue;  // skipping is normal
        out.items.push_back({a, p, eligible[rng.uniform_index(eligible.size())], false});
      }
    }
  }
  return out;
}

TripletSet sample_semihard(const FeatureBatch& batch, double margin, Rng& rng) {
  if (margin <= 0.0) {
    throw ParamError("sample_semihard: margin must be positive, got " +
                     std::to_string(margin));
  }
  batch.validate();
  TripletSet out;
  auto groups = group_by_class(batch);
  if (groups.size() < 2) {
    out.single_class = true;
    return out;
  }
  const auto dist = pairwise_distances(batch);
  for (const auto& [cls, members] : groups) {
    if (members.size() < 2) continue;
    auto others = rows_not_in_class(batch, cls);
    for (std::size_t a : members) {
      for (std::size_t p : members) {
        if (p == a) continue;
        const double dpos = dist[a * batch.n + p];
        std::vector<std::size_t> eligible;
        for (std::size_t neg : others) {
          const double dneg = dist[a * batch.n + neg];
          if (dpos < dneg && dneg - dpos < margin) eligible.push_back(neg);
        }
        if (!eligible.empty()) {
          out.items.push_back({a, p, eligible[rng.uniform_index(eligible.size())], false});
        } else {
          // keep small batches training on an easy negative, flagged
          out.items.push_back({a, p, others[rng.uniform_index(others.size())], true});
        }
      }
    }
  }
  return out;
}

std::vector<NTuple> sample_npair(const FeatureBatch& batch, Rng& rng) {
  batch.validate();
  auto groups = group_by_class(batch);
  if (groups.size() < 2) return {};
  std::vector<NTuple> out;
  for (std::size_t a = 0; a < batch.n; ++a) {
    const auto& mine = groups[batch.labels[a]];
    if (mine.size() < 2) continue;  // cannot anchor without a positive
    NTuple t;
    t.anchor = a;
    t.positive = pick_other(mine, a, rng);
    for (const auto& [cls, members] : groups) {
      if (cls == batch.labels[a]) continue;
      t.negatives.push_back(members[rng.uniform_index(members.size())]);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace zslmetric
