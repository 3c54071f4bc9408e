// Copyright 2026 The filmdiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Average-linkage agglomerative clustering of speaker embeddings under
// cosine distance.
//
// Clusters live in slots named after their earliest record index; merging
// slots i < j keeps i. The closest pair is found through a per-slot cache of
// the nearest higher-numbered slot, so a merge costs O(N) in the common case
// instead of a full O(N^2) rescan. Ties resolve to the smallest (i, j).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "filmdiar/core.hpp"
#include "filmdiar/detail/parallel.hpp"
#include "filmdiar/error.hpp"
#include "filmdiar/ioformats.hpp"

namespace filmdiar {

struct ThresholdStop {
  double tau = 0.5;  // merge while the closest pair is within tau
};

struct FixedCount {
  std::size_t k = 30;
};

struct ClusterConfig {
  std::variant<ThresholdStop, FixedCount> mode = ThresholdStop{};
  std::size_t workers = 0;  // distance matrix threads; 0 = hardware

  static ClusterConfig threshold(double tau) { return {ThresholdStop{tau}}; }
  static ClusterConfig fixed_k(std::size_t k) { return {FixedCount{k}}; }

  void validate() const {
    if (const auto *t = std::get_if<ThresholdStop>(&mode)) {
      if (!(t->tau > 0.0 && t->tau < 2.0)) {
        throw InvalidArgument("cluster threshold tau must lie in (0, 2)");
      }
    } else if (std::get<FixedCount>(mode).k < 1) {
      throw InvalidArgument("cluster count K must be >= 1");
    }
  }
};

struct MergeStep {
  std::size_t kept;    // slot that absorbs the other
  std::size_t merged;  // slot that disappears
  double distance;
};

struct ClusterResult {
  std::vector<int> labels;  // aligned with input records, 0..C-1
  std::vector<std::vector<double>> centroids;
  std::vector<MergeStep> merges;  // in merge order

  std::size_t num_clusters() const { return centroids.size(); }
};

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// 1 - cos(u, v), clamped to [0, 2].
inline double cosine_distance(std::span<const double> u,
                              std::span<const double> v) {
  if (u.size() != v.size()) {
    throw InvalidArgument("dimension mismatch: " + std::to_string(u.size()) +
                          " vs " + std::to_string(v.size()));
  }
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) {
    throw InvalidArgument("cosine distance of a zero-norm vector");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
  return std::clamp(1.0 - dot / (nu * nv), 0.0, 2.0);
}

namespace internal {

/// Upper-triangle distance storage.
class CondensedMatrix {
 public:
  explicit CondensedMatrix(std::size_t n)
      : n_(n), data_(n < 2 ? 0 : n * (n - 1) / 2) {}

  double &at(std::size_t i, std::size_t j) {
    return data_[Index(std::min(i, j), std::max(i, j))];
  }
  double at(std::size_t i, std::size_t j) const {
    return data_[Index(std::min(i, j), std::max(i, j))];
  }

 private:
  std::size_t Index(std::size_t i, std::size_t j) const {
    return i * (2 * n_ - i - 1) / 2 + (j - i - 1);
  }

  std::size_t n_;
  std::vector<double> data_;
};

}  // namespace internal

inline ClusterResult agglomerate(std::span<const std::vector<double>> vectors,
                                 const ClusterConfig &cfg) {
  cfg.validate();
  const std::size_t n = vectors.size();
  if (n == 0) throw InvalidArgument("cannot cluster an empty record set");
  const std::size_t dim = vectors[0].size();

  std::vector<std::vector<double>> unit(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (vectors[i].size() != dim) {
      throw InvalidArgument("record " + std::to_string(i) + ": dim " +
                            std::to_string(vectors[i].size()) +
                            " != " + std::to_string(dim));
    }
    const double len = norm(vectors[i]);
    if (len == 0.0 || !std::isfinite(len)) {
      throw InvalidArgument("record " + std::to_string(i) +
                            ": zero-norm or non-finite embedding");
    }
    unit[i].resize(dim);
    for (std::size_t d = 0; d < dim; ++d) unit[i][d] = vectors[i][d] / len;
  }

  internal::CondensedMatrix dist(n);
  const std::size_t workers =
      cfg.workers ? cfg.workers : detail::default_workers();
  detail::parallel_for(n, workers, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += unit[i][d] * unit[j][d];
      dist.at(i, j) = std::clamp(1.0 - dot, 0.0, 2.0);
    }
  });

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> size(n, 1);
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  std::vector<std::size_t> nn(n, kNone);
  std::vector<double> nn_dist(n, kInf);

  // nearest active slot above i, smallest index on ties
  auto refresh = [&](std::size_t i) {
    nn[i] = kNone;
    nn_dist[i] = kInf;
    auto it = std::upper_bound(active.begin(), active.end(), i);
    for (; it != active.end(); ++it) {
      const double d = dist.at(i, *it);
      if (d < nn_dist[i]) {
        nn_dist[i] = d;
        nn[i] = *it;
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) refresh(i);

  std::size_t target = 1;
  std::optional<double> tau;
  if (const auto *t = std::get_if<ThresholdStop>(&cfg.mode)) {
    tau = t->tau;
  } else {
    target = std::min(std::get<FixedCount>(cfg.mode).k, n);
  }

  ClusterResult result;
  while (active.size() > target) {
    std::size_t i = kNone;
    for (std::size_t a : active) {
      if (nn[a] != kNone && (i == kNone || nn_dist[a] < nn_dist[i])) i = a;
    }
    if (i == kNone) break;
    const double d = nn_dist[i];
    if (tau && d > *tau) break;
    const std::size_t j = nn[i];

    const double wi = static_cast<double>(size[i]);
    const double wj = static_cast<double>(size[j]);
    for (std::size_t k : active) {
      if (k == i || k == j) continue;
      dist.at(i, k) = (wi * dist.at(i, k) + wj * dist.at(j, k)) / (wi + wj);
    }
    size[i] += size[j];
    active.erase(std::lower_bound(active.begin(), active.end(), j));
    result.merges.push_back({i, j, d});

    refresh(i);
    for (std::size_t k : active) {
      if (k >= j) break;
      if (k < i) {
        if (nn[k] == i || nn[k] == j) {
          refresh(k);
        } else {
          const double dk = dist.at(k, i);
          if (dk < nn_dist[k] || (dk == nn_dist[k] && i < nn[k])) {
            nn[k] = i;
            nn_dist[k] = dk;
          }
        }
      } else if (k > i && nn[k] == j) {
        refresh(k);
      }
    }
  }

  // slots are earliest record indices, so ascending slot order numbers the
  // clusters by first appearance
  std::vector<int> slot_label(n, -1);
  for (std::size_t c = 0; c < active.size(); ++c) {
    slot_label[active[c]] = static_cast<int>(c);
  }
  // resolve each record to its surviving slot by replaying merges backwards
  std::vector<std::size_t> owner(n);
  for (std::size_t r = 0; r < n; ++r) owner[r] = r;
  for (auto it = result.merges.rbegin(); it != result.merges.rend(); ++it) {
    owner[it->merged] = owner[it->kept];
  }
  result.labels.resize(n);
  result.centroids.assign(active.size(), std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(active.size(), 0);
  for (std::size_t r = 0; r < n; ++r) {
    const int label = slot_label[owner[r]];
    result.labels[r] = label;
    ++counts[label];
    for (std::size_t d = 0; d < dim; ++d) result.centroids[label][d] += vectors[r][d];
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (double &x : result.centroids[c]) x /= static_cast<double>(counts[c]);
  }
  return result;
}

inline ClusterResult agglomerate(const std::vector<EmbeddingRecord> &records,
                                 const ClusterConfig &cfg) {
  std::vector<std::vector<double>> vectors;
  vectors.reserve(records.size());
  for (const auto &r : records) vectors.push_back(r.vector);
  return agglomerate(std::span<const std::vector<double>>(vectors), cfg);
}

/// One turn per record labelled "spk<label>"; same-speaker turns coalesce.
inline Annotation to_annotation(const std::vector<EmbeddingRecord> &records,
                                const ClusterResult &result,
                                const std::string &recording_id) {
  if (records.size() != result.labels.size()) {
    throw InvalidArgument("cluster labels do not align with records");
  }
  std::vector<SpeakerTurn> turns;
  turns.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    turns.emplace_back(records[i].interval,
                       "spk" + std::to_string(result.labels[i]));
  }
  return Annotation(recording_id, std::move(turns));
}

}  // namespace filmdiar
