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

// Diarization error rate.
//
// Both annotations are cut into elementary intervals. Inside one interval of
// duration d, with reference speakers R, hypothesis speakers H and a global
// hypothesis->reference mapping M:
//
//   missed      += d * max(0, |R| - |H|)
//   false alarm += d * max(0, |H| - |R|)
//   confusion   += d * (min(|R|, |H|) - |{(r, h) : r in R, h in H, M(h) = r}|)
//   total ref   += d * |R|
//
// M is the one-to-one mapping that maximises co-occurring time over the
// scored region. Collars remove +-c around every reference boundary. DER is
// unbounded above: a hypothesis that talks over a sparse reference can score
// well past 100%.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "filmdiar/assignment.hpp"
#include "filmdiar/core.hpp"
#include "filmdiar/detail/parallel.hpp"
#include "filmdiar/error.hpp"

namespace filmdiar {

/// hypothesis speaker -> reference speaker
using SpeakerMapping = std::map<std::string, std::string>;

inline constexpr double kDefaultCollar = 0.25;

struct DerOptions {
  double collar_s = kDefaultCollar;
  bool score_overlap = true;
};

struct DerReport {
  std::string recording_id;
  double missed_s = 0.0;
  double false_alarm_s = 0.0;
  double confusion_s = 0.0;
  double total_ref_s = 0.0;
  double der = 0.0;
  SpeakerMapping mapping;
  double collar_s = 0.0;
  bool score_overlap = true;

  double error_s() const { return missed_s + false_alarm_s + confusion_s; }
};

/// A piece of the scored region with constant speaker sets.
struct ScoredInterval {
  double duration;
  const std::set<std::string> *ref;
  const std::set<std::string> *hyp;
};

/// Mapping over already-weighted intervals; rows are reference speakers in
/// label order, columns hypothesis speakers in label order.
inline SpeakerMapping optimal_mapping(const std::vector<ScoredInterval> &pieces) {
  std::map<std::string, std::size_t> ref_index, hyp_index;
  for (const auto &p : pieces) {
    for (const auto &r : *p.ref) ref_index.emplace(r, 0);
    for (const auto &h : *p.hyp) hyp_index.emplace(h, 0);
  }
  std::vector<std::string> refs, hyps;
  for (auto &[s, idx] : ref_index) {
    idx = refs.size();
    refs.push_back(s);
  }
  for (auto &[s, idx] : hyp_index) {
    idx = hyps.size();
    hyps.push_back(s);
  }

  WeightMatrix overlap(refs.size(), std::vector<double>(hyps.size(), 0.0));
  for (const auto &p : pieces) {
    for (const auto &r : *p.ref) {
      for (const auto &h : *p.hyp) {
        overlap[ref_index[r]][hyp_index[h]] += p.duration;
      }
    }
  }

  const Assignment a = max_weight_assignment(overlap);
  SpeakerMapping mapping;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    if (a.row_to_col[r] >= 0) mapping[hyps[a.row_to_col[r]]] = refs[r];
  }
  return mapping;
}

/// Error-minimising one-to-one speaker correspondence over the whole
/// recording (no collar, overlap included).
inline SpeakerMapping optimal_mapping(const Annotation &ref,
                                      const Annotation &hyp) {
  const auto elems = elementary_intervals(ref, hyp);
  std::vector<ScoredInterval> pieces;
  pieces.reserve(elems.size());
  for (const auto &e : elems) {
    pieces.push_back({e.span.duration(), &e.in_a, &e.in_b});
  }
  return optimal_mapping(pieces);
}

/// Reference boundary neighbourhoods excluded from scoring.
inline std::vector<TimeInterval> collar_zones(const Annotation &ref,
                                              double collar_s) {
  if (!(collar_s > 0.0)) return {};
  std::vector<TimeInterval> zones;
  zones.reserve(2 * ref.size());
  for (const auto &t : ref.turns()) {
    for (double b : {t.start(), t.end()}) {
      zones.emplace_back(std::max(0.0, b - collar_s), b + collar_s);
    }
  }
  return Timeline(ref.recording_id(), std::move(zones)).intervals();
}

inline DerReport score_der(const Annotation &ref, const Annotation &hyp,
                           const DerOptions &opts = {}) {
  if (!(opts.collar_s >= 0.0)) throw InvalidArgument("collar must be >= 0");
  const auto elems = elementary_intervals(ref, hyp);
  const auto zones = collar_zones(ref, opts.collar_s);

  std::vector<ScoredInterval> pieces;
  pieces.reserve(elems.size());
  std::size_t z = 0;
  for (const auto &e : elems) {
    if (!opts.score_overlap && e.in_a.size() > 1) continue;
    const double s = e.span.start();
    const double end = e.span.end();
    while (z < zones.size() && zones[z].end() <= s) ++z;
    double cursor = s;
    for (std::size_t k = z; k < zones.size() && zones[k].start() < end; ++k) {
      if (zones[k].start() > cursor) {
        pieces.push_back({zones[k].start() - cursor, &e.in_a, &e.in_b});
      }
      cursor = std::max(cursor, zones[k].end());
      if (cursor >= end) break;
    }
    if (cursor < end) pieces.push_back({end - cursor, &e.in_a, &e.in_b});
  }

  DerReport report;
  report.recording_id = ref.recording_id();
  report.collar_s = opts.collar_s;
  report.score_overlap = opts.score_overlap;
  report.mapping = optimal_mapping(pieces);

  for (const auto &p : pieces) {
    const double nr = static_cast<double>(p.ref->size());
    const double nh = static_cast<double>(p.hyp->size());
    std::size_t correct = 0;
    for (const auto &h : *p.hyp) {
      auto it = report.mapping.find(h);
      if (it != report.mapping.end() && p.ref->count(it->second)) ++correct;
    }
    report.missed_s += p.duration * std::max(0.0, nr - nh);
    report.false_alarm_s += p.duration * std::max(0.0, nh - nr);
    report.confusion_s +=
        p.duration * (std::min(nr, nh) - static_cast<double>(correct));
    report.total_ref_s += p.duration * nr;
  }
  if (!(report.total_ref_s > 0.0)) {
    throw ScoringError("no scorable reference speech in '" +
                       ref.recording_id() + "'");
  }
  report.der = report.error_s() / report.total_ref_s;
  return report;
}

struct RecordingScore {
  std::string recording_id;
  std::optional<DerReport> report;  // empty when scoring failed
  std::string error;
};

struct AggregateDer {
  double missed_s = 0.0;
  double false_alarm_s = 0.0;
  double confusion_s = 0.0;
  double total_ref_s = 0.0;
  double der_weighted = 0.0;  // summed errors / summed reference time
  double der_mean = 0.0;      // unweighted mean of per-recording DER
  std::size_t recordings = 0;
};

struct CorpusReport {
  std::vector<RecordingScore> recordings;
  std::optional<AggregateDer> aggregate;  // empty when nothing was scored
  std::vector<std::string> warnings;
};

inline std::optional<AggregateDer> aggregate_der(
    const std::vector<DerReport> &reports) {
  if (reports.empty()) return std::nullopt;
  AggregateDer agg;
  double der_sum = 0.0;
  for (const auto &r : reports) {
    agg.missed_s += r.missed_s;
    agg.false_alarm_s += r.false_alarm_s;
    agg.confusion_s += r.confusion_s;
    agg.total_ref_s += r.total_ref_s;
    der_sum += r.der;
  }
  agg.recordings = reports.size();
  agg.der_weighted =
      (agg.missed_s + agg.false_alarm_s + agg.confusion_s) / agg.total_ref_s;
  agg.der_mean = der_sum / static_cast<double>(reports.size());
  return agg;
}

/// Scores each (reference, hypothesis) pair independently. A pair that
/// cannot be scored is reported with its error and left out of aggregates.
inline CorpusReport score_corpus(
    const std::vector<std::pair<Annotation, Annotation>> &pairs,
    const DerOptions &opts = {}, std::size_t workers = 1) {
  if (pairs.empty()) throw InvalidArgument("score_corpus needs at least one pair");
  CorpusReport out;
  out.recordings.resize(pairs.size());
  detail::parallel_for(pairs.size(), workers, [&](std::size_t i) {
    auto &slot = out.recordings[i];
    slot.recording_id = pairs[i].first.recording_id();
    try {
      slot.report = score_der(pairs[i].first, pairs[i].second, opts);
    } catch (const Error &e) {
      slot.error = e.what();
    }
  });

  std::vector<DerReport> scored;
  for (const auto &r : out.recordings) {
    if (r.report) {
      scored.push_back(*r.report);
    } else {
      out.warnings.push_back("recording '" + r.recording_id +
                             "' unscored: " + r.error);
    }
  }
  out.aggregate = aggregate_der(scored);
  return out;
}

}  // namespace filmdiar
