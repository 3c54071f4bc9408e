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

// Glue between diarization, transcription and character analysis:
// label transcript segments with diarized speakers, pick the main
// characters, and collect each one's utterances into a dossier.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "filmdiar/core.hpp"
#include "filmdiar/error.hpp"
#include "filmdiar/ioformats.hpp"
#include "filmdiar/vad.hpp"

namespace filmdiar {

inline const std::string kUnknownSpeaker = "unknown";

// ---------------------------------------------------------------------------
// Alignment

struct AlignOptions {
  double snap_s = 0.5;  // max gap for attributing a segment that overlaps nothing
};

namespace internal {

struct Candidate {
  const std::string *speaker = nullptr;
  double score = 0.0;        // overlap, or gap when nothing overlaps
  double first_start = 0.0;  // earliest contributing turn
};

}  // namespace internal

/// Speaker with the largest total overlap; ties go to the speaker whose
/// overlapping turn starts first, then to the smaller label. Segments that
/// overlap no turn take the nearest turn's speaker within `snap_s`, else
/// "unknown". Existing speaker fields are overwritten.
inline std::vector<TranscriptSegment> align_transcript(
    const Annotation &diarization, std::vector<TranscriptSegment> segments,
    const AlignOptions &opts = {}) {
  const auto &turns = diarization.turns();
  double longest = 0.0;
  for (const auto &t : turns) longest = std::max(longest, t.duration());

  for (auto &seg : segments) {
    std::map<std::string, internal::Candidate> by_speaker;
    auto it = std::lower_bound(
        turns.begin(), turns.end(), seg.start() - longest,
        [](const SpeakerTurn &t, double v) { return t.start() < v; });
    for (; it != turns.end() && it->start() < seg.end(); ++it) {
      const double ov = overlap_duration(it->interval(), seg.interval);
      if (ov <= 0.0) continue;
      auto [c, inserted] = by_speaker.try_emplace(it->speaker());
      if (inserted) {
        c->second.speaker = &it->speaker();
        c->second.first_start = it->start();
      }
      c->second.score += ov;
    }

    const internal::Candidate *best = nullptr;
    for (const auto &[label, c] : by_speaker) {
      if (!best || c.score > best->score ||
          (c.score == best->score && c.first_start < best->first_start)) {
        best = &c;
      }
    }
    if (best) {
      seg.speaker = *best->speaker;
      continue;
    }

    const SpeakerTurn *nearest = nullptr;
    double nearest_gap = std::numeric_limits<double>::infinity();
    for (const auto &t : turns) {
      const double gap = t.end() <= seg.start() ? seg.start() - t.end()
                                                : t.start() - seg.end();
      if (gap < nearest_gap ||
          (gap == nearest_gap && nearest &&
           (t.start() < nearest->start() ||
            (t.start() == nearest->start() && t.speaker() < nearest->speaker())))) {
        nearest = &t;
        nearest_gap = gap;
      }
    }
    seg.speaker = nearest && nearest_gap <= opts.snap_s ? nearest->speaker()
                                                        : kUnknownSpeaker;
  }
  return segments;
}

// ---------------------------------------------------------------------------
// Main speaker selection

struct SelectionConfig {
  double min_speech_s = 2.0;
  double fence_multiplier = 1.5;

  void validate() const {
    if (!(min_speech_s >= 0.0)) throw InvalidArgument("min_speech_s must be >= 0");
    if (!(fence_multiplier > 0.0)) {
      throw InvalidArgument("fence_multiplier must be > 0");
    }
  }
};

struct SpeakerCount {
  std::string speaker;
  std::size_t count = 0;  // turns longer than min_speech_s
  bool selected = false;
};

/// Histogram of long-speech counts per speaker, with the upper fence
/// Q3 + k * (Q3 - Q1) and the resulting selection.
struct SpeakerHistogram {
  std::vector<SpeakerCount> speakers;  // label order
  double q1 = 0.0;
  double q3 = 0.0;
  double fence = 0.0;
  bool fallback = false;  // nobody cleared the fence; top count(s) taken
  SelectionConfig config;

  /// Selected speakers, most long speeches first, then by label.
  std::vector<std::string> selected() const {
    std::vector<const SpeakerCount *> sel;
    for (const auto &s : speakers)
      if (s.selected) sel.push_back(&s);
    std::stable_sort(sel.begin(), sel.end(),
                     [](const SpeakerCount *a, const SpeakerCount *b) {
                       return a->count > b->count;
                     });
    std::vector<std::string> out;
    for (const auto *s : sel) out.push_back(s->speaker);
    return out;
  }
};

inline SpeakerHistogram speech_histogram(const Annotation &diarization,
                                         const SelectionConfig &cfg = {}) {
  cfg.validate();
  if (diarization.empty()) throw InvalidArgument("empty diarization");

  std::map<std::string, std::size_t> counts;
  for (const auto &t : diarization.turns()) {
    auto &c = counts[t.speaker()];
    if (t.duration() > cfg.min_speech_s) ++c;
  }

  SpeakerHistogram h;
  h.config = cfg;
  std::vector<double> values;
  std::size_t max_count = 0;
  for (const auto &[speaker, c] : counts) {
    h.speakers.push_back({speaker, c, false});
    values.push_back(static_cast<double>(c));
    max_count = std::max(max_count, c);
  }
  if (max_count == 0) {
    throw Error("no speech segments exceed minimum duration");
  }

  h.q1 = percentile(values, 0.25);
  h.q3 = percentile(values, 0.75);
  h.fence = h.q3 + cfg.fence_multiplier * (h.q3 - h.q1);

  bool any = false;
  for (auto &s : h.speakers) {
    s.selected = static_cast<double>(s.count) > h.fence;
    any = any || s.selected;
  }
  if (!any) {
    h.fallback = true;
    for (auto &s : h.speakers) s.selected = s.count == max_count;
  }
  return h;
}

inline std::vector<std::string> select_main_speakers(
    const Annotation &diarization, const SelectionConfig &cfg = {}) {
  return speech_histogram(diarization, cfg).selected();
}

inline std::string histogram_to_json(const SpeakerHistogram &h,
                                     const std::string &recording_id) {
  nlohmann::ordered_json j;
  j["recording"] = recording_id;
  j["min_speech_s"] = h.config.min_speech_s;
  j["fence_multiplier"] = h.config.fence_multiplier;
  j["q1"] = h.q1;
  j["q3"] = h.q3;
  j["fence"] = h.fence;
  j["fallback"] = h.fallback;
  j["speakers"] = nlohmann::ordered_json::array();
  for (const auto &s : h.speakers) {
    nlohmann::ordered_json e;
    e["speaker"] = s.speaker;
    e["count"] = s.count;
    e["selected"] = s.selected;
    j["speakers"].push_back(std::move(e));
  }
  j["main_speakers"] = h.selected();
  return j.dump(2) + "\n";
}

inline SpeakerHistogram histogram_from_json(const nlohmann::json &j) {
  SpeakerHistogram h;
  try {
    h.config.min_speech_s = j.at("min_speech_s").get<double>();
    h.config.fence_multiplier = j.at("fence_multiplier").get<double>();
    h.q1 = j.at("q1").get<double>();
    h.q3 = j.at("q3").get<double>();
    h.fence = j.at("fence").get<double>();
    h.fallback = j.at("fallback").get<bool>();
    for (const auto &e : j.at("speakers")) {
      h.speakers.push_back({e.at("speaker").get<std::string>(),
                            e.at("count").get<std::size_t>(),
                            e.at("selected").get<bool>()});
    }
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid histogram document: ") + e.what(), 0);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Dossiers

struct Utterance {
  TimeInterval interval;
  std::string text;

  friend bool operator==(const Utterance &, const Utterance &) = default;
};

struct SpeakerDossier {
  std::string speaker;
  std::vector<Utterance> utterances;  // temporal order
  double total_speech_s = 0.0;
  std::size_t segment_count_over_min = 0;

  friend bool operator==(const SpeakerDossier &, const SpeakerDossier &) = default;
};

/// One dossier per main speaker, in the order given. Text is passed through
/// untouched; non-speech events are left out.
inline std::vector<SpeakerDossier> build_dossiers(
    const std::vector<TranscriptSegment> &aligned,
    const std::vector<std::string> &main_speakers,
    double min_speech_s = SelectionConfig{}.min_speech_s,
    Warnings *warnings = nullptr) {
  std::vector<SpeakerDossier> out;
  for (const auto &speaker : main_speakers) {
    if (speaker == kUnknownSpeaker) {
      if (warnings) warnings->add("'unknown' cannot be a dossier speaker");
      continue;
    }
    SpeakerDossier d;
    d.speaker = speaker;
    for (const auto &seg : aligned) {
      if (seg.non_speech || seg.speaker != speaker) continue;
      d.utterances.push_back({seg.interval, seg.text});
    }
    if (d.utterances.empty()) {
      if (warnings) {
        warnings->add("main speaker '" + speaker +
                      "' has no aligned utterances; dossier omitted");
      }
      continue;
    }
    std::stable_sort(d.utterances.begin(), d.utterances.end(),
                     [](const Utterance &a, const Utterance &b) {
                       return a.interval < b.interval;
                     });
    for (const auto &u : d.utterances) {
      d.total_speech_s += u.interval.duration();
      if (u.interval.duration() > min_speech_s) ++d.segment_count_over_min;
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline std::string dossier_to_json(const SpeakerDossier &d,
                                   const std::string &recording_id) {
  nlohmann::ordered_json j;
  j["recording"] = recording_id;
  j["speaker"] = d.speaker;
  j["total_speech_s"] = d.total_speech_s;
  j["segment_count_over_min"] = d.segment_count_over_min;
  j["utterances"] = nlohmann::ordered_json::array();
  for (const auto &u : d.utterances) {
    nlohmann::ordered_json e;
    e["start"] = u.interval.start();
    e["end"] = u.interval.end();
    e["text"] = u.text;
    j["utterances"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

inline SpeakerDossier dossier_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid dossier JSON: ") + e.what(), 0);
  }
  SpeakerDossier d;
  try {
    d.speaker = j.at("speaker").get<std::string>();
    d.total_speech_s = j.at("total_speech_s").get<double>();
    d.segment_count_over_min = j.at("segment_count_over_min").get<std::size_t>();
    const auto &utts = j.at("utterances");
    for (std::size_t i = 0; i < utts.size(); ++i) {
      const auto &u = utts[i];
      try {
        d.utterances.push_back({TimeInterval(u.at("start").get<double>(),
                                             u.at("end").get<double>()),
                                u.at("text").get<std::string>()});
      } catch (const InvalidArgument &e) {
        throw ParseError("utterance " + std::to_string(i) + ": " + e.what(), i);
      }
    }
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid dossier document: ") + e.what(), 0);
  }
  return d;
}

inline SpeakerDossier read_dossier_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dossier file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return dossier_from_json(ss.str());
}

}  // namespace filmdiar
