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

// Readers and writers for the files exchanged between pipeline stages:
//
//   RTTM         SPEAKER <file> <chan> <onset> <dur> <NA> <NA> <spk> <NA> <NA>
//   transcript   {"recording": "...", "segments": [{"start", "end", "text",
//                 "speaker"?, "confidence"?, "non_speech"?}, ...]}
//   embeddings   one {"start", "end", "vector": [...]} object per line
//
// Every reader reports malformed input as ParseError; nothing else escapes.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "filmdiar/core.hpp"
#include "filmdiar/detail/decimal.hpp"
#include "filmdiar/error.hpp"

namespace filmdiar {

// ---------------------------------------------------------------------------
// RTTM

struct RttmDocument {
  std::map<std::string, Annotation> recordings;
  std::size_t skipped_lines = 0;  // non-SPEAKER line types
};

namespace internal {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    const std::size_t j = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i > j) out.push_back(line.substr(j, i - j));
  }
  return out;
}

inline ParseError line_error(std::size_t line_no, const std::string &what) {
  return ParseError("line " + std::to_string(line_no) + ": " + what, line_no);
}

}  // namespace internal

inline RttmDocument parse_rttm(std::istream &in) {
  std::map<std::string, std::vector<SpeakerTurn>> turns;
  RttmDocument doc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = internal::split_ws(line);
    if (fields.empty()) continue;
    if (fields[0] != "SPEAKER") {
      ++doc.skipped_lines;
      continue;
    }
    if (fields.size() != 10) {
      throw internal::line_error(
          line_no, "expected 10 fields, got " + std::to_string(fields.size()));
    }
    const auto onset = detail::parse_real(fields[3]);
    if (!onset) {
      throw internal::line_error(
          line_no, "non-numeric onset '" + std::string(fields[3]) + "'");
    }
    const auto duration = detail::parse_real(fields[4]);
    if (!duration) {
      throw internal::line_error(
          line_no, "non-numeric duration '" + std::string(fields[4]) + "'");
    }
    if (*duration <= 0.0) {
      throw internal::line_error(line_no, "non-positive duration " +
                                              std::string(fields[4]));
    }
    const auto end = detail::add_decimals(fields[3], fields[4]);
    try {
      turns[std::string(fields[1])].emplace_back(*onset, end.value_or(0.0),
                                                 std::string(fields[7]));
    } catch (const InvalidArgument &e) {
      throw internal::line_error(line_no, e.what());
    }
  }
  for (auto &[id, t] : turns) {
    doc.recordings.emplace(id, Annotation(id, std::move(t)));
  }
  return doc;
}

inline RttmDocument parse_rttm(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_rttm(in);
}

inline RttmDocument read_rttm_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open RTTM file: " + path);
  return parse_rttm(in);
}

/// One SPEAKER line; times rounded half-up to milliseconds.
inline std::string format_rttm_line(const std::string &recording_id,
                                    const SpeakerTurn &turn) {
  const std::int64_t onset = detail::round_to_millis(turn.start());
  const std::int64_t end = detail::round_to_millis(turn.end());
  // sub-millisecond turns would otherwise round to an unparseable 0.000
  const std::int64_t duration = std::max<std::int64_t>(end - onset, 1);
  std::string out = "SPEAKER ";
  out += recording_id;
  out += " 1 ";
  out += detail::format_millis(onset);
  out += ' ';
  out += detail::format_millis(duration);
  out += " <NA> <NA> ";
  out += turn.speaker();
  out += " <NA> <NA>\n";
  return out;
}

inline std::string write_rttm(const std::vector<Annotation> &annotations) {
  std::string out;
  for (const auto &a : annotations) {
    for (const auto &t : a.turns()) out += format_rttm_line(a.recording_id(), t);
  }
  return out;
}

inline std::string write_rttm(const std::map<std::string, Annotation> &by_id) {
  std::string out;
  for (const auto &[id, a] : by_id) {
    for (const auto &t : a.turns()) out += format_rttm_line(id, t);
  }
  return out;
}

inline std::string write_rttm(const Annotation &annotation) {
  return write_rttm(std::vector<Annotation>{annotation});
}

// ---------------------------------------------------------------------------
// Transcript

struct TranscriptSegment {
  TimeInterval interval;
  std::string text;
  std::optional<std::string> speaker;
  std::optional<double> confidence;
  bool non_speech = false;  // music, noise etc.; only these may have no text

  double start() const noexcept { return interval.start(); }
  double end() const noexcept { return interval.end(); }

  friend bool operator==(const TranscriptSegment &,
                         const TranscriptSegment &) = default;
};

struct Transcript {
  std::string recording_id;
  std::vector<TranscriptSegment> segments;

  friend bool operator==(const Transcript &, const Transcript &) = default;
};

namespace internal {

inline ParseError segment_error(std::size_t index, const std::string &what) {
  return ParseError("segment " + std::to_string(index) + ": " + what, index);
}

inline double require_number(const nlohmann::json &obj, const char *key,
                             std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw segment_error(index, std::string("missing field '") + key + "'");
  }
  if (!it->is_number()) {
    throw segment_error(index, std::string("field '") + key + "' is not a number");
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) {
    throw segment_error(index, std::string("field '") + key + "' is not finite");
  }
  return v;
}

inline nlohmann::json parse_json(std::istream &in, std::size_t location) {
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), location);
  }
}

inline TranscriptSegment segment_from_json(const nlohmann::json &s,
                                           std::size_t index) {
  if (!s.is_object()) throw segment_error(index, "not an object");
  const double start = require_number(s, "start", index);
  const double end = require_number(s, "end", index);
  auto text_it = s.find("text");
  if (text_it == s.end()) throw segment_error(index, "missing field 'text'");
  if (!text_it->is_string()) {
    throw segment_error(index, "field 'text' is not a string");
  }

  bool non_speech = false;
  if (auto it = s.find("non_speech"); it != s.end()) {
    if (!it->is_boolean()) {
      throw segment_error(index, "field 'non_speech' is not a boolean");
    }
    non_speech = it->get<bool>();
  }
  std::string text = text_it->get<std::string>();
  if (text.empty() && !non_speech) {
    throw segment_error(index, "empty text on a speech segment");
  }

  std::optional<std::string> speaker;
  if (auto it = s.find("speaker"); it != s.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw segment_error(index, "field 'speaker' is not a string");
    }
    speaker = it->get<std::string>();
    try {
      validate_speaker_label(*speaker);
    } catch (const InvalidArgument &e) {
      throw segment_error(index, e.what());
    }
  }

  std::optional<double> confidence;
  if (auto it = s.find("confidence"); it != s.end() && !it->is_null()) {
    const double c = require_number(s, "confidence", index);
    if (c < 0.0 || c > 1.0) {
      throw segment_error(index, "confidence outside [0, 1]");
    }
    confidence = c;
  }

  try {
    return TranscriptSegment{TimeInterval(start, end), std::move(text),
                             std::move(speaker), confidence, non_speech};
  } catch (const InvalidArgument &e) {
    throw segment_error(index, e.what());
  }
}

inline nlohmann::ordered_json segment_to_json(const TranscriptSegment &s) {
  nlohmann::ordered_json j;
  j["start"] = s.start();
  j["end"] = s.end();
  j["text"] = s.text;
  if (s.speaker) j["speaker"] = *s.speaker;
  if (s.confidence) j["confidence"] = *s.confidence;
  if (s.non_speech) j["non_speech"] = true;
  return j;
}

}  // namespace internal

inline void sort_segments(std::vector<TranscriptSegment> &segments) {
  std::stable_sort(segments.begin(), segments.end(),
                   [](const TranscriptSegment &a, const TranscriptSegment &b) {
                     return a.interval < b.interval;
                   });
}

inline Transcript parse_transcript(std::istream &in) {
  const nlohmann::json doc = internal::parse_json(in, 0);
  if (!doc.is_object()) throw ParseError("transcript is not an object", 0);

  auto rec = doc.find("recording");
  if (rec == doc.end() || !rec->is_string()) {
    throw ParseError("missing string field 'recording'", 0);
  }
  auto segs = doc.find("segments");
  if (segs == doc.end() || !segs->is_array()) {
    throw ParseError("missing array field 'segments'", 0);
  }

  Transcript t;
  t.recording_id = rec->get<std::string>();
  t.segments.reserve(segs->size());
  for (std::size_t i = 0; i < segs->size(); ++i) {
    t.segments.push_back(internal::segment_from_json((*segs)[i], i));
  }
  sort_segments(t.segments);
  return t;
}

inline Transcript parse_transcript(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_transcript(in);
}

inline Transcript read_transcript_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open transcript file: " + path);
  return parse_transcript(in);
}

inline std::string write_transcript(const Transcript &t) {
  nlohmann::ordered_json doc;
  doc["recording"] = t.recording_id;
  doc["segments"] = nlohmann::ordered_json::array();
  for (const auto &s : t.segments) {
    doc["segments"].push_back(internal::segment_to_json(s));
  }
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingRecord {
  TimeInterval interval;
  std::vector<double> vector;

  friend bool operator==(const EmbeddingRecord &,
                         const EmbeddingRecord &) = default;
};

inline std::vector<EmbeddingRecord> parse_embeddings(std::istream &in) {
  std::vector<EmbeddingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (internal::split_ws(line).empty()) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw internal::line_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw internal::line_error(line_no, "not an object");

    double bounds[2];
    const char *keys[2] = {"start", "end"};
    for (int k = 0; k < 2; ++k) {
      auto it = j.find(keys[k]);
      if (it == j.end() || !it->is_number()) {
        throw internal::line_error(
            line_no, std::string("missing numeric field '") + keys[k] + "'");
      }
      bounds[k] = it->get<double>();
    }

    auto vit = j.find("vector");
    if (vit == j.end() || !vit->is_array()) {
      throw internal::line_error(line_no, "missing array field 'vector'");
    }
    std::vector<double> v;
    v.reserve(vit->size());
    for (const auto &x : *vit) {
      if (!x.is_number()) {
        throw internal::line_error(line_no, "non-numeric vector element");
      }
      const double d = x.get<double>();
      if (!std::isfinite(d)) {
        throw internal::line_error(line_no, "non-finite vector element");
      }
      v.push_back(d);
    }
    if (v.size() < 2) {
      throw internal::line_error(
          line_no, "dim " + std::to_string(v.size()) + " < 2");
    }
    if (dim == 0) {
      dim = v.size();
    } else if (v.size() != dim) {
      throw internal::line_error(line_no, "dim " + std::to_string(v.size()) +
                                              " != " + std::to_string(dim));
    }

    try {
      out.push_back({TimeInterval(bounds[0], bounds[1]), std::move(v)});
    } catch (const InvalidArgument &e) {
      throw internal::line_error(line_no, e.what());
    }
  }
  return out;
}

inline std::vector<EmbeddingRecord> parse_embeddings(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_embeddings(in);
}

inline std::vector<EmbeddingRecord> read_embeddings_file(
    const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file: " + path);
  return parse_embeddings(in);
}

inline std::string write_embeddings(const std::vector<EmbeddingRecord> &records) {
  std::string out;
  for (const auto &r : records) {
    nlohmann::ordered_json j;
    j["start"] = r.interval.start();
    j["end"] = r.interval.end();
    j["vector"] = r.vector;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace filmdiar
