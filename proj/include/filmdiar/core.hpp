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

// Domain types shared by every stage: time intervals, speaker turns,
// speaker-labelled annotations and unlabelled timelines, plus the
// elementary-interval decomposition that diarization scoring is built on.
//
// All types are immutable after construction. Times are seconds held as
// doubles and compared exactly; nothing here quantizes to frames.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "filmdiar/error.hpp"

namespace filmdiar {

class TimeInterval {
 public:
  /// Throws InvalidArgument unless 0 <= start < end and both are finite.
  TimeInterval(double start, double end) : start_(start), end_(end) {
    if (!std::isfinite(start) || !std::isfinite(end)) {
      throw InvalidArgument(Describe("non-finite interval bound"));
    }
    if (start < 0.0) {
      throw InvalidArgument(Describe("interval starts before 0"));
    }
    if (!(end > start)) {
      throw InvalidArgument(Describe("interval end must exceed start"));
    }
  }

  double start() const noexcept { return start_; }
  double end() const noexcept { return end_; }
  double duration() const noexcept { return end_ - start_; }

  bool contains(double t) const noexcept { return t >= start_ && t < end_; }

  friend bool operator==(const TimeInterval &, const TimeInterval &) = default;
  friend auto operator<=>(const TimeInterval &, const TimeInterval &) = default;

  std::string ToString() const {
    std::ostringstream os;
    os << "[" << start_ << ", " << end_ << "]";
    return os.str();
  }

 private:
  std::string Describe(const char *what) const {
    std::ostringstream os;
    os << what << ": [" << start_ << ", " << end_ << "]";
    return os.str();
  }

  double start_;
  double end_;
};

/// Length of the intersection of two intervals, 0 when disjoint.
inline double overlap_duration(const TimeInterval &a, const TimeInterval &b) {
  const double lo = std::max(a.start(), b.start());
  const double hi = std::min(a.end(), b.end());
  return hi > lo ? hi - lo : 0.0;
}

/// Speaker labels are case-sensitive opaque strings; RTTM forbids whitespace.
inline void validate_speaker_label(std::string_view label) {
  if (label.empty()) throw InvalidArgument("empty speaker label");
  for (char c : label) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
        c == '\f') {
      throw InvalidArgument("speaker label contains whitespace: '" +
                            std::string(label) + "'");
    }
  }
}

class SpeakerTurn {
 public:
  SpeakerTurn(TimeInterval interval, std::string speaker)
      : interval_(interval), speaker_(std::move(speaker)) {
    validate_speaker_label(speaker_);
  }

  /// Builds the interval too, so a bad bound is reported with the speaker.
  SpeakerTurn(double start, double end, std::string speaker)
      : SpeakerTurn(MakeInterval(start, end, speaker), speaker) {}

  const TimeInterval &interval() const noexcept { return interval_; }
  const std::string &speaker() const noexcept { return speaker_; }
  double start() const noexcept { return interval_.start(); }
  double end() const noexcept { return interval_.end(); }
  double duration() const noexcept { return interval_.duration(); }

  friend bool operator==(const SpeakerTurn &, const SpeakerTurn &) = default;

  /// Annotation order: (start, end, speaker).
  friend bool operator<(const SpeakerTurn &a, const SpeakerTurn &b) {
    return std::tie(a.interval_, a.speaker_) <
           std::tie(b.interval_, b.speaker_);
  }

 private:
  static TimeInterval MakeInterval(double start, double end,
                                   const std::string &speaker) {
    try {
      return TimeInterval(start, end);
    } catch (const InvalidArgument &e) {
      throw InvalidArgument("invalid turn for speaker '" + speaker +
                            "': " + e.what());
    }
  }

  TimeInterval interval_;
  std::string speaker_;
};

/// A speaker-labelled timeline for one recording. Turns of different
/// speakers may overlap; turns of one speaker are coalesced on construction.
class Annotation {
 public:
  Annotation() = default;

  explicit Annotation(std::string recording_id,
                      std::vector<SpeakerTurn> turns = {})
      : recording_id_(std::move(recording_id)),
        turns_(Normalize(std::move(turns))) {}

  const std::string &recording_id() const noexcept { return recording_id_; }
  const std::vector<SpeakerTurn> &turns() const noexcept { return turns_; }
  bool empty() const noexcept { return turns_.empty(); }
  std::size_t size() const noexcept { return turns_.size(); }

  /// Sorted, unique speaker labels.
  std::vector<std::string> speakers() const {
    std::set<std::string> s;
    for (const auto &t : turns_) s.insert(t.speaker());
    return {s.begin(), s.end()};
  }

  /// Speaker-weighted speech time: overlapped speech counts once per speaker.
  double total_speech() const {
    double total = 0.0;
    for (const auto &t : turns_) total += t.duration();
    return total;
  }

  friend bool operator==(const Annotation &, const Annotation &) = default;

 private:
  static std::vector<SpeakerTurn> Normalize(std::vector<SpeakerTurn> turns) {
    std::map<std::string, std::vector<TimeInterval>> by_speaker;
    for (auto &t : turns) by_speaker[t.speaker()].push_back(t.interval());

    std::vector<SpeakerTurn> out;
    out.reserve(turns.size());
    for (auto &[speaker, intervals] : by_speaker) {
      std::sort(intervals.begin(), intervals.end());
      double lo = intervals.front().start();
      double hi = intervals.front().end();
      for (std::size_t i = 1; i < intervals.size(); ++i) {
        // gap == 0 counts as touching
        if (intervals[i].start() <= hi) {
          hi = std::max(hi, intervals[i].end());
        } else {
          out.emplace_back(TimeInterval(lo, hi), speaker);
          lo = intervals[i].start();
          hi = intervals[i].end();
        }
      }
      out.emplace_back(TimeInterval(lo, hi), speaker);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::string recording_id_;
  std::vector<SpeakerTurn> turns_;
};

/// Coalesces overlapping or touching turns per speaker.
inline Annotation merge_same_speaker(std::string recording_id,
                                     std::vector<SpeakerTurn> turns) {
  return Annotation(std::move(recording_id), std::move(turns));
}

/// Unlabelled speech regions: sorted, pairwise disjoint, separated by gaps > 0.
class Timeline {
 public:
  Timeline() = default;

  explicit Timeline(std::string recording_id,
                    std::vector<TimeInterval> intervals = {})
      : recording_id_(std::move(recording_id)),
        intervals_(Coalesce(std::move(intervals))) {}

  const std::string &recording_id() const noexcept { return recording_id_; }
  const std::vector<TimeInterval> &intervals() const noexcept {
    return intervals_;
  }
  bool empty() const noexcept { return intervals_.empty(); }
  std::size_t size() const noexcept { return intervals_.size(); }

  double total_duration() const {
    double total = 0.0;
    for (const auto &iv : intervals_) total += iv.duration();
    return total;
  }

  /// The timeline as a single-speaker annotation.
  Annotation to_annotation(const std::string &label) const {
    std::vector<SpeakerTurn> turns;
    turns.reserve(intervals_.size());
    for (const auto &iv : intervals_) turns.emplace_back(iv, label);
    return Annotation(recording_id_, std::move(turns));
  }

  friend bool operator==(const Timeline &, const Timeline &) = default;

 private:
  static std::vector<TimeInterval> Coalesce(std::vector<TimeInterval> in) {
    if (in.empty()) return in;
    std::sort(in.begin(), in.end());
    std::vector<TimeInterval> out;
    double lo = in.front().start();
    double hi = in.front().end();
    for (std::size_t i = 1; i < in.size(); ++i) {
      if (in[i].start() <= hi) {
        hi = std::max(hi, in[i].end());
      } else {
        out.emplace_back(lo, hi);
        lo = in[i].start();
        hi = in[i].end();
      }
    }
    out.emplace_back(lo, hi);
    return out;
  }

  std::string recording_id_;
  std::vector<TimeInterval> intervals_;
};

/// A maximal span over which the active speaker sets of two annotations
/// are both constant.
struct ElementaryInterval {
  TimeInterval span;
  std::set<std::string> in_a;
  std::set<std::string> in_b;

  friend bool operator==(const ElementaryInterval &,
                         const ElementaryInterval &) = default;
};

/// Partitions the union of both annotations' turns at every turn boundary.
/// Spans where neither annotation has an active speaker are omitted.
inline std::vector<ElementaryInterval> elementary_intervals(
    const Annotation &a, const Annotation &b) {
  if (a.recording_id() != b.recording_id()) {
    throw InvalidArgument("recording mismatch: '" + a.recording_id() +
                          "' vs '" + b.recording_id() + "'");
  }

  // (time, is_start, side, speaker). Ends sort before starts at equal
  // times, although only the state between distinct times matters.
  struct Event {
    double time;
    bool is_start;
    int side;
    const std::string *speaker;
  };
  std::vector<Event> events;
  events.reserve(2 * (a.size() + b.size()));
  for (const auto &t : a.turns()) {
    events.push_back({t.start(), true, 0, &t.speaker()});
    events.push_back({t.end(), false, 0, &t.speaker()});
  }
  for (const auto &t : b.turns()) {
    events.push_back({t.start(), true, 1, &t.speaker()});
    events.push_back({t.end(), false, 1, &t.speaker()});
  }
  std::sort(events.begin(), events.end(),
            [](const Event &x, const Event &y) {
              if (x.time != y.time) return x.time < y.time;
              return x.is_start < y.is_start;
            });

  std::map<std::string, int> active[2];
  std::vector<ElementaryInterval> out;
  std::size_t i = 0;
  while (i < events.size()) {
    const double t = events[i].time;
    for (; i < events.size() && events[i].time == t; ++i) {
      auto &counts = active[events[i].side];
      if (events[i].is_start) {
        ++counts[*events[i].speaker];
      } else if (--counts[*events[i].speaker] == 0) {
        counts.erase(*events[i].speaker);
      }
    }
    if (i == events.size()) break;
    if (active[0].empty() && active[1].empty()) continue;

    ElementaryInterval e{TimeInterval(t, events[i].time), {}, {}};
    for (const auto &[s, n] : active[0]) e.in_a.insert(s);
    for (const auto &[s, n] : active[1]) e.in_b.insert(s);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace filmdiar
