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

// Batch orchestration. Every stage reads and writes files in the documented
// formats, so any stage can be replaced by an external tool. Stages whose
// inputs and parameters are unchanged since the last run are skipped.
//
// Output layout, per recording under <output_dir>/<recording_id>/:
//   audio.wav               extract
//   speech.rttm             vad
//   hypothesis.rttm         cluster
//   der.json                score
//   aligned_transcript.json align
//   histogram.json          select
//   dossiers/<speaker>.json dossiers
//   cards/<speaker>.json    analyze, plus cards/summary.json
//   .cache/<stage>.json     cache keys and output checksums
// and <output_dir>/manifest.json, <output_dir>/reports/ for the whole run.

#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "filmdiar/analysis.hpp"
#include "filmdiar/chat_backend.hpp"
#include "filmdiar/cluster.hpp"
#include "filmdiar/core.hpp"
#include "filmdiar/detail/checksum.hpp"
#include "filmdiar/detail/parallel.hpp"
#include "filmdiar/dialog.hpp"
#include "filmdiar/error.hpp"
#include "filmdiar/http_backend.hpp"
#include "filmdiar/ioformats.hpp"
#include "filmdiar/metrics.hpp"
#include "filmdiar/vad.hpp"
#include "filmdiar/wav.hpp"

namespace filmdiar {

namespace fs = std::filesystem;

inline const std::string kToolVersion = "0.1.0";
inline const std::string kSpeechLabel = "speech";

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partial artifact.
inline void write_file_atomic(const fs::path &path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Speaker labels may contain characters that are awkward in file names.
inline std::string file_stem_for(const std::string &label) {
  std::string out;
  for (unsigned char c : label) {
    out += (std::isalnum(c) || c == '-' || c == '_' || c == '.')
               ? static_cast<char>(c)
               : '_';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

enum class DiarizationSource { kHypothesisRttm, kEmbeddings, kVadOnly };

inline std::string to_string(DiarizationSource s) {
  switch (s) {
    case DiarizationSource::kHypothesisRttm: return "hypothesis_rttm";
    case DiarizationSource::kEmbeddings: return "embeddings";
    case DiarizationSource::kVadOnly: return "vad_only";
  }
  return "unknown";
}

struct RecordingInputs {
  std::string recording_id;
  std::string audio;            // WAV, or any media file when extracting
  std::string vad_rttm;         // precomputed speech regions
  std::string hypothesis_rttm;  // external diarization
  std::string embeddings;
  std::string transcript;
  std::string reference_rttm;
  std::string title;  // true film title for the recognition probe

  DiarizationSource source() const {
    if (!hypothesis_rttm.empty()) return DiarizationSource::kHypothesisRttm;
    if (!embeddings.empty()) return DiarizationSource::kEmbeddings;
    return DiarizationSource::kVadOnly;
  }
};

enum class BackendKind { kNone, kStub, kHttp };

struct AnalysisConfig {
  BackendKind backend = BackendKind::kNone;
  std::string stub_response;  // file holding the canned answer
  HttpBackendConfig http;
  std::string model = kDefaultModel;
  std::string template_path;  // empty: built-in template
  std::size_t token_budget = RenderOptions{}.token_budget;
  std::size_t max_concurrent = 2;
  double requests_per_second = 1.0;
};

struct PipelineConfig {
  std::vector<RecordingInputs> recordings;
  std::string output_dir = "filmdiar-out";
  std::string extract_command;  // e.g. "ffmpeg -y -i {input} -ac 1 -ar 16000 {output}"
  VadConfig vad;
  ClusterConfig cluster;
  SelectionConfig selection;
  DerOptions scoring;
  AnalysisConfig analysis;
  std::size_t workers = 1;

  /// Checks parameter ranges, source exclusivity and, optionally, that
  /// every configured input file exists.
  void validate(bool check_paths = true) const {
    vad.validate();
    cluster.validate();
    selection.validate();
    if (!(scoring.collar_s >= 0.0)) throw InvalidArgument("collar must be >= 0");
    if (recordings.empty()) throw InvalidArgument("no recordings configured");
    if (output_dir.empty()) throw InvalidArgument("output_dir is empty");
    if (!extract_command.empty() &&
        (extract_command.find("{input}") == std::string::npos ||
         extract_command.find("{output}") == std::string::npos)) {
      throw InvalidArgument(
          "extract_command needs both {input} and {output} placeholders");
    }
    if (analysis.backend == BackendKind::kStub && analysis.stub_response.empty()) {
      throw InvalidArgument("stub backend needs a stub_response file");
    }
    std::set<std::string> ids;
    for (const auto &r : recordings) {
      if (r.recording_id.empty()) throw InvalidArgument("recording without an id");
      validate_speaker_label(r.recording_id);
      if (!ids.insert(r.recording_id).second) {
        throw InvalidArgument("duplicate recording id '" + r.recording_id + "'");
      }
      if (!r.hypothesis_rttm.empty() && !r.embeddings.empty()) {
        throw InvalidArgument("recording '" + r.recording_id +
                              "': hypothesis_rttm and embeddings are mutually "
                              "exclusive diarization sources");
      }
      if (r.source() == DiarizationSource::kVadOnly && r.audio.empty() &&
          r.vad_rttm.empty()) {
        throw InvalidArgument("recording '" + r.recording_id +
                              "' has no diarization source (hypothesis_rttm, "
                              "embeddings, audio or vad_rttm)");
      }
      if (!check_paths) continue;
      for (const auto *p : {&r.audio, &r.vad_rttm, &r.hypothesis_rttm,
                            &r.embeddings, &r.transcript, &r.reference_rttm}) {
        if (!p->empty() && !fs::exists(*p)) {
          throw InvalidArgument("recording '" + r.recording_id +
                                "': missing input " + *p);
        }
      }
    }
    if (check_paths) {
      for (const auto *p : {&analysis.stub_response, &analysis.template_path}) {
        if (!p->empty() && !fs::exists(*p)) {
          throw InvalidArgument("missing analysis input " + *p);
        }
      }
    }
  }
};

namespace internal {

inline std::string resolve(const nlohmann::json &j, const char *key,
                           const fs::path &base) {
  if (!j.contains(key) || j[key].is_null()) return {};
  const fs::path p = j[key].get<std::string>();
  if (p.empty() || p.is_absolute()) return p.string();
  return (base / p).lexically_normal().string();
}

inline RecordingInputs recording_from_json(const nlohmann::json &j,
                                           const fs::path &base) {
  RecordingInputs r;
  r.recording_id = j.at("recording_id").get<std::string>();
  r.audio = resolve(j, "audio", base);
  r.vad_rttm = resolve(j, "vad_rttm", base);
  r.hypothesis_rttm = resolve(j, "hypothesis_rttm", base);
  r.embeddings = resolve(j, "embeddings", base);
  r.transcript = resolve(j, "transcript", base);
  r.reference_rttm = resolve(j, "reference_rttm", base);
  r.title = j.value("title", std::string());
  return r;
}

inline nlohmann::ordered_json recording_to_json(const RecordingInputs &r) {
  nlohmann::ordered_json j;
  j["recording_id"] = r.recording_id;
  auto put = [&](const char *key, const std::string &v) {
    if (!v.empty()) j[key] = v;
  };
  put("audio", r.audio);
  put("vad_rttm", r.vad_rttm);
  put("hypothesis_rttm", r.hypothesis_rttm);
  put("embeddings", r.embeddings);
  put("transcript", r.transcript);
  put("reference_rttm", r.reference_rttm);
  put("title", r.title);
  return j;
}

inline BackendKind backend_from_string(const std::string &s) {
  if (s == "none" || s.empty()) return BackendKind::kNone;
  if (s == "stub") return BackendKind::kStub;
  if (s == "http") return BackendKind::kHttp;
  throw InvalidArgument("unknown analysis backend '" + s + "'");
}

inline std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::kNone: return "none";
    case BackendKind::kStub: return "stub";
    case BackendKind::kHttp: return "http";
  }
  return "none";
}

inline nlohmann::ordered_json cluster_to_json(const ClusterConfig &c) {
  nlohmann::ordered_json j;
  if (const auto *t = std::get_if<ThresholdStop>(&c.mode)) {
    j["mode"] = "threshold";
    j["tau"] = t->tau;
  } else {
    j["mode"] = "fixed_k";
    j["k"] = std::get<FixedCount>(c.mode).k;
  }
  return j;
}

inline nlohmann::ordered_json vad_to_json(const VadConfig &v) {
  nlohmann::ordered_json j;
  j["frame_ms"] = v.frame_ms;
  j["hop_ms"] = v.hop_ms;
  j["threshold_db"] = v.threshold_db;
  j["min_speech_s"] = v.min_speech_s;
  j["min_gap_s"] = v.min_gap_s;
  j["floor_percentile"] = v.floor_percentile;
  return j;
}

inline nlohmann::ordered_json selection_to_json(const SelectionConfig &s) {
  nlohmann::ordered_json j;
  j["min_speech_s"] = s.min_speech_s;
  j["fence_multiplier"] = s.fence_multiplier;
  return j;
}

inline nlohmann::ordered_json scoring_to_json(const DerOptions &d) {
  nlohmann::ordered_json j;
  j["collar_s"] = d.collar_s;
  j["score_overlap"] = d.score_overlap;
  return j;
}

inline nlohmann::ordered_json analysis_to_json(const AnalysisConfig &a) {
  nlohmann::ordered_json j;
  j["backend"] = to_string(a.backend);
  if (!a.stub_response.empty()) j["stub_response"] = a.stub_response;
  j["endpoint"] = a.http.endpoint;
  j["credential_variable"] = a.http.credential_variable;
  j["model"] = a.model;
  if (!a.template_path.empty()) j["template"] = a.template_path;
  j["token_budget"] = a.token_budget;
  j["max_concurrent"] = a.max_concurrent;
  j["requests_per_second"] = a.requests_per_second;
  return j;
}

}  // namespace internal

/// Relative paths are resolved against `base_dir`, normally the directory
/// holding the config file. Either a single recording is described at top
/// level or several under "recordings".
inline PipelineConfig pipeline_config_from_json(const nlohmann::json &j,
                                                const fs::path &base_dir) {
  PipelineConfig c;
  try {
    if (j.contains("recordings")) {
      for (const auto &r : j.at("recordings")) {
        c.recordings.push_back(internal::recording_from_json(r, base_dir));
      }
    } else if (j.contains("recording_id")) {
      c.recordings.push_back(internal::recording_from_json(j, base_dir));
    }
    if (j.contains("output_dir")) c.output_dir = internal::resolve(j, "output_dir", base_dir);
    c.extract_command = j.value("extract_command", std::string());
    c.workers = j.value("workers", std::size_t{1});
    if (j.contains("vad")) {
      const auto &v = j["vad"];
      c.vad.frame_ms = v.value("frame_ms", c.vad.frame_ms);
      c.vad.hop_ms = v.value("hop_ms", c.vad.hop_ms);
      c.vad.threshold_db = v.value("threshold_db", c.vad.threshold_db);
      c.vad.min_speech_s = v.value("min_speech_s", c.vad.min_speech_s);
      c.vad.min_gap_s = v.value("min_gap_s", c.vad.min_gap_s);
      c.vad.floor_percentile = v.value("floor_percentile", c.vad.floor_percentile);
    }
    if (j.contains("cluster")) {
      const auto &k = j["cluster"];
      const std::string mode = k.value("mode", std::string("threshold"));
      if (mode == "threshold") {
        c.cluster = ClusterConfig::threshold(k.value("tau", ThresholdStop{}.tau));
      } else if (mode == "fixed_k") {
        c.cluster = ClusterConfig::fixed_k(k.value("k", FixedCount{}.k));
      } else {
        throw InvalidArgument("unknown cluster mode '" + mode + "'");
      }
    }
    if (j.contains("selection")) {
      const auto &s = j["selection"];
      c.selection.min_speech_s = s.value("min_speech_s", c.selection.min_speech_s);
      c.selection.fence_multiplier =
          s.value("fence_multiplier", c.selection.fence_multiplier);
    }
    if (j.contains("scoring")) {
      const auto &s = j["scoring"];
      c.scoring.collar_s = s.value("collar_s", c.scoring.collar_s);
      c.scoring.score_overlap = s.value("score_overlap", c.scoring.score_overlap);
    }
    if (j.contains("analysis")) {
      const auto &a = j["analysis"];
      auto &out = c.analysis;
      out.backend = internal::backend_from_string(a.value("backend", std::string("none")));
      out.stub_response = internal::resolve(a, "stub_response", base_dir);
      out.http.endpoint = a.value("endpoint", out.http.endpoint);
      out.http.credential_variable =
          a.value("credential_variable", out.http.credential_variable);
      out.model = a.value("model", out.model);
      out.template_path = internal::resolve(a, "template", base_dir);
      out.token_budget = a.value("token_budget", out.token_budget);
      out.max_concurrent = a.value("max_concurrent", out.max_concurrent);
      out.requests_per_second = a.value("requests_per_second", out.requests_per_second);
    }
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid pipeline config: ") + e.what(), 0);
  }
  return c;
}

inline PipelineConfig read_pipeline_config(const std::string &path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception &e) {
    throw ParseError("config " + path + ": " + e.what(), 0);
  }
  return pipeline_config_from_json(j, fs::path(path).parent_path());
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig &c) {
  nlohmann::ordered_json j;
  j["output_dir"] = c.output_dir;
  if (!c.extract_command.empty()) j["extract_command"] = c.extract_command;
  j["workers"] = c.workers;
  j["recordings"] = nlohmann::ordered_json::array();
  for (const auto &r : c.recordings) {
    j["recordings"].push_back(internal::recording_to_json(r));
  }
  j["vad"] = internal::vad_to_json(c.vad);
  j["cluster"] = internal::cluster_to_json(c.cluster);
  j["selection"] = internal::selection_to_json(c.selection);
  j["scoring"] = internal::scoring_to_json(c.scoring);
  j["analysis"] = internal::analysis_to_json(c.analysis);
  return j;
}

// ---------------------------------------------------------------------------
// Report documents

inline nlohmann::ordered_json der_report_to_json(const DerReport &r) {
  nlohmann::ordered_json j;
  j["recording"] = r.recording_id;
  j["collar_s"] = r.collar_s;
  j["score_overlap"] = r.score_overlap;
  j["missed_s"] = r.missed_s;
  j["false_alarm_s"] = r.false_alarm_s;
  j["confusion_s"] = r.confusion_s;
  j["total_ref_s"] = r.total_ref_s;
  j["der"] = r.der;
  j["mapping"] = r.mapping;
  return j;
}

inline DerReport der_report_from_json(const nlohmann::json &j) {
  DerReport r;
  try {
    r.recording_id = j.at("recording").get<std::string>();
    r.collar_s = j.at("collar_s").get<double>();
    r.score_overlap = j.at("score_overlap").get<bool>();
    r.missed_s = j.at("missed_s").get<double>();
    r.false_alarm_s = j.at("false_alarm_s").get<double>();
    r.confusion_s = j.at("confusion_s").get<double>();
    r.total_ref_s = j.at("total_ref_s").get<double>();
    r.der = j.at("der").get<double>();
    r.mapping = j.at("mapping").get<SpeakerMapping>();
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid DER report: ") + e.what(), 0);
  }
  return r;
}

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

/// Tab-separated DER table: one row per recording, then one "ALL" row with
/// the time-weighted DER in the der column and the unweighted mean in
/// der_mean.
inline std::string der_table_tsv(const std::vector<DerReport> &reports) {
  std::string out =
      "recording\tmissed_s\tfalse_alarm_s\tconfusion_s\ttotal_ref_s\tder\tder_mean\n";
  for (const auto &r : reports) {
    out += r.recording_id + '\t' + format_fixed(r.missed_s) + '\t' +
           format_fixed(r.false_alarm_s) + '\t' + format_fixed(r.confusion_s) +
           '\t' + format_fixed(r.total_ref_s) + '\t' + format_fixed(r.der) + "\t\n";
  }
  if (const auto agg = aggregate_der(reports)) {
    out += "ALL\t" + format_fixed(agg->missed_s) + '\t' +
           format_fixed(agg->false_alarm_s) + '\t' + format_fixed(agg->confusion_s) +
           '\t' + format_fixed(agg->total_ref_s) + '\t' +
           format_fixed(agg->der_weighted) + '\t' + format_fixed(agg->der_mean) + '\n';
  }
  return out;
}

inline nlohmann::ordered_json der_table_json(const std::vector<DerReport> &reports) {
  nlohmann::ordered_json j;
  j["recordings"] = nlohmann::ordered_json::array();
  for (const auto &r : reports) j["recordings"].push_back(der_report_to_json(r));
  if (const auto agg = aggregate_der(reports)) {
    nlohmann::ordered_json a;
    a["recordings"] = agg->recordings;
    a["missed_s"] = agg->missed_s;
    a["false_alarm_s"] = agg->false_alarm_s;
    a["confusion_s"] = agg->confusion_s;
    a["total_ref_s"] = agg->total_ref_s;
    a["der_weighted"] = agg->der_weighted;
    a["der_mean"] = agg->der_mean;
    j["aggregate"] = a;
  } else {
    j["aggregate"] = nullptr;
  }
  return j;
}

inline nlohmann::ordered_json card_summary_json(const std::vector<CharacterCard> &cards,
                                                const std::string &recording_id,
                                                const std::string &title) {
  nlohmann::ordered_json j;
  j["recording"] = recording_id;
  j["cards"] = nlohmann::ordered_json::array();
  for (const auto &c : cards) {
    nlohmann::ordered_json e;
    e["speaker"] = c.speaker;
    e["parse_failed"] = c.parse_failed;
    e["prompt_truncated"] = c.prompt_truncated;
    e["traits"] = c.traits;
    e["goals"] = c.goals;
    e["interactions"] = c.interactions;
    e["film_guess"] = c.film_guess;
    e["prompt_hash"] = c.prompt_hash;
    j["cards"].push_back(std::move(e));
  }
  if (!title.empty()) {
    const ProbeReport probe = recognition_probe(cards, title);
    nlohmann::ordered_json p;
    p["title"] = title;
    p["recognition_rate"] = probe.recognition_rate
                                ? nlohmann::ordered_json(*probe.recognition_rate)
                                : nlohmann::ordered_json(nullptr);
    p["entries"] = nlohmann::ordered_json::array();
    for (const auto &e : probe.entries) {
      p["entries"].push_back({{"speaker", e.speaker},
                              {"film_guess", e.film_guess},
                              {"exact", e.exact},
                              {"substring", e.substring}});
    }
    j["probe"] = p;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Manifest

enum class StageStatus { kOk, kFailed, kSkipped };

inline std::string to_string(StageStatus s) {
  switch (s) {
    case StageStatus::kOk: return "ok";
    case StageStatus::kFailed: return "failed";
    case StageStatus::kSkipped: return "skipped";
  }
  return "failed";
}

inline const std::string kReasonCached = "cached";

struct StageRecord {
  std::string name;
  StageStatus status = StageStatus::kSkipped;
  std::string reason;                  // error text, "cached", or blocker
  std::vector<std::string> artifacts;  // relative to the output directory
  double seconds = 0.0;

  bool usable() const {
    return status == StageStatus::kOk ||
           (status == StageStatus::kSkipped && reason == kReasonCached);
  }
};

struct RecordingManifest {
  std::string recording_id;
  DiarizationSource source = DiarizationSource::kVadOnly;
  std::vector<StageRecord> stages;
  std::vector<std::string> warnings;

  const StageRecord *stage(std::string_view name) const {
    for (const auto &s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
  bool failed() const {
    for (const auto &s : stages)
      if (s.status == StageStatus::kFailed) return true;
    return false;
  }
};

struct RunManifest {
  nlohmann::ordered_json config;
  std::string tool_version = kToolVersion;
  std::string started_at;
  double seconds = 0.0;
  std::string output_dir;
  std::vector<RecordingManifest> recordings;
  std::vector<std::string> reports;  // relative to output_dir
  std::vector<std::string> notes;

  bool failed() const {
    for (const auto &r : recordings)
      if (r.failed()) return true;
    return false;
  }
};

inline std::string manifest_to_json(const RunManifest &m) {
  nlohmann::ordered_json j;
  j["tool_version"] = m.tool_version;
  j["started_at"] = m.started_at;
  j["seconds"] = m.seconds;
  j["status"] = m.failed() ? "failed" : "ok";
  j["config"] = m.config;
  j["recordings"] = nlohmann::ordered_json::array();
  for (const auto &r : m.recordings) {
    nlohmann::ordered_json rj;
    rj["recording"] = r.recording_id;
    rj["diarization_source"] = to_string(r.source);
    rj["stages"] = nlohmann::ordered_json::array();
    for (const auto &s : r.stages) {
      nlohmann::ordered_json sj;
      sj["name"] = s.name;
      sj["status"] = to_string(s.status);
      if (!s.reason.empty()) sj["reason"] = s.reason;
      sj["seconds"] = s.seconds;
      sj["artifacts"] = s.artifacts;
      rj["stages"].push_back(std::move(sj));
    }
    rj["warnings"] = r.warnings;
    j["recordings"].push_back(std::move(rj));
  }
  j["reports"] = m.reports;
  j["notes"] = m.notes;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Stage planning

/// Stages applicable to one recording, in execution order.
inline std::vector<std::string> plan_stages(const RecordingInputs &r,
                                            const PipelineConfig &cfg) {
  std::vector<std::string> plan;
  const auto source = r.source();
  if (source == DiarizationSource::kVadOnly) {
    if (r.vad_rttm.empty()) {
      if (!cfg.extract_command.empty()) plan.push_back("extract");
      plan.push_back("vad");
    }
    return plan;  // no speakers, nothing downstream applies
  }
  if (source == DiarizationSource::kEmbeddings) plan.push_back("cluster");
  if (!r.reference_rttm.empty()) plan.push_back("score");
  if (!r.transcript.empty()) {
    plan.push_back("align");
    plan.push_back("select");
    plan.push_back("dossiers");
    if (cfg.analysis.backend != BackendKind::kNone) plan.push_back("analyze");
  }
  return plan;
}

struct RunOptions {
  bool force = false;
  std::optional<std::size_t> workers;       // overrides the config
  std::shared_ptr<ChatBackend> backend;     // overrides the configured backend
  std::optional<RetryPolicy> retry;
};

namespace internal {

inline std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string shell_quote(const std::string &s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

inline Annotation find_recording(const RttmDocument &doc, const std::string &id,
                                 const std::string &path) {
  const auto it = doc.recordings.find(id);
  if (it == doc.recordings.end()) {
    throw Error("recording '" + id + "' not found in " + path);
  }
  return it->second;
}

/// Shared, lazily constructed chat backend and its rate limiter.
class BackendHandle {
 public:
  BackendHandle(const AnalysisConfig &cfg, std::shared_ptr<ChatBackend> override)
      : cfg_(cfg),
        backend_(std::move(override)),
        limiter_(cfg.max_concurrent, cfg.requests_per_second) {}

  ChatBackend &get() {
    std::lock_guard<std::mutex> lock(mu_);
    if (!backend_) {
      if (cfg_.backend == BackendKind::kStub) {
        backend_ = std::make_shared<StubBackend>(read_text_file(cfg_.stub_response));
      } else if (cfg_.backend == BackendKind::kHttp) {
        backend_ = std::make_shared<HttpChatBackend>(cfg_.http);
      } else {
        throw Error("no analysis backend configured");
      }
    }
    return *backend_;
  }

  RateLimiter &limiter() { return limiter_; }

 private:
  AnalysisConfig cfg_;
  std::shared_ptr<ChatBackend> backend_;
  RateLimiter limiter_;
  std::mutex mu_;
};

/// Runs the stages of one recording with checksum-based caching.
class RecordingRunner {
 public:
  RecordingRunner(const PipelineConfig &cfg, const RecordingInputs &rec,
                  const RunOptions &opts, BackendHandle &backend)
      : cfg_(cfg),
        rec_(rec),
        opts_(opts),
        backend_(backend),
        root_(fs::path(cfg.output_dir)),
        dir_(root_ / rec.recording_id) {
    manifest_.recording_id = rec.recording_id;
    manifest_.source = rec.source();
  }

  RecordingManifest run() {
    const auto plan = plan_stages(rec_, cfg_);
    auto planned = [&](std::string_view s) {
      return std::find(plan.begin(), plan.end(), s) != plan.end();
    };

    if (planned("extract")) Extract();
    if (planned("vad")) Vad();
    if (planned("cluster")) Cluster();
    if (planned("score")) Score();
    if (planned("align")) Align();
    if (planned("select")) Select();
    if (planned("dossiers")) Dossiers();
    if (planned("analyze")) Analyze();
    if (plan.empty()) {
      manifest_.warnings.push_back("no stages apply to this recording");
    }
    return manifest_;
  }

 private:
  using Body = std::function<std::vector<fs::path>()>;

  std::string Rel(const fs::path &p) const {
    return p.lexically_relative(root_).generic_string();
  }

  const StageRecord *Find(std::string_view name) const {
    return manifest_.stage(name);
  }

  /// Runs `body` unless a dependency is unusable or the cache is current.
  void Stage(const std::string &name, const std::vector<std::string> &deps,
             const std::vector<fs::path> &inputs, const std::string &params,
             const Body &body) {
    StageRecord rec;
    rec.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      rec.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      manifest_.stages.push_back(rec);
    };

    for (const auto &d : deps) {
      const StageRecord *dep = Find(d);
      if (dep && !dep->usable()) {
        rec.status = StageStatus::kSkipped;
        rec.reason = "blocked by upstream stage " + d;
        finish();
        return;
      }
    }

    const fs::path cache_file = dir_ / ".cache" / (name + ".json");
    std::string key;
    try {
      detail::Sha256 h;
      h.update(name).update("\n").update(kToolVersion).update("\n").update(params);
      for (const auto &in : inputs) {
        h.update("\n").update(detail::sha256_file(in.string()));
      }
      key = h.hex();
    } catch (const Error &e) {
      rec.status = StageStatus::kFailed;
      rec.reason = e.what();
      finish();
      return;
    }

    if (!opts_.force) {
      if (auto cached = CachedOutputs(cache_file, key)) {
        rec.status = StageStatus::kSkipped;
        rec.reason = kReasonCached;
        for (const auto &p : *cached) rec.artifacts.push_back(Rel(p));
        finish();
        return;
      }
    }

    try {
      const auto outputs = body();
      nlohmann::ordered_json cj;
      cj["key"] = key;
      cj["outputs"] = nlohmann::ordered_json::array();
      for (const auto &p : outputs) {
        cj["outputs"].push_back(
            {{"path", Rel(p)}, {"sha256", detail::sha256_file(p.string())}});
        rec.artifacts.push_back(Rel(p));
      }
      write_file_atomic(cache_file, cj.dump(2) + "\n");
      rec.status = StageStatus::kOk;
    } catch (const std::exception &e) {
      rec.status = StageStatus::kFailed;
      rec.reason = e.what();
      rec.artifacts.clear();
      std::error_code ec;
      fs::remove(cache_file, ec);
    }
    finish();
  }

  std::optional<std::vector<fs::path>> CachedOutputs(const fs::path &cache_file,
                                                     const std::string &key) const {
    if (!fs::exists(cache_file)) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(read_text_file(cache_file));
      if (j.at("key").get<std::string>() != key) return std::nullopt;
      std::vector<fs::path> out;
      for (const auto &o : j.at("outputs")) {
        const fs::path p = root_ / o.at("path").get<std::string>();
        if (!fs::exists(p) ||
            detail::sha256_file(p.string()) != o.at("sha256").get<std::string>()) {
          return std::nullopt;
        }
        out.push_back(p);
      }
      return out;
    } catch (const std::exception &) {
      return std::nullopt;  // unreadable cache entry: rerun
    }
  }

  fs::path AudioPath() const {
    return cfg_.extract_command.empty() ? fs::path(rec_.audio) : dir_ / "audio.wav";
  }

  fs::path HypothesisPath() const {
    return rec_.source() == DiarizationSource::kEmbeddings
               ? dir_ / "hypothesis.rttm"
               : fs::path(rec_.hypothesis_rttm);
  }

  std::vector<std::string> DiarizationDeps() const {
    if (rec_.source() == DiarizationSource::kEmbeddings) return {"cluster"};
    return {};
  }

  Annotation LoadHypothesis() const {
    const auto path = HypothesisPath().string();
    return find_recording(read_rttm_file(path), rec_.recording_id, path);
  }

  void Extract() {
    const fs::path out = dir_ / "audio.wav";
    Stage("extract", {}, {rec_.audio}, cfg_.extract_command, [&] {
      fs::create_directories(dir_);
      fs::path tmp = out;
      tmp += ".partial.wav";
      std::string cmd = cfg_.extract_command;
      internal::replace_all(cmd, "{input}", shell_quote(rec_.audio));
      internal::replace_all(cmd, "{output}", shell_quote(tmp.string()));
      const int rc = std::system(cmd.c_str());
      if (rc != 0 || !fs::exists(tmp)) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw Error("extract command failed (status " + std::to_string(rc) + ")");
      }
      fs::rename(tmp, out);
      return std::vector<fs::path>{out};
    });
  }

  void Vad() {
    const fs::path out = dir_ / "speech.rttm";
    const std::vector<std::string> deps =
        cfg_.extract_command.empty() ? std::vector<std::string>{}
                                     : std::vector<std::string>{"extract"};
    Stage("vad", deps, {AudioPath()}, vad_to_json(cfg_.vad).dump(), [&] {
      const AudioBuffer audio = read_wav_file(AudioPath().string());
      const Timeline speech = detect_speech(audio, cfg_.vad, rec_.recording_id);
      if (speech.empty()) {
        manifest_.warnings.push_back("no speech detected");
      }
      write_file_atomic(out, write_rttm(speech.to_annotation(kSpeechLabel)));
      return std::vector<fs::path>{out};
    });
  }

  void Cluster() {
    const fs::path out = dir_ / "hypothesis.rttm";
    Stage("cluster", {}, {rec_.embeddings}, cluster_to_json(cfg_.cluster).dump(), [&] {
      const auto records = read_embeddings_file(rec_.embeddings);
      if (records.empty()) throw Error("no embedding records");
      ClusterConfig cc = cfg_.cluster;
      cc.workers = 1;  // recordings already run in parallel
      const ClusterResult result = agglomerate(records, cc);
      write_file_atomic(out, write_rttm(to_annotation(records, result,
                                                      rec_.recording_id)));
      return std::vector<fs::path>{out};
    });
  }

  void Score() {
    const fs::path out = dir_ / "der.json";
    Stage("score", DiarizationDeps(), {rec_.reference_rttm, HypothesisPath()},
          scoring_to_json(cfg_.scoring).dump(), [&] {
            const Annotation ref = find_recording(read_rttm_file(rec_.reference_rttm),
                                                  rec_.recording_id,
                                                  rec_.reference_rttm);
            const DerReport report = score_der(ref, LoadHypothesis(), cfg_.scoring);
            write_file_atomic(out, der_report_to_json(report).dump(2) + "\n");
            return std::vector<fs::path>{out};
          });
  }

  void Align() {
    const fs::path out = dir_ / "aligned_transcript.json";
    Stage("align", DiarizationDeps(), {HypothesisPath(), rec_.transcript}, "", [&] {
      Transcript t = read_transcript_file(rec_.transcript);
      if (t.recording_id != rec_.recording_id) {
        manifest_.warnings.push_back("transcript recording id '" + t.recording_id +
                                     "' differs from '" + rec_.recording_id + "'");
      }
      t.recording_id = rec_.recording_id;
      t.segments = align_transcript(LoadHypothesis(), std::move(t.segments));
      write_file_atomic(out, write_transcript(t));
      return std::vector<fs::path>{out};
    });
  }

  void Select() {
    const fs::path out = dir_ / "histogram.json";
    Stage("select", DiarizationDeps(), {HypothesisPath()},
          selection_to_json(cfg_.selection).dump(), [&] {
            const SpeakerHistogram h = speech_histogram(LoadHypothesis(), cfg_.selection);
            if (h.fallback) {
              manifest_.warnings.push_back(
                  "no speaker above the upper fence; selected the most frequent");
            }
            write_file_atomic(out, histogram_to_json(h, rec_.recording_id));
            return std::vector<fs::path>{out};
          });
  }

  void Dossiers() {
    const fs::path aligned = dir_ / "aligned_transcript.json";
    const fs::path histogram = dir_ / "histogram.json";
    const fs::path ddir = dir_ / "dossiers";
    Stage("dossiers", {"align", "select"}, {aligned, histogram},
          selection_to_json(cfg_.selection).dump(), [&] {
            const Transcript t = read_transcript_file(aligned.string());
            const SpeakerHistogram h =
                histogram_from_json(nlohmann::json::parse(read_text_file(histogram)));
            Warnings w;
            const auto dossiers =
                build_dossiers(t.segments, h.selected(), cfg_.selection.min_speech_s, &w);
            for (auto &m : w.messages) manifest_.warnings.push_back(std::move(m));
            std::error_code ec;
            fs::remove_all(ddir, ec);
            std::vector<fs::path> outputs;
            for (const auto &d : dossiers) {
              const fs::path p = ddir / (file_stem_for(d.speaker) + ".json");
              write_file_atomic(p, dossier_to_json(d, rec_.recording_id));
              outputs.push_back(p);
            }
            if (outputs.empty()) throw Error("no dossier could be built");
            return outputs;
          });
  }

  void Analyze() {
    const StageRecord *dos = Find("dossiers");
    std::vector<fs::path> inputs;
    if (dos) {
      for (const auto &a : dos->artifacts) inputs.push_back(root_ / a);
    }
    const auto &ac = cfg_.analysis;
    if (!ac.template_path.empty()) inputs.push_back(ac.template_path);
    if (ac.backend == BackendKind::kStub && !opts_.backend) {
      inputs.push_back(ac.stub_response);
    }
    nlohmann::ordered_json params = analysis_to_json(ac);
    params.erase("max_concurrent");
    params.erase("requests_per_second");
    params["title"] = rec_.title;
    if (opts_.backend) params["backend"] = "injected";

    const fs::path cdir = dir_ / "cards";
    Stage("analyze", {"dossiers"}, inputs, params.dump(), [&] {
      const PromptTemplate tmpl = ac.template_path.empty()
                                      ? default_prompt_template()
                                      : read_prompt_template_file(ac.template_path);
      std::vector<SpeakerDossier> dossiers;
      for (const auto &a : dos->artifacts) {
        dossiers.push_back(read_dossier_file((root_ / a).string()));
      }
      AnalysisOptions aopts;
      aopts.model = ac.model;
      aopts.render.token_budget = ac.token_budget;
      if (opts_.retry) aopts.retry = *opts_.retry;
      const auto cards = analyze_characters(dossiers, tmpl, backend_.get(), aopts,
                                            backend_.limiter());
      std::error_code ec;
      fs::remove_all(cdir, ec);
      std::vector<fs::path> outputs;
      for (const auto &c : cards) {
        if (c.parse_failed) {
          manifest_.warnings.push_back("response for '" + c.speaker +
                                       "' could not be parsed");
        }
        const fs::path p = cdir / (file_stem_for(c.speaker) + ".json");
        write_file_atomic(p, card_to_json(c));
        outputs.push_back(p);
      }
      const fs::path summary = cdir / "summary.json";
      write_file_atomic(summary,
                        card_summary_json(cards, rec_.recording_id, rec_.title).dump(2) +
                            "\n");
      outputs.push_back(summary);
      return outputs;
    });
  }

  const PipelineConfig &cfg_;
  const RecordingInputs &rec_;
  const RunOptions &opts_;
  BackendHandle &backend_;
  fs::path root_;
  fs::path dir_;
  RecordingManifest manifest_;
};

}  // namespace internal

// ---------------------------------------------------------------------------
// Reports

struct ReportSet {
  std::vector<std::string> files;  // relative to the output directory
  std::vector<std::string> notes;
};

/// Collects per-recording artifacts named in the manifest into run-level
/// tables under <output_dir>/reports/.
inline ReportSet emit_reports(const RunManifest &m) {
  ReportSet out;
  const fs::path root = m.output_dir;
  const fs::path rdir = root / "reports";
  auto emit = [&](const std::string &name, const std::string &content) {
    write_file_atomic(rdir / name, content);
    out.files.push_back("reports/" + name);
  };
  auto artifact = [&](const RecordingManifest &r, std::string_view stage,
                      std::string_view suffix) -> std::optional<fs::path> {
    const StageRecord *s = r.stage(stage);
    if (!s || !s->usable()) return std::nullopt;
    for (const auto &a : s->artifacts) {
      if (a.size() >= suffix.size() &&
          a.compare(a.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return root / a;
      }
    }
    return std::nullopt;
  };

  std::vector<DerReport> ders;
  nlohmann::ordered_json hist_docs = nlohmann::ordered_json::array();
  std::string hist_tsv = "recording\tspeaker\tcount\tselected\tfence\tfallback\n";
  nlohmann::ordered_json card_docs = nlohmann::ordered_json::array();
  std::string card_tsv = "recording\tspeaker\tparse_failed\ttraits\tgoals\tinteractions\tfilm_guess\n";
  auto join = [](const nlohmann::json &list) {
    std::string s;
    for (const auto &item : list) {
      if (!s.empty()) s += "; ";
      s += item.get<std::string>();
    }
    return s;
  };
  auto tsv_field = [](std::string s) {
    for (char &c : s) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    return s;
  };

  for (const auto &r : m.recordings) {
    if (auto p = artifact(r, "score", "der.json")) {
      ders.push_back(der_report_from_json(nlohmann::json::parse(read_text_file(*p))));
    }
    if (auto p = artifact(r, "select", "histogram.json")) {
      const auto j = nlohmann::ordered_json::parse(read_text_file(*p));
      for (const auto &s : j.at("speakers")) {
        hist_tsv += r.recording_id + '\t' + s.at("speaker").get<std::string>() + '\t' +
                    std::to_string(s.at("count").get<std::size_t>()) + '\t' +
                    (s.at("selected").get<bool>() ? "true" : "false") + '\t' +
                    format_fixed(j.at("fence").get<double>()) + '\t' +
                    (j.at("fallback").get<bool>() ? "true" : "false") + '\n';
      }
      hist_docs.push_back(j);
    }
    if (auto p = artifact(r, "analyze", "summary.json")) {
      const auto j = nlohmann::ordered_json::parse(read_text_file(*p));
      for (const auto &c : j.at("cards")) {
        card_tsv += r.recording_id + '\t' + c.at("speaker").get<std::string>() + '\t' +
                    (c.at("parse_failed").get<bool>() ? "true" : "false") + '\t' +
                    tsv_field(join(c.at("traits"))) + '\t' +
                    tsv_field(join(c.at("goals"))) + '\t' +
                    tsv_field(join(c.at("interactions"))) + '\t' +
                    tsv_field(c.at("film_guess").get<std::string>()) + '\n';
      }
      card_docs.push_back(j);
    }
  }

  if (!ders.empty()) {
    emit("der_table.tsv", der_table_tsv(ders));
    emit("der_table.json", der_table_json(ders).dump(2) + "\n");
  } else {
    out.notes.push_back("DER table absent: no recording was scored");
  }
  if (!hist_docs.empty()) {
    emit("histogram.tsv", hist_tsv);
    emit("histogram.json", hist_docs.dump(2) + "\n");
  } else {
    out.notes.push_back("histogram absent: speaker selection did not run");
  }
  if (!card_docs.empty()) {
    emit("cards_summary.tsv", card_tsv);
    emit("cards_summary.json", card_docs.dump(2) + "\n");
  } else {
    out.notes.push_back("card summary absent: analysis stage did not run");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run

/// Runs every recording (in parallel across `workers`), emits reports and
/// writes <output_dir>/manifest.json, even when stages fail.
inline RunManifest run(const PipelineConfig &cfg, const RunOptions &opts = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m;
  m.config = config_to_json(cfg);
  m.started_at = internal::now_utc();
  m.output_dir = cfg.output_dir;
  fs::create_directories(cfg.output_dir);

  internal::BackendHandle backend(cfg.analysis, opts.backend);
  m.recordings.resize(cfg.recordings.size());
  detail::parallel_for(cfg.recordings.size(), opts.workers.value_or(cfg.workers),
                       [&](std::size_t i) {
                         internal::RecordingRunner runner(cfg, cfg.recordings[i],
                                                          opts, backend);
                         m.recordings[i] = runner.run();
                       });

  try {
    ReportSet reports = emit_reports(m);
    m.reports = std::move(reports.files);
    m.notes = std::move(reports.notes);
  } catch (const std::exception &e) {
    m.notes.push_back(std::string("report emission failed: ") + e.what());
  }
  m.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file_atomic(fs::path(cfg.output_dir) / "manifest.json", manifest_to_json(m));
  return m;
}

}  // namespace filmdiar
