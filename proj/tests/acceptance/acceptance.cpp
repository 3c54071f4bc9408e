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

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every check runs against an independent oracle or a fixed value.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "filmdiar/pipeline.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace {

using namespace filmdiar;
namespace t = filmdiar::testing;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string &what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0: untimed
  std::function<Outcome()> check;
};

std::string str(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

Outcome DerIdentity() {
  Outcome o;
  t::Rng rng(101);
  for (int i = 0; i < 200; ++i) {
    const Annotation x = t::random_annotation(rng, "r", 5, 40, 0.01, 120.0, "s");
    const double der = score_der(x, x, DerOptions{0.0, true}).der;
    o.require(der == 0.0, "annotation " + std::to_string(i) + " scored " + str(der));
  }
  if (o.pass) o.detail = "200 annotations, DER exactly 0";
  return o;
}

Outcome DerOracle() {
  Outcome o;
  t::Rng rng(202);
  double worst = 0.0;
  int compared = 0;
  for (int i = 0; i < 100; ++i) {
    const Annotation ref = t::random_annotation(rng, "r", 5, 40, 0.01, 60.0, "r");
    const Annotation hyp = t::random_annotation(rng, "r", 5, 40, 0.01, 60.0, "h");
    for (double collar : {0.0, 0.25}) {
      const auto oracle = t::frame_der(ref, hyp, collar, true);
      if (oracle.total == 0) {
        bool threw = false;
        try {
          score_der(ref, hyp, {collar, true});
        } catch (const ScoringError &) {
          threw = true;
        }
        o.require(threw, "pair " + std::to_string(i) + ": empty scored region accepted");
        continue;
      }
      const double diff = std::abs(score_der(ref, hyp, {collar, true}).der - oracle.der());
      worst = std::max(worst, diff);
      ++compared;
      o.require(diff <= 1e-3, "pair " + std::to_string(i) + " collar " + str(collar) +
                                  " differs by " + str(diff));
    }
  }
  if (o.pass) {
    o.detail = std::to_string(compared) + " comparisons, max |diff| " + str(worst);
  }
  return o;
}

Outcome DerWorkedExamples() {
  Outcome o;
  const DerReport a = score_der(Annotation("r", {{0.0, 10.0, "A"}}),
                                Annotation("r", {{0.0, 8.0, "X"}, {8.0, 12.0, "Y"}}),
                                DerOptions{0.0, true});
  o.require(a.missed_s == 0.0 && std::abs(a.false_alarm_s - 2.0) < 1e-9 &&
                std::abs(a.confusion_s - 2.0) < 1e-9,
            "components " + str(a.missed_s) + "/" + str(a.false_alarm_s) + "/" +
                str(a.confusion_s));
  o.require(std::abs(a.der - 0.4) <= 1e-9, "DER " + str(a.der));
  const DerReport b = score_der(Annotation("r", {{0.0, 1.0, "A"}}),
                                Annotation("r", {{0.0, 5.0, "X"}}), DerOptions{0.0, true});
  o.require(std::abs(b.der - 4.0) <= 1e-9, "second example DER " + str(b.der));
  if (o.pass) o.detail = "DER " + str(a.der) + " and " + str(b.der);
  return o;
}

Outcome MappingOptimality() {
  Outcome o;
  t::Rng rng(303);
  std::uniform_int_distribution<int> dim(1, 6), weight(0, 1000);
  for (int i = 0; i < 100; ++i) {
    WeightMatrix w(dim(rng), std::vector<double>(dim(rng)));
    for (auto &row : w)
      for (auto &x : row) x = weight(rng);
    const double got = max_weight_assignment(w).total;
    const double want = t::brute_force_max_weight(w);
    o.require(got == want, "matrix " + std::to_string(i) + ": " + str(got) + " vs " + str(want));
  }
  if (o.pass) o.detail = "100 matrices, totals identical";
  return o;
}

Outcome CorpusValueNonTarget() {
  // 58.84 needs the restricted corpus; the corpus path is checked instead.
  Outcome o;
  DerReport a, b;
  a.total_ref_s = 1.0;
  a.confusion_s = 0.2;
  a.der = 0.2;
  b.total_ref_s = 3.0;
  b.confusion_s = 1.8;
  b.der = 0.6;
  const auto agg = aggregate_der({a, b});
  o.require(agg && std::abs(agg->der_weighted - 0.5) < 1e-12 &&
                std::abs(agg->der_mean - 0.4) < 1e-12,
            "aggregate mismatch");
  if (o.pass) o.detail = "58.84 not reproduced (restricted corpus); weighted 0.5, mean 0.4";
  return o;
}

Outcome ClusteringRecovery() {
  Outcome o;
  t::Rng rng(404);
  std::vector<int> truth;
  const auto pts = t::gaussian_blobs(rng, 4, 50, 16, 0.01, &truth);
  const auto span = std::span<const std::vector<double>>(pts);
  const double ari_k = t::adjusted_rand_index(agglomerate(span, ClusterConfig::fixed_k(4)).labels, truth);
  const double ari_t = t::adjusted_rand_index(agglomerate(span, ClusterConfig::threshold(0.5)).labels, truth);
  o.require(ari_k == 1.0, "fixed_k ARI " + str(ari_k));
  o.require(ari_t == 1.0, "threshold ARI " + str(ari_t));
  if (o.pass) o.detail = "ARI 1 in both modes";
  return o;
}

Outcome ClusteringScale() {
  Outcome o;
  t::Rng rng(505);
  const auto pts = t::gaussian_blobs(rng, 10, 500, 16, 0.3, nullptr);
  const auto r = agglomerate(std::span<const std::vector<double>>(pts), ClusterConfig{});
  o.require(r.labels.size() == 5000, "label count");
  if (o.pass) o.detail = "5000 records -> " + std::to_string(r.num_clusters()) + " clusters";
  return o;
}

Annotation WithCounts(const std::vector<std::pair<std::string, int>> &counts) {
  std::vector<SpeakerTurn> turns;
  double at = 0.0;
  for (const auto &[spk, n] : counts)
    for (int i = 0; i < n; ++i, at += 4.0) turns.emplace_back(at, at + 3.0, spk);
  return Annotation("f", std::move(turns));
}

Outcome FenceSelection() {
  Outcome o;
  const auto h = speech_histogram(WithCounts({{"a", 3}, {"b", 4}, {"c", 5}, {"d", 20}}));
  o.require(h.fence == 16.25, "fence " + str(h.fence));
  o.require(h.selected() == std::vector<std::string>{"d"}, "selection");
  for (int n : {1, 2, 7}) {
    const auto eq = speech_histogram(WithCounts({{"a", n}, {"b", n}, {"c", n}}));
    o.require(eq.fallback && eq.selected().size() == 3,
              "equal counts " + std::to_string(n) + " gave " +
                  std::to_string(eq.selected().size()));
  }
  if (o.pass) o.detail = "fence 16.25 selects d; equal counts fall back to all";
  return o;
}

Outcome Alignment() {
  Outcome o;
  t::Rng rng(606);
  std::uniform_int_distribution<int> pos(0, 8 * 60), len(1, 8 * 4);
  int segments = 0;
  for (int f = 0; f < 100; ++f) {
    const Annotation diar = t::random_annotation(rng, "f", 4, 25, 0.125, 60.0, "s");
    std::vector<TranscriptSegment> segs;
    for (int k = 0; k < 20; ++k) {
      const double s = pos(rng) / 8.0;
      segs.push_back({TimeInterval(s, s + len(rng) / 8.0), "x", std::nullopt, std::nullopt, false});
    }
    const auto aligned = align_transcript(diar, segs, AlignOptions{0.5});
    for (const auto &seg : aligned) {
      ++segments;
      const auto want = t::brute_force_speaker(diar, seg.start(), seg.end(), 0.5);
      o.require(seg.speaker == want, "fixture " + std::to_string(f) + ": " +
                                         seg.speaker.value_or("-") + " vs " + want);
    }
  }
  if (o.pass) o.detail = "100 fixtures, " + std::to_string(segments) + " segments";
  return o;
}

std::string Mutate(t::Rng &rng, std::string line) {
  static const std::string junk = "SPEAKR 0123456789.-+eE<>NAnaif\t:x";
  std::uniform_int_distribution<int> op(0, 3);
  std::uniform_int_distribution<std::size_t> ch(0, junk.size() - 1);
  const int edits = 1 + static_cast<int>(rng() % 4);
  for (int e = 0; e < edits && !line.empty(); ++e) {
    std::uniform_int_distribution<std::size_t> at(0, line.size() - 1);
    switch (op(rng)) {
      case 0: line.erase(at(rng), 1 + rng() % 6); break;
      case 1: line.insert(at(rng), 1, junk[ch(rng)]); break;
      case 2: line[at(rng)] = junk[ch(rng)]; break;
      default: line = line.substr(0, at(rng)); break;
    }
  }
  return line;
}

Outcome FormatRoundTrip() {
  Outcome o;
  t::Rng rng(707);
  for (int i = 0; i < 100; ++i) {
    const Annotation a = t::random_annotation(rng, "film" + std::to_string(i % 3), 5, 40,
                                              0.001, 3600.0, "spk");
    const std::string text = write_rttm(a);
    const std::string again = write_rttm(parse_rttm(text).recordings.at(a.recording_id()));
    o.require(text == again, "RTTM fixture " + std::to_string(i));
    Transcript tr;
    tr.recording_id = a.recording_id();
    for (const auto &turn : a.turns()) {
      tr.segments.push_back({turn.interval(), "Grüß Gott, \"" + turn.speaker() + "\"",
                             turn.speaker(), 0.75, false});
    }
    const std::string tj = write_transcript(tr);
    o.require(write_transcript(parse_transcript(tj)) == tj, "transcript fixture " + std::to_string(i));
  }

  const std::string valid = "SPEAKER film1 1 12.345 2.500 <NA> <NA> alice <NA> <NA>";
  const std::string valid_json =
      R"({"recording": "film1", "segments": [{"start": 1.5, "end": 2.25, "text": "Ja.", "speaker": "a"}]})";
  int structured = 0, accepted = 0;
  for (int i = 0; i < 10000; ++i) {
    const bool json = i % 2 == 1;
    const std::string input = Mutate(rng, json ? valid_json : valid);
    try {
      if (json) {
        parse_transcript(input);
      } else {
        parse_rttm(input);
      }
      ++accepted;
    } catch (const ParseError &) {
      ++structured;
    } catch (const std::exception &e) {
      o.require(false, "case " + std::to_string(i) + " raised unstructured error: " + e.what());
    }
  }
  if (o.pass) {
    o.detail = "round-trips identical; 10000 fuzz cases: " + std::to_string(structured) +
               " ParseError, " + std::to_string(accepted) + " still well-formed";
  }
  return o;
}

Outcome EndToEnd() {
  Outcome o;
  PipelineConfig cfg = read_pipeline_config(t::fixture_path("e2e/pipeline.json"));
  cfg.output_dir = t::fresh_dir("acceptance_e2e").string();
  const RunManifest first = run(cfg);
  const auto &r = first.recordings.at(0);
  for (const char *name : {"cluster", "score", "align", "select", "dossiers", "analyze"}) {
    const auto *s = r.stage(name);
    o.require(s && s->status == StageStatus::kOk,
              std::string(name) + (s ? " " + to_string(s->status) + " " + s->reason : " missing"));
  }
  if (!o.pass) return o;
  const fs::path dir = fs::path(cfg.output_dir) / "film1";
  const auto der = der_report_from_json(nlohmann::json::parse(read_text_file(dir / "der.json")));
  o.require(std::abs(der.der - 0.5 / 35.5) < 1e-9, "DER " + str(der.der));
  const auto hist = nlohmann::json::parse(read_text_file(dir / "histogram.json"));
  o.require(hist.contains("fence"), "histogram lacks fence");
  std::size_t dossiers = 0;
  for (const auto &e : fs::directory_iterator(dir / "dossiers")) dossiers += e.is_regular_file();
  o.require(dossiers >= 1 && dossiers <= 3, std::to_string(dossiers) + " dossiers");
  for (const auto &a : r.stage("analyze")->artifacts) {
    if (a.find("summary") != std::string::npos) continue;
    const auto card = card_from_json(read_text_file(fs::path(cfg.output_dir) / a));
    o.require(!card.parse_failed && !card.traits.empty() && !card.goals.empty() &&
                  !card.interactions.empty() && !card.film_guess.empty(),
              "card " + a + " incomplete");
  }
  const RunManifest second = run(cfg);
  for (const auto &s : second.recordings.at(0).stages) {
    o.require(s.status == StageStatus::kSkipped && s.reason == kReasonCached,
              "second run: " + s.name + " " + to_string(s.status));
  }
  if (o.pass) {
    o.detail = "6 stages ok, DER " + str(der.der) + ", " + std::to_string(dossiers) +
               " dossiers; second run fully cached";
  }
  return o;
}

Outcome PromptDeterminism() {
  Outcome o;
  const auto d = t::golden_dossier();
  const auto a = render_prompt(d, default_prompt_template());
  const auto b = render_prompt(d, default_prompt_template());
  o.require(a.system_text == b.system_text && a.user_text == b.user_text &&
                a.prompt_hash == b.prompt_hash,
            "two renderings differ");
  const std::string golden = t::slurp(t::fixture_path("golden_prompt.txt"));
  o.require(!golden.empty() && t::golden_rendering(a) == golden, "golden file mismatch");
  if (o.pass) o.detail = "hash " + a.prompt_hash.substr(0, 16) + "... matches golden";
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"DER identity", 5, DerIdentity},
      {"DER oracle equivalence", 30, DerOracle},
      {"DER worked examples", 0, DerWorkedExamples},
      {"Mapping optimality", 5, MappingOptimality},
      {"Corpus DER 58.84 (non-target)", 0, CorpusValueNonTarget},
      {"Clustering recovery", 10, ClusteringRecovery},
      {"Clustering 5000 records", 60, ClusteringScale},
      {"Fence selection", 0, FenceSelection},
      {"Alignment vs brute force", 0, Alignment},
      {"Format round-trip and fuzz", 0, FormatRoundTrip},
      {"End-to-end fixture", 0, EndToEnd},
      {"Prompt determinism", 0, PromptDeterminism},
  };
  int failures = 0;
  for (const auto &c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.detail += " (over " + str(c.time_limit_s) + " s limit)";
    }
    if (!o.pass) ++failures;
    std::printf("%s  %-30s %8.3f s  %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
