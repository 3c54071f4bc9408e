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

// filmdiar command-line front end.
//
//   filmdiar run --config pipeline.json [--force] [--workers N] ...
//   filmdiar score --ref ref.rttm --hyp hyp.rttm [--collar 0.25] [--no-overlap]
//   filmdiar select --rttm hyp.rttm [--min-speech 2] [--fence-multiplier 1.5]
//   filmdiar align --rttm hyp.rttm --transcript t.json [--out aligned.json]
//   filmdiar analyze --dossier d1.json ... --out-dir cards --backend stub ...
//   filmdiar vad --audio film.wav [--out speech.rttm]
//   filmdiar cluster --embeddings e.jsonl --recording film1 [--k 30 | --tau 0.5]

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "filmdiar/analysis.hpp"
#include "filmdiar/cluster.hpp"
#include "filmdiar/dialog.hpp"
#include "filmdiar/http_backend.hpp"
#include "filmdiar/ioformats.hpp"
#include "filmdiar/metrics.hpp"
#include "filmdiar/pipeline.hpp"
#include "filmdiar/vad.hpp"
#include "filmdiar/wav.hpp"

namespace {

using namespace filmdiar;

void emit(const std::string &path, const std::string &content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file_atomic(path, content);
  }
}

Annotation pick_recording(const RttmDocument &doc, const std::string &id,
                          const std::string &path) {
  if (!id.empty()) return internal::find_recording(doc, id, path);
  if (doc.recordings.size() != 1) {
    throw InvalidArgument(path + " holds " + std::to_string(doc.recordings.size()) +
                          " recordings; pass --recording");
  }
  return doc.recordings.begin()->second;
}

void print_stage_table(const RunManifest &m) {
  for (const auto &r : m.recordings) {
    for (const auto &s : r.stages) {
      std::printf("%-16s %-9s %-8s %8.3fs %s\n", r.recording_id.c_str(),
                  s.name.c_str(), to_string(s.status).c_str(), s.seconds,
                  s.reason.c_str());
    }
    for (const auto &w : r.warnings) {
      std::fprintf(stderr, "warning: %s: %s\n", r.recording_id.c_str(), w.c_str());
    }
  }
  for (const auto &n : m.notes) std::printf("note: %s\n", n.c_str());
}

struct Overrides {
  std::optional<double> collar;
  bool no_overlap = false;
  std::optional<double> min_speech;
  std::optional<double> fence_multiplier;
  std::optional<std::size_t> k;
  std::optional<double> tau;
};

void add_scoring_flags(CLI::App *cmd, Overrides &o) {
  cmd->add_option("--collar", o.collar, "No-score collar around reference boundaries (s)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--no-overlap", o.no_overlap, "Exclude overlapped reference speech");
}

void add_selection_flags(CLI::App *cmd, Overrides &o) {
  cmd->add_option("--min-speech", o.min_speech, "Minimum turn length counted (s)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--fence-multiplier", o.fence_multiplier, "Upper fence IQR multiplier")
      ->check(CLI::PositiveNumber);
}

void add_cluster_flags(CLI::App *cmd, Overrides &o) {
  auto *k = cmd->add_option("--k", o.k, "Stop at K clusters")->check(CLI::PositiveNumber);
  auto *tau = cmd->add_option("--tau", o.tau, "Stop when the closest pair exceeds tau");
  k->excludes(tau);
  tau->excludes(k);
}

void apply(const Overrides &o, DerOptions &d) {
  if (o.collar) d.collar_s = *o.collar;
  if (o.no_overlap) d.score_overlap = false;
}

void apply(const Overrides &o, SelectionConfig &s) {
  if (o.min_speech) s.min_speech_s = *o.min_speech;
  if (o.fence_multiplier) s.fence_multiplier = *o.fence_multiplier;
}

void apply(const Overrides &o, ClusterConfig &c) {
  if (o.k) c = ClusterConfig::fixed_k(*o.k);
  if (o.tau) c = ClusterConfig::threshold(*o.tau);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Speaker diarization scoring and character analysis for films"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Overrides o;

  // run
  auto *run_cmd = app.add_subcommand("run", "Run the configured pipeline");
  std::string config_path;
  std::string output_dir;
  bool force = false;
  std::optional<std::size_t> workers;
  run_cmd->add_option("-c,--config", config_path, "Pipeline config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--output-dir", output_dir, "Override the output directory");
  run_cmd->add_flag("--force", force, "Ignore cached stage results");
  run_cmd->add_option("--workers", workers, "Recordings processed in parallel")
      ->check(CLI::PositiveNumber);
  add_scoring_flags(run_cmd, o);
  add_selection_flags(run_cmd, o);
  add_cluster_flags(run_cmd, o);

  // score
  auto *score_cmd = app.add_subcommand("score", "DER of a hypothesis against a reference");
  std::string ref_path, hyp_path, json_out, tsv_out;
  score_cmd->add_option("--ref", ref_path, "Reference RTTM")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--hyp", hyp_path, "Hypothesis RTTM")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--json", json_out, "Write the DER table as JSON");
  score_cmd->add_option("--tsv", tsv_out, "Write the DER table as TSV (default: stdout)");
  score_cmd->add_option("--workers", workers, "Recordings scored in parallel")
      ->check(CLI::PositiveNumber);
  add_scoring_flags(score_cmd, o);

  // select
  auto *select_cmd = app.add_subcommand("select", "Main speakers by upper-fence outliers");
  std::string rttm_path, recording_id, out_path;
  select_cmd->add_option("--rttm", rttm_path, "Diarization RTTM")->required()->check(CLI::ExistingFile);
  select_cmd->add_option("--recording", recording_id, "Recording id inside the RTTM");
  select_cmd->add_option("--out", out_path, "Histogram document (JSON)");
  add_selection_flags(select_cmd, o);

  // align
  auto *align_cmd = app.add_subcommand("align", "Label transcript segments with speakers");
  std::string transcript_path;
  double snap = AlignOptions{}.snap_s;
  align_cmd->add_option("--rttm", rttm_path, "Diarization RTTM")->required()->check(CLI::ExistingFile);
  align_cmd->add_option("--transcript", transcript_path, "Transcript (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  align_cmd->add_option("--recording", recording_id, "Recording id inside the RTTM");
  align_cmd->add_option("--snap", snap, "Max gap for non-overlapping segments (s)")
      ->check(CLI::NonNegativeNumber);
  align_cmd->add_option("--out", out_path, "Labelled transcript (default: stdout)");

  // analyze
  auto *analyze_cmd = app.add_subcommand("analyze", "Character cards from dossiers");
  std::vector<std::string> dossier_paths;
  std::string cards_dir = "cards";
  std::string backend_name = "stub";
  std::string stub_response, template_path, title;
  AnalysisConfig ac;
  analyze_cmd->add_option("--dossier", dossier_paths, "Dossier documents")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out-dir", cards_dir, "Directory for cards");
  analyze_cmd->add_option("--backend", backend_name, "stub or http")
      ->check(CLI::IsMember({"stub", "http"}));
  analyze_cmd->add_option("--stub-response", stub_response, "Canned answer for the stub")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--endpoint", ac.http.endpoint, "Chat-completion URL");
  analyze_cmd->add_option("--credential-variable", ac.http.credential_variable,
                          "Environment variable holding the API key");
  analyze_cmd->add_option("--model", ac.model, "Model identifier");
  analyze_cmd->add_option("--template", template_path, "Prompt template (JSON)")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--token-budget", ac.token_budget, "Prompt size limit (tokens)");
  analyze_cmd->add_option("--title", title, "True film title for the recognition probe");
  analyze_cmd->add_option("--max-concurrent", ac.max_concurrent, "Concurrent requests");
  analyze_cmd->add_option("--rps", ac.requests_per_second, "Requests per second");

  // vad
  auto *vad_cmd = app.add_subcommand("vad", "Energy-based speech detection");
  std::string audio_path;
  VadConfig vc;
  vad_cmd->add_option("--audio", audio_path, "Mono WAV")->required()->check(CLI::ExistingFile);
  vad_cmd->add_option("--recording", recording_id, "Recording id (default: file stem)");
  vad_cmd->add_option("--out", out_path, "Speech RTTM (default: stdout)");
  vad_cmd->add_option("--frame-ms", vc.frame_ms, "Frame length (ms)");
  vad_cmd->add_option("--hop-ms", vc.hop_ms, "Frame hop (ms)");
  vad_cmd->add_option("--threshold-db", vc.threshold_db, "Threshold above the noise floor (dB)");
  vad_cmd->add_option("--min-speech", vc.min_speech_s, "Drop regions shorter than this (s)");
  vad_cmd->add_option("--min-gap", vc.min_gap_s, "Bridge gaps shorter than this (s)");

  // cluster
  auto *cluster_cmd = app.add_subcommand("cluster", "Cluster segment embeddings into speakers");
  std::string embeddings_path;
  cluster_cmd->add_option("--embeddings", embeddings_path, "Embedding lines (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  cluster_cmd->add_option("--recording", recording_id, "Recording id")->required();
  cluster_cmd->add_option("--out", out_path, "Hypothesis RTTM (default: stdout)");
  add_cluster_flags(cluster_cmd, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      PipelineConfig cfg = read_pipeline_config(config_path);
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      apply(o, cfg.scoring);
      apply(o, cfg.selection);
      apply(o, cfg.cluster);
      RunOptions ro;
      ro.force = force;
      ro.workers = workers;
      const RunManifest m = run(cfg, ro);
      print_stage_table(m);
      return m.failed() ? 1 : 0;
    }

    if (*score_cmd) {
      DerOptions d;
      apply(o, d);
      const auto ref = read_rttm_file(ref_path);
      const auto hyp = read_rttm_file(hyp_path);
      std::vector<std::pair<Annotation, Annotation>> pairs;
      for (const auto &[id, r] : ref.recordings) {
        const auto it = hyp.recordings.find(id);
        pairs.emplace_back(r, it == hyp.recordings.end() ? Annotation(id) : it->second);
      }
      for (const auto &[id, h] : hyp.recordings) {
        if (!ref.recordings.count(id)) {
          std::fprintf(stderr, "warning: hypothesis recording '%s' has no reference\n",
                       id.c_str());
        }
      }
      const CorpusReport report = score_corpus(pairs, d, workers.value_or(1));
      for (const auto &w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::vector<DerReport> scored;
      for (const auto &r : report.recordings)
        if (r.report) scored.push_back(*r.report);
      if (!json_out.empty()) emit(json_out, der_table_json(scored).dump(2) + "\n");
      if (!tsv_out.empty() || json_out.empty()) emit(tsv_out, der_table_tsv(scored));
      return scored.size() == report.recordings.size() ? 0 : 1;
    }

    if (*select_cmd) {
      SelectionConfig s;
      apply(o, s);
      const Annotation diar = pick_recording(read_rttm_file(rttm_path), recording_id, rttm_path);
      const SpeakerHistogram h = speech_histogram(diar, s);
      if (!out_path.empty()) emit(out_path, histogram_to_json(h, diar.recording_id()));
      std::printf("fence %.6f%s\n", h.fence, h.fallback ? " (fallback)" : "");
      for (const auto &spk : h.selected()) std::printf("%s\n", spk.c_str());
      return 0;
    }

    if (*align_cmd) {
      const Annotation diar = pick_recording(read_rttm_file(rttm_path), recording_id, rttm_path);
      Transcript t = read_transcript_file(transcript_path);
      t.segments = align_transcript(diar, std::move(t.segments), AlignOptions{snap});
      emit(out_path, write_transcript(t));
      return 0;
    }

    if (*analyze_cmd) {
      ac.backend = backend_name == "http" ? BackendKind::kHttp : BackendKind::kStub;
      std::unique_ptr<ChatBackend> backend;
      if (ac.backend == BackendKind::kStub) {
        if (stub_response.empty()) {
          throw InvalidArgument("--backend stub needs --stub-response");
        }
        backend = std::make_unique<StubBackend>(read_text_file(stub_response));
      } else {
        backend = std::make_unique<HttpChatBackend>(ac.http);
      }
      const PromptTemplate tmpl = template_path.empty()
                                      ? default_prompt_template()
                                      : read_prompt_template_file(template_path);
      std::vector<SpeakerDossier> dossiers;
      for (const auto &p : dossier_paths) dossiers.push_back(read_dossier_file(p));
      AnalysisOptions aopts;
      aopts.model = ac.model;
      aopts.render.token_budget = ac.token_budget;
      RateLimiter limiter(ac.max_concurrent, ac.requests_per_second);
      const auto cards = analyze_characters(dossiers, tmpl, *backend, aopts, limiter);
      for (const auto &c : cards) {
        write_file_atomic(fs::path(cards_dir) / (file_stem_for(c.speaker) + ".json"),
                          card_to_json(c));
        std::printf("%s%s\n", c.speaker.c_str(), c.parse_failed ? " (parse failed)" : "");
      }
      write_file_atomic(fs::path(cards_dir) / "summary.json",
                        card_summary_json(cards, "", title).dump(2) + "\n");
      if (!title.empty()) {
        std::printf("recognition rate: %s\n",
                    recognition_probe(cards, title).rate_string().c_str());
      }
      return 0;
    }

    if (*vad_cmd) {
      const std::string id =
          recording_id.empty() ? fs::path(audio_path).stem().string() : recording_id;
      const Timeline speech = detect_speech(read_wav_file(audio_path), vc, id);
      emit(out_path, write_rttm(speech.to_annotation(kSpeechLabel)));
      return 0;
    }

    if (*cluster_cmd) {
      ClusterConfig cc;
      apply(o, cc);
      const auto records = read_embeddings_file(embeddings_path);
      const ClusterResult result = agglomerate(records, cc);
      emit(out_path, write_rttm(to_annotation(records, result, recording_id)));
      std::fprintf(stderr, "%zu clusters\n", result.num_clusters());
      return 0;
    }
  } catch (const AuthError &e) {
    std::fprintf(stderr, "filmdiar: authentication error: %s\n", e.what());
    return 3;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "filmdiar: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
