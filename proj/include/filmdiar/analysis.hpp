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

// Character analysis: render one speaker's dossier into a six-question
// prompt, send it to a chat-completion backend, and parse the numbered
// answer into a character card.
//
// Question 6 asks the model to name the film. Comparing those guesses with
// the true title (recognition_probe) shows whether the answers lean on
// prior knowledge of the film rather than on the dialogue itself.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "filmdiar/chat_backend.hpp"
#include "filmdiar/detail/checksum.hpp"
#include "filmdiar/detail/parallel.hpp"
#include "filmdiar/dialog.hpp"
#include "filmdiar/error.hpp"

namespace filmdiar {

inline constexpr std::size_t kQuestionCount = 6;
inline constexpr std::string_view kUtterancesPlaceholder = "{utterances}";
inline constexpr std::string_view kQuestionsPlaceholder = "{questions}";

struct PromptTemplate {
  std::string system_text;
  std::string user_template;  // contains {utterances} and {questions}
  std::array<std::string, kQuestionCount> questions;
  std::string language = "de";

  void validate() const {
    if (user_template.find(kUtterancesPlaceholder) == std::string::npos) {
      throw InvalidArgument("prompt template lacks the {utterances} placeholder");
    }
    for (std::size_t i = 0; i < questions.size(); ++i) {
      if (questions[i].empty()) {
        throw InvalidArgument("prompt question " + std::to_string(i + 1) +
                              " is empty");
      }
    }
  }
};

/// German default: personality, interaction, goals, relationships,
/// linguistic style, and the film-recognition probe.
inline PromptTemplate default_prompt_template() {
  PromptTemplate t;
  t.system_text =
      "Du bist Expertin für Psycholinguistik und Figurenanalyse. Du erhältst "
      "ausschließlich die gesprochenen Sätze einer einzelnen Figur und "
      "analysierst die Figur allein auf dieser Grundlage.";
  t.user_template =
      "Hier sind alle Redebeiträge einer Figur in zeitlicher Reihenfolge, "
      "ein Redebeitrag pro Zeile:\n"
      "\n"
      "{utterances}\n"
      "\n"
      "Beantworte die folgenden Fragen. Nummeriere deine Antworten mit 1. "
      "bis 6. und gib bei den Fragen 1 bis 3 jeweils eine kommagetrennte "
      "Liste an.\n"
      "{questions}\n";
  t.questions = {
      "Welche Persönlichkeitsmerkmale hat die Figur?",
      "Wie verhält sich die Figur in Interaktionen mit anderen?",
      "Welche Ziele und Motivationen verfolgt die Figur?",
      "Welche Beziehungen zu anderen Figuren lassen sich erkennen?",
      "Wie lässt sich der sprachliche Stil der Figur beschreiben?",
      "Aus welchem Film stammt diese Figur? Nenne nur den Titel.",
  };
  return t;
}

inline PromptTemplate prompt_template_from_json(std::string_view text) {
  PromptTemplate t;
  try {
    const auto j = nlohmann::json::parse(text);
    t.system_text = j.at("system").get<std::string>();
    t.user_template = j.at("user").get<std::string>();
    const auto &qs = j.at("questions");
    if (!qs.is_array() || qs.size() != kQuestionCount) {
      throw ParseError("prompt template needs exactly 6 questions", 0);
    }
    for (std::size_t i = 0; i < kQuestionCount; ++i) {
      t.questions[i] = qs[i].get<std::string>();
    }
    if (j.contains("language")) t.language = j["language"].get<std::string>();
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid prompt template: ") + e.what(), 0);
  }
  try {
    t.validate();
  } catch (const InvalidArgument &e) {
    throw ParseError(e.what(), 0);
  }
  return t;
}

inline std::string prompt_template_to_json(const PromptTemplate &t) {
  nlohmann::ordered_json j;
  j["language"] = t.language;
  j["system"] = t.system_text;
  j["user"] = t.user_template;
  j["questions"] = t.questions;
  return j.dump(2) + "\n";
}

inline PromptTemplate read_prompt_template_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open prompt template: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return prompt_template_from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderOptions {
  std::size_t token_budget = 12000;  // estimated tokens, system + user
};

struct RenderedPrompt {
  std::string system_text;
  std::string user_text;
  std::string prompt_hash;  // SHA-256 of system, NUL, user
  bool truncated = false;
  std::size_t utterances_kept = 0;
  std::size_t utterances_dropped = 0;
};

/// Rough token count: one token per four UTF-8 bytes, rounded up.
inline std::size_t estimate_tokens(std::string_view text) {
  return (text.size() + 3) / 4;
}

inline std::string prompt_hash(std::string_view system, std::string_view user) {
  return detail::Sha256().update(system).update(std::string_view("\0", 1)).update(user).hex();
}

namespace internal {

inline void replace_all(std::string &s, std::string_view from,
                        std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

// newlines inside one utterance would break one-utterance-per-line
inline std::string single_line(const std::string &text) {
  std::string out = text;
  for (char &c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

inline std::string render_user(const PromptTemplate &t,
                               const std::vector<const Utterance *> &utts) {
  std::string lines;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (i) lines += '\n';
    lines += single_line(utts[i]->text);
  }
  std::string questions;
  for (std::size_t i = 0; i < t.questions.size(); ++i) {
    if (i) questions += '\n';
    questions += std::to_string(i + 1) + ". " + t.questions[i];
  }
  // questions first, so utterance text containing "{questions}" stays literal
  std::string user = t.user_template;
  replace_all(user, kQuestionsPlaceholder, questions);
  replace_all(user, kUtterancesPlaceholder, lines);
  return user;
}

}  // namespace internal

/// Deterministic rendering. When the estimate exceeds the budget,
/// utterances are dropped from the middle, always keeping the first and
/// last, and the result is flagged as truncated.
inline RenderedPrompt render_prompt(const SpeakerDossier &dossier,
                                    const PromptTemplate &tmpl,
                                    const RenderOptions &opts = {}) {
  tmpl.validate();
  if (dossier.utterances.empty()) {
    throw InvalidArgument("dossier for '" + dossier.speaker + "' is empty");
  }
  std::vector<const Utterance *> kept;
  for (const auto &u : dossier.utterances) kept.push_back(&u);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Utterance *a, const Utterance *b) {
                     return a->interval < b->interval;
                   });

  RenderedPrompt out;
  out.system_text = tmpl.system_text;
  out.user_text = internal::render_user(tmpl, kept);
  while (estimate_tokens(out.system_text) + estimate_tokens(out.user_text) >
             opts.token_budget &&
         kept.size() > 2) {
    kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(kept.size() / 2));
    ++out.utterances_dropped;
    out.truncated = true;
    out.user_text = internal::render_user(tmpl, kept);
  }
  out.utterances_kept = kept.size();
  out.prompt_hash = prompt_hash(out.system_text, out.user_text);
  return out;
}

// ---------------------------------------------------------------------------
// Response parsing

struct CharacterCard {
  std::string speaker;
  std::vector<std::string> traits;        // answer 1
  std::vector<std::string> interactions;  // answer 2
  std::vector<std::string> goals;         // answer 3
  std::string film_guess;                 // answer 6
  std::array<std::string, kQuestionCount> answers;  // raw section text
  std::string raw_response;
  std::string model_id;
  std::string prompt_hash;
  bool parse_failed = false;
  bool prompt_truncated = false;

  friend bool operator==(const CharacterCard &, const CharacterCard &) = default;
};

namespace internal {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::string strip_emphasis(std::string_view s) {
  std::string out = trim(s);
  while (!out.empty() && (out.front() == '*' || out.front() == '_')) out.erase(0, 1);
  while (!out.empty() && (out.back() == '*' || out.back() == '_')) out.pop_back();
  return trim(out);
}

/// Returns the question number of a heading line such as "1.", "2)",
/// "**3.**", "### 4:" and the text that follows the marker.
inline std::optional<std::pair<int, std::string>> heading(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() &&
         (line[i] == ' ' || line[i] == '\t' || line[i] == '#' || line[i] == '*' ||
          line[i] == '_')) {
    ++i;
  }
  if (i >= line.size() || line[i] < '1' || line[i] > '6') return std::nullopt;
  const int number = line[i] - '0';
  ++i;
  if (i >= line.size() || (line[i] != '.' && line[i] != ')' && line[i] != ':')) {
    return std::nullopt;
  }
  ++i;
  return std::make_pair(number, strip_emphasis(line.substr(i)));
}

inline std::vector<std::string> split_items(const std::string &text) {
  std::vector<std::string> items;
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!trim(line).empty()) lines.push_back(trim(line));
  }

  bool bullets = false;
  for (const auto &l : lines) {
    if (l.rfind("- ", 0) == 0 || l.rfind("* ", 0) == 0 || l.rfind("• ", 0) == 0) {
      bullets = true;
    }
  }
  auto clean = [](std::string s) {
    s = strip_emphasis(s);
    while (!s.empty() && (s.back() == '.' || s.back() == ';')) s.pop_back();
    return trim(s);
  };
  if (bullets) {
    for (const auto &l : lines) {
      std::string_view v = l;
      if (v.rfind("- ", 0) == 0 || v.rfind("* ", 0) == 0) {
        v.remove_prefix(2);
      } else if (v.rfind("• ", 0) == 0) {
        v.remove_prefix(std::string_view("• ").size());
      }
      auto item = clean(std::string(v));
      if (!item.empty()) items.push_back(std::move(item));
    }
    return items;
  }
  for (const auto &l : lines) {
    std::string cur;
    for (char c : l) {
      if (c == ',' || c == ';') {
        if (auto item = clean(cur); !item.empty()) items.push_back(std::move(item));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (auto item = clean(cur); !item.empty()) items.push_back(std::move(item));
  }
  return items;
}

}  // namespace internal

/// Splits a response into its six numbered answers. Headings must appear
/// in order 1..6; a heading line of the form "1. Label: content" keeps only
/// the content. Missing sections come back as nullopt.
inline std::array<std::optional<std::string>, kQuestionCount> split_answers(
    std::string_view response) {
  std::array<std::optional<std::string>, kQuestionCount> sections;
  std::istringstream in{std::string(response)};
  int expected = 1;
  int current = 0;
  std::vector<std::string> body;
  auto flush = [&] {
    if (current == 0) return;
    std::string text;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (i) text += '\n';
      text += body[i];
    }
    sections[current - 1] = internal::trim(text);
    body.clear();
  };

  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto h = expected <= static_cast<int>(kQuestionCount)
                       ? internal::heading(line)
                       : std::nullopt;
    if (h && h->first == expected) {
      flush();
      current = expected++;
      std::string rest = h->second;
      if (const auto colon = rest.find(':'); colon != std::string::npos) {
        rest = internal::strip_emphasis(rest.substr(colon + 1));
        if (!rest.empty()) body.push_back(rest);
      } else if (!rest.empty()) {
        body.push_back(rest);
      }
      continue;
    }
    if (current) body.push_back(line);
  }
  flush();
  return sections;
}

inline CharacterCard parse_character_card(const std::string &speaker,
                                          const std::string &raw_response) {
  CharacterCard card;
  card.speaker = speaker;
  card.raw_response = raw_response;
  const auto sections = split_answers(raw_response);
  for (std::size_t i = 0; i < kQuestionCount; ++i) {
    if (sections[i]) {
      card.answers[i] = *sections[i];
    } else {
      card.parse_failed = true;
    }
  }
  card.traits = internal::split_items(card.answers[0]);
  card.interactions = internal::split_items(card.answers[1]);
  card.goals = internal::split_items(card.answers[2]);
  card.film_guess = internal::strip_emphasis(card.answers[5]);
  for (char q : {'"', '\''}) {
    if (card.film_guess.size() >= 2 && card.film_guess.front() == q &&
        card.film_guess.back() == q) {
      card.film_guess = card.film_guess.substr(1, card.film_guess.size() - 2);
    }
  }
  if (card.traits.empty() || card.interactions.empty() || card.goals.empty()) {
    card.parse_failed = true;
  }
  return card;
}

// ---------------------------------------------------------------------------
// Backend calls

struct AnalysisOptions {
  std::string model = kDefaultModel;
  RenderOptions render;
  RetryPolicy retry;
};

/// Renders, asks the backend at temperature 0 and parses the answer.
/// AuthError propagates immediately; TransientError after retries.
inline CharacterCard analyze_character(const SpeakerDossier &dossier,
                                       const PromptTemplate &tmpl,
                                       ChatBackend &backend,
                                       const AnalysisOptions &opts = {},
                                       RateLimiter *limiter = nullptr) {
  const RenderedPrompt prompt = render_prompt(dossier, tmpl, opts.render);
  const ChatRequest request{opts.model, prompt.system_text, prompt.user_text, 0.0};
  const std::string raw = with_retries(opts.retry, [&] {
    if (limiter) {
      auto permit = limiter->acquire();
      return backend.complete(request);
    }
    return backend.complete(request);
  });
  CharacterCard card = parse_character_card(dossier.speaker, raw);
  card.model_id = opts.model;
  card.prompt_hash = prompt.prompt_hash;
  card.prompt_truncated = prompt.truncated;
  return card;
}

/// One independent request per dossier, run concurrently within the
/// limiter's bounds. Cards come back in dossier order.
inline std::vector<CharacterCard> analyze_characters(
    const std::vector<SpeakerDossier> &dossiers, const PromptTemplate &tmpl,
    ChatBackend &backend, const AnalysisOptions &opts, RateLimiter &limiter) {
  std::vector<CharacterCard> cards(dossiers.size());
  detail::parallel_for(dossiers.size(), limiter.max_concurrent(),
                       [&](std::size_t i) {
                         cards[i] = analyze_character(dossiers[i], tmpl, backend,
                                                      opts, &limiter);
                       });
  return cards;
}

inline std::string card_to_json(const CharacterCard &c) {
  nlohmann::ordered_json j;
  j["speaker"] = c.speaker;
  j["model"] = c.model_id;
  j["prompt_hash"] = c.prompt_hash;
  j["parse_failed"] = c.parse_failed;
  j["prompt_truncated"] = c.prompt_truncated;
  j["traits"] = c.traits;
  j["interactions"] = c.interactions;
  j["goals"] = c.goals;
  j["film_guess"] = c.film_guess;
  j["answers"] = c.answers;
  j["raw_response"] = c.raw_response;
  return j.dump(2) + "\n";
}

inline CharacterCard card_from_json(std::string_view text) {
  CharacterCard c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.speaker = j.at("speaker").get<std::string>();
    c.model_id = j.at("model").get<std::string>();
    c.prompt_hash = j.at("prompt_hash").get<std::string>();
    c.parse_failed = j.at("parse_failed").get<bool>();
    c.prompt_truncated = j.value("prompt_truncated", false);
    c.traits = j.at("traits").get<std::vector<std::string>>();
    c.interactions = j.at("interactions").get<std::vector<std::string>>();
    c.goals = j.at("goals").get<std::vector<std::string>>();
    c.film_guess = j.at("film_guess").get<std::string>();
    const auto answers = j.at("answers").get<std::vector<std::string>>();
    if (answers.size() != kQuestionCount) {
      throw ParseError("card must carry 6 answers", 0);
    }
    std::copy(answers.begin(), answers.end(), c.answers.begin());
    c.raw_response = j.at("raw_response").get<std::string>();
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("invalid character card: ") + e.what(), 0);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Recognition probe

struct ProbeEntry {
  std::string speaker;
  std::string film_guess;
  bool exact = false;
  bool substring = false;  // either string contains the other
};

struct ProbeReport {
  std::string true_title;
  std::vector<ProbeEntry> entries;
  std::optional<double> recognition_rate;  // undefined without cards

  std::string rate_string() const {
    if (!recognition_rate) return "N/A";
    std::ostringstream os;
    os << *recognition_rate;
    return os.str();
  }
};

namespace internal {

inline std::string fold(std::string_view s) {
  std::string out = trim(s);
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace internal

/// Case-insensitive (ASCII) comparison of each card's film guess against the
/// true title. Descriptive only.
inline ProbeReport recognition_probe(const std::vector<CharacterCard> &cards,
                                     const std::string &true_title) {
  ProbeReport report;
  report.true_title = true_title;
  const std::string title = internal::fold(true_title);
  std::size_t hits = 0;
  for (const auto &c : cards) {
    ProbeEntry e{c.speaker, c.film_guess, false, false};
    const std::string guess = internal::fold(c.film_guess);
    e.exact = !guess.empty() && guess == title;
    e.substring = !guess.empty() && !title.empty() &&
                  (guess.find(title) != std::string::npos ||
                   title.find(guess) != std::string::npos);
    if (e.exact || e.substring) ++hits;
    report.entries.push_back(std::move(e));
  }
  if (!cards.empty()) {
    report.recognition_rate =
        static_cast<double>(hits) / static_cast<double>(cards.size());
  }
  return report;
}

}  // namespace filmdiar
