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

#include <gtest/gtest.h>

#include "filmdiar/analysis.hpp"
#include "support/fixtures.hpp"

namespace filmdiar {
namespace {

SpeakerDossier Dossier(std::size_t n, std::size_t text_len = 10) {
  SpeakerDossier d;
  d.speaker = "spk1";
  for (std::size_t i = 0; i < n; ++i) {
    d.utterances.push_back({TimeInterval(static_cast<double>(i), i + 0.5),
                            "u" + std::to_string(i) + std::string(text_len, 'x')});
  }
  return d;
}

const char *kFullResponse =
    "1. Persönlichkeit: listig, strategisch, charismatisch\n"
    "2. Interaktion:\n"
    "- dominant\n"
    "- schmeichelnd\n"
    "3. Ziele: Macht; Reichtum\n"
    "4. Beziehungen: Berater des Herzogs.\n"
    "5. Stil: höflich, berechnend.\n"
    "6. Film: \"Jud Süß\"\n";

TEST(PromptTest, DeterministicAndOrdered) {
  const auto d = testing::golden_dossier();
  const auto a = render_prompt(d, default_prompt_template());
  const auto b = render_prompt(d, default_prompt_template());
  EXPECT_EQ(a.user_text, b.user_text);
  EXPECT_EQ(a.prompt_hash, b.prompt_hash);
  EXPECT_EQ(a.prompt_hash.size(), 64u);
  const auto p1 = a.user_text.find("Guten Abend");
  const auto p2 = a.user_text.find("Wort gegeben");
  const auto p3 = a.user_text.find("Stuttgart");
  ASSERT_NE(p1, std::string::npos);
  EXPECT_LT(p1, p2);
  EXPECT_LT(p2, p3);
  EXPECT_NE(a.user_text.find("Guten Abend, meine Herren.\nIch habe"), std::string::npos);
  for (const auto &q : default_prompt_template().questions) {
    EXPECT_NE(a.user_text.find(q), std::string::npos);
  }
  EXPECT_FALSE(a.truncated);
  EXPECT_EQ(a.utterances_kept, 3u);
}

TEST(PromptTest, MatchesGoldenFile) {
  const auto p = render_prompt(testing::golden_dossier(), default_prompt_template());
  EXPECT_EQ(testing::golden_rendering(p),
            testing::slurp(testing::fixture_path("golden_prompt.txt")));
}

TEST(PromptTest, TruncationKeepsFirstAndLast) {
  const auto d = Dossier(200, 40);
  RenderOptions opts;
  opts.token_budget = 800;
  const auto p = render_prompt(d, default_prompt_template(), opts);
  EXPECT_TRUE(p.truncated);
  EXPECT_LE(estimate_tokens(p.system_text) + estimate_tokens(p.user_text), 800u);
  EXPECT_EQ(p.utterances_kept + p.utterances_dropped, 200u);
  EXPECT_NE(p.user_text.find("u0x"), std::string::npos);
  EXPECT_NE(p.user_text.find("u199x"), std::string::npos);
}

TEST(PromptTest, TruncationNeverDropsBelowTwo) {
  RenderOptions opts;
  opts.token_budget = 1;
  const auto p = render_prompt(Dossier(5), default_prompt_template(), opts);
  EXPECT_EQ(p.utterances_kept, 2u);
  EXPECT_TRUE(p.truncated);
}

TEST(PromptTest, EmptyDossierAndBadTemplate) {
  EXPECT_THROW(render_prompt(Dossier(0), default_prompt_template()), InvalidArgument);
  PromptTemplate t = default_prompt_template();
  t.user_template = "no placeholder";
  EXPECT_THROW(render_prompt(Dossier(1), t), InvalidArgument);
}

TEST(PromptTest, PlaceholderInTextStaysLiteral) {
  SpeakerDossier d = Dossier(1);
  d.utterances[0].text = "sag {questions}\nbitte";
  const auto p = render_prompt(d, default_prompt_template());
  EXPECT_NE(p.user_text.find("sag {questions} bitte"), std::string::npos);
}

TEST(PromptTest, TemplateJsonRoundTrip) {
  const auto t = default_prompt_template();
  const auto back = prompt_template_from_json(prompt_template_to_json(t));
  EXPECT_EQ(back.system_text, t.system_text);
  EXPECT_EQ(back.user_template, t.user_template);
  EXPECT_EQ(back.questions, t.questions);
}

TEST(CardTest, ParsesNumberedResponse) {
  const auto c = parse_character_card("spk0", kFullResponse);
  EXPECT_FALSE(c.parse_failed);
  EXPECT_EQ(c.traits, (std::vector<std::string>{"listig", "strategisch", "charismatisch"}));
  EXPECT_EQ(c.interactions, (std::vector<std::string>{"dominant", "schmeichelnd"}));
  EXPECT_EQ(c.goals, (std::vector<std::string>{"Macht", "Reichtum"}));
  EXPECT_EQ(c.answers[3], "Berater des Herzogs.");
  EXPECT_EQ(c.film_guess, "Jud Süß");
  EXPECT_EQ(c.raw_response, kFullResponse);
}

TEST(CardTest, HeadingVariants) {
  const auto c = parse_character_card(
      "s", "**1.** a, b\n2) c\n### 3: d\n4. e\n5. f\n6. g\n");
  EXPECT_FALSE(c.parse_failed);
  EXPECT_EQ(c.traits, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(c.film_guess, "g");
}

TEST(CardTest, FreeProseFailsAndKeepsRaw) {
  const std::string prose = "Die Figur wirkt insgesamt sehr entschlossen.";
  const auto c = parse_character_card("s", prose);
  EXPECT_TRUE(c.parse_failed);
  EXPECT_EQ(c.raw_response, prose);
  EXPECT_TRUE(c.traits.empty());
}

TEST(CardTest, MissingSectionFails) {
  EXPECT_TRUE(parse_character_card("s", "1. a\n2. b\n3. c\n4. d\n5. e\n").parse_failed);
  EXPECT_TRUE(parse_character_card("s", "1. a\n3. c\n2. b\n4. d\n5. e\n6. f\n").parse_failed);
}

TEST(CardTest, JsonRoundTrip) {
  auto c = parse_character_card("spk0", kFullResponse);
  c.model_id = "m";
  c.prompt_hash = "abc";
  c.prompt_truncated = true;
  const auto back = card_from_json(card_to_json(c));
  EXPECT_EQ(back.traits, c.traits);
  EXPECT_EQ(back.answers, c.answers);
  EXPECT_EQ(back.raw_response, c.raw_response);
  EXPECT_EQ(back.prompt_truncated, true);
  EXPECT_THROW(card_from_json("{}"), ParseError);
}

TEST(AnalyzeTest, StubBackendFillsCard) {
  StubBackend stub(kFullResponse);
  ChatRequest seen;
  StubBackend spy([&](const ChatRequest &r) {
    seen = r;
    return std::string(kFullResponse);
  });
  AnalysisOptions opts;
  opts.model = "test-model";
  const auto card = analyze_character(testing::golden_dossier(),
                                      default_prompt_template(), spy, opts);
  EXPECT_EQ(seen.temperature, 0.0);
  EXPECT_EQ(seen.model, "test-model");
  EXPECT_EQ(card.model_id, "test-model");
  EXPECT_EQ(card.prompt_hash, prompt_hash(seen.system, seen.user));
  EXPECT_FALSE(card.parse_failed);
  EXPECT_EQ(spy.calls(), 1u);
}

TEST(AnalyzeTest, OneRequestPerDossierInOrder) {
  StubBackend stub([](const ChatRequest &r) {
    return r.user.find("u0x") != std::string::npos ? std::string(kFullResponse)
                                                   : std::string("frei");
  });
  std::vector<SpeakerDossier> ds{Dossier(2), Dossier(3)};
  ds[1].utterances[0].text = "anders";
  ds[1].speaker = "spk2";
  RateLimiter limiter(2, 0.0);
  const auto cards =
      analyze_characters(ds, default_prompt_template(), stub, AnalysisOptions{}, limiter);
  ASSERT_EQ(cards.size(), 2u);
  EXPECT_EQ(cards[0].speaker, "spk1");
  EXPECT_FALSE(cards[0].parse_failed);
  EXPECT_EQ(cards[1].speaker, "spk2");
  EXPECT_TRUE(cards[1].parse_failed);
  EXPECT_EQ(stub.calls(), 2u);
}

TEST(AnalyzeTest, TransientFailuresRetried) {
  int n = 0;
  StubBackend flaky([&](const ChatRequest &) -> std::string {
    if (++n < 3) throw TransientError("429");
    return kFullResponse;
  });
  AnalysisOptions opts;
  opts.retry.sleep = nullptr;
  EXPECT_FALSE(analyze_character(Dossier(1), default_prompt_template(), flaky, opts)
                   .parse_failed);
  EXPECT_EQ(flaky.calls(), 3u);
}

CharacterCard Guess(std::string g) {
  CharacterCard c;
  c.speaker = "s";
  c.film_guess = std::move(g);
  return c;
}

TEST(ProbeTest, Examples) {
  auto r = recognition_probe({Guess("Jud Süß")}, "Jud Süß");
  EXPECT_TRUE(r.entries[0].exact);
  EXPECT_EQ(r.recognition_rate, 1.0);
  r = recognition_probe({Guess("unknown film")}, "Jud Süß");
  EXPECT_FALSE(r.entries[0].exact);
  EXPECT_FALSE(r.entries[0].substring);
  EXPECT_EQ(r.recognition_rate, 0.0);
  r = recognition_probe({}, "Jud Süß");
  EXPECT_FALSE(r.recognition_rate.has_value());
  EXPECT_EQ(r.rate_string(), "N/A");
}

TEST(ProbeTest, CaseAndSubstring) {
  const auto r = recognition_probe(
      {Guess("  JUD Süß "), Guess("Der Film Jud Süß von 1940"), Guess("")}, "Jud Süß");
  EXPECT_TRUE(r.entries[0].exact);
  EXPECT_FALSE(r.entries[1].exact);
  EXPECT_TRUE(r.entries[1].substring);
  EXPECT_FALSE(r.entries[2].substring);
  EXPECT_DOUBLE_EQ(*r.recognition_rate, 2.0 / 3.0);
}

}  // namespace
}  // namespace filmdiar
