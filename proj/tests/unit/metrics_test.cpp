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

#include "filmdiar/metrics.hpp"
#include "support/oracles.hpp"

namespace filmdiar {
namespace {

DerOptions NoCollar() { return {0.0, true}; }

TEST(DerTest, WorkedExample) {
  const Annotation ref("r", {{0.0, 10.0, "A"}});
  const Annotation hyp("r", {{0.0, 8.0, "X"}, {8.0, 12.0, "Y"}});
  const DerReport d = score_der(ref, hyp, NoCollar());
  EXPECT_EQ(d.mapping, (SpeakerMapping{{"X", "A"}}));
  EXPECT_EQ(d.missed_s, 0.0);
  EXPECT_EQ(d.false_alarm_s, 2.0);
  EXPECT_EQ(d.confusion_s, 2.0);
  EXPECT_EQ(d.total_ref_s, 10.0);
  EXPECT_NEAR(d.der, 0.4, 1e-9);
  EXPECT_NEAR(testing::frame_der(ref, hyp, 0.0, true).der(), 0.4, 1e-12);
}

TEST(DerTest, CanExceedOne) {
  const DerReport d = score_der(Annotation("r", {{0.0, 1.0, "A"}}),
                                Annotation("r", {{0.0, 5.0, "X"}}), NoCollar());
  EXPECT_EQ(d.false_alarm_s, 4.0);
  EXPECT_DOUBLE_EQ(d.der, 4.0);
}

TEST(DerTest, IdentityIsZero) {
  testing::Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Annotation a = testing::random_annotation(rng, "r", 5, 40, 0.001, 100.0);
    EXPECT_EQ(score_der(a, a, NoCollar()).der, 0.0);
    EXPECT_EQ(score_der(a, a).der, 0.0);
  }
}

TEST(DerTest, CollarExcludesBoundaries) {
  const Annotation ref("r", {{0.0, 10.0, "A"}});
  const Annotation hyp("r", {{0.0, 8.0, "X"}, {8.0, 12.0, "Y"}});
  const DerReport d = score_der(ref, hyp, {0.25, true});
  // scored: [0.25, 9.75] of reference, [10.25, 12] false alarm
  EXPECT_DOUBLE_EQ(d.total_ref_s, 9.5);
  EXPECT_DOUBLE_EQ(d.confusion_s, 1.75);
  EXPECT_DOUBLE_EQ(d.false_alarm_s, 1.75);
}

TEST(DerTest, OverlapScoringSwitch) {
  const Annotation ref("r", {{0.0, 4.0, "A"}, {2.0, 6.0, "B"}});
  const Annotation hyp("r", {{0.0, 4.0, "X"}, {4.0, 6.0, "Y"}});
  const DerReport with = score_der(ref, hyp, NoCollar());
  EXPECT_DOUBLE_EQ(with.total_ref_s, 8.0);
  EXPECT_DOUBLE_EQ(with.missed_s, 2.0);
  const DerReport without = score_der(ref, hyp, {0.0, false});
  EXPECT_DOUBLE_EQ(without.total_ref_s, 4.0);
  EXPECT_DOUBLE_EQ(without.der, 0.0);
}

TEST(DerTest, NoScorableSpeechIsAnError) {
  EXPECT_THROW(score_der(Annotation("r"), Annotation("r", {{0.0, 1.0, "X"}})), ScoringError);
  // a 0.4 s turn disappears entirely under a 0.25 s collar
  EXPECT_THROW(score_der(Annotation("r", {{1.0, 1.4, "A"}}), Annotation("r"), {0.25, true}),
               ScoringError);
  EXPECT_THROW(score_der(Annotation("r", {{0.0, 1.0, "A"}}), Annotation("q")),
               InvalidArgument);
}

TEST(DerTest, MatchesFrameOracle) {
  testing::Rng rng(2024);
  for (int i = 0; i < 60; ++i) {
    const Annotation ref = testing::random_annotation(rng, "r", 5, 40, 0.01, 60.0, "r");
    const Annotation hyp = testing::random_annotation(rng, "r", 5, 40, 0.01, 60.0, "h");
    for (double collar : {0.0, 0.25}) {
      for (bool overlap : {true, false}) {
        const auto oracle = testing::frame_der(ref, hyp, collar, overlap);
        if (oracle.total == 0) {
          EXPECT_THROW(score_der(ref, hyp, {collar, overlap}), ScoringError);
          continue;
        }
        const DerReport d = score_der(ref, hyp, {collar, overlap});
        EXPECT_NEAR(d.der, oracle.der(), 1e-6) << "pair " << i << " collar " << collar;
        EXPECT_NEAR(d.total_ref_s, oracle.total / 1000.0, 1e-6);
      }
    }
  }
}

TEST(DerTest, RelabelingAndAdditivity) {
  testing::Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const Annotation ref = testing::random_annotation(rng, "r", 4, 30, 0.01, 30.0, "r");
    const Annotation hyp = testing::random_annotation(rng, "r", 4, 30, 0.01, 30.0, "h");
    std::vector<SpeakerTurn> renamed;
    for (const auto &t : hyp.turns()) renamed.emplace_back(t.interval(), "z" + t.speaker());
    const DerReport a = score_der(ref, hyp, NoCollar());
    const DerReport b = score_der(ref, Annotation("r", renamed), NoCollar());
    EXPECT_NEAR(a.der, b.der, 1e-12);
    EXPECT_NEAR(a.error_s(), a.der * a.total_ref_s, 1e-9 * a.error_s() + 1e-12);
  }
}

TEST(MappingTest, MatrixExample) {
  // overlap matrix [[5,1],[2,3]] built from disjoint pieces
  const Annotation ref("r", {{0, 5, "r0"}, {5, 6, "r0"}, {10, 12, "r1"}, {12, 15, "r1"}});
  const Annotation hyp("r", {{0, 5, "h0"}, {5, 6, "h1"}, {10, 12, "h0"}, {12, 15, "h1"}});
  EXPECT_EQ(optimal_mapping(ref, hyp), (SpeakerMapping{{"h0", "r0"}, {"h1", "r1"}}));
}

TEST(MappingTest, OneReferenceManyHypotheses) {
  const Annotation ref("r", {{0, 10, "A"}});
  const Annotation hyp("r", {{0, 2, "X"}, {2, 9, "Y"}, {9, 10, "Z"}});
  EXPECT_EQ(optimal_mapping(ref, hyp), (SpeakerMapping{{"Y", "A"}}));
  EXPECT_TRUE(optimal_mapping(Annotation("r"), Annotation("r")).empty());
}

TEST(MappingTest, TieGoesToSmallestPair) {
  const Annotation ref("r", {{0, 2, "A"}, {2, 4, "B"}});
  const Annotation hyp("r", {{0, 4, "X"}, {0, 4, "Y"}});
  // every injective mapping reaches 4; A takes X first
  EXPECT_EQ(optimal_mapping(ref, hyp), (SpeakerMapping{{"X", "A"}, {"Y", "B"}}));
}

TEST(CorpusTest, WeightedAndUnweightedAggregates) {
  DerReport a, b;
  a.total_ref_s = 1.0;
  a.confusion_s = 0.2;
  a.der = 0.2;
  b.total_ref_s = 3.0;
  b.confusion_s = 1.8;
  b.der = 0.6;
  const auto agg = aggregate_der({a, b});
  ASSERT_TRUE(agg);
  EXPECT_NEAR(agg->der_mean, 0.4, 1e-12);
  EXPECT_NEAR(agg->der_weighted, 0.5, 1e-12);
  EXPECT_FALSE(aggregate_der({}));
}

TEST(CorpusTest, UnscorablePairIsReportedNotFatal) {
  std::vector<std::pair<Annotation, Annotation>> pairs = {
      {Annotation("a", {{0, 10, "A"}}), Annotation("a", {{0, 8, "X"}, {8, 12, "Y"}})},
      {Annotation("b"), Annotation("b", {{0, 1, "X"}})},
  };
  const CorpusReport c = score_corpus(pairs, NoCollar(), 2);
  ASSERT_EQ(c.recordings.size(), 2u);
  EXPECT_TRUE(c.recordings[0].report);
  EXPECT_FALSE(c.recordings[1].report);
  ASSERT_EQ(c.warnings.size(), 1u);
  ASSERT_TRUE(c.aggregate);
  EXPECT_NEAR(c.aggregate->der_weighted, 0.4, 1e-12);
  EXPECT_NEAR(c.aggregate->der_mean, 0.4, 1e-12);
  EXPECT_THROW(score_corpus({}), InvalidArgument);
}

}  // namespace
}  // namespace filmdiar
