#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "ideaeval/error.hpp"
#include "ideaeval/matcher.hpp"
#include "ideaeval/providers.hpp"
#include "test_support.hpp"

using namespace ideaeval;
using namespace ideaeval::matcher;

namespace {

// Maps known texts to fixed vectors.
class TableEmbedder final : public providers::EmbeddingProvider {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
  std::string id() const override { return "table"; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(table_.at(t));
    return out;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
};

providers::GenerationConfig judge_cfg() {
  providers::GenerationConfig c;
  c.model_name = "judge";
  return c;
}

LabeledPairSet balanced_set(std::size_t per_label) {
  LabeledPairSet s;
  for (std::size_t i = 0; i < per_label; ++i) {
    s.pairs.push_back({{"c" + std::to_string(i)}, "m" + std::to_string(i), Label::Matched, Split::Test});
    s.pairs.push_back({{"c" + std::to_string(i)}, "u" + std::to_string(i), Label::Unmatched, Split::Test});
  }
  assign_splits(s, 0.3, 5);
  return s;
}

}  // namespace

TEST(JudgeParse, NumbersWordsAndGarbage) {
  EXPECT_EQ(parse_judge_score("0.7"), 0.7);
  EXPECT_EQ(parse_judge_score("Yes, degree 0.85."), 0.85);
  EXPECT_EQ(parse_judge_score("Score: 1"), 1.0);
  EXPECT_EQ(parse_judge_score("On 2 counts, .4"), 0.4);
  EXPECT_EQ(parse_judge_score("No, it is not."), 0.0);
  EXPECT_EQ(parse_judge_score("Nothing fits"), std::nullopt);
  EXPECT_EQ(parse_judge_score("maybe"), std::nullopt);
  EXPECT_EQ(parse_judge_score("5 out of 7"), std::nullopt);
}

TEST(Judge, PromptCarriesNumberedCollectionAndIdea) {
  std::string seen;
  providers::ChatClient client(std::make_shared<providers::ScriptedChatProvider>([&](const providers::ChatRequest& r) {
    seen = r.user;
    return std::string("0.6");
  }));
  const std::vector<std::string> coll{"first idea", "second idea"};
  const auto j = judge_texts(client, judge_cfg(), coll, "the idea");
  EXPECT_DOUBLE_EQ(j.score, 0.6);
  EXPECT_TRUE(j.valid);
  EXPECT_NE(seen.find("Collection of ideas:\n1. first idea\n2. second idea\nSingle idea: the idea"), std::string::npos);
}

TEST(Judge, RepromptsOnceThenGivesUp) {
  int calls = 0;
  providers::ChatClient recover(std::make_shared<providers::ScriptedChatProvider>([&](const providers::ChatRequest& r) {
    ++calls;
    return std::string(r.user.find("single number") != std::string::npos ? "0.3" : "hmm");
  }));
  const std::vector<std::string> coll{"x"};
  auto j = judge_texts(recover, judge_cfg(), coll, "y");
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(j.valid);
  EXPECT_DOUBLE_EQ(j.score, 0.3);

  providers::ChatClient stubborn(
      std::make_shared<providers::ScriptedChatProvider>([](const providers::ChatRequest&) { return std::string("hmm"); }));
  j = judge_texts(stubborn, judge_cfg(), coll, "y");
  EXPECT_FALSE(j.valid);
  EXPECT_EQ(j.score, 0.0);
  EXPECT_EQ(*j.raw_response, "hmm\n---\nhmm");
}

TEST(Embedding, ThresholdZeroesLowSimilarity) {
  const std::vector<std::vector<double>> groups{{1.0, 0.0}};
  const std::vector<double> half{0.5, std::sqrt(0.75)};
  EXPECT_EQ(threshold_score(groups, half, 0.68), 0.0);
  EXPECT_NEAR(threshold_score(groups, half, 0.4), 0.5, 1e-12);
  const std::vector<double> same{2.0, 0.0};
  EXPECT_NEAR(threshold_score(groups, same, 0.68), 1.0, 1e-12);
  const std::vector<double> opposite{-1.0, 0.0};
  EXPECT_EQ(threshold_score(groups, opposite, 0.0), 0.0);  // clamped
}

TEST(Embedding, MatchUsesMaxOverGroups) {
  providers::EmbeddingClient client(std::make_shared<TableEmbedder>(std::map<std::string, std::vector<double>>{
      {"g1", {1, 0, 0}}, {"g2", {0, 1, 0}}, {"idea", {0, 0.9, 0.1}}}));
  const std::vector<corpus::ApFriGroup> groups{{"a", "g1", {}}, {"b", "g2", {}}};
  const generation::GeneratedIdea idea{"p", "m", 1, "idea", 1};
  const auto j = match_embedding(client, groups, idea, 0.68);
  EXPECT_NEAR(j.score, 0.9 / std::sqrt(0.82), 1e-12);
  EXPECT_EQ(j.backend, Backend::EmbeddingThreshold);
  EXPECT_THROW(match_embedding(client, {}, idea, 0.68), ValidationError);
}

TEST(Benchmark, OracleScoresPerfectly) {
  const auto set = balanced_set(10);
  const auto r = benchmark_matcher([](const LabeledPair& p) { return p.label == Label::Matched ? 1.0 : 0.0; }, set, 0.5);
  EXPECT_EQ(r.all.accuracy(), 1.0);
  EXPECT_EQ(r.accuracy(Split::Validation), 1.0);
  EXPECT_EQ(r.accuracy(Split::Test), 1.0);
}

TEST(Benchmark, ConstantScorerOnBalancedSetIsHalf) {
  const auto set = balanced_set(10);
  const auto r = benchmark_matcher([](const LabeledPair&) { return 1.0; }, set, 0.5);
  EXPECT_EQ(r.all.accuracy(), 0.5);
  EXPECT_EQ(r.all.tp, 10u);
  EXPECT_EQ(r.all.fp, 10u);
  EXPECT_EQ(r.all.tn + r.all.fn, 0u);
}

TEST(Benchmark, DecisionThresholdIsInclusive) {
  LabeledPairSet s{{{{"c"}, "i", Label::Matched, Split::Test}}};
  EXPECT_EQ(benchmark_matcher([](const LabeledPair&) { return 0.5; }, s, 0.5).all.tp, 1u);
  EXPECT_THROW(benchmark_matcher([](const LabeledPair&) { return 0.5; }, s, 0.5).accuracy(Split::Validation),
               ValidationError);
}

TEST(Splits, ThirtySeventyAndSeeded) {
  auto a = balanced_set(50);  // 100 pairs
  std::size_t val = 0;
  for (const auto& p : a.pairs) val += p.split == Split::Validation;
  EXPECT_EQ(val, 30u);
  auto b = balanced_set(50);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) EXPECT_EQ(a.pairs[i].split, b.pairs[i].split);
  assign_splits(b, 0.3, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) differs |= a.pairs[i].split != b.pairs[i].split;
  EXPECT_TRUE(differs);
}

TEST(Splits, FixtureFileLoads) {
  const auto set = load_labeled_pairs(testsupport::fixtures() / "labeled_pairs.json", 0.3, 0);
  ASSERT_EQ(set.pairs.size(), 10u);
  std::size_t val = 0;
  for (const auto& p : set.pairs) val += p.split == Split::Validation;
  EXPECT_EQ(val, 3u);
  providers::EmbeddingClient hash(std::make_shared<providers::HashEmbedder>());
  const auto r = benchmark_matcher(embedding_scorer(hash), set, 0.5);
  EXPECT_EQ(r.all.tp, 5u);  // identical texts score 1.0
}

TEST(Judgment, JsonRoundTrip) {
  MatchJudgment j{"p", 3, Backend::LlmJudge, 0.25, "why", "raw", true};
  const auto back = judgment_from_json(to_json(j));
  EXPECT_EQ(back.idea_index, 3u);
  EXPECT_EQ(back.score, 0.25);
  EXPECT_EQ(*back.rationale, "why");
}
