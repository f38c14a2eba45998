#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ideaeval/corpus.hpp"
#include "ideaeval/generation.hpp"
#include "ideaeval/providers.hpp"

namespace ideaeval::matcher {

enum class Backend { LlmJudge, EmbeddingThreshold };

std::string_view to_string(Backend b) noexcept;
Backend parse_backend(std::string_view s);

inline constexpr double kDefaultEmbeddingThreshold = 0.68;
inline constexpr double kDefaultDecisionThreshold = 0.5;

struct MatchJudgment {
  std::string paper_id;
  std::size_t idea_index = 0;
  Backend backend = Backend::LlmJudge;
  double score = 0.0;  ///< in [0, 1]; 0 when invalid
  std::optional<std::string> rationale;
  std::optional<std::string> raw_response;
  bool valid = true;
};

io::Json to_json(const MatchJudgment& j);
MatchJudgment judgment_from_json(const io::Json& doc);

/// First number in [0, 1] in the response; a standalone "no" with no such
/// number yields 0; otherwise nullopt.
std::optional<double> parse_judge_score(std::string_view response);

/// "1. text\n2. text" over the collection.
std::string render_collection(std::span<const std::string> collection);

/// Asks the judge whether `idea` is contained in `collection`. One reprompt on
/// an unparseable answer; a second failure returns an invalid judgment.
MatchJudgment judge_texts(providers::ChatClient& client, const providers::GenerationConfig& config,
                          std::span<const std::string> collection, const std::string& idea);

MatchJudgment match_llm_judge(providers::ChatClient& client, const providers::GenerationConfig& config,
                              std::span<const corpus::ApFriGroup> ap_fri, const generation::GeneratedIdea& idea);

/// max over groups of cos(group, idea), clamped into [0, 1]; zeroed below threshold.
double threshold_score(std::span<const std::vector<double>> groups, std::span<const double> idea, double threshold);

MatchJudgment match_embedding(providers::EmbeddingClient& embedder, std::span<const corpus::ApFriGroup> ap_fri,
                              const generation::GeneratedIdea& idea, double threshold = kDefaultEmbeddingThreshold);

// ---------------------------------------------------------------------------
// Benchmarking against labeled pairs

enum class Label { Matched, Unmatched };
enum class Split { Validation, Test };

std::string_view to_string(Split s) noexcept;

struct LabeledPair {
  std::vector<std::string> collection;
  std::string idea;
  Label label = Label::Unmatched;
  Split split = Split::Test;
};

struct LabeledPairSet {
  std::vector<LabeledPair> pairs;
};

/// Shuffles pair indices with `seed` and assigns the first
/// round(validation_fraction * n) to Validation, the rest to Test.
void assign_splits(LabeledPairSet& set, double validation_fraction, std::uint64_t seed);

/// JSON list of {collection, idea, label: "matched"|"unmatched", split?}. If no
/// pair names a split, splits are assigned with assign_splits.
LabeledPairSet load_labeled_pairs(const std::filesystem::path& path, double validation_fraction = 0.3,
                                  std::uint64_t seed = 0);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  std::size_t correct() const noexcept { return tp + tn; }
  double accuracy() const;
};

struct BenchmarkResult {
  double decision_threshold = 0.0;
  std::map<Split, Confusion> splits;  ///< non-empty splits only
  Confusion all;

  /// ValidationError when the split holds no pairs.
  double accuracy(Split s) const;
};

io::Json to_json(const BenchmarkResult& r);

using PairScorer = std::function<double(const LabeledPair&)>;

/// Predicts matched iff score >= decision_threshold.
BenchmarkResult benchmark_matcher(const PairScorer& scorer, const LabeledPairSet& pairs, double decision_threshold);

PairScorer llm_judge_scorer(providers::ChatClient& client, providers::GenerationConfig config);
PairScorer embedding_scorer(providers::EmbeddingClient& embedder, double threshold = kDefaultEmbeddingThreshold);

}  // namespace ideaeval::matcher
