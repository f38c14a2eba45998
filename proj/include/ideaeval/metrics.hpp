#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ideaeval/error.hpp"
#include "ideaeval/io.hpp"
#include "ideaeval/providers.hpp"

namespace ideaeval::metrics {

// ---------------------------------------------------------------------------
// Idea alignment

struct AvgScore {
  double raw = 0.0;
  double clamped = 0.0;  ///< min(raw, 1)
};

/// Sum of per-idea match scores over *all* generated ideas, divided by the
/// number of author idea groups. Raw can exceed 1 when a model produces more
/// matching ideas than the authors wrote.
AvgScore avg_score(std::span<const double> idea_scores, std::size_t n_author_ideas);

/// Arithmetic mean of per-paper average scores. Throws on an empty list.
double iascore(std::span<const double> avg_scores);

struct PaperAlignment {
  std::string paper_id;
  std::size_t n_author_ideas = 0;
  std::vector<double> idea_scores;
  AvgScore avg;
};

struct DomainAlignment {
  std::string domain;
  std::string model;
  std::size_t papers = 0;
  double iascore = 0.0;  ///< mean of raw per-paper scores
  double variant_clamped = 0.0;  ///< mean of clamped per-paper scores
};

// ---------------------------------------------------------------------------
// Idea distinctness

/// Mean of 1 - cos(v_i, v_j) over unordered pairs i < j (equal to the ordered
/// double-sum normalized by n(n-1)). Needs n >= 2, uniform dimension, and no
/// zero vector.
double pairwise_distinctness(std::span<const std::vector<double>> vectors);
double pairwise_distinctness(std::span<const providers::EmbeddingVector> vectors);

/// Mean of per-paper distinctness values.
double domain_distinctness(std::span<const double> per_paper_values);

// ---------------------------------------------------------------------------
// Agreement

/// Cohen's kappa with marginal-product chance agreement. When chance agreement
/// is exactly 1 (both raters used one identical constant label) the result is 1.
template <class Label>
double cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cohen_kappa: label sequences differ in length (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ValidationError("cohen_kappa: empty label sequences");
  const auto n = static_cast<double>(a.size());
  std::map<Label, double> count_a;
  std::map<Label, double> count_b;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    count_a[a[i]] += 1.0;
    count_b[b[i]] += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double p_o = agree / n;
  double p_e = 0.0;
  for (const auto& [label, ca] : count_a) {
    if (const auto it = count_b.find(label); it != count_b.end()) p_e += (ca / n) * (it->second / n);
  }
  if (p_e == 1.0) {
    if (p_o == 1.0) return 1.0;
    throw ValidationError("cohen_kappa: undefined (chance agreement is 1)");
  }
  return (p_o - p_e) / (1.0 - p_e);
}

template <class Label>
double cohen_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
  return cohen_kappa(std::span<const Label>(a), std::span<const Label>(b));
}

// ---------------------------------------------------------------------------
// Length bins

enum class LengthBin { Under20, From20To40, From40To60, From60 };

std::string_view to_string(LengthBin b) noexcept;
LengthBin length_bin_for(std::size_t word_count) noexcept;

struct ScoredIdea {
  std::size_t word_count = 0;
  double score = 0.0;
};

struct BinStats {
  std::size_t count = 0;
  double mean_score = 0.0;
};

/// Per-bin mean score over [0,20), [20,40), [40,60), [60,inf) words. Empty bins are absent.
std::map<LengthBin, BinStats> length_bins(std::span<const ScoredIdea> ideas);

// ---------------------------------------------------------------------------
// Human evaluation

inline constexpr std::array<std::string_view, 5> kNoveltyCategories{
    "not novel", "generic", "moderately novel", "very novel", "extremely novel"};

struct HumanRating {
  bool relevant = false;
  int novelty = 1;  ///< 1..5, indexes kNoveltyCategories
  bool feasible = false;
};

/// Two ratings of the same idea by different annotators.
struct DualRating {
  HumanRating first;
  HumanRating second;
};

struct AgreementKappas {
  std::size_t pairs = 0;
  std::optional<double> relevance;  ///< nullopt when there is no overlap
  std::optional<double> novelty;
  std::optional<double> feasibility;
};

struct HumanEvalAggregate {
  std::string model;
  std::size_t ratings = 0;
  std::size_t relevant_count = 0;
  std::size_t feasible_count = 0;
  std::array<std::size_t, 5> novelty_counts{};
  double relevant_pct = 0.0;
  double feasible_pct = 0.0;
  std::array<double, 5> novelty_pct{};
  AgreementKappas kappa;
};

/// Percentages over `ratings`; kappa over `overlap` only. Throws on any rating
/// outside its range or on an empty rating list.
HumanEvalAggregate human_aggregate(std::string model, std::span<const HumanRating> ratings,
                                   std::span<const DualRating> overlap);

io::Json to_json(const HumanEvalAggregate& agg);

}  // namespace ideaeval::metrics
