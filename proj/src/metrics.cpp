#include "ideaeval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ideaeval/vecmath.hpp"

namespace ideaeval::metrics {

using io::Json;

AvgScore avg_score(std::span<const double> idea_scores, std::size_t n_author_ideas) {
  if (n_author_ideas == 0) throw ValidationError("avg_score: paper has no author ideas (N_j = 0)");
  double sum = 0.0;
  for (double s : idea_scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("avg_score: idea score outside [0, 1]");
    sum += s;
  }
  const double raw = sum / static_cast<double>(n_author_ideas);
  return {raw, std::min(raw, 1.0)};
}

double iascore(std::span<const double> avg_scores) {
  if (avg_scores.empty()) throw ValidationError("iascore: no papers to aggregate");
  double sum = 0.0;
  for (double s : avg_scores) sum += s;
  return sum / static_cast<double>(avg_scores.size());
}

double pairwise_distinctness(std::span<const std::vector<double>> vectors) {
  const std::size_t n = vectors.size();
  if (n < 2) throw ValidationError("distinctness needs at least two ideas, got " + std::to_string(n));
  // Squared norms: sqrt(q * q) == q exactly, so identical vectors give exactly 0.
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (vectors[i].size() != vectors[0].size()) throw ValidationError("distinctness: embedding dimension mismatch");
    sq[i] = vecmath::dot(vectors[i], vectors[i]);
    if (sq[i] == 0.0) throw ValidationError("distinctness: zero vector at index " + std::to_string(i));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double cos = vecmath::dot(vectors[i], vectors[j]) / std::sqrt(sq[i] * sq[j]);
      sum += 1.0 - std::clamp(cos, -1.0, 1.0);
    }
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double pairwise_distinctness(std::span<const providers::EmbeddingVector> vectors) {
  std::vector<std::vector<double>> raw;
  raw.reserve(vectors.size());
  for (const auto& v : vectors) raw.push_back(v.values);
  return pairwise_distinctness(std::span<const std::vector<double>>(raw));
}

double domain_distinctness(std::span<const double> per_paper_values) {
  if (per_paper_values.empty()) throw ValidationError("domain_distinctness: no papers");
  double sum = 0.0;
  for (double v : per_paper_values) sum += v;
  return sum / static_cast<double>(per_paper_values.size());
}

std::string_view to_string(LengthBin b) noexcept {
  switch (b) {
    case LengthBin::Under20: return "[0,20)";
    case LengthBin::From20To40: return "[20,40)";
    case LengthBin::From40To60: return "[40,60)";
    case LengthBin::From60: return "[60,inf)";
  }
  return "?";
}

LengthBin length_bin_for(std::size_t word_count) noexcept {
  if (word_count < 20) return LengthBin::Under20;
  if (word_count < 40) return LengthBin::From20To40;
  if (word_count < 60) return LengthBin::From40To60;
  return LengthBin::From60;
}

std::map<LengthBin, BinStats> length_bins(std::span<const ScoredIdea> ideas) {
  std::map<LengthBin, std::pair<std::size_t, double>> acc;
  for (const auto& idea : ideas) {
    auto& [count, sum] = acc[length_bin_for(idea.word_count)];
    ++count;
    sum += idea.score;
  }
  std::map<LengthBin, BinStats> out;
  for (const auto& [bin, cs] : acc) out[bin] = {cs.first, cs.second / static_cast<double>(cs.first)};
  return out;
}

namespace {

void check_rating(const HumanRating& r) {
  if (r.novelty < 1 || r.novelty > 5) {
    throw ValidationError("novelty rating " + std::to_string(r.novelty) + " outside 1..5");
  }
}

}  // namespace

HumanEvalAggregate human_aggregate(std::string model, std::span<const HumanRating> ratings,
                                   std::span<const DualRating> overlap) {
  if (ratings.empty()) throw ValidationError("human_aggregate: no ratings for model '" + model + "'");
  HumanEvalAggregate agg;
  agg.model = std::move(model);
  for (const auto& r : ratings) {
    check_rating(r);
    ++agg.ratings;
    if (r.relevant) ++agg.relevant_count;
    if (r.feasible) ++agg.feasible_count;
    ++agg.novelty_counts[static_cast<std::size_t>(r.novelty - 1)];
  }
  const auto n = static_cast<double>(agg.ratings);
  agg.relevant_pct = 100.0 * static_cast<double>(agg.relevant_count) / n;
  agg.feasible_pct = 100.0 * static_cast<double>(agg.feasible_count) / n;
  for (std::size_t k = 0; k < 5; ++k) agg.novelty_pct[k] = 100.0 * static_cast<double>(agg.novelty_counts[k]) / n;

  agg.kappa.pairs = overlap.size();
  if (!overlap.empty()) {
    std::vector<int> rel_a, rel_b, nov_a, nov_b, fea_a, fea_b;
    for (const auto& d : overlap) {
      check_rating(d.first);
      check_rating(d.second);
      rel_a.push_back(d.first.relevant);
      rel_b.push_back(d.second.relevant);
      nov_a.push_back(d.first.novelty);
      nov_b.push_back(d.second.novelty);
      fea_a.push_back(d.first.feasible);
      fea_b.push_back(d.second.feasible);
    }
    agg.kappa.relevance = cohen_kappa(rel_a, rel_b);
    agg.kappa.novelty = cohen_kappa(nov_a, nov_b);
    agg.kappa.feasibility = cohen_kappa(fea_a, fea_b);
  }
  return agg;
}

Json to_json(const HumanEvalAggregate& agg) {
  Json novelty = Json::array();
  for (std::size_t k = 0; k < 5; ++k) {
    novelty.push_back({{"category", kNoveltyCategories[k]},
                       {"level", k + 1},
                       {"count", agg.novelty_counts[k]},
                       {"pct", agg.novelty_pct[k]}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json("unavailable"); };
  return {{"model", agg.model},
          {"ratings", agg.ratings},
          {"relevant_count", agg.relevant_count},
          {"relevant_pct", agg.relevant_pct},
          {"feasible_count", agg.feasible_count},
          {"feasible_pct", agg.feasible_pct},
          {"novelty", novelty},
          {"kappa",
           {{"overlap_pairs", agg.kappa.pairs},
            {"relevance", opt(agg.kappa.relevance)},
            {"novelty", opt(agg.kappa.novelty)},
            {"feasibility", opt(agg.kappa.feasibility)}}}};
}

}  // namespace ideaeval::metrics
