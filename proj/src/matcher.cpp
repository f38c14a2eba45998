#include "ideaeval/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <regex>

#include "ideaeval/error.hpp"
#include "ideaeval/text.hpp"
#include "ideaeval/vecmath.hpp"

namespace ideaeval::matcher {

using io::Json;

namespace {

constexpr std::string_view kReprompt = "\n\nAnswer with a single number between 0 and 1.";

}  // namespace

std::string_view to_string(Backend b) noexcept {
  return b == Backend::LlmJudge ? "llm_judge" : "embedding";
}

Backend parse_backend(std::string_view s) {
  if (s == "llm_judge") return Backend::LlmJudge;
  if (s == "embedding") return Backend::EmbeddingThreshold;
  throw ValidationError("unknown matcher backend '" + std::string(s) + "'");
}

std::string_view to_string(Split s) noexcept { return s == Split::Validation ? "validation" : "test"; }

Json to_json(const MatchJudgment& j) {
  Json doc{{"paper_id", j.paper_id},
           {"idea_index", j.idea_index},
           {"backend", to_string(j.backend)},
           {"score", j.score},
           {"valid", j.valid}};
  doc["rationale"] = j.rationale ? Json(*j.rationale) : Json(nullptr);
  doc["raw_response"] = j.raw_response ? Json(*j.raw_response) : Json(nullptr);
  return doc;
}

MatchJudgment judgment_from_json(const Json& doc) {
  MatchJudgment j;
  j.paper_id = doc.at("paper_id").get<std::string>();
  j.idea_index = doc.at("idea_index").get<std::size_t>();
  j.backend = parse_backend(doc.at("backend").get<std::string>());
  j.score = doc.at("score").get<double>();
  j.valid = doc.value("valid", true);
  if (doc.contains("rationale") && !doc["rationale"].is_null()) j.rationale = doc["rationale"].get<std::string>();
  if (doc.contains("raw_response") && !doc["raw_response"].is_null()) {
    j.raw_response = doc["raw_response"].get<std::string>();
  }
  return j;
}

std::optional<double> parse_judge_score(std::string_view response) {
  static const std::regex number(R"((\d+(?:\.\d+)?|\.\d+))");
  const std::string s(response);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
    const double v = std::stod(it->str());
    if (v >= 0.0 && v <= 1.0) return v;
  }
  static const std::regex no_word(R"(\bno\b)", std::regex::icase);
  if (std::regex_search(s, no_word)) return 0.0;
  return std::nullopt;
}

std::string render_collection(std::span<const std::string> collection) {
  std::string out;
  for (std::size_t i = 0; i < collection.size(); ++i) {
    if (i) out.push_back('\n');
    out += std::to_string(i + 1) + ". " + collection[i];
  }
  return out;
}

MatchJudgment judge_texts(providers::ChatClient& client, const providers::GenerationConfig& config,
                          std::span<const std::string> collection, const std::string& idea) {
  if (collection.empty()) throw ValidationError("judge needs a non-empty idea collection");
  const auto prompt = generation::build_prompt(generation::prompt_template(generation::TemplateName::JudgeMatch),
                                               {{"collection", render_collection(collection)}, {"idea", idea}});
  MatchJudgment j;
  j.backend = Backend::LlmJudge;
  std::string raw = client.chat(prompt.system, prompt.user, config);
  auto score = parse_judge_score(raw);
  if (!score) {
    const auto retry = client.chat(prompt.system, prompt.user + std::string(kReprompt), config);
    raw += "\n---\n" + retry;
    score = parse_judge_score(retry);
  }
  j.raw_response = raw;
  if (score) {
    j.score = *score;
    j.rationale = std::string(text::trim(raw));
  } else {
    j.valid = false;
    j.score = 0.0;
    j.rationale = "unparseable judge response after reprompt";
  }
  return j;
}

MatchJudgment match_llm_judge(providers::ChatClient& client, const providers::GenerationConfig& config,
                              std::span<const corpus::ApFriGroup> ap_fri, const generation::GeneratedIdea& idea) {
  if (ap_fri.empty()) throw ValidationError("paper '" + idea.paper_id + "' has no author ideas to match against");
  std::vector<std::string> texts;
  texts.reserve(ap_fri.size());
  for (const auto& g : ap_fri) texts.push_back(g.text);
  auto j = judge_texts(client, config, texts, idea.text);
  j.paper_id = idea.paper_id;
  j.idea_index = idea.index;
  return j;
}

double threshold_score(std::span<const std::vector<double>> groups, std::span<const double> idea, double threshold) {
  if (groups.empty()) throw ValidationError("embedding match needs at least one author idea");
  double best = -1.0;
  for (const auto& g : groups) best = std::max(best, vecmath::cosine(g, idea));
  best = std::clamp(best, 0.0, 1.0);
  return best >= threshold ? best : 0.0;
}

MatchJudgment match_embedding(providers::EmbeddingClient& embedder, std::span<const corpus::ApFriGroup> ap_fri,
                              const generation::GeneratedIdea& idea, double threshold) {
  if (ap_fri.empty()) throw ValidationError("paper '" + idea.paper_id + "' has no author ideas to match against");
  std::vector<std::string> texts;
  for (const auto& g : ap_fri) texts.push_back(g.text);
  texts.push_back(idea.text);
  const auto vecs = embedder.embed(texts);
  std::vector<std::vector<double>> groups;
  for (std::size_t i = 0; i + 1 < vecs.size(); ++i) groups.push_back(vecs[i].values);
  MatchJudgment j;
  j.paper_id = idea.paper_id;
  j.idea_index = idea.index;
  j.backend = Backend::EmbeddingThreshold;
  j.score = threshold_score(groups, vecs.back().values, threshold);
  return j;
}

// ---------------------------------------------------------------------------

void assign_splits(LabeledPairSet& set, double validation_fraction, std::uint64_t seed) {
  if (validation_fraction < 0.0 || validation_fraction > 1.0) {
    throw ValidationError("validation fraction must lie in [0, 1]");
  }
  const std::size_t n = set.pairs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < n; ++k) set.pairs[order[k]].split = k < n_val ? Split::Validation : Split::Test;
}

LabeledPairSet load_labeled_pairs(const std::filesystem::path& path, double validation_fraction, std::uint64_t seed) {
  const auto doc = io::read_json(path);
  const Json& list = doc.is_object() ? doc.at("pairs") : doc;
  LabeledPairSet set;
  bool any_split = false;
  for (const auto& p : list) {
    LabeledPair pair;
    pair.collection = p.at("collection").get<std::vector<std::string>>();
    pair.idea = p.at("idea").get<std::string>();
    const auto label = p.at("label").get<std::string>();
    if (label == "matched") {
      pair.label = Label::Matched;
    } else if (label == "unmatched") {
      pair.label = Label::Unmatched;
    } else {
      throw ValidationError("labeled pair with label '" + label + "' (expected matched|unmatched)");
    }
    if (p.contains("split")) {
      any_split = true;
      const auto split = p.at("split").get<std::string>();
      if (split == "validation") {
        pair.split = Split::Validation;
      } else if (split == "test") {
        pair.split = Split::Test;
      } else {
        throw ValidationError("labeled pair with split '" + split + "'");
      }
    }
    set.pairs.push_back(std::move(pair));
  }
  if (!any_split) assign_splits(set, validation_fraction, seed);
  return set;
}

double Confusion::accuracy() const {
  if (total() == 0) throw ValidationError("accuracy of an empty split");
  return static_cast<double>(correct()) / static_cast<double>(total());
}

double BenchmarkResult::accuracy(Split s) const {
  const auto it = splits.find(s);
  if (it == splits.end()) throw ValidationError("split '" + std::string(to_string(s)) + "' has no pairs");
  return it->second.accuracy();
}

Json to_json(const BenchmarkResult& r) {
  auto conf = [](const Confusion& c) {
    return Json{{"total", c.total()}, {"correct", c.correct()}, {"accuracy", c.accuracy()},
                {"tp", c.tp},         {"fp", c.fp},             {"tn", c.tn},
                {"fn", c.fn}};
  };
  Json doc{{"decision_threshold", r.decision_threshold}, {"all", conf(r.all)}};
  for (const auto& [split, c] : r.splits) doc[std::string(to_string(split))] = conf(c);
  return doc;
}

BenchmarkResult benchmark_matcher(const PairScorer& scorer, const LabeledPairSet& pairs, double decision_threshold) {
  if (pairs.pairs.empty()) throw ValidationError("benchmark needs at least one labeled pair");
  BenchmarkResult r;
  r.decision_threshold = decision_threshold;
  for (const auto& p : pairs.pairs) {
    const bool predicted = scorer(p) >= decision_threshold;
    const bool actual = p.label == Label::Matched;
    for (Confusion* c : {&r.splits[p.split], &r.all}) {
      if (predicted && actual) ++c->tp;
      if (predicted && !actual) ++c->fp;
      if (!predicted && !actual) ++c->tn;
      if (!predicted && actual) ++c->fn;
    }
  }
  return r;
}

PairScorer llm_judge_scorer(providers::ChatClient& client, providers::GenerationConfig config) {
  return [&client, config = std::move(config)](const LabeledPair& p) {
    return judge_texts(client, config, p.collection, p.idea).score;
  };
}

PairScorer embedding_scorer(providers::EmbeddingClient& embedder, double threshold) {
  return [&embedder, threshold](const LabeledPair& p) {
    if (p.collection.empty()) throw ValidationError("labeled pair with an empty collection");
    std::vector<std::string> texts = p.collection;
    texts.push_back(p.idea);
    const auto vecs = embedder.embed(texts);
    std::vector<std::vector<double>> groups;
    for (std::size_t i = 0; i + 1 < vecs.size(); ++i) groups.push_back(vecs[i].values);
    return threshold_score(groups, vecs.back().values, threshold);
  };
}

}  // namespace ideaeval::matcher
