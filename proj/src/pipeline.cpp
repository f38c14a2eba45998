#include "ideaeval/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "ideaeval/concurrency.hpp"
#include "ideaeval/corpus.hpp"
#include "ideaeval/error.hpp"
#include "ideaeval/humaneval.hpp"
#include "ideaeval/metrics.hpp"
#include "ideaeval/providers.hpp"
#include "ideaeval/text.hpp"

namespace ideaeval::pipeline {

namespace fs = std::filesystem;
using io::Json;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::optional<fs::path> optional_path(const Json& doc, const char* key, const fs::path& base) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  return resolve(base, doc[key].get<std::string>());
}

Json path_or_null(const std::optional<fs::path>& p) { return p ? Json(p->string()) : Json(nullptr); }

// Model names may carry '/' or ':'; keep directory names portable.
std::string safe_component(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

// Full-precision, locale-free number text for the CSV export.
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_cell(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

struct Context {
  const RunConfig& cfg;
  fs::path run_dir;
  std::string fingerprint;
  std::array<std::string, 5> stage_keys;  ///< indexed by Stage; each covers only that stage's inputs
  std::shared_ptr<providers::ChatClient> chat;
  std::shared_ptr<providers::EmbeddingClient> embed;
  std::vector<corpus::PaperRecord> papers;
  std::string corpus_digest;
};

fs::path marker_path(const Context& ctx, Stage s) {
  return ctx.run_dir / "stages" / (std::string(to_string(s)) + ".done");
}

bool stage_complete(const Context& ctx, Stage s) {
  const auto p = marker_path(ctx, s);
  return fs::exists(p) && text::trim(io::read_file(p)) == ctx.stage_keys[static_cast<std::size_t>(s)];
}

void mark_complete(const Context& ctx, Stage s) {
  io::write_file_atomic(marker_path(ctx, s), ctx.stage_keys[static_cast<std::size_t>(s)] + "\n");
}

// Cumulative: a stage's key changes whenever any upstream input changes.
std::array<std::string, 5> stage_keys(const Json& portable) {
  const std::array<std::vector<const char*>, 5> inputs{{{"corpus"},
                                                        {},
                                                        {"providers", "models", "template", "generation", "seed"},
                                                        {"matcher"},
                                                        {"humaneval", "schema"}}};
  std::array<std::string, 5> keys;
  Json acc = Json::object();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (const char* k : inputs[i]) {
      if (portable.contains(k)) acc[k] = portable.at(k);
    }
    acc["stage"] = to_string(static_cast<Stage>(i));
    keys[i] = text::sha256_hex(acc.dump());
  }
  return keys;
}

fs::path stripped_path(const Context& ctx, const std::string& paper) {
  return ctx.run_dir / "stripped" / (safe_component(paper) + ".json");
}
fs::path ideas_path(const Context& ctx, const std::string& model, const std::string& paper) {
  return ctx.run_dir / "ideas" / safe_component(model) / (safe_component(paper) + ".json");
}
fs::path matches_path(const Context& ctx, const std::string& model, const std::string& paper) {
  return ctx.run_dir / "matches" / safe_component(model) / (safe_component(paper) + ".json");
}

// Runs fn(i) over n items; the first failure (lowest index) becomes a StageError naming its item.
template <class Fn, class Name>
void for_each_item(const Context& ctx, Stage stage, std::size_t n, Name&& item_name, Fn&& fn) {
  parallel_for(n, ctx.cfg.parallelism, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(std::string(to_string(stage)), item_name(i), e.what());
    }
  });
}

corpus::StrippedPaper load_stripped(const Context& ctx, const std::string& paper) {
  return corpus::stripped_from_json(io::read_json(stripped_path(ctx, paper)));
}

providers::GenerationConfig gen_config(const RunConfig& c, const std::string& model) {
  providers::GenerationConfig g;
  g.model_name = model;
  g.max_tokens = c.max_tokens;
  g.temperature = c.temperature;
  g.seed = static_cast<std::int64_t>(c.seed);
  return g;
}

providers::GenerationConfig judge_config(const RunConfig& c) {
  providers::GenerationConfig g;
  g.model_name = c.matcher.judge_model.empty() ? c.models.front() : c.matcher.judge_model;
  g.max_tokens = c.matcher.judge_max_tokens;
  g.temperature = 0.0;
  g.seed = static_cast<std::int64_t>(c.seed);
  return g;
}

// ---------------------------------------------------------------------------
// Stages

void run_ingest(Context& ctx) {
  Json papers = Json::array();
  for (const auto& p : ctx.papers) {
    papers.push_back({{"id", p.id},
                      {"domain", corpus::to_string(p.domain)},
                      {"sections", p.sections.size()},
                      {"annotations", p.annotations.size()}});
  }
  io::write_json(ctx.run_dir / "corpus.json",
                 {{"schema", io::kSchemaVersion}, {"digest", ctx.corpus_digest}, {"papers", papers}});
}

void run_strip(Context& ctx) {
  for_each_item(
      ctx, Stage::Strip, ctx.papers.size(), [&](std::size_t i) { return ctx.papers[i].id; },
      [&](std::size_t i) {
        const auto& paper = ctx.papers[i];
        io::write_json(stripped_path(ctx, paper.id), corpus::to_json(corpus::strip_fris(paper)));
      });
}

void run_generate(Context& ctx) {
  const auto n_papers = ctx.papers.size();
  for_each_item(
      ctx, Stage::Generate, ctx.cfg.models.size() * n_papers,
      [&](std::size_t i) { return ctx.cfg.models[i / n_papers] + "/" + ctx.papers[i % n_papers].id; },
      [&](std::size_t i) {
        const auto& model = ctx.cfg.models[i / n_papers];
        const auto& paper = ctx.papers[i % n_papers];
        const auto stripped = load_stripped(ctx, paper.id);
        const auto set =
            generation::generate_ideas(*ctx.chat, stripped, ctx.cfg.template_name, gen_config(ctx.cfg, model));
        io::write_json(ideas_path(ctx, model, paper.id), generation::to_json(set));
      });
}

void run_match(Context& ctx) {
  const auto n_papers = ctx.papers.size();
  const auto judge = judge_config(ctx.cfg);
  for_each_item(
      ctx, Stage::Match, ctx.cfg.models.size() * n_papers,
      [&](std::size_t i) { return ctx.cfg.models[i / n_papers] + "/" + ctx.papers[i % n_papers].id; },
      [&](std::size_t i) {
        const auto& model = ctx.cfg.models[i / n_papers];
        const auto& paper = ctx.papers[i % n_papers];
        const auto stripped = load_stripped(ctx, paper.id);
        const auto set = generation::idea_set_from_json(io::read_json(ideas_path(ctx, model, paper.id)));
        Json judgments = Json::array();
        if (!stripped.ap_fri.empty()) {
          for (const auto& idea : set.ideas) {
            const auto j = ctx.cfg.matcher.backend == matcher::Backend::LlmJudge
                               ? matcher::match_llm_judge(*ctx.chat, judge, stripped.ap_fri, idea)
                               : matcher::match_embedding(*ctx.embed, stripped.ap_fri, idea,
                                                          ctx.cfg.matcher.embedding_threshold);
            judgments.push_back(matcher::to_json(j));
          }
        }
        io::write_json(matches_path(ctx, model, paper.id), {{"schema", io::kSchemaVersion},
                                                            {"paper_id", paper.id},
                                                            {"model", model},
                                                            {"backend", matcher::to_string(ctx.cfg.matcher.backend)},
                                                            {"judgments", judgments}});
      });
}

Json distinctness_row(const std::string& domain, const std::string& source, const std::vector<double>& values) {
  return {{"domain", domain},
          {"source", source},
          {"papers", values.size()},
          {"value", values.empty() ? Json(nullptr) : Json(metrics::domain_distinctness(values))}};
}

void run_score(Context& ctx) {
  struct Cell {
    std::vector<double> raw;
    std::vector<double> clamped;
    std::vector<double> distinct;
  };
  Json paper_rows = Json::array();
  Json unscored = Json::array();
  std::map<std::pair<std::string, std::string>, Cell> cells;  // (domain, model)
  std::map<std::string, std::vector<double>> human_distinct;  // domain
  std::map<std::string, std::vector<metrics::ScoredIdea>> scored;  // model
  std::size_t invalid_judgments = 0;

  for (const auto& paper : ctx.papers) {
    const auto domain = std::string(corpus::to_string(paper.domain));
    const auto stripped = load_stripped(ctx, paper.id);
    try {
      if (stripped.ap_fri.size() >= 2) {
        std::vector<std::string> texts;
        for (const auto& g : stripped.ap_fri) texts.push_back(g.text);
        human_distinct[domain].push_back(metrics::pairwise_distinctness(ctx.embed->embed(texts)));
      }
      for (const auto& model : ctx.cfg.models) {
        const auto set = generation::idea_set_from_json(io::read_json(ideas_path(ctx, model, paper.id)));
        const auto matches = io::read_json(matches_path(ctx, model, paper.id));
        auto& cell = cells[{domain, model}];
        if (set.ideas.size() >= 2) {
          std::vector<std::string> texts;
          for (const auto& idea : set.ideas) texts.push_back(idea.text);
          cell.distinct.push_back(metrics::pairwise_distinctness(ctx.embed->embed(texts)));
        }
        if (stripped.ap_fri.empty()) {
          unscored.push_back({{"paper_id", paper.id}, {"model", model}, {"reason", "no author future-work ideas"}});
          continue;
        }
        std::vector<double> scores;
        for (const auto& j : matches.at("judgments")) {
          const auto judgment = matcher::judgment_from_json(j);
          if (!judgment.valid) ++invalid_judgments;
          scores.push_back(judgment.score);
        }
        if (scores.size() != set.ideas.size()) {
          throw ValidationError("match file holds " + std::to_string(scores.size()) + " judgments for " +
                                std::to_string(set.ideas.size()) + " ideas");
        }
        for (std::size_t k = 0; k < scores.size(); ++k) scored[model].push_back({set.ideas[k].word_count, scores[k]});
        const auto avg = metrics::avg_score(scores, stripped.ap_fri.size());
        cell.raw.push_back(avg.raw);
        cell.clamped.push_back(avg.clamped);
        paper_rows.push_back({{"paper_id", paper.id},
                              {"domain", domain},
                              {"model", model},
                              {"author_ideas", stripped.ap_fri.size()},
                              {"generated_ideas", set.ideas.size()},
                              {"idea_scores", scores},
                              {"avg_score_raw", avg.raw},
                              {"avg_score_clamped", avg.clamped}});
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError("score", paper.id, e.what());
    }
  }

  Json alignment = Json::array();
  Json distinctness = Json::array();
  for (const auto& [key, cell] : cells) {
    if (!cell.raw.empty()) {
      alignment.push_back({{"domain", key.first},
                           {"model", key.second},
                           {"papers", cell.raw.size()},
                           {"iascore_raw", metrics::iascore(cell.raw)},
                           {"iascore_clamped", metrics::iascore(cell.clamped)}});
    }
    distinctness.push_back(distinctness_row(key.first, key.second, cell.distinct));
  }
  for (const auto& [domain, values] : human_distinct) distinctness.push_back(distinctness_row(domain, "human", values));

  Json bins = Json::object();
  for (const auto& [model, ideas] : scored) {
    Json per = Json::object();
    for (const auto& [bin, stats] : metrics::length_bins(ideas)) {
      per[std::string(metrics::to_string(bin))] = {{"count", stats.count}, {"mean_score", stats.mean_score}};
    }
    bins[model] = per;
  }

  Json stats = Json::object();
  for (const auto& [domain, s] : corpus::corpus_stats(ctx.papers)) {
    stats[std::string(corpus::to_string(domain))] = {{"papers", s.papers},
                                                     {"avg_words_without_future_work", s.avg_words_without_fwk},
                                                     {"avg_words_future_work", s.avg_words_fwk}};
  }

  const auto& c = ctx.cfg;
  Json report{{"schema", io::kSchemaVersion},
              {"run",
               {{"corpus_digest", ctx.corpus_digest},
                {"config_fingerprint", ctx.fingerprint},
                {"models", c.models},
                {"template", generation::to_string(c.template_name)},
                {"seed", c.seed},
                {"matcher",
                 {{"backend", matcher::to_string(c.matcher.backend)},
                  {"judge_model", judge_config(c).model_name},
                  {"embedding_threshold", c.matcher.embedding_threshold},
                  {"decision_threshold", c.matcher.decision_threshold}}}}},
              {"corpus_stats", stats},
              {"papers", paper_rows},
              {"unscored", unscored},
              {"invalid_judgments", invalid_judgments},
              {"alignment", alignment},
              {"distinctness", distinctness},
              {"length_bins", bins},
              {"reference_values", reference_values()}};

  if (c.matcher.labeled_pairs) {
    try {
      const auto pairs = matcher::load_labeled_pairs(*c.matcher.labeled_pairs, c.matcher.validation_fraction, c.seed);
      const auto scorer = c.matcher.backend == matcher::Backend::LlmJudge
                              ? matcher::llm_judge_scorer(*ctx.chat, judge_config(c))
                              : matcher::embedding_scorer(*ctx.embed, c.matcher.embedding_threshold);
      report["matcher_benchmark"] = matcher::to_json(matcher::benchmark_matcher(scorer, pairs, c.matcher.decision_threshold));
    } catch (const std::exception& e) {
      throw StageError("score", c.matcher.labeled_pairs->string(), e.what());
    }
  }

  if (c.humaneval_store) {
    try {
      const auto store = humaneval::HumanEvalStore::open(*c.humaneval_store);
      report["human_eval"] = humaneval::to_json(store->report());
    } catch (const ConflictError& e) {
      report["human_eval"] = {{"unavailable", e.what()}};
    } catch (const std::exception& e) {
      throw StageError("score", c.humaneval_store->string(), e.what());
    }
  }

  io::write_file_atomic(ctx.run_dir / "report.json", io::canonical_dump(report));

  std::ostringstream csv;
  csv << "table,domain,model,key,value\n";
  for (const auto& r : paper_rows) {
    csv << "avg_score," << csv_cell(r["domain"].get<std::string>()) << ',' << csv_cell(r["model"].get<std::string>())
        << ',' << csv_cell(r["paper_id"].get<std::string>()) << ',' << fmt(r["avg_score_raw"].get<double>()) << '\n';
  }
  for (const auto& r : alignment) {
    for (const char* k : {"iascore_raw", "iascore_clamped"}) {
      csv << "alignment," << csv_cell(r["domain"].get<std::string>()) << ',' << csv_cell(r["model"].get<std::string>())
          << ',' << k << ',' << fmt(r[k].get<double>()) << '\n';
    }
  }
  for (const auto& r : distinctness) {
    if (r["value"].is_null()) continue;
    csv << "distinctness," << csv_cell(r["domain"].get<std::string>()) << ','
        << csv_cell(r["source"].get<std::string>()) << ",d_i," << fmt(r["value"].get<double>()) << '\n';
  }
  for (const auto& [model, per] : bins.items()) {
    for (const auto& [bin, s] : per.items()) {
      csv << "length_bin,," << csv_cell(model) << ',' << bin << ',' << fmt(s["mean_score"].get<double>()) << '\n';
    }
  }
  io::write_file_atomic(ctx.run_dir / "report.csv", csv.str());
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (corpus.empty()) throw ValidationError("config: 'corpus' is required");
  if (output_dir.empty()) throw ValidationError("config: 'output_dir' is required");
  if (models.empty()) throw ValidationError("config: 'models' must list at least one model");
  for (const auto& m : models) {
    if (m.empty()) throw ValidationError("config: empty model name");
  }
  if (std::set<std::string>(models.begin(), models.end()).size() != models.size()) {
    throw ValidationError("config: duplicate model names");
  }
  if (!chat_provider.is_object()) throw ValidationError("config: 'providers.chat' is required");
  if (!embedding_provider.is_object()) throw ValidationError("config: 'providers.embedding' is required");
  if (template_name != generation::TemplateName::Full && template_name != generation::TemplateName::TopFive) {
    throw ValidationError("config: run template must be 'Full' or 'TopFive'; use 'rag generate' for retrieval");
  }
  if (max_tokens <= 0) throw ValidationError("config: generation.max_tokens must be positive");
  if (!(temperature >= 0.0)) throw ValidationError("config: generation.temperature must be >= 0");
  if (!(matcher.embedding_threshold >= 0.0 && matcher.embedding_threshold <= 1.0)) {
    throw ValidationError("config: matcher.threshold must lie in [0, 1]");
  }
  if (!(matcher.decision_threshold >= 0.0 && matcher.decision_threshold <= 1.0)) {
    throw ValidationError("config: matcher.decision_threshold must lie in [0, 1]");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction <= 1.0)) {
    throw ValidationError("config: humaneval.overlap_fraction must lie in [0, 1]");
  }
  if (parallelism == 0) throw ValidationError("config: parallelism must be positive");
}

RunConfig run_config_from_json(const Json& doc, const fs::path& base_dir) {
  try {
    io::require_schema(doc, base_dir);
    RunConfig c;
    c.base_dir = base_dir;
    c.corpus = resolve(base_dir, doc.at("corpus").get<std::string>());
    c.output_dir = resolve(base_dir, doc.at("output_dir").get<std::string>());
    c.cache_dir = optional_path(doc, "cache_dir", base_dir);
    c.offline = doc.value("offline", false);
    c.seed = doc.value("seed", std::uint64_t{0});
    const auto& prov = doc.at("providers");
    c.chat_provider = prov.at("chat");
    if (c.chat_provider.contains("script")) {
      c.chat_provider["script"] = resolve(base_dir, c.chat_provider["script"].get<std::string>()).string();
    }
    c.embedding_provider = prov.at("embedding");
    c.client = doc.value("client", Json::object());
    c.models = doc.at("models").get<std::vector<std::string>>();
    c.template_name = generation::parse_template_name(doc.value("template", std::string{"Full"}));
    const auto gen = doc.value("generation", Json::object());
    c.max_tokens = gen.value("max_tokens", c.max_tokens);
    c.temperature = gen.value("temperature", c.temperature);
    const auto m = doc.value("matcher", Json::object());
    c.matcher.backend = matcher::parse_backend(m.value("backend", std::string{"llm_judge"}));
    c.matcher.judge_model = m.value("judge_model", std::string{});
    c.matcher.judge_max_tokens = m.value("judge_max_tokens", c.matcher.judge_max_tokens);
    c.matcher.embedding_threshold = m.value("threshold", c.matcher.embedding_threshold);
    c.matcher.decision_threshold = m.value("decision_threshold", c.matcher.decision_threshold);
    c.matcher.labeled_pairs = optional_path(m, "labeled_pairs", base_dir);
    c.matcher.validation_fraction = m.value("validation_fraction", c.matcher.validation_fraction);
    const auto h = doc.value("humaneval", Json::object());
    c.overlap_fraction = h.value("overlap_fraction", c.overlap_fraction);
    c.humaneval_store = optional_path(h, "store", base_dir);
    c.parallelism = doc.value("parallelism", c.parallelism);
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(io::read_json(path), fs::absolute(path).parent_path());
}

Json to_json(const RunConfig& c) {
  return {{"schema", io::kSchemaVersion},
          {"corpus", c.corpus.string()},
          {"output_dir", c.output_dir.string()},
          {"cache_dir", path_or_null(c.cache_dir)},
          {"offline", c.offline},
          {"seed", c.seed},
          {"providers", {{"chat", c.chat_provider}, {"embedding", c.embedding_provider}}},
          {"client", c.client},
          {"models", c.models},
          {"template", generation::to_string(c.template_name)},
          {"generation", {{"max_tokens", c.max_tokens}, {"temperature", c.temperature}}},
          {"matcher",
           {{"backend", matcher::to_string(c.matcher.backend)},
            {"judge_model", c.matcher.judge_model},
            {"judge_max_tokens", c.matcher.judge_max_tokens},
            {"threshold", c.matcher.embedding_threshold},
            {"decision_threshold", c.matcher.decision_threshold},
            {"labeled_pairs", path_or_null(c.matcher.labeled_pairs)},
            {"validation_fraction", c.matcher.validation_fraction}}},
          {"humaneval", {{"overlap_fraction", c.overlap_fraction}, {"store", path_or_null(c.humaneval_store)}}},
          {"parallelism", c.parallelism}};
}

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Strip: return "strip";
    case Stage::Generate: return "generate";
    case Stage::Match: return "match";
    case Stage::Score: return "score";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  for (auto st : {Stage::Ingest, Stage::Strip, Stage::Generate, Stage::Match, Stage::Score}) {
    if (to_string(st) == s) return st;
  }
  throw ValidationError("unknown stage '" + std::string(s) + "'");
}

Json reference_values() {
  return {{"reproduced", false},
          {"note", "published figures from the original study; not recomputed by this run"},
          {"matcher_accuracy", {{"llm_judge", 0.918}, {"bertscore", 0.754}, {"nli_entailment", 0.655}}},
          {"human_eval_kappa", 0.83},
          {"human_eval",
           {{"claude",
             {{"novelty_pct",
               {{"not novel", 14.78}, {"generic", 16.52}, {"moderately novel", 41.73}, {"very novel", 20.86},
                {"extremely novel", 16.52}}},
              {"relevant_pct", 76.67},
              {"feasible_pct", 83.34}}},
            {"gpt-4",
             {{"novelty_pct",
               {{"not novel", 7.83}, {"generic", 13.91}, {"moderately novel", 42.61}, {"very novel", 28.70},
                {"extremely novel", 6.96}}},
              {"relevant_pct", 93.34},
              {"feasible_pct", 96.64}}}}}};
}

RunResult run_pipeline(const RunConfig& config, Stage last) {
  config.validate();

  // Providers first: unresolvable credentials or offline violations fail before any work.
  auto options = providers::client_options_from_json(config.client);
  options.max_in_flight = std::min(options.max_in_flight, std::max<std::size_t>(config.parallelism, 1));
  options.cache_dir = config.cache_dir;
  auto chat_provider = providers::make_chat_provider(config.chat_provider, config.offline, config.base_dir);
  auto embed_provider = providers::make_embedding_provider(config.embedding_provider, config.offline);

  Context ctx{config, config.output_dir, {}, {}, nullptr, nullptr, {}, {}};
  try {
    ctx.papers = corpus::load_corpus(config.corpus);
  } catch (const std::exception& e) {
    throw StageError("ingest", config.corpus.string(), e.what());
  }
  if (ctx.papers.empty()) throw StageError("ingest", config.corpus.string(), "corpus holds no papers");
  ctx.corpus_digest = corpus::corpus_digest(ctx.papers);

  auto snapshot = to_json(config);
  Json portable = snapshot;
  portable.erase("output_dir");
  portable.erase("cache_dir");
  portable.erase("client");
  portable.erase("parallelism");
  portable["corpus"] = ctx.corpus_digest;
  ctx.fingerprint = text::sha256_hex(portable.dump());
  ctx.stage_keys = stage_keys(portable);

  fs::create_directories(ctx.run_dir);
  providers::ClientOptions chat_options = options;
  chat_options.exchange_log = ctx.run_dir / "exchanges.jsonl";
  ctx.chat = std::make_shared<providers::ChatClient>(std::move(chat_provider), chat_options);
  ctx.embed = std::make_shared<providers::EmbeddingClient>(std::move(embed_provider), options);

  io::write_json(ctx.run_dir / "manifest.json",
                 {{"schema", io::kSchemaVersion},
                  {"config", snapshot},
                  {"config_fingerprint", ctx.fingerprint},
                  {"corpus_digest", ctx.corpus_digest},
                  {"seeds", {{"run", config.seed}, {"generation", config.seed}, {"split", config.seed}}},
                  {"providers",
                   {{"chat", ctx.chat->provider().id()}, {"embedding", ctx.embed->provider().id()}}},
                  {"cache_policy",
                   {{"enabled", config.cache_dir.has_value()},
                    {"dir", path_or_null(config.cache_dir)},
                    {"key", "sha256(provider, system, user, generation config)"}}}});

  RunResult result;
  result.run_dir = ctx.run_dir;
  bool upstream_ran = false;
  for (auto stage : {Stage::Ingest, Stage::Strip, Stage::Generate, Stage::Match, Stage::Score}) {
    if (upstream_ran || !stage_complete(ctx, stage)) {
      switch (stage) {
        case Stage::Ingest: run_ingest(ctx); break;
        case Stage::Strip: run_strip(ctx); break;
        case Stage::Generate: run_generate(ctx); break;
        case Stage::Match: run_match(ctx); break;
        case Stage::Score: run_score(ctx); break;
      }
      mark_complete(ctx, stage);
      result.executed.push_back(stage);
      upstream_ran = true;
    }
    if (stage == last) break;
  }
  if (fs::exists(ctx.run_dir / "report.json") && stage_complete(ctx, Stage::Score)) {
    result.report_path = ctx.run_dir / "report.json";
  }
  return result;
}

}  // namespace ideaeval::pipeline
