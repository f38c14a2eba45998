#include "ideaeval/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <iostream>
#include <optional>

#include "ideaeval/corpus.hpp"
#include "ideaeval/error.hpp"
#include "ideaeval/generation.hpp"
#include "ideaeval/humaneval.hpp"
#include "ideaeval/humaneval_service.hpp"
#include "ideaeval/matcher.hpp"
#include "ideaeval/metrics.hpp"
#include "ideaeval/pipeline.hpp"
#include "ideaeval/providers.hpp"
#include "ideaeval/retrieval.hpp"

namespace ideaeval::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

// Flags shared by the pipeline subcommands; each overrides the config file.
struct RunFlags {
  std::string config;
  std::string corpus;
  std::string output_dir;
  std::string cache_dir;
  bool offline = false;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> models;
  std::string template_name;
  std::string backend;
  std::optional<double> threshold;
  std::optional<double> decision_threshold;
  std::optional<double> overlap_fraction;
  std::optional<std::size_t> parallelism;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("-c,--config", f.config, "run config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--corpus", f.corpus, "corpus directory");
  cmd->add_option("-o,--output-dir", f.output_dir, "run directory");
  cmd->add_option("--cache-dir", f.cache_dir, "response cache directory");
  cmd->add_flag("--offline", f.offline, "forbid network providers");
  cmd->add_option("--seed", f.seed);
  cmd->add_option("--models", f.models, "generation models")->delimiter(',');
  cmd->add_option("--template", f.template_name, "Full | TopFive");
  cmd->add_option("--backend", f.backend, "llm_judge | embedding");
  cmd->add_option("--threshold", f.threshold, "embedding matcher threshold");
  cmd->add_option("--decision-threshold", f.decision_threshold);
  cmd->add_option("--overlap-fraction", f.overlap_fraction);
  cmd->add_option("-j,--parallelism", f.parallelism);
}

pipeline::RunConfig resolve_run_config(const RunFlags& f) {
  const auto path = fs::path(f.config);
  auto doc = io::read_json(path);
  if (!f.corpus.empty()) doc["corpus"] = fs::absolute(f.corpus).string();
  if (!f.output_dir.empty()) doc["output_dir"] = fs::absolute(f.output_dir).string();
  if (!f.cache_dir.empty()) doc["cache_dir"] = fs::absolute(f.cache_dir).string();
  if (f.offline) doc["offline"] = true;
  if (f.seed) doc["seed"] = *f.seed;
  if (!f.models.empty()) doc["models"] = f.models;
  if (!f.template_name.empty()) doc["template"] = f.template_name;
  if (!f.backend.empty()) doc["matcher"]["backend"] = f.backend;
  if (f.threshold) doc["matcher"]["threshold"] = *f.threshold;
  if (f.decision_threshold) doc["matcher"]["decision_threshold"] = *f.decision_threshold;
  if (f.overlap_fraction) doc["humaneval"]["overlap_fraction"] = *f.overlap_fraction;
  if (f.parallelism) doc["parallelism"] = *f.parallelism;
  return pipeline::run_config_from_json(doc, fs::absolute(path).parent_path());
}

// Provider-only settings for the standalone subcommands.
struct ProviderFlags {
  std::string config;
  bool offline = false;
};

void add_provider_flags(CLI::App* cmd, ProviderFlags& f) {
  cmd->add_option("-c,--config", f.config, "file with a 'providers' block")->check(CLI::ExistingFile);
  cmd->add_flag("--offline", f.offline, "forbid network providers");
}

struct Providers {
  Json doc = Json::object();
  fs::path base;
  bool offline = true;

  providers::ClientOptions options() const {
    auto o = providers::client_options_from_json(doc.value("client", Json::object()));
    if (doc.contains("cache_dir") && !doc["cache_dir"].is_null()) {
      fs::path p = doc["cache_dir"].get<std::string>();
      o.cache_dir = p.is_absolute() ? p : base / p;
    }
    return o;
  }
  std::shared_ptr<providers::EmbeddingClient> embedder() const {
    const auto cfg = doc.contains("providers") ? doc["providers"].value("embedding", Json::object()) : Json::object();
    if (cfg.empty()) {
      if (!offline) throw ValidationError("no embedding provider configured");
      return std::make_shared<providers::EmbeddingClient>(std::make_shared<providers::HashEmbedder>(), options());
    }
    return std::make_shared<providers::EmbeddingClient>(providers::make_embedding_provider(cfg, offline), options());
  }
  std::shared_ptr<providers::ChatClient> chat() const {
    if (!doc.contains("providers") || !doc["providers"].contains("chat")) {
      throw ValidationError("no chat provider configured");
    }
    return std::make_shared<providers::ChatClient>(
        providers::make_chat_provider(doc["providers"]["chat"], offline, base), options());
  }
};

Providers load_providers(const ProviderFlags& f) {
  Providers p;
  if (!f.config.empty()) {
    p.doc = io::read_json(f.config);
    p.base = fs::absolute(f.config).parent_path();
  }
  p.offline = f.offline || p.doc.value("offline", false);
  return p;
}

void print_run(std::ostream& out, const pipeline::RunResult& r) {
  Json executed = Json::array();
  for (auto s : r.executed) executed.push_back(pipeline::to_string(s));
  out << Json{{"run_dir", r.run_dir.string()},
              {"executed", executed},
              {"report", r.report_path.empty() ? Json(nullptr) : Json(r.report_path.string())}}
             .dump(2)
      << "\n";
}

std::vector<generation::IdeaSet> load_idea_sets(const std::vector<std::string>& paths) {
  std::vector<generation::IdeaSet> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out.push_back(generation::idea_set_from_json(io::read_json(f)));
    } else {
      out.push_back(generation::idea_set_from_json(io::read_json(p)));
    }
  }
  return out;
}

humaneval::HumanEvalService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evaluate LLM-generated future research ideas against author-stated ones", "ideaeval"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  std::function<void()> action;

  // pipeline stages ---------------------------------------------------------
  RunFlags run_flags;
  auto add_stage = [&](const char* name, const char* help, pipeline::Stage last) {
    auto* cmd = app.add_subcommand(name, help);
    add_run_flags(cmd, run_flags);
    cmd->callback([&, last] { action = [&, last] { print_run(out, pipeline::run_pipeline(resolve_run_config(run_flags), last)); }; });
  };
  add_stage("ingest", "load and validate the corpus", pipeline::Stage::Ingest);
  add_stage("strip", "remove annotated future-work spans", pipeline::Stage::Strip);
  add_stage("generate", "generate ideas per model and paper", pipeline::Stage::Generate);
  add_stage("match", "score generated ideas against author ideas", pipeline::Stage::Match);
  add_stage("score", "aggregate scores into the report", pipeline::Stage::Score);
  add_stage("run", "all stages, ingest through report", pipeline::Stage::Score);

  auto* report = app.add_subcommand("report", "print a run report");
  std::string report_run_dir;
  bool report_csv = false;
  report->add_option("run_dir", report_run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  report->add_flag("--csv", report_csv, "print the flat CSV export");
  report->callback([&] {
    action = [&] {
      const auto p = fs::path(report_run_dir) / (report_csv ? "report.csv" : "report.json");
      if (!fs::exists(p)) throw ValidationError("no report in " + report_run_dir + "; run the score stage first");
      out << io::read_file(p);
    };
  });

  // standalone tools --------------------------------------------------------
  auto* stats = app.add_subcommand("stats", "per-domain corpus word statistics");
  std::string stats_corpus;
  stats->add_option("corpus", stats_corpus)->required()->check(CLI::ExistingDirectory);
  stats->callback([&] {
    action = [&] {
      Json doc = Json::object();
      for (const auto& [d, s] : corpus::corpus_stats(corpus::load_corpus(stats_corpus))) {
        doc[std::string(corpus::to_string(d))] = {{"papers", s.papers},
                                                  {"avg_words_without_future_work", s.avg_words_without_fwk},
                                                  {"avg_words_future_work", s.avg_words_fwk}};
      }
      out << doc.dump(2) << "\n";
    };
  });

  auto* distinct = app.add_subcommand("distinctness", "idea distinctness of idea-set files");
  ProviderFlags distinct_pf;
  std::vector<std::string> distinct_inputs;
  add_provider_flags(distinct, distinct_pf);
  distinct->add_option("ideas", distinct_inputs, "idea-set files or directories")->required();
  distinct->callback([&] {
    action = [&] {
      const auto embedder = load_providers(distinct_pf).embedder();
      Json rows = Json::array();
      std::vector<double> values;
      for (const auto& set : load_idea_sets(distinct_inputs)) {
        if (set.ideas.size() < 2) continue;
        std::vector<std::string> texts;
        for (const auto& i : set.ideas) texts.push_back(i.text);
        const double v = metrics::pairwise_distinctness(embedder->embed(texts));
        values.push_back(v);
        rows.push_back({{"paper_id", set.paper_id}, {"model", set.model_id}, {"d_i", v}});
      }
      if (values.empty()) throw ValidationError("no idea set with at least two ideas");
      out << Json{{"sets", rows}, {"mean", metrics::domain_distinctness(values)}}.dump(2) << "\n";
    };
  });

  auto* bench = app.add_subcommand("bench-matcher", "accuracy of a matcher backend on labeled pairs");
  ProviderFlags bench_pf;
  std::string bench_pairs;
  std::string bench_backend = "embedding";
  std::string bench_judge_model;
  double bench_threshold = matcher::kDefaultEmbeddingThreshold;
  double bench_decision = matcher::kDefaultDecisionThreshold;
  double bench_validation = 0.3;
  std::uint64_t bench_seed = 0;
  add_provider_flags(bench, bench_pf);
  bench->add_option("pairs", bench_pairs, "labeled pairs file")->required()->check(CLI::ExistingFile);
  bench->add_option("--backend", bench_backend, "llm_judge | embedding");
  bench->add_option("--judge-model", bench_judge_model);
  bench->add_option("--threshold", bench_threshold);
  bench->add_option("--decision-threshold", bench_decision);
  bench->add_option("--validation-fraction", bench_validation);
  bench->add_option("--seed", bench_seed);
  bench->callback([&] {
    action = [&] {
      const auto pairs = matcher::load_labeled_pairs(bench_pairs, bench_validation, bench_seed);
      const auto p = load_providers(bench_pf);
      std::shared_ptr<providers::ChatClient> chat;
      std::shared_ptr<providers::EmbeddingClient> embedder;
      matcher::PairScorer scorer;
      if (matcher::parse_backend(bench_backend) == matcher::Backend::LlmJudge) {
        if (bench_judge_model.empty()) throw ValidationError("--judge-model is required for llm_judge");
        chat = p.chat();
        providers::GenerationConfig g;
        g.model_name = bench_judge_model;
        g.max_tokens = 64;
        scorer = matcher::llm_judge_scorer(*chat, g);
      } else {
        embedder = p.embedder();
        scorer = matcher::embedding_scorer(*embedder, bench_threshold);
      }
      out << matcher::to_json(matcher::benchmark_matcher(scorer, pairs, bench_decision)).dump(2) << "\n";
    };
  });

  // rag ---------------------------------------------------------------------
  auto* rag = app.add_subcommand("rag", "retrieval-augmented generation");
  rag->require_subcommand(1);
  ProviderFlags rag_pf;

  auto* rag_index = rag->add_subcommand("index", "embed metadata titles into an index file");
  std::string rag_metadata;
  std::string rag_index_out;
  add_provider_flags(rag_index, rag_pf);
  rag_index->add_option("--metadata", rag_metadata, "JSON Lines of {paper_id, title, abstract}")
      ->required()
      ->check(CLI::ExistingFile);
  rag_index->add_option("--out", rag_index_out, "index file")->required();
  rag_index->callback([&] {
    action = [&] {
      const auto embedder = load_providers(rag_pf).embedder();
      const auto records = retrieval::load_metadata(rag_metadata);
      const auto index = retrieval::build_index(records, *embedder);
      index.save(rag_index_out);
      out << Json{{"entries", index.size()}, {"dimension", index.dimension()}, {"embedder", index.embedder_id()}}.dump(2)
          << "\n";
    };
  });

  auto* rag_retrieve = rag->add_subcommand("retrieve", "top-k papers by title similarity");
  std::string rag_index_in;
  std::string rag_title;
  std::string rag_exclude;
  std::size_t rag_k = 20;
  add_provider_flags(rag_retrieve, rag_pf);
  rag_retrieve->add_option("--index", rag_index_in)->required()->check(CLI::ExistingFile);
  rag_retrieve->add_option("--title", rag_title)->required();
  rag_retrieve->add_option("--k", rag_k);
  rag_retrieve->add_option("--exclude", rag_exclude, "paper id to leave out");
  rag_retrieve->callback([&] {
    action = [&] {
      const auto embedder = load_providers(rag_pf).embedder();
      const auto index = retrieval::VectorIndex::load(rag_index_in);
      std::optional<std::string_view> exclude;
      if (!rag_exclude.empty()) exclude = rag_exclude;
      Json hits = Json::array();
      for (const auto& h : retrieval::retrieve_top_k(index, *embedder, rag_title, rag_k, exclude)) {
        hits.push_back({{"paper_id", h.paper_id}, {"title", h.title}, {"similarity", h.similarity}});
      }
      out << hits.dump(2) << "\n";
    };
  });

  auto* rag_generate = rag->add_subcommand("generate", "generate ideas with retrieved background");
  std::string rag_paper;
  std::string rag_model;
  std::string rag_out;
  std::size_t rag_gen_k = 20;
  add_provider_flags(rag_generate, rag_pf);
  rag_generate->add_option("--index", rag_index_in)->required()->check(CLI::ExistingFile);
  rag_generate->add_option("--paper", rag_paper, "paper record file")->required()->check(CLI::ExistingFile);
  rag_generate->add_option("--model", rag_model)->required();
  rag_generate->add_option("--k", rag_gen_k);
  rag_generate->add_option("--out", rag_out, "result file (default: stdout)");
  rag_generate->callback([&] {
    action = [&] {
      const auto p = load_providers(rag_pf);
      const auto chat = p.chat();
      const auto embedder = p.embedder();
      const auto index = retrieval::VectorIndex::load(rag_index_in);
      const auto paper = corpus::paper_from_json(io::read_json(rag_paper), rag_paper);
      const auto stripped = corpus::strip_fris(paper);
      const auto hits = retrieval::retrieve_top_k(index, *embedder, paper.title, rag_gen_k, paper.id);
      providers::GenerationConfig g;
      g.model_name = rag_model;
      const auto background = retrieval::extract_contributions(*chat, g, paper.id, index, hits);
      const auto result = retrieval::generate_with_background(*chat, g, stripped, background, embedder.get());
      Json doc{{"background", retrieval::to_json(background)}, {"result", retrieval::to_json(result)}};
      if (rag_out.empty()) {
        out << io::canonical_dump(doc);
      } else {
        io::write_json(rag_out, doc);
      }
    };
  });

  // humaneval ---------------------------------------------------------------
  auto* he = app.add_subcommand("humaneval", "blind human rating sessions");
  he->require_subcommand(1);
  std::string he_store;

  auto* he_create = he->add_subcommand("create", "assign ideas to annotator sessions");
  std::vector<std::string> he_ideas;
  std::string he_assignments;
  std::string he_run_id;
  std::string he_corpus;
  double he_overlap = humaneval::kDefaultOverlapFraction;
  std::uint64_t he_seed = 0;
  he_create->add_option("--store", he_store, "session store directory")->required();
  he_create->add_option("--ideas", he_ideas, "idea-set files or directories")->required();
  he_create->add_option("--assignments", he_assignments, "{paper_id: [annotator, ...]}")
      ->required()
      ->check(CLI::ExistingFile);
  he_create->add_option("--run-id", he_run_id)->required();
  he_create->add_option("--corpus", he_corpus, "corpus directory for titles and abstracts");
  he_create->add_option("--overlap-fraction", he_overlap);
  he_create->add_option("--seed", he_seed);
  he_create->callback([&] {
    action = [&] {
      const auto sets = load_idea_sets(he_ideas);
      const auto assignments =
          io::read_json(he_assignments).get<std::map<std::string, std::vector<std::string>>>();
      std::map<std::string, humaneval::PaperInfo> papers;
      if (!he_corpus.empty()) {
        for (const auto& p : corpus::load_corpus(he_corpus)) papers[p.id] = {p.title, p.abstract};
      }
      const auto plan = humaneval::create_sessions(he_run_id, sets, assignments, he_overlap, he_seed, papers);
      humaneval::HumanEvalStore::create(he_store, plan);
      Json sessions = Json::array();
      for (const auto& s : plan.sessions) {
        sessions.push_back({{"session_id", s.session_id},
                            {"annotator_id", s.annotator_id},
                            {"paper_id", s.paper_id},
                            {"items", s.items.size()}});
      }
      out << Json{{"run_id", plan.run_id}, {"sessions", sessions}}.dump(2) << "\n";
    };
  });

  auto* he_serve = he->add_subcommand("serve", "serve the rating API");
  humaneval::ServiceConfig serve_cfg;
  std::string he_static;
  he_serve->add_option("--store", he_store)->required()->check(CLI::ExistingDirectory);
  he_serve->add_option("--host", serve_cfg.host);
  he_serve->add_option("--port", serve_cfg.port);
  he_serve->add_option("--static", he_static, "annotator UI build directory")->check(CLI::ExistingDirectory);
  he_serve->callback([&] {
    action = [&] {
      const auto store = humaneval::HumanEvalStore::open(he_store);
      if (!he_static.empty()) serve_cfg.static_dir = he_static;
      humaneval::HumanEvalService service(*store, serve_cfg);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      err << "serving run " << store->run_id() << " on " << serve_cfg.host << ":" << serve_cfg.port << "\n";
      service.serve_forever();
      g_service = nullptr;
    };
  });

  auto* he_import = he->add_subcommand("import", "import ratings from CSV");
  std::string he_csv;
  he_import->add_option("--store", he_store)->required()->check(CLI::ExistingDirectory);
  he_import->add_option("csv", he_csv, "session_id,idea_key,relevance,novelty,feasibility")
      ->required()
      ->check(CLI::ExistingFile);
  int import_exit = kExitOk;
  he_import->callback([&] {
    action = [&] {
      const auto store = humaneval::HumanEvalStore::open(he_store);
      const auto result = store->import_csv(he_csv);
      Json rejected = Json::array();
      for (const auto& r : result.rejected) {
        rejected.push_back({{"line", r.line}, {"status", r.status}, {"message", r.message}});
      }
      out << Json{{"accepted", result.accepted}, {"rejected", rejected}}.dump(2) << "\n";
      if (!result.rejected.empty()) import_exit = kExitValidation;
    };
  });

  auto* he_report = he->add_subcommand("report", "aggregate ratings per model");
  he_report->add_option("--store", he_store)->required()->check(CLI::ExistingDirectory);
  he_report->callback([&] {
    action = [&] { out << humaneval::to_json(humaneval::HumanEvalStore::open(he_store)->report()).dump(2) << "\n"; };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (action) action();
    return import_exit;
  } catch (const StageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitStageAbort;
  } catch (const ProviderError& e) {
    err << "error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConflictError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NoIdeasParsedError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ideaeval::cli
