// One PASS/FAIL line per acceptance criterion; exit status 1 when any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "humaneval_fixture.hpp"
#include "ideaeval/corpus.hpp"
#include "ideaeval/humaneval.hpp"
#include "ideaeval/io.hpp"
#include "ideaeval/matcher.hpp"
#include "ideaeval/metrics.hpp"
#include "ideaeval/pipeline.hpp"
#include "ideaeval/providers.hpp"
#include "ideaeval/retrieval.hpp"
#include "ideaeval/text.hpp"
#include "test_support.hpp"

using namespace ideaeval;
using testsupport::fixtures;
using testsupport::TempDir;

namespace {

struct Failure {
  std::string what;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw Failure{what};
}

void require_near(double got, double want, double tol, const std::string& what) {
  if (!(std::fabs(got - want) <= tol)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ": got %.17g, want %.17g (tol %g)", got, want, tol);
    throw Failure{what + buf};
  }
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

pipeline::RunConfig fixture_config(const std::filesystem::path& out) {
  auto cfg = pipeline::load_run_config(fixtures() / "run_offline.json");
  cfg.output_dir = out;
  return cfg;
}

// ---------------------------------------------------------------------------

void idea_alignment_fixture() {
  TempDir dir;
  const auto result = pipeline::run_pipeline(fixture_config(dir / "run"));
  const auto report = io::read_json(result.report_path);

  // Hand-computed: sum of per-idea scores over author groups.
  struct PaperExpect {
    const char* model;
    const char* paper;
    double raw;
  };
  const PaperExpect papers[] = {{"model-a", "p1", (1.0 + 0.5 + 0.0) / 2}, {"model-a", "p2", (0.9 + 0.8 + 0.0) / 1},
                                {"model-a", "p3", (0.4 + 0.2) / 2},       {"model-b", "p1", (0.9 + 0.1) / 2},
                                {"model-b", "p2", (0.3 + 0.0) / 1},       {"model-b", "p3", (1.0 + 0.25 + 0.75) / 2}};
  bool saw_raw_above_one = false;
  for (const auto& e : papers) {
    const io::Json* row = nullptr;
    for (const auto& r : report.at("papers")) {
      if (r.at("model") == e.model && r.at("paper_id") == e.paper) row = &r;
    }
    require(row != nullptr, std::string("missing paper row ") + e.model + "/" + e.paper);
    const std::string tag = std::string(e.model) + "/" + e.paper;
    require_near(row->at("avg_score_raw").get<double>(), e.raw, 1e-9, tag + " raw");
    require_near(row->at("avg_score_clamped").get<double>(), std::min(e.raw, 1.0), 1e-9, tag + " clamped");
    saw_raw_above_one |= e.raw > 1.0;
  }
  require(saw_raw_above_one, "fixture lacks a paper with raw score above 1");

  struct DomainExpect {
    const char* domain;
    const char* model;
    double raw;
    double clamped;
  };
  const DomainExpect domains[] = {{"ComputerScience", "model-a", (0.75 + 1.7) / 2, (0.75 + 1.0) / 2},
                                  {"Physics", "model-a", 0.3, 0.3},
                                  {"ComputerScience", "model-b", (0.5 + 0.3) / 2, (0.5 + 0.3) / 2},
                                  {"Physics", "model-b", 1.0, 1.0}};
  for (const auto& e : domains) {
    const io::Json* row = nullptr;
    for (const auto& r : report.at("alignment")) {
      if (r.at("domain") == e.domain && r.at("model") == e.model) row = &r;
    }
    require(row != nullptr, std::string("missing alignment row ") + e.domain + "/" + e.model);
    const std::string tag = std::string(e.domain) + "/" + e.model;
    require_near(row->at("iascore_raw").get<double>(), e.raw, 1e-9, tag + " IAScore");
    require_near(row->at("iascore_clamped").get<double>(), e.clamped, 1e-9, tag + " IAScore clamped");
  }
}

double brute_distinctness(const std::vector<std::vector<double>>& vs) {
  // Ordered double sum over i != j, normalized by n(n-1).
  const auto n = vs.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      long double d = 0, a = 0, b = 0;
      for (std::size_t k = 0; k < vs[i].size(); ++k) {
        d += static_cast<long double>(vs[i][k]) * vs[j][k];
        a += static_cast<long double>(vs[i][k]) * vs[i][k];
        b += static_cast<long double>(vs[j][k]) * vs[j][k];
      }
      total += static_cast<double>(1.0L - d / std::sqrt(a * b));
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

std::vector<std::vector<double>> random_set(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const std::size_t n = 2 + rng() % 5;
  const std::size_t d = rng() % 2 ? 64 : 8;
  std::vector<std::vector<double>> vs(n, std::vector<double>(d));
  for (auto& v : vs)
    for (auto& x : v) x = g(rng);
  return vs;
}

void distinctness_oracle() {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 200; ++t) {
    const auto vs = random_set(rng);
    require_near(metrics::pairwise_distinctness(vs), brute_distinctness(vs), 1e-9, "set " + std::to_string(t));
  }
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> v(t % 2 ? 64 : 8);
    for (auto& x : v) x = g(rng);
    const std::vector<std::vector<double>> same(2 + t % 5, v);
    require(metrics::pairwise_distinctness(same) == 0.0, "identical vectors not exactly 0");
  }
  const double r = 1.0 / std::sqrt(2.0);
  const std::vector<std::vector<double>> bis{{1, 0}, {0, 1}, {r, r}};
  // Distances 1, 1 - 1/sqrt2, 1 - 1/sqrt2: mean (3 - sqrt2) / 3 = 0.52859...
  require_near(metrics::pairwise_distinctness(bis), (3.0 - std::sqrt(2.0)) / 3.0, 1e-6, "bisector");
}

void distinctness_invariances() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 100; ++t) {
    auto vs = random_set(rng);
    const double base = metrics::pairwise_distinctness(vs);
    auto perm = vs;
    std::shuffle(perm.begin(), perm.end(), rng);
    require_near(metrics::pairwise_distinctness(perm), base, 1e-12, "permutation trial " + std::to_string(t));
    for (auto& v : vs) {
      const double c = scale(rng);
      for (auto& x : v) x *= c;
    }
    require_near(metrics::pairwise_distinctness(vs), base, 1e-12, "scaling trial " + std::to_string(t));
  }
}

void strip_losslessness() {
  for (const auto& paper : corpus::load_corpus(fixtures() / "corpus")) {
    const auto rebuilt = corpus::reconstruct_sections(corpus::strip_fris(paper));
    for (std::size_t i = 0; i < paper.sections.size(); ++i) {
      require(rebuilt.at(i).body == paper.sections[i].body, "fixture " + paper.id + " section " + std::to_string(i));
    }
  }
  std::mt19937_64 rng(4321);
  const std::vector<std::string> alphabet{"a", "Z", " ", ".", ",", "\xC3\xA9", "\xE2\x80\x83", "\xF0\x9F\x98\x80", "\n"};
  for (int trial = 0; trial < 500; ++trial) {
    corpus::PaperRecord p;
    p.id = "r" + std::to_string(trial);
    p.title = "t";
    p.abstract = "a";
    const auto n_sections = 1 + rng() % 3;
    for (std::size_t si = 0; si < n_sections; ++si) {
      std::string body;
      const auto len = 1 + rng() % 80;
      for (std::size_t k = 0; k < len; ++k) body += alphabet[rng() % alphabet.size()];
      if (text::trim(body).empty()) body.back() = 'a';  // blank sections are invalid input
      p.sections.push_back({"s" + std::to_string(si), body});
      std::size_t pos = 0;
      while (pos < len) {
        const auto start = pos + rng() % 8;
        if (start >= len) break;
        const auto end = std::min<std::size_t>(len, start + 1 + rng() % 12);
        p.annotations.push_back({si, start, end, rng() % 2 ? corpus::FriKind::Direct : corpus::FriKind::Mixed,
                                 "g" + std::to_string(rng() % 3)});
        pos = end + rng() % 3;
      }
    }
    const auto stripped = corpus::strip_fris(p);
    const auto back = corpus::stripped_from_json(io::Json::parse(corpus::to_json(stripped).dump()));
    const auto rebuilt = corpus::reconstruct_sections(back);
    for (std::size_t si = 0; si < p.sections.size(); ++si) {
      require(rebuilt.at(si).body == p.sections[si].body, "random case " + std::to_string(trial));
    }
  }
}

void retrieval_exactness() {
  constexpr std::size_t n = 1000;
  constexpr std::size_t d = 64;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  retrieval::VectorIndex index("synthetic", d);
  std::vector<std::vector<double>> vs;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(d);
    if (i % 100 == 99) {
      v = vs[i - 50];  // exact duplicates force ties
    } else {
      for (auto& x : v) x = g(rng);
    }
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", (i * 7919) % n);
    index.add({id, id, ""}, v);
    vs.push_back(v);
  }
  auto check_query = [&](const std::vector<double>& q, const std::string& tag) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < n; ++i) {
      double dq = 0, qq = 0, vv = 0;
      for (std::size_t k = 0; k < d; ++k) {
        dq += q[k] * vs[i][k];
        qq += q[k] * q[k];
        vv += vs[i][k] * vs[i][k];
      }
      all.push_back({dq / std::sqrt(qq * vv), i});
    }
    std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      const auto& pa = index.record(a.second).paper_id;
      const auto& pb = index.record(b.second).paper_id;
      if (pa != pb) return pa < pb;
      return a.second < b.second;
    });
    for (std::size_t k : {std::size_t{1}, std::size_t{20}, std::size_t{1000}}) {
      const auto hits = retrieval::retrieve_top_k(index, q, k);
      require(hits.size() == k, tag + " k=" + std::to_string(k) + " size");
      for (std::size_t i = 0; i < k; ++i) {
        require(hits[i].entry == all[i].second, tag + " k=" + std::to_string(k) + " rank " + std::to_string(i));
        require_near(hits[i].similarity, all[i].first, 1e-12, tag + " similarity");
      }
    }
  };
  for (int qi = 0; qi < 5; ++qi) {
    std::vector<double> q(d);
    for (auto& x : q) x = g(rng);
    check_query(q, "random query " + std::to_string(qi));
  }
  check_query(vs[49], "duplicate-vector query");

  for (std::size_t i : {std::size_t{0}, std::size_t{123}, std::size_t{998}}) {
    const auto hits = retrieval::retrieve_top_k(index, vs[i], 1);
    require(hits[0].entry == i, "identity query " + std::to_string(i) + " not first");
    require(hits[0].similarity == 1.0, "identity similarity not 1.0");
    const auto& pid = index.record(i).paper_id;
    for (const auto& h : retrieval::retrieve_top_k(index, vs[i], n, std::string_view(pid))) {
      require(h.paper_id != pid, "excluded paper returned");
    }
  }
}

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

void matcher_harness() {
  matcher::LabeledPairSet set;
  for (int i = 0; i < 20; ++i) {
    set.pairs.push_back({{"collection " + std::to_string(i)}, "idea " + std::to_string(i),
                         i % 2 ? matcher::Label::Matched : matcher::Label::Unmatched, matcher::Split::Test});
  }
  matcher::assign_splits(set, 0.3, 5);
  const auto oracle = matcher::benchmark_matcher(
      [](const matcher::LabeledPair& p) { return p.label == matcher::Label::Matched ? 1.0 : 0.0; }, set, 0.5);
  require(oracle.all.accuracy() == 1.0, "oracle accuracy != 1.0");
  const auto constant = matcher::benchmark_matcher([](const matcher::LabeledPair&) { return 1.0; }, set, 0.5);
  require(constant.all.accuracy() == 0.5, "constant accuracy != 0.5");

  const double h = std::sqrt(0.75);
  providers::EmbeddingClient table(std::make_shared<TableEmbedder>(std::map<std::string, std::vector<double>>{
      {"group one", {1, 0, 0}}, {"group two", {0, 1, 0}}, {"half way", {0.5, 0, h}}}));
  const std::vector<corpus::ApFriGroup> groups{{"g1", "group one", {}}, {"g2", "group two", {}}};
  const generation::GeneratedIdea far{"p", "m", 1, "half way", 2};
  const auto zeroed = matcher::match_embedding(table, groups, far, matcher::kDefaultEmbeddingThreshold);
  require(zeroed.score == 0.0, "max-cosine 0.5 pair not zeroed at 0.68");

  providers::EmbeddingClient hash(std::make_shared<providers::HashEmbedder>(64, 0));
  const std::vector<corpus::ApFriGroup> same_groups{{"g1", "Extend the model to streaming inputs.", {}}};
  const generation::GeneratedIdea same{"p", "m", 1, "Extend the model to streaming inputs.", 6};
  const auto passed = matcher::match_embedding(hash, same_groups, same, matcher::kDefaultEmbeddingThreshold);
  require(passed.score == 1.0, "identical-text pair score != 1.0 (got " + std::to_string(passed.score) + ")");
}

void kappa() {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> x(4 + rng() % 20);
    for (auto& v : x) v = static_cast<int>(rng() % 5);
    x[0] = 0;
    x[1] = 1;  // non-constant
    require(metrics::cohen_kappa(x, x) == 1.0, "kappa(x, x) != 1");
  }
  // Contingency [[1,1],[1,1]]: p_o = 0.5, p_e = 0.5.
  const std::vector<int> a0{1, 1, 0, 0};
  const std::vector<int> b0{1, 0, 1, 0};
  require(metrics::cohen_kappa(a0, b0) == 0.0, "independent example != 0.0");
  // Contingency [[0,2],[2,0]]: p_o = 0, p_e = 0.5.
  const std::vector<int> a1{1, 1, 0, 0};
  const std::vector<int> b1{0, 0, 1, 1};
  require(metrics::cohen_kappa(a1, b1) == -1.0, "opposed example != -1.0");
}

void offline_end_to_end() {
  TempDir dir;
  const auto a = pipeline::run_pipeline(fixture_config(dir / "first"));
  const auto b = pipeline::run_pipeline(fixture_config(dir / "second"));
  require(a.executed.size() == 5 && b.executed.size() == 5, "not every stage ran");
  const auto ra = slurp(a.report_path);
  require(!ra.empty(), "empty report");
  require(ra == slurp(b.report_path), "report.json differs between runs");
  require(slurp(a.run_dir / "report.csv") == slurp(b.run_dir / "report.csv"), "report.csv differs between runs");
}

void length_bins() {
  auto words = [](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
    return s;
  };
  const std::vector<std::pair<std::size_t, double>> spec{{5, 0.5}, {19, 0.25}, {20, 1.0}, {40, 0.75}, {59, 0.25}, {60, 0.125}};
  std::vector<metrics::ScoredIdea> ideas;
  for (const auto& [n, score] : spec) ideas.push_back({text::word_count(words(n)), score});
  const auto bins = metrics::length_bins(ideas);
  require(bins.size() == 4, "expected four bins");
  const std::map<metrics::LengthBin, std::pair<std::size_t, double>> expected{
      {metrics::LengthBin::Under20, {2, 0.375}},
      {metrics::LengthBin::From20To40, {1, 1.0}},
      {metrics::LengthBin::From40To60, {2, 0.5}},
      {metrics::LengthBin::From60, {1, 0.125}}};
  for (const auto& [bin, want] : expected) {
    const auto& got = bins.at(bin);
    const std::string tag(metrics::to_string(bin));
    require(got.count == want.first, tag + " count");
    require(got.mean_score == want.second, tag + " mean " + std::to_string(got.mean_score));
  }
}

void humaneval_service() {
  const auto ten = testsupport::make_idea_sets({"p1"}, {"m1", "m2"}, 5);
  const auto plan10 = humaneval::create_sessions("overlap", ten, {{"p1", {"ann1", "ann2"}}}, 0.2, 17);
  std::map<std::string, int> seen;
  for (const auto& s : plan10.sessions)
    for (const auto& i : s.items) ++seen[i.key];
  const auto dual = std::count_if(seen.begin(), seen.end(), [](const auto& kv) { return kv.second == 2; });
  require(seen.size() == 10, "expected 10 ideas");
  require(dual == 2, "expected exactly 2 dual-assigned ideas, got " + std::to_string(dual));

  TempDir dir;
  const auto plan = humaneval::create_sessions("tally", testsupport::make_idea_sets({"p1", "p2"}, {"m1", "m2"}, 5),
                                               {{"p1", {"ann1"}}, {"p2", {"ann2"}}}, 0.0, 3);
  auto store = humaneval::HumanEvalStore::create(dir.path(), plan);

  // Ratings per (model, paper, idea index): relevance, novelty, feasibility.
  struct Row {
    const char* model;
    const char* paper;
    std::size_t index;
    int rel;
    int nov;
    int fea;
  };
  const std::vector<Row> rows{
      {"m1", "p1", 1, 1, 1, 1}, {"m1", "p1", 2, 1, 2, 1}, {"m1", "p1", 3, 0, 2, 0}, {"m1", "p1", 4, 1, 3, 1},
      {"m1", "p1", 5, 1, 3, 0}, {"m1", "p2", 1, 0, 3, 1}, {"m1", "p2", 2, 1, 4, 1}, {"m1", "p2", 3, 1, 4, 0},
      {"m1", "p2", 4, 0, 4, 1}, {"m1", "p2", 5, 1, 5, 0}, {"m2", "p1", 1, 1, 2, 0}, {"m2", "p1", 2, 1, 3, 1},
      {"m2", "p1", 3, 1, 3, 0}, {"m2", "p1", 4, 1, 3, 0}, {"m2", "p1", 5, 0, 3, 1}, {"m2", "p2", 1, 1, 4, 1},
      {"m2", "p2", 2, 1, 4, 0}, {"m2", "p2", 3, 1, 5, 1}, {"m2", "p2", 4, 1, 5, 0}, {"m2", "p2", 5, 1, 5, 0}};
  // Hand tally of the rows above.
  //   m1: relevant 7/10, feasible 6/10, novelty 1,2,3,3,1
  //   m2: relevant 9/10, feasible 4/10, novelty 0,1,4,2,3
  struct Tally {
    double relevant;
    double feasible;
    std::array<double, 5> novelty;
  };
  const std::map<std::string, Tally> expected{{"m1", {70.0, 60.0, {10.0, 20.0, 30.0, 30.0, 10.0}}},
                                              {"m2", {90.0, 40.0, {0.0, 10.0, 40.0, 20.0, 30.0}}}};

  std::map<std::tuple<std::string, std::string, std::size_t>, std::string> key_of;
  for (const auto& [key, entry] : plan.blind_keys) key_of[{entry.model, entry.paper_id, entry.idea_index}] = key;
  std::map<std::string, std::string> session_of;
  for (const auto& s : plan.sessions) session_of[s.paper_id] = s.session_id;

  std::string csv = "session_id,idea_key,relevance,novelty,feasibility\n";
  for (const auto& r : rows) {
    csv += session_of.at(r.paper) + "," + key_of.at({r.model, r.paper, r.index}) + "," + std::to_string(r.rel) + "," +
           std::to_string(r.nov) + "," + std::to_string(r.fea) + "\n";
  }
  const auto first = store->import_csv_text(csv);
  require(first.accepted == 20 && first.rejected.empty(), "20-row import not fully accepted");

  const auto report = store->report();
  require(report.total_ratings == 20, "total ratings != 20");
  for (const auto& [model, want] : expected) {
    const auto& agg = report.per_model.at(model);
    require(agg.ratings == 10, model + " rating count");
    require_near(agg.relevant_pct, want.relevant, 1e-9, model + " relevant %");
    require_near(agg.feasible_pct, want.feasible, 1e-9, model + " feasible %");
    for (std::size_t c = 0; c < 5; ++c) {
      require_near(agg.novelty_pct[c], want.novelty[c], 1e-9, model + " novelty % " + std::to_string(c + 1));
    }
  }

  const auto again = store->import_csv_text(csv);
  require(again.accepted == 0, "duplicate rows accepted");
  require(again.rejected.size() == 20, "not every duplicate row rejected");
  for (const auto& rej : again.rejected) require(rej.status == 409, "duplicate rejected with status " + std::to_string(rej.status));
  require(store->rating_count() == 20, "duplicates changed the rating count");
}

struct Criterion {
  const char* name;
  std::function<void()> run;
  double limit_seconds;  ///< 0 = no runtime bound
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"idea alignment fixture (AvgScore/IAScore within 1e-9)", idea_alignment_fixture, 1.0},
      {"distinctness oracle (200 sets within 1e-9, identical = 0, bisector)", distinctness_oracle, 5.0},
      {"distinctness invariances (permutation/scaling < 1e-12, 100 trials)", distinctness_invariances, 0.0},
      {"strip losslessness (fixtures + 500 random cases)", strip_losslessness, 5.0},
      {"retrieval exactness (1000 x 64-d, k in {1,20,1000})", retrieval_exactness, 2.0},
      {"matcher harness (oracle 1.0, constant 0.5, embedding threshold 0.68)", matcher_harness, 0.0},
      {"kappa (identity 1, examples 0.0 and -1.0)", kappa, 0.0},
      {"offline end-to-end (byte-identical reports)", offline_end_to_end, 30.0},
      {"length bins (6 ideas, 4 bins, exact means)", length_bins, 0.0},
      {"humaneval (overlap 0.2 -> 2 dual, 20-row tally, duplicates 409)", humaneval_service, 0.0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    try {
      c.run();
    } catch (const Failure& f) {
      error = f.what;
    } catch (const std::exception& e) {
      error = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (error.empty() && c.limit_seconds > 0 && secs >= c.limit_seconds) {
      error = "runtime " + std::to_string(secs) + "s exceeds " + std::to_string(c.limit_seconds) + "s";
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3fs", secs);
    if (error.empty()) {
      std::cout << "PASS  " << c.name << "  [" << timing << "]\n";
    } else {
      ++failed;
      std::cout << "FAIL  " << c.name << "  [" << timing << "]  " << error << "\n";
    }
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << (criteria.size() - failed) << "/" << criteria.size() << "\n";
  return failed ? 1 : 0;
}
