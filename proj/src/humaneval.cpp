#include "ideaeval/humaneval.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>
#include <set>
#include <sstream>

#include "ideaeval/error.hpp"
#include "ideaeval/text.hpp"

namespace ideaeval::humaneval {

namespace fs = std::filesystem;
using io::Json;

namespace {

std::uint64_t seed_from_digest(std::string_view material) {
  const auto d = text::sha256(material);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::string utc_now_iso() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string rating_slot(const std::string& session_id, const std::string& key) { return session_id + '\x1f' + key; }

bool parse_binary(const Json& v, std::string_view yes, std::string_view no, const char* field) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) {
    const auto i = v.get<long long>();
    if (i == 0 || i == 1) return i == 1;
  }
  if (v.is_string()) {
    const auto s = text::to_lower_ascii(text::trim(v.get<std::string>()));
    if (s == text::to_lower_ascii(yes) || s == "true" || s == "yes" || s == "1") return true;
    if (s == text::to_lower_ascii(no) || s == "false" || s == "no" || s == "0") return false;
  }
  throw ValidationError(std::string(field) + " must be binary (" + std::string(yes) + "/" + std::string(no) + ")");
}

int parse_novelty(const Json& v) {
  long long n = 0;
  if (v.is_number_integer()) {
    n = v.get<long long>();
  } else if (v.is_string()) {
    const auto s = std::string(text::trim(v.get<std::string>()));
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos || s.size() > 3) {
      throw ValidationError("novelty must be an integer 1..5");
    }
    n = std::stoll(s);
  } else {
    throw ValidationError("novelty must be an integer 1..5");
  }
  if (n < 1 || n > 5) throw ValidationError("novelty " + std::to_string(n) + " outside 1..5");
  return static_cast<int>(n);
}

// Splits one CSV record honoring double quotes.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

Json plan_to_json(const SessionPlan& plan) {
  Json sessions = Json::array();
  for (const auto& s : plan.sessions) sessions.push_back(to_json(s));
  return {{"schema", io::kSchemaVersion},
          {"run_id", plan.run_id},
          {"seed", plan.seed},
          {"overlap_fraction", plan.overlap_fraction},
          {"sessions", sessions}};
}

Json blind_keys_to_json(const SessionPlan& plan) {
  Json keys = Json::object();
  for (const auto& [k, e] : plan.blind_keys) {
    keys[k] = {{"model", e.model}, {"paper_id", e.paper_id}, {"idea_index", e.idea_index}};
  }
  return {{"schema", io::kSchemaVersion}, {"run_id", plan.run_id}, {"keys", keys}};
}

}  // namespace

bool AnnotationSession::overlap() const {
  return std::any_of(items.begin(), items.end(), [](const SessionItem& i) { return i.dual; });
}

SessionPlan create_sessions(const std::string& run_id, std::span<const generation::IdeaSet> idea_sets,
                            const std::map<std::string, std::vector<std::string>>& assignments,
                            double overlap_fraction, std::uint64_t seed,
                            const std::map<std::string, PaperInfo>& papers) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction <= 1.0)) {
    throw ValidationError("overlap fraction must lie in [0, 1]");
  }
  struct IdeaRef {
    std::string paper_id;
    std::string model;
    std::size_t index;
    std::string text;
  };
  std::map<std::string, std::vector<IdeaRef>> by_paper;
  for (const auto& set : idea_sets) {
    for (const auto& idea : set.ideas) by_paper[set.paper_id].push_back({set.paper_id, set.model_id, idea.index, idea.text});
  }

  std::set<std::string> pool;
  for (const auto& [paper, annotators] : assignments) {
    if (annotators.empty()) throw ValidationError("paper '" + paper + "' is assigned no annotator");
    const auto it = by_paper.find(paper);
    if (it == by_paper.end() || it->second.empty()) {
      throw ValidationError("annotator '" + annotators.front() + "' assigned paper '" + paper +
                            "' which has no generated ideas");
    }
    pool.insert(annotators.begin(), annotators.end());
  }

  SessionPlan plan;
  plan.run_id = run_id;
  plan.seed = seed;
  plan.overlap_fraction = overlap_fraction;

  // Deterministic idea order: paper, model, index.
  std::vector<IdeaRef> ideas;
  for (const auto& [paper, annotators] : assignments) {
    auto refs = by_paper.at(paper);
    std::sort(refs.begin(), refs.end(),
              [](const IdeaRef& a, const IdeaRef& b) { return std::tie(a.model, a.index) < std::tie(b.model, b.index); });
    ideas.insert(ideas.end(), refs.begin(), refs.end());
  }
  std::vector<std::string> keys;
  for (const auto& idea : ideas) {
    const auto key = "i" + text::sha256_hex(run_id + "|" + std::to_string(seed) + "|" + idea.model + "|" +
                                            idea.paper_id + "|" + std::to_string(idea.index))
                               .substr(0, 16);
    if (!plan.blind_keys.emplace(key, BlindEntry{idea.model, idea.paper_id, idea.index}).second) {
      throw ValidationError("duplicate idea " + idea.paper_id + "#" + std::to_string(idea.index) + " for model " +
                            idea.model);
    }
    keys.push_back(key);
  }

  std::vector<std::size_t> order(ideas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, seed);
  const auto n_dual = static_cast<std::size_t>(std::llround(overlap_fraction * static_cast<double>(ideas.size())));
  std::vector<bool> dual(ideas.size(), false);
  for (std::size_t k = 0; k < n_dual; ++k) dual[order[k]] = true;
  if (n_dual > 0 && pool.size() < 2) {
    throw ValidationError("dual rating needs at least two annotators");
  }
  const std::vector<std::string> sorted_pool(pool.begin(), pool.end());

  auto second_annotator = [&](const std::string& paper) {
    const auto& listed = assignments.at(paper);
    for (std::size_t i = 1; i < listed.size(); ++i) {
      if (listed[i] != listed.front()) return listed[i];
    }
    auto it = std::upper_bound(sorted_pool.begin(), sorted_pool.end(), listed.front());
    if (it == sorted_pool.end()) it = sorted_pool.begin();
    return *it;
  };

  std::map<std::pair<std::string, std::string>, AnnotationSession> sessions;
  auto session_for = [&](const std::string& paper, const std::string& annotator) -> AnnotationSession& {
    auto& s = sessions[{paper, annotator}];
    if (s.session_id.empty()) {
      s.session_id = "s" + text::sha256_hex(run_id + "|" + std::to_string(seed) + "|" + paper + "|" + annotator)
                               .substr(0, 16);
      s.paper_id = paper;
      s.annotator_id = annotator;
      if (const auto p = papers.find(paper); p != papers.end()) {
        s.paper_title = p->second.title;
        s.paper_abstract = p->second.abstract;
      }
      s.shuffle_seed = seed_from_digest(std::to_string(seed) + "|" + s.session_id);
    }
    return s;
  };

  for (std::size_t i = 0; i < ideas.size(); ++i) {
    const auto& paper = ideas[i].paper_id;
    session_for(paper, assignments.at(paper).front()).items.push_back({keys[i], ideas[i].text, dual[i]});
    if (dual[i]) session_for(paper, second_annotator(paper)).items.push_back({keys[i], ideas[i].text, true});
  }
  for (auto& [_, s] : sessions) {
    seeded_shuffle(s.items, s.shuffle_seed);
    plan.sessions.push_back(std::move(s));
  }
  return plan;
}

Json to_json(const AnnotationSession& s) {
  Json items = Json::array();
  for (const auto& i : s.items) items.push_back({{"key", i.key}, {"text", i.text}, {"dual", i.dual}});
  return {{"session_id", s.session_id},         {"paper_id", s.paper_id},
          {"paper_title", s.paper_title},       {"paper_abstract", s.paper_abstract},
          {"annotator_id", s.annotator_id},     {"shuffle_seed", s.shuffle_seed},
          {"items", items}};
}

AnnotationSession session_from_json(const Json& doc) {
  AnnotationSession s;
  s.session_id = doc.at("session_id").get<std::string>();
  s.paper_id = doc.at("paper_id").get<std::string>();
  s.paper_title = doc.value("paper_title", std::string{});
  s.paper_abstract = doc.value("paper_abstract", std::string{});
  s.annotator_id = doc.at("annotator_id").get<std::string>();
  s.shuffle_seed = doc.value("shuffle_seed", std::uint64_t{0});
  for (const auto& i : doc.at("items")) {
    s.items.push_back({i.at("key").get<std::string>(), i.at("text").get<std::string>(), i.value("dual", false)});
  }
  return s;
}

Json to_json(const Rating& r) {
  return {{"session_id", r.session_id}, {"idea_key", r.idea_key},     {"relevance", r.relevance},
          {"novelty", r.novelty},       {"feasibility", r.feasibility}, {"submitted_at", r.submitted_at}};
}

Rating rating_from_json(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("rating must be an object");
  Rating r;
  for (const char* f : {"idea_key", "relevance", "novelty", "feasibility"}) {
    if (!doc.contains(f)) throw ValidationError(std::string("rating missing '") + f + "'");
  }
  if (doc.contains("session_id")) r.session_id = doc.at("session_id").get<std::string>();
  if (!doc.at("idea_key").is_string()) throw ValidationError("idea_key must be a string");
  r.idea_key = doc.at("idea_key").get<std::string>();
  r.relevance = parse_binary(doc.at("relevance"), "Relevant", "Not relevant", "relevance");
  r.novelty = parse_novelty(doc.at("novelty"));
  r.feasibility = parse_binary(doc.at("feasibility"), "Possible", "Not Possible", "feasibility");
  if (doc.contains("submitted_at") && doc["submitted_at"].is_string()) r.submitted_at = doc["submitted_at"];
  return r;
}

Json to_public_json(const SessionView& view) {
  Json ideas = Json::array();
  for (std::size_t i = 0; i < view.session.items.size(); ++i) {
    ideas.push_back({{"key", view.session.items[i].key}, {"text", view.session.items[i].text}, {"rated", view.rated[i]}});
  }
  return {{"session_id", view.session.session_id},
          {"paper_id", view.session.paper_id},
          {"paper_title", view.session.paper_title},
          {"paper_abstract", view.session.paper_abstract},
          {"status", view.status == SessionStatus::Complete ? "complete" : "open"},
          {"progress", {{"rated", view.rated_count}, {"total", view.session.items.size()}}},
          {"ideas", ideas}};
}

Json to_json(const HumanEvalReport& r) {
  Json models = Json::object();
  for (const auto& [model, agg] : r.per_model) models[model] = metrics::to_json(agg);
  return {{"run_id", r.run_id},
          {"total_ratings", r.total_ratings},
          {"completed_sessions", r.completed_sessions},
          {"models", models}};
}

// ---------------------------------------------------------------------------

struct HumanEvalStore::State {
  std::vector<Rating> ratings;  // log order
  std::map<std::string, std::size_t> by_slot;  // slot -> index in ratings
  std::map<std::string, std::size_t> rated_per_session;
};

HumanEvalStore::HumanEvalStore(fs::path dir, SessionPlan plan)
    : dir_(std::move(dir)), plan_(std::move(plan)), state_(std::make_shared<State>()) {
  for (std::size_t i = 0; i < plan_.sessions.size(); ++i) session_pos_[plan_.sessions[i].session_id] = i;
}

HumanEvalStore::~HumanEvalStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

std::unique_ptr<HumanEvalStore> HumanEvalStore::create(const fs::path& dir, const SessionPlan& plan) {
  const auto plan_doc = plan_to_json(plan);
  const auto plan_path = dir / "plan.json";
  if (fs::exists(plan_path)) {
    if (io::read_json(plan_path) != plan_doc) {
      throw ConflictError("a different session plan already exists in " + dir.string());
    }
  } else {
    io::write_json(dir / "blind_keys.json", blind_keys_to_json(plan));
    io::write_json(plan_path, plan_doc);
  }
  return open(dir);
}

std::unique_ptr<HumanEvalStore> HumanEvalStore::open(const fs::path& dir) {
  const auto plan_doc = io::read_json(dir / "plan.json");
  io::require_schema(plan_doc, dir / "plan.json");
  SessionPlan plan;
  plan.run_id = plan_doc.at("run_id").get<std::string>();
  plan.seed = plan_doc.at("seed").get<std::uint64_t>();
  plan.overlap_fraction = plan_doc.at("overlap_fraction").get<double>();
  for (const auto& s : plan_doc.at("sessions")) plan.sessions.push_back(session_from_json(s));
  const auto keys_doc = io::read_json(dir / "blind_keys.json");
  for (const auto& [k, e] : keys_doc.at("keys").items()) {
    plan.blind_keys[k] = {e.at("model").get<std::string>(), e.at("paper_id").get<std::string>(),
                          e.at("idea_index").get<std::size_t>()};
  }
  std::unique_ptr<HumanEvalStore> store(new HumanEvalStore(dir, std::move(plan)));
  store->replay();
  return store;
}

void HumanEvalStore::replay() {
  const auto log_path = dir_ / "ratings.log";
  auto state = std::make_shared<State>();
  if (fs::exists(log_path)) {
    const auto raw = io::read_file(log_path);
    const auto complete_len = raw.rfind('\n') == std::string::npos ? 0 : raw.rfind('\n') + 1;
    if (complete_len != raw.size()) fs::resize_file(log_path, complete_len);
    std::istringstream in(raw.substr(0, complete_len));
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      const auto doc = Json::parse(line);
      Rating r;
      r.session_id = doc.at("session_id").get<std::string>();
      r.idea_key = doc.at("idea_key").get<std::string>();
      r.relevance = doc.at("relevance").get<bool>();
      r.novelty = doc.at("novelty").get<int>();
      r.feasibility = doc.at("feasibility").get<bool>();
      r.submitted_at = doc.value("submitted_at", std::string{});
      const auto slot = rating_slot(r.session_id, r.idea_key);
      if (state->by_slot.count(slot)) continue;
      state->by_slot[slot] = state->ratings.size();
      ++state->rated_per_session[r.session_id];
      state->ratings.push_back(std::move(r));
    }
  }
  log_fd_ = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw std::runtime_error("cannot open rating log " + log_path.string());
  std::atomic_store(&state_, std::shared_ptr<const State>(std::move(state)));
}

std::shared_ptr<const HumanEvalStore::State> HumanEvalStore::snapshot() const { return std::atomic_load(&state_); }

SessionView HumanEvalStore::session(const std::string& session_id) const {
  const auto it = session_pos_.find(session_id);
  if (it == session_pos_.end()) throw NotFoundError("unknown session '" + session_id + "'");
  const auto state = snapshot();
  SessionView view;
  view.session = plan_.sessions[it->second];
  for (const auto& item : view.session.items) {
    const bool rated = state->by_slot.count(rating_slot(session_id, item.key)) > 0;
    view.rated.push_back(rated);
    view.rated_count += rated;
  }
  view.status = view.rated_count == view.session.items.size() ? SessionStatus::Complete : SessionStatus::Open;
  return view;
}

Ack HumanEvalStore::record_rating(Rating rating) {
  if (rating.novelty < 1 || rating.novelty > 5) {
    throw ValidationError("novelty " + std::to_string(rating.novelty) + " outside 1..5");
  }
  const auto it = session_pos_.find(rating.session_id);
  if (it == session_pos_.end()) throw NotFoundError("unknown session '" + rating.session_id + "'");
  const auto& session = plan_.sessions[it->second];
  const bool member = std::any_of(session.items.begin(), session.items.end(),
                                  [&](const SessionItem& i) { return i.key == rating.idea_key; });
  if (!member) {
    throw NotFoundError("idea key '" + rating.idea_key + "' does not belong to session '" + rating.session_id + "'");
  }
  if (rating.submitted_at.empty()) rating.submitted_at = utc_now_iso();

  std::lock_guard lock(write_mu_);
  const auto current = snapshot();
  const auto slot = rating_slot(rating.session_id, rating.idea_key);
  if (current->by_slot.count(slot)) {
    throw ConflictError("idea '" + rating.idea_key + "' already rated in session '" + rating.session_id + "'");
  }
  const auto line = to_json(rating).dump() + "\n";
  for (std::size_t off = 0; off < line.size();) {
    const auto n = ::write(log_fd_, line.data() + off, line.size() - off);
    if (n < 0) throw std::runtime_error("rating log write failed");
    off += static_cast<std::size_t>(n);
  }
  ::fsync(log_fd_);

  auto next = std::make_shared<State>(*current);
  next->by_slot[slot] = next->ratings.size();
  const auto rated = ++next->rated_per_session[rating.session_id];
  Ack ack{rating.session_id, rating.idea_key,
          rated == session.items.size() ? SessionStatus::Complete : SessionStatus::Open};
  next->ratings.push_back(std::move(rating));
  std::atomic_store(&state_, std::shared_ptr<const State>(std::move(next)));
  return ack;
}

ImportResult HumanEvalStore::import_csv(const fs::path& csv_path) { return import_csv_text(io::read_file(csv_path)); }

ImportResult HumanEvalStore::import_csv_text(std::string_view csv) {
  ImportResult result;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> col;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[std::string(text::trim(cells[i]))] = i;
      for (const char* c : {"session_id", "idea_key", "relevance", "novelty", "feasibility"}) {
        if (!col.count(c)) throw ValidationError(std::string("ratings CSV header lacks column '") + c + "'");
      }
      continue;
    }
    try {
      auto cell = [&](const char* name) -> std::string {
        const auto i = col.at(name);
        if (i >= cells.size()) throw ValidationError(std::string("missing value for '") + name + "'");
        return std::string(text::trim(cells[i]));
      };
      Json doc{{"session_id", cell("session_id")},
               {"idea_key", cell("idea_key")},
               {"relevance", cell("relevance")},
               {"novelty", cell("novelty")},
               {"feasibility", cell("feasibility")}};
      record_rating(rating_from_json(doc));
      ++result.accepted;
    } catch (const NotFoundError& e) {
      result.rejected.push_back({lineno, 404, e.what()});
    } catch (const ValidationError& e) {
      result.rejected.push_back({lineno, 400, e.what()});
    } catch (const ConflictError& e) {
      result.rejected.push_back({lineno, 409, e.what()});
    }
  }
  return result;
}

std::size_t HumanEvalStore::rating_count() const { return snapshot()->ratings.size(); }

HumanEvalReport HumanEvalStore::report() const {
  const auto state = snapshot();
  HumanEvalReport rep;
  rep.run_id = plan_.run_id;
  for (const auto& s : plan_.sessions) {
    const auto it = state->rated_per_session.find(s.session_id);
    if (it != state->rated_per_session.end() && it->second == s.items.size()) ++rep.completed_sessions;
  }
  if (rep.completed_sessions == 0) throw ConflictError("no completed sessions in run '" + plan_.run_id + "'");

  std::map<std::string, std::vector<metrics::HumanRating>> per_model;
  std::map<std::string, std::vector<const Rating*>> per_key;
  for (const auto& r : state->ratings) {
    const auto& entry = plan_.blind_keys.at(r.idea_key);
    per_model[entry.model].push_back({r.relevance, r.novelty, r.feasibility});
    per_key[r.idea_key].push_back(&r);
  }
  std::map<std::string, std::vector<metrics::DualRating>> overlap;
  for (const auto& [key, rs] : per_key) {
    if (rs.size() < 2) continue;
    const auto& model = plan_.blind_keys.at(key).model;
    overlap[model].push_back({{rs[0]->relevance, rs[0]->novelty, rs[0]->feasibility},
                              {rs[1]->relevance, rs[1]->novelty, rs[1]->feasibility}});
  }
  for (auto& [model, ratings] : per_model) {
    rep.total_ratings += ratings.size();
    rep.per_model[model] = metrics::human_aggregate(model, ratings, overlap[model]);
  }
  return rep;
}

}  // namespace ideaeval::humaneval
