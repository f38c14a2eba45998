#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ideaeval/generation.hpp"
#include "ideaeval/io.hpp"
#include "ideaeval/metrics.hpp"

namespace ideaeval::humaneval {

struct SessionItem {
  std::string key;  ///< blind key; never carries the model name
  std::string text;
  bool dual = false;  ///< also assigned to a second annotator
};

struct AnnotationSession {
  std::string session_id;
  std::string paper_id;
  std::string paper_title;
  std::string paper_abstract;
  std::string annotator_id;
  std::uint64_t shuffle_seed = 0;
  std::vector<SessionItem> items;

  bool overlap() const;
};

struct BlindEntry {
  std::string model;
  std::string paper_id;
  std::size_t idea_index = 0;
};

struct SessionPlan {
  std::string run_id;
  std::uint64_t seed = 0;
  double overlap_fraction = 0.0;
  std::vector<AnnotationSession> sessions;
  std::map<std::string, BlindEntry> blind_keys;  ///< kept out of everything the service returns
};

struct PaperInfo {
  std::string title;
  std::string abstract;
};

inline constexpr double kDefaultOverlapFraction = 0.20;

/// One session per (paper, annotator). Every idea of an assigned paper goes to
/// that paper's first annotator; round(overlap_fraction * ideas) ideas, drawn
/// with `seed`, also go to a second annotator (that paper's next listed one, or
/// else the next annotator in sorted order). Item order is shuffled per session
/// with a recorded seed.
SessionPlan create_sessions(const std::string& run_id, std::span<const generation::IdeaSet> idea_sets,
                            const std::map<std::string, std::vector<std::string>>& assignments,
                            double overlap_fraction = kDefaultOverlapFraction, std::uint64_t seed = 0,
                            const std::map<std::string, PaperInfo>& papers = {});

io::Json to_json(const AnnotationSession& s);
AnnotationSession session_from_json(const io::Json& doc);

/// Answers to the three questions for one idea in one session.
struct Rating {
  std::string session_id;
  std::string idea_key;
  bool relevance = false;
  int novelty = 0;  ///< 1..5
  bool feasibility = false;
  std::string submitted_at;  ///< ISO-8601 UTC; filled in when empty
};

io::Json to_json(const Rating& r);

/// Accepts booleans, 0/1 and the form labels ("Relevant"/"Not relevant",
/// "Possible"/"Not Possible"). ValidationError on anything else.
Rating rating_from_json(const io::Json& doc);

enum class SessionStatus { Open, Complete };

struct SessionView {
  AnnotationSession session;
  std::vector<bool> rated;  ///< parallel to session.items
  std::size_t rated_count = 0;
  SessionStatus status = SessionStatus::Open;
};

/// Blind session view for annotators: no model identity anywhere.
io::Json to_public_json(const SessionView& view);

struct Ack {
  std::string session_id;
  std::string idea_key;
  SessionStatus session_status = SessionStatus::Open;
};

struct HumanEvalReport {
  std::string run_id;
  std::map<std::string, metrics::HumanEvalAggregate> per_model;
  std::size_t total_ratings = 0;
  std::size_t completed_sessions = 0;
};

io::Json to_json(const HumanEvalReport& r);

struct ImportRejection {
  std::size_t line = 0;
  int status = 400;  ///< HTTP-equivalent: 400 invalid, 404 unknown, 409 duplicate
  std::string message;
};

struct ImportResult {
  std::size_t accepted = 0;
  std::vector<ImportRejection> rejected;
};

/// Session plan plus an append-only rating log under one directory:
/// plan.json, blind_keys.json, ratings.log (JSON Lines). The log is replayed on
/// open; a trailing partial line from an interrupted write is discarded.
/// Writers serialize on a mutex; readers take lock-free snapshots.
class HumanEvalStore {
 public:
  /// Writes the plan files. An existing identical plan is accepted as-is; a
  /// different one is a ConflictError.
  static std::unique_ptr<HumanEvalStore> create(const std::filesystem::path& dir, const SessionPlan& plan);
  static std::unique_ptr<HumanEvalStore> open(const std::filesystem::path& dir);

  ~HumanEvalStore();
  HumanEvalStore(const HumanEvalStore&) = delete;
  HumanEvalStore& operator=(const HumanEvalStore&) = delete;

  const std::string& run_id() const noexcept { return plan_.run_id; }
  const SessionPlan& plan() const noexcept { return plan_; }

  /// NotFoundError for an unknown session.
  SessionView session(const std::string& session_id) const;

  /// ValidationError (range), NotFoundError (session/key), ConflictError
  /// (duplicate rating or session already complete).
  Ack record_rating(Rating rating);

  /// CSV with header session_id,idea_key,relevance,novelty,feasibility.
  ImportResult import_csv(const std::filesystem::path& csv_path);
  ImportResult import_csv_text(std::string_view csv);

  /// Resolves blind keys. ConflictError when no session is complete yet.
  HumanEvalReport report() const;

  std::size_t rating_count() const;

 private:
  struct State;

  HumanEvalStore(std::filesystem::path dir, SessionPlan plan);
  void replay();
  std::shared_ptr<const State> snapshot() const;

  std::filesystem::path dir_;
  SessionPlan plan_;
  std::map<std::string, std::size_t> session_pos_;
  std::shared_ptr<const State> state_;
  std::mutex write_mu_;
  int log_fd_ = -1;
};

}  // namespace ideaeval::humaneval
