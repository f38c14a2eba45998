#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ideaeval/corpus.hpp"
#include "ideaeval/generation.hpp"
#include "ideaeval/providers.hpp"

namespace ideaeval::retrieval {

struct MetadataRecord {
  std::string paper_id;
  std::string title;
  std::string abstract;
};

/// JSON Lines of {paper_id, title, abstract}; blank lines are skipped.
std::vector<MetadataRecord> load_metadata(const std::filesystem::path& path);

/// Exact cosine index over title embeddings. Vectors live in one contiguous
/// buffer with precomputed norms. Immutable once built; safe for concurrent reads.
class VectorIndex {
 public:
  VectorIndex(std::string embedder_id, std::size_t dimension);

  /// ValidationError on dimension drift or a zero vector.
  void add(MetadataRecord record, std::span<const double> embedding);

  std::size_t size() const noexcept { return records_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::string& embedder_id() const noexcept { return embedder_id_; }
  const MetadataRecord& record(std::size_t i) const { return records_.at(i); }
  std::span<const double> embedding(std::size_t i) const;
  double norm(std::size_t i) const { return std::sqrt(sq_norms_.at(i)); }
  double squared_norm(std::size_t i) const { return sq_norms_.at(i); }

  /// Versioned little-endian binary: magic, version, dimension, embedder id, entries.
  std::string serialize() const;
  static VectorIndex deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  std::string embedder_id_;
  std::size_t dimension_;
  std::vector<MetadataRecord> records_;
  std::vector<double> data_;
  std::vector<double> sq_norms_;
};

/// Embeds titles in batches. ValidationError naming any record with an empty
/// title, or when there are no records.
VectorIndex build_index(std::span<const MetadataRecord> records, providers::EmbeddingClient& embedder,
                        std::size_t batch_size = 64);

struct Hit {
  std::size_t entry = 0;
  std::string paper_id;
  std::string title;
  double similarity = 0.0;
};

/// Up to k entries by descending cosine, ties by ascending paper_id. Entries
/// whose paper_id equals `exclude_paper_id` are skipped.
std::vector<Hit> retrieve_top_k(const VectorIndex& index, std::span<const double> query, std::size_t k = 20,
                                std::optional<std::string_view> exclude_paper_id = std::nullopt);

std::vector<Hit> retrieve_top_k(const VectorIndex& index, providers::EmbeddingClient& embedder,
                                const std::string& query_title, std::size_t k = 20,
                                std::optional<std::string_view> exclude_paper_id = std::nullopt);

inline constexpr std::size_t kMaxPassageWords = 100;

struct Passage {
  std::string source_paper_id;
  std::string source_title;
  std::string text;  ///< at most kMaxPassageWords words
};

struct BackgroundKnowledge {
  std::string target_paper_id;
  std::vector<Passage> passages;
};

io::Json to_json(const BackgroundKnowledge& bk);

/// One extraction call per retrieved entry. "NONE" answers are dropped, longer
/// answers cut after the 100th word, repeated sources skipped.
BackgroundKnowledge extract_contributions(providers::ChatClient& client, const providers::GenerationConfig& config,
                                          std::string target_paper_id, const VectorIndex& index,
                                          std::span<const Hit> hits, std::size_t workers = 4);

/// "1. title: text" lines; empty string for no passages.
std::string render_background(const BackgroundKnowledge& bk);

struct OverlapWarning {
  std::size_t idea_index = 0;
  std::string source_paper_id;
  double cosine = 0.0;  ///< 0 when no embedder was given
  bool verbatim = false;  ///< the passage contains the idea text as-is
};

struct RagResult {
  generation::IdeaSet ideas;
  std::vector<OverlapWarning> overlap_warnings;
};

inline constexpr double kOverlapWarningCosine = 0.95;

/// Generates with the retrieval-augmented template. Ideas that appear verbatim
/// in a passage are flagged; with `overlap_embedder`, so are ideas whose cosine
/// to a passage reaches `overlap_threshold`.
RagResult generate_with_background(providers::ChatClient& client, const providers::GenerationConfig& config,
                                   const corpus::StrippedPaper& stripped, const BackgroundKnowledge& background,
                                   providers::EmbeddingClient* overlap_embedder = nullptr,
                                   double overlap_threshold = kOverlapWarningCosine);

io::Json to_json(const RagResult& r);

}  // namespace ideaeval::retrieval
