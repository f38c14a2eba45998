#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ideaeval/io.hpp"

namespace ideaeval::corpus {

enum class Domain { Chemistry, ComputerScience, Economics, Medical, Physics };

std::string_view to_string(Domain d) noexcept;
/// Throws ValidationError("unknown domain label ...").
Domain parse_domain(std::string_view label);

/// Direct: the span is one or more whole sentences that only state future work.
/// Mixed: the span is the future-work fragment of a sentence that also says something else.
enum class FriKind { Direct, Mixed };

std::string_view to_string(FriKind k) noexcept;
FriKind parse_fri_kind(std::string_view label);

struct Section {
  std::string name;
  std::string body;
};

/// Half-open span [start, end) in unicode scalars of sections[section_index].body.
struct FriAnnotation {
  std::size_t section_index = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  FriKind kind = FriKind::Direct;
  std::string group_id;
};

struct PaperRecord {
  std::string id;
  Domain domain = Domain::ComputerScience;
  std::string title;
  std::string abstract;
  std::vector<Section> sections;
  std::vector<FriAnnotation> annotations;
};

struct SourceSpan {
  std::size_t section_index = 0;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// One author-stated future research idea, merged across all spans sharing a group id.
struct ApFriGroup {
  std::string group_id;
  std::string text;
  std::vector<SourceSpan> source_spans;
};

/// A span cut out of a section, in the coordinates of the original section body.
struct RemovedSpan {
  std::size_t section_index = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  FriKind kind = FriKind::Direct;
  std::string group_id;
  std::string text;
};

struct StrippedPaper {
  std::string paper_id;
  Domain domain = Domain::ComputerScience;
  std::string title;
  std::string abstract;
  std::vector<Section> sections;  ///< bodies with every annotated span removed
  std::vector<RemovedSpan> removed;  ///< document order
  std::vector<ApFriGroup> ap_fri;  ///< ordered by first occurrence
  std::string text;  ///< title, abstract, sections; see assemble_text
};

/// Checks every PaperRecord invariant; messages name the offending paper id.
void validate(const PaperRecord& paper);

PaperRecord paper_from_json(const io::Json& doc, const std::filesystem::path& origin = {});
io::Json to_json(const PaperRecord& paper);

/// Loads a corpus directory. With a manifest.json the listed files are read and
/// their domains cross-checked; otherwise every *.json file is a paper.
/// Result is sorted by id; ids must be unique.
std::vector<PaperRecord> load_corpus(const std::filesystem::path& dir);

/// SHA-256 over the canonical serialization of the sorted corpus.
std::string corpus_digest(const std::vector<PaperRecord>& papers);

/// Title, abstract, then each section as "name\nbody", joined by blank lines.
std::string assemble_text(std::string_view title, std::string_view abstract,
                          const std::vector<Section>& sections);

StrippedPaper strip_fris(const PaperRecord& paper);

/// Splices every removed span back at its recorded offset.
std::vector<Section> reconstruct_sections(const StrippedPaper& stripped);

io::Json to_json(const StrippedPaper& stripped);
StrippedPaper stripped_from_json(const io::Json& doc);

struct DomainStats {
  std::size_t papers = 0;
  double avg_words_without_fwk = 0.0;
  double avg_words_fwk = 0.0;
};

/// Per-domain mean word counts of stripped section bodies and of removed spans.
/// Domains without papers are absent. Throws ValidationError on an empty corpus.
std::map<Domain, DomainStats> corpus_stats(const std::vector<PaperRecord>& corpus);

}  // namespace ideaeval::corpus
