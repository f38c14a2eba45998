#include "ideaeval/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>

#include "ideaeval/concurrency.hpp"
#include "ideaeval/error.hpp"
#include "ideaeval/text.hpp"
#include "ideaeval/vecmath.hpp"

namespace ideaeval::retrieval {

using io::Json;

static_assert(std::endian::native == std::endian::little, "index serialization assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "IDEAIDX1";
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ValidationError("truncated index file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

bool ranks_before(const Hit& a, const Hit& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  if (a.paper_id != b.paper_id) return a.paper_id < b.paper_id;
  return a.entry < b.entry;
}

}  // namespace

std::vector<MetadataRecord> load_metadata(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<MetadataRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const auto doc = Json::parse(line);
      out.push_back({doc.at("paper_id").get<std::string>(), doc.at("title").get<std::string>(),
                     doc.value("abstract", std::string{})});
    } catch (const Json::exception& e) {
      throw ValidationError("malformed metadata line " + std::to_string(lineno) + " in " + path.string() + ": " +
                            e.what());
    }
  }
  return out;
}

VectorIndex::VectorIndex(std::string embedder_id, std::size_t dimension)
    : embedder_id_(std::move(embedder_id)), dimension_(dimension) {
  if (dimension_ == 0) throw ValidationError("index dimension must be positive");
}

void VectorIndex::add(MetadataRecord record, std::span<const double> embedding) {
  if (embedding.size() != dimension_) {
    throw ValidationError("dimension drift for '" + record.paper_id + "': " + std::to_string(embedding.size()) +
                          " != " + std::to_string(dimension_));
  }
  const double n = vecmath::dot(embedding, embedding);
  if (n == 0.0) throw ValidationError("zero title embedding for '" + record.paper_id + "'");
  data_.insert(data_.end(), embedding.begin(), embedding.end());
  sq_norms_.push_back(n);
  records_.push_back(std::move(record));
}

std::span<const double> VectorIndex::embedding(std::size_t i) const {
  if (i >= records_.size()) throw std::out_of_range("index entry");
  return std::span<const double>(data_).subspan(i * dimension_, dimension_);
}

std::string VectorIndex::serialize() const {
  std::string out(kMagic);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dimension_));
  put_str(out, embedder_id_);
  put<std::uint64_t>(out, records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    put_str(out, records_[i].paper_id);
    put_str(out, records_[i].title);
    put_str(out, records_[i].abstract);
    for (double x : embedding(i)) put<double>(out, x);
  }
  return out;
}

VectorIndex VectorIndex::deserialize(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw ValidationError("not an index file (bad magic)");
  Reader r(bytes.substr(kMagic.size()));
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) throw ValidationError("unsupported index version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>();
  VectorIndex index(r.get_str(), dim);
  const auto count = r.get<std::uint64_t>();
  std::vector<double> v(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    MetadataRecord rec;
    rec.paper_id = r.get_str();
    rec.title = r.get_str();
    rec.abstract = r.get_str();
    for (auto& x : v) x = r.get<double>();
    index.add(std::move(rec), v);
  }
  if (!r.done()) throw ValidationError("trailing bytes in index file");
  return index;
}

void VectorIndex::save(const std::filesystem::path& path) const { io::write_file_atomic(path, serialize()); }

VectorIndex VectorIndex::load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

VectorIndex build_index(std::span<const MetadataRecord> records, providers::EmbeddingClient& embedder,
                        std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  for (const auto& r : records) {
    if (text::trim(r.title).empty()) throw ValidationError("metadata record '" + r.paper_id + "' has an empty title");
  }
  if (records.empty()) throw ValidationError("cannot build an index from zero metadata records");

  const std::size_t batches = (records.size() + batch_size - 1) / batch_size;
  std::vector<std::vector<providers::EmbeddingVector>> results(batches);
  parallel_for(batches, 4, [&](std::size_t b) {
    const auto begin = b * batch_size;
    const auto end = std::min(records.size(), begin + batch_size);
    std::vector<std::string> titles;
    for (auto i = begin; i < end; ++i) titles.push_back(records[i].title);
    results[b] = embedder.embed(titles);
  });

  VectorIndex index(embedder.provider().id(), results.front().front().dimension());
  std::size_t i = 0;
  for (const auto& batch : results) {
    for (const auto& v : batch) index.add(records[i++], v.values);
  }
  return index;
}

std::vector<Hit> retrieve_top_k(const VectorIndex& index, std::span<const double> query, std::size_t k,
                                std::optional<std::string_view> exclude_paper_id) {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (index.size() == 0) throw ValidationError("retrieval from an empty index");
  if (query.size() != index.dimension()) {
    throw ValidationError("query dimension " + std::to_string(query.size()) + " != index dimension " +
                          std::to_string(index.dimension()));
  }
  const double qq = vecmath::dot(query, query);
  if (qq == 0.0) throw ValidationError("zero query vector");

  std::vector<Hit> hits;
  hits.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& rec = index.record(i);
    if (exclude_paper_id && rec.paper_id == *exclude_paper_id) continue;
    const double sim = vecmath::dot(query, index.embedding(i)) / std::sqrt(qq * index.squared_norm(i));
    hits.push_back({i, rec.paper_id, rec.title, sim});
  }
  const auto take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(), ranks_before);
  hits.resize(take);
  return hits;
}

std::vector<Hit> retrieve_top_k(const VectorIndex& index, providers::EmbeddingClient& embedder,
                                const std::string& query_title, std::size_t k,
                                std::optional<std::string_view> exclude_paper_id) {
  if (embedder.provider().id() != index.embedder_id()) {
    throw ValidationError("index built with '" + index.embedder_id() + "' but queried with '" +
                          embedder.provider().id() + "'");
  }
  const auto q = embedder.embed_one(query_title);
  return retrieve_top_k(index, q.values, k, exclude_paper_id);
}

Json to_json(const BackgroundKnowledge& bk) {
  Json passages = Json::array();
  for (const auto& p : bk.passages) {
    passages.push_back({{"source_paper_id", p.source_paper_id}, {"source_title", p.source_title}, {"text", p.text}});
  }
  return {{"target_paper_id", bk.target_paper_id}, {"passages", passages}};
}

BackgroundKnowledge extract_contributions(providers::ChatClient& client, const providers::GenerationConfig& config,
                                          std::string target_paper_id, const VectorIndex& index,
                                          std::span<const Hit> hits, std::size_t workers) {
  if (hits.empty()) throw ValidationError("contribution extraction needs at least one retrieved entry");
  const auto& tmpl = generation::prompt_template(generation::TemplateName::ContributionExtract);
  std::vector<std::optional<Passage>> slots(hits.size());
  parallel_for(hits.size(), workers, [&](std::size_t i) {
    const auto& rec = index.record(hits[i].entry);
    const auto prompt = generation::build_prompt(tmpl, {{"relevant_passage", rec.title + "\n" + rec.abstract}});
    const auto response = client.chat(prompt.system, prompt.user, config);
    auto body = text::trim(response);
    auto upper = std::string(body);
    while (!upper.empty() && upper.back() == '.') upper.pop_back();
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (body.empty() || upper == "NONE") return;
    slots[i] = Passage{rec.paper_id, rec.title, std::string(text::truncate_words(body, kMaxPassageWords))};
  });

  BackgroundKnowledge bk{std::move(target_paper_id), {}};
  for (auto& s : slots) {
    if (!s) continue;
    const bool seen = std::any_of(bk.passages.begin(), bk.passages.end(),
                                  [&](const Passage& p) { return p.source_paper_id == s->source_paper_id; });
    if (!seen) bk.passages.push_back(std::move(*s));
  }
  return bk;
}

std::string render_background(const BackgroundKnowledge& bk) {
  std::string out;
  for (std::size_t i = 0; i < bk.passages.size(); ++i) {
    if (i) out.push_back('\n');
    out += std::to_string(i + 1) + ". " + bk.passages[i].source_title + ": " + bk.passages[i].text;
  }
  return out;
}

RagResult generate_with_background(providers::ChatClient& client, const providers::GenerationConfig& config,
                                   const corpus::StrippedPaper& stripped, const BackgroundKnowledge& background,
                                   providers::EmbeddingClient* overlap_embedder, double overlap_threshold) {
  if (background.target_paper_id != stripped.paper_id) {
    throw ValidationError("background built for '" + background.target_paper_id + "', not '" + stripped.paper_id +
                          "'");
  }
  if (text::trim(stripped.text).empty()) {
    throw ValidationError("paper '" + stripped.paper_id + "' has no text to generate from");
  }
  const auto prompt =
      generation::build_prompt(generation::prompt_template(generation::TemplateName::RagAugmented),
                               {{"paper_text", stripped.text}, {"background_knowledge", render_background(background)}});
  RagResult result{generation::idea_set_from_response(stripped.paper_id, config.model_name,
                                                      generation::TemplateName::RagAugmented,
                                                      client.chat(prompt.system, prompt.user, config)),
                   {}};
  if (background.passages.empty()) return result;
  std::vector<std::vector<double>> cosines;
  if (overlap_embedder) {
    std::vector<std::string> passage_texts;
    for (const auto& p : background.passages) passage_texts.push_back(p.text);
    std::vector<std::string> idea_texts;
    for (const auto& i : result.ideas.ideas) idea_texts.push_back(i.text);
    const auto pv = overlap_embedder->embed(passage_texts);
    const auto iv = overlap_embedder->embed(idea_texts);
    for (const auto& v : iv) {
      auto& row = cosines.emplace_back();
      for (const auto& p : pv) row.push_back(vecmath::cosine(v.values, p.values));
    }
  }
  for (std::size_t i = 0; i < result.ideas.ideas.size(); ++i) {
    const auto& idea = result.ideas.ideas[i];
    for (std::size_t p = 0; p < background.passages.size(); ++p) {
      const bool verbatim = background.passages[p].text.find(idea.text) != std::string::npos;
      const double c = cosines.empty() ? 0.0 : cosines[i][p];
      if (verbatim || (!cosines.empty() && c >= overlap_threshold)) {
        result.overlap_warnings.push_back({idea.index, background.passages[p].source_paper_id, c, verbatim});
      }
    }
  }
  return result;
}

Json to_json(const RagResult& r) {
  Json warnings = Json::array();
  for (const auto& w : r.overlap_warnings) {
    warnings.push_back({{"idea_index", w.idea_index}, {"source_paper_id", w.source_paper_id}, {"cosine", w.cosine}, {"verbatim", w.verbatim}});
  }
  auto doc = generation::to_json(r.ideas);
  doc["overlap_warnings"] = warnings;
  return doc;
}

}  // namespace ideaeval::retrieval
