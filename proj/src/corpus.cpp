#include "ideaeval/corpus.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <unordered_map>

#include "ideaeval/error.hpp"
#include "ideaeval/text.hpp"

namespace ideaeval::corpus {

namespace fs = std::filesystem;
using io::Json;

namespace {

constexpr std::array<std::pair<Domain, std::string_view>, 5> kDomains{{
    {Domain::Chemistry, "Chemistry"},
    {Domain::ComputerScience, "ComputerScience"},
    {Domain::Economics, "Economics"},
    {Domain::Medical, "Medical"},
    {Domain::Physics, "Physics"},
}};

std::string where(const fs::path& origin) {
  return origin.empty() ? std::string{} : " (" + origin.string() + ")";
}

template <class T>
T field(const Json& doc, const char* key, const std::string& ctx) {
  if (!doc.contains(key)) throw ValidationError(ctx + ": missing field '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(ctx + ": field '" + key + "' has the wrong type");
  }
}

bool by_position(const FriAnnotation& a, const FriAnnotation& b) {
  return std::tie(a.section_index, a.start) < std::tie(b.section_index, b.start);
}

}  // namespace

std::string_view to_string(Domain d) noexcept {
  for (const auto& [dom, name] : kDomains) {
    if (dom == d) return name;
  }
  return "?";
}

Domain parse_domain(std::string_view label) {
  for (const auto& [dom, name] : kDomains) {
    if (name == label) return dom;
  }
  throw ValidationError("unknown domain label '" + std::string(label) + "'");
}

std::string_view to_string(FriKind k) noexcept { return k == FriKind::Direct ? "Direct" : "Mixed"; }

FriKind parse_fri_kind(std::string_view label) {
  if (label == "Direct") return FriKind::Direct;
  if (label == "Mixed") return FriKind::Mixed;
  throw ValidationError("unknown annotation kind '" + std::string(label) + "'");
}

void validate(const PaperRecord& paper) {
  const std::string ctx = "paper '" + paper.id + "'";
  if (paper.id.empty()) throw ValidationError("paper with empty id");
  for (std::size_t i = 0; i < paper.sections.size(); ++i) {
    if (text::trim(paper.sections[i].body).empty()) {
      throw ValidationError(ctx + ": section " + std::to_string(i) + " has an empty body");
    }
  }
  std::vector<std::size_t> lengths;
  lengths.reserve(paper.sections.size());
  for (const auto& s : paper.sections) lengths.push_back(text::scalar_length(s.body));

  for (const auto& a : paper.annotations) {
    if (a.section_index >= paper.sections.size()) {
      throw ValidationError(ctx + ": annotation references missing section " +
                            std::to_string(a.section_index));
    }
    if (a.start >= a.end) {
      throw ValidationError(ctx + ": annotation span [" + std::to_string(a.start) + ", " +
                            std::to_string(a.end) + ") is empty or inverted");
    }
    if (a.end > lengths[a.section_index]) {
      throw ValidationError(ctx + ": annotation span end " + std::to_string(a.end) +
                            " beyond section length " + std::to_string(lengths[a.section_index]));
    }
    if (a.group_id.empty()) throw ValidationError(ctx + ": annotation without group_id");
  }
  auto sorted = paper.annotations;
  std::sort(sorted.begin(), sorted.end(), by_position);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const auto& prev = sorted[i - 1];
    const auto& cur = sorted[i];
    if (prev.section_index == cur.section_index && cur.start < prev.end) {
      throw ValidationError(ctx + ": overlapping annotation spans in section " +
                            std::to_string(cur.section_index));
    }
  }
}

PaperRecord paper_from_json(const Json& doc, const fs::path& origin) {
  io::require_schema(doc, origin);
  PaperRecord p;
  const std::string ctx = "malformed document" + where(origin);
  p.id = field<std::string>(doc, "id", ctx);
  const std::string pctx = "paper '" + p.id + "'" + where(origin);
  try {
    p.domain = parse_domain(field<std::string>(doc, "domain", pctx));
  } catch (const ValidationError& e) {
    throw ValidationError(pctx + ": " + e.what());
  }
  p.title = field<std::string>(doc, "title", pctx);
  p.abstract = field<std::string>(doc, "abstract", pctx);
  for (const auto& s : field<Json>(doc, "sections", pctx)) {
    p.sections.push_back({field<std::string>(s, "name", pctx), field<std::string>(s, "body", pctx)});
  }
  if (doc.contains("annotations")) {
    for (const auto& a : doc.at("annotations")) {
      FriAnnotation ann;
      ann.section_index = field<std::size_t>(a, "section_index", pctx);
      ann.start = field<std::size_t>(a, "start", pctx);
      ann.end = field<std::size_t>(a, "end", pctx);
      try {
        ann.kind = parse_fri_kind(field<std::string>(a, "kind", pctx));
      } catch (const ValidationError& e) {
        throw ValidationError(pctx + ": " + e.what());
      }
      ann.group_id = field<std::string>(a, "group_id", pctx);
      p.annotations.push_back(std::move(ann));
    }
  }
  validate(p);
  return p;
}

Json to_json(const PaperRecord& paper) {
  Json doc{{"schema", io::kSchemaVersion},
           {"id", paper.id},
           {"domain", to_string(paper.domain)},
           {"title", paper.title},
           {"abstract", paper.abstract}};
  doc["sections"] = Json::array();
  for (const auto& s : paper.sections) doc["sections"].push_back({{"name", s.name}, {"body", s.body}});
  doc["annotations"] = Json::array();
  for (const auto& a : paper.annotations) {
    doc["annotations"].push_back({{"section_index", a.section_index},
                                  {"start", a.start},
                                  {"end", a.end},
                                  {"kind", to_string(a.kind)},
                                  {"group_id", a.group_id}});
  }
  return doc;
}

std::vector<PaperRecord> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("corpus path is not a directory: " + dir.string());
  std::vector<PaperRecord> papers;
  const auto manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    const auto manifest = io::read_json(manifest_path);
    io::require_schema(manifest, manifest_path);
    if (!manifest.contains("domains") || !manifest["domains"].is_object()) {
      throw ValidationError("malformed document " + manifest_path.string() + ": missing 'domains'");
    }
    for (const auto& [label, files] : manifest["domains"].items()) {
      const Domain listed = parse_domain(label);
      for (const auto& f : files) {
        const auto path = dir / f.get<std::string>();
        auto paper = paper_from_json(io::read_json(path), path);
        if (paper.domain != listed) {
          throw ValidationError("paper '" + paper.id + "' listed under " + label + " but labeled " +
                                std::string(to_string(paper.domain)));
        }
        papers.push_back(std::move(paper));
      }
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) papers.push_back(paper_from_json(io::read_json(path), path));
  }
  std::sort(papers.begin(), papers.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < papers.size(); ++i) {
    if (papers[i].id == papers[i - 1].id) throw ValidationError("duplicate paper id '" + papers[i].id + "'");
  }
  return papers;
}

std::string corpus_digest(const std::vector<PaperRecord>& papers) {
  Json all = Json::array();
  for (const auto& p : papers) all.push_back(to_json(p));
  return text::sha256_hex(all.dump());
}

std::string assemble_text(std::string_view title, std::string_view abstract,
                          const std::vector<Section>& sections) {
  std::string out;
  auto append_block = [&out](std::string_view block) {
    if (!out.empty()) out += "\n\n";
    out += block;
  };
  if (!title.empty()) append_block(title);
  if (!abstract.empty()) append_block(abstract);
  for (const auto& s : sections) {
    append_block(s.name.empty() ? s.body : s.name + "\n" + s.body);
  }
  return out;
}

StrippedPaper strip_fris(const PaperRecord& paper) {
  validate(paper);
  StrippedPaper out;
  out.paper_id = paper.id;
  out.domain = paper.domain;
  out.title = paper.title;
  out.abstract = paper.abstract;

  auto anns = paper.annotations;
  std::sort(anns.begin(), anns.end(), by_position);

  // Both kinds remove exactly the annotated scalars; for Direct spans the
  // annotation already covers whole sentences.
  for (std::size_t si = 0; si < paper.sections.size(); ++si) {
    const auto& body = paper.sections[si].body;
    const auto offs = text::scalar_byte_offsets(body);
    std::string kept;
    std::size_t cursor = 0;  // byte position in body
    for (const auto& a : anns) {
      if (a.section_index != si) continue;
      const auto b0 = offs[a.start];
      const auto b1 = offs[a.end];
      kept.append(body, cursor, b0 - cursor);
      out.removed.push_back({si, a.start, a.end, a.kind, a.group_id, body.substr(b0, b1 - b0)});
      cursor = b1;
    }
    kept.append(body, cursor, std::string::npos);
    out.sections.push_back({paper.sections[si].name, std::move(kept)});
  }

  std::unordered_map<std::string, std::size_t> group_pos;
  for (const auto& r : out.removed) {
    auto [it, inserted] = group_pos.try_emplace(r.group_id, out.ap_fri.size());
    if (inserted) {
      out.ap_fri.push_back({r.group_id, r.text, {{r.section_index, r.start, r.end}}});
    } else {
      auto& g = out.ap_fri[it->second];
      g.text += " ";
      g.text += r.text;
      g.source_spans.push_back({r.section_index, r.start, r.end});
    }
  }
  out.text = assemble_text(out.title, out.abstract, out.sections);
  return out;
}

std::vector<Section> reconstruct_sections(const StrippedPaper& stripped) {
  auto sections = stripped.sections;
  // Inserting in ascending original order keeps every later offset valid.
  auto removed = stripped.removed;
  std::sort(removed.begin(), removed.end(), [](const auto& a, const auto& b) {
    return std::tie(a.section_index, a.start) < std::tie(b.section_index, b.start);
  });
  for (const auto& r : removed) {
    if (r.section_index >= sections.size()) throw ValidationError("removed span references missing section");
    auto& body = sections[r.section_index].body;
    const auto offs = text::scalar_byte_offsets(body);
    if (r.start >= offs.size()) throw ValidationError("removed span offset beyond section");
    body.insert(offs[r.start], r.text);
  }
  return sections;
}

Json to_json(const StrippedPaper& s) {
  Json doc{{"schema", io::kSchemaVersion},
           {"paper_id", s.paper_id},
           {"domain", to_string(s.domain)},
           {"title", s.title},
           {"abstract", s.abstract},
           {"text", s.text}};
  doc["sections"] = Json::array();
  for (const auto& sec : s.sections) doc["sections"].push_back({{"name", sec.name}, {"body", sec.body}});
  doc["removed"] = Json::array();
  for (const auto& r : s.removed) {
    doc["removed"].push_back({{"section_index", r.section_index},
                              {"start", r.start},
                              {"end", r.end},
                              {"kind", to_string(r.kind)},
                              {"group_id", r.group_id},
                              {"text", r.text}});
  }
  doc["ap_fri"] = Json::array();
  for (const auto& g : s.ap_fri) {
    Json spans = Json::array();
    for (const auto& sp : g.source_spans) {
      spans.push_back({{"section_index", sp.section_index}, {"start", sp.start}, {"end", sp.end}});
    }
    doc["ap_fri"].push_back({{"group_id", g.group_id}, {"text", g.text}, {"source_spans", spans}});
  }
  return doc;
}

StrippedPaper stripped_from_json(const Json& doc) {
  io::require_schema(doc, "stripped paper");
  StrippedPaper s;
  const std::string ctx = "stripped paper";
  s.paper_id = field<std::string>(doc, "paper_id", ctx);
  s.domain = parse_domain(field<std::string>(doc, "domain", ctx));
  s.title = field<std::string>(doc, "title", ctx);
  s.abstract = field<std::string>(doc, "abstract", ctx);
  s.text = field<std::string>(doc, "text", ctx);
  for (const auto& sec : doc.at("sections")) {
    s.sections.push_back({sec.at("name").get<std::string>(), sec.at("body").get<std::string>()});
  }
  for (const auto& r : doc.at("removed")) {
    s.removed.push_back({r.at("section_index").get<std::size_t>(), r.at("start").get<std::size_t>(),
                         r.at("end").get<std::size_t>(), parse_fri_kind(r.at("kind").get<std::string>()),
                         r.at("group_id").get<std::string>(), r.at("text").get<std::string>()});
  }
  for (const auto& g : doc.at("ap_fri")) {
    ApFriGroup grp{g.at("group_id").get<std::string>(), g.at("text").get<std::string>(), {}};
    for (const auto& sp : g.at("source_spans")) {
      grp.source_spans.push_back({sp.at("section_index").get<std::size_t>(), sp.at("start").get<std::size_t>(),
                                  sp.at("end").get<std::size_t>()});
    }
    s.ap_fri.push_back(std::move(grp));
  }
  return s;
}

std::map<Domain, DomainStats> corpus_stats(const std::vector<PaperRecord>& corpus) {
  if (corpus.empty()) throw ValidationError("corpus_stats on an empty corpus");
  struct Acc {
    std::size_t papers = 0;
    double body_words = 0;
    double fwk_words = 0;
  };
  std::map<Domain, Acc> acc;
  for (const auto& p : corpus) {
    const auto s = strip_fris(p);
    auto& a = acc[p.domain];
    ++a.papers;
    for (const auto& sec : s.sections) a.body_words += static_cast<double>(text::word_count(sec.body));
    for (const auto& r : s.removed) a.fwk_words += static_cast<double>(text::word_count(r.text));
  }
  std::map<Domain, DomainStats> out;
  for (const auto& [d, a] : acc) {
    const auto n = static_cast<double>(a.papers);
    out[d] = {a.papers, a.body_words / n, a.fwk_words / n};
  }
  return out;
}

}  // namespace ideaeval::corpus
