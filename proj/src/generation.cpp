#include "ideaeval/generation.hpp"

#include <optional>

#include "ideaeval/error.hpp"
#include "ideaeval/text.hpp"

namespace ideaeval::generation {

using io::Json;

namespace {

constexpr std::string_view kScientistSystem = "You are a research scientist.";

const PromptTemplate kFull{
    TemplateName::Full, std::string(kScientistSystem),
    "Imagine you are a research scientist. After reading the following paper, brainstorm to generate potential "
    "future research ideas:\n\n{paper_text}\n\nPotential future research ideas from the paper in bullet points are:"};

const PromptTemplate kTopFive{
    TemplateName::TopFive, std::string(kScientistSystem),
    "Imagine you are a research scientist. After reading the following paper, brainstorm to generate potential top "
    "5 future research ideas:\n\n{paper_text}\n\nPotential top 5 future research ideas from the paper in bullet "
    "points are:"};

const PromptTemplate kRagAugmented{
    TemplateName::RagAugmented, std::string(kScientistSystem),
    "Imagine you are a research scientist. After reading the following paper and background knowledge, brainstorm "
    "to generate potential top 5 future research ideas:\n\n{paper_text}\n{background_knowledge}\n\nMake sure the "
    "future research ideas are very distinct from the background knowledge provided. Potential top 5 future "
    "research ideas from the paper in bullet points are:"};

// The closing line is kept as published even though it asks for ideas.
const PromptTemplate kContributionExtract{
    TemplateName::ContributionExtract,
    "You are a helpful research agent that generates background knowledge or related works given abstracts of "
    "papers.",
    "You are given abstracts of research papers and your task is to extract contributions or findings or methods "
    "proposed in the paper. You are not allowed to make any changes to data given to you. Return the response as it "
    "is and return response for all 20 papers in passage. Return title of paper followed by its contributions or "
    "findings or methods in less than 100 words. If no contributions or findings or methods are found, return "
    "NONE.\n\nPASSAGE: '{relevant_passage}'\n\nPotential top 5 future research ideas from the paper in bullet "
    "points are:"};

const PromptTemplate kJudgeMatch{
    TemplateName::JudgeMatch, "",
    "Your task is to examine whether a particular idea is incorporated within a set of ideas and to what "
    "degree.\nCollection of ideas:\n{collection}\nSingle idea: {idea}\nIs the single idea contained within the "
    "collection of ideas?\nIf yes, quantify its degree of presence or relevance of the single idea in the "
    "collection of ideas on a scale from 0 to 1."};

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Visits literal runs and placeholder names in order.
template <class OnLiteral, class OnPlaceholder>
void scan_template(std::string_view t, OnLiteral&& lit, OnPlaceholder&& ph) {
  std::size_t i = 0;
  std::size_t literal_start = 0;
  while (i < t.size()) {
    if (t[i] == '{') {
      std::size_t j = i + 1;
      while (j < t.size() && is_name_char(t[j])) ++j;
      if (j < t.size() && t[j] == '}' && j > i + 1) {
        lit(t.substr(literal_start, i - literal_start));
        ph(t.substr(i + 1, j - i - 1));
        i = j + 1;
        literal_start = i;
        continue;
      }
    }
    ++i;
  }
  lit(t.substr(literal_start));
}

std::size_t indent_of(std::string_view line) {
  std::size_t n = 0;
  for (char c : line) {
    if (c == ' ') {
      n += 1;
    } else if (c == '\t') {
      n += 4;
    } else {
      break;
    }
  }
  return n;
}

bool space_or_end(std::string_view s, std::size_t pos) {
  return pos >= s.size() || s[pos] == ' ' || s[pos] == '\t';
}

// Offset of the content after a list marker at the start of `s`.
std::optional<std::size_t> marker_end(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if ((s[0] == '-' || s[0] == '*') && space_or_end(s, 1)) return 1;
  constexpr std::string_view kBullet = "\xE2\x80\xA2";
  if (s.substr(0, kBullet.size()) == kBullet && space_or_end(s, kBullet.size())) return kBullet.size();
  auto digits_from = [&](std::size_t p) {
    std::size_t q = p;
    while (q < s.size() && q - p < 4 && s[q] >= '0' && s[q] <= '9') ++q;
    return q - p;
  };
  if (s[0] == '(') {
    const auto n = digits_from(1);
    if (n >= 1 && n <= 3 && 1 + n < s.size() && s[1 + n] == ')' && space_or_end(s, 2 + n)) return 2 + n;
    return std::nullopt;
  }
  const auto n = digits_from(0);
  if (n >= 1 && n <= 3 && n < s.size() && (s[n] == '.' || s[n] == ')') && space_or_end(s, n + 1)) return n + 1;
  return std::nullopt;
}

std::string strip_markup(std::string s) {
  for (std::string_view token : {std::string_view("**"), std::string_view("__")}) {
    for (auto pos = s.find(token); pos != std::string::npos; pos = s.find(token, pos)) s.erase(pos, token.size());
  }
  return std::string(text::trim(s));
}

}  // namespace

std::string_view to_string(TemplateName n) noexcept {
  switch (n) {
    case TemplateName::Full: return "Full";
    case TemplateName::TopFive: return "TopFive";
    case TemplateName::RagAugmented: return "RagAugmented";
    case TemplateName::ContributionExtract: return "ContributionExtract";
    case TemplateName::JudgeMatch: return "JudgeMatch";
  }
  return "?";
}

TemplateName parse_template_name(std::string_view s) {
  for (auto n : {TemplateName::Full, TemplateName::TopFive, TemplateName::RagAugmented,
                 TemplateName::ContributionExtract, TemplateName::JudgeMatch}) {
    if (to_string(n) == s) return n;
  }
  throw ValidationError("unknown prompt template '" + std::string(s) + "'");
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  scan_template(user_template, [](std::string_view) {}, [&](std::string_view name) { out.emplace_back(name); });
  return out;
}

const PromptTemplate& prompt_template(TemplateName name) {
  switch (name) {
    case TemplateName::Full: return kFull;
    case TemplateName::TopFive: return kTopFive;
    case TemplateName::RagAugmented: return kRagAugmented;
    case TemplateName::ContributionExtract: return kContributionExtract;
    case TemplateName::JudgeMatch: return kJudgeMatch;
  }
  throw ValidationError("unknown prompt template");
}

RenderedPrompt build_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  RenderedPrompt out{tmpl.system, {}};
  out.user.reserve(tmpl.user_template.size());
  scan_template(
      tmpl.user_template, [&](std::string_view lit) { out.user.append(lit); },
      [&](std::string_view name) {
        const auto it = bindings.find(name);
        if (it == bindings.end()) {
          throw ValidationError("unbound placeholder '{" + std::string(name) + "}' in template " +
                                std::string(to_string(tmpl.name)));
        }
        out.user.append(it->second);
      });
  return out;
}

std::vector<std::string> parse_bullets(std::string_view input) {
  std::vector<std::string> ideas;
  std::optional<std::string> current;
  std::optional<std::size_t> top_indent;

  auto flush = [&] {
    if (current) {
      auto cleaned = strip_markup(std::move(*current));
      if (!cleaned.empty()) ideas.push_back(std::move(cleaned));
      current.reset();
    }
  };

  std::size_t pos = 0;
  while (pos <= input.size()) {
    auto nl = input.find('\n', pos);
    if (nl == std::string_view::npos) nl = input.size();
    std::string_view line = input.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto body = text::trim(line);
    if (body.empty()) continue;

    const auto indent = indent_of(line);
    const auto marker = marker_end(body);
    if (marker && (!top_indent || indent <= *top_indent)) {
      flush();
      current = std::string(text::trim(body.substr(*marker)));
      if (!top_indent) top_indent = indent;
    } else if (current) {
      const auto content = marker ? text::trim(body.substr(*marker)) : body;
      if (!current->empty()) current->push_back(' ');
      current->append(content);
    }
  }
  flush();
  return ideas;
}

std::string join_bullets(const std::vector<std::string>& ideas) {
  std::string out;
  for (const auto& idea : ideas) {
    if (!out.empty()) out.push_back('\n');
    out += "- ";
    out += idea;
  }
  return out;
}

IdeaSet idea_set_from_response(std::string paper_id, std::string model_id, TemplateName tmpl, std::string raw) {
  IdeaSet set{std::move(paper_id), std::move(model_id), std::string(to_string(tmpl)), {}, std::move(raw)};
  const auto parsed = parse_bullets(set.raw_response);
  if (parsed.empty()) {
    throw NoIdeasParsedError("no ideas parsed from the response for paper '" + set.paper_id + "' (model '" +
                             set.model_id + "')");
  }
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    set.ideas.push_back({set.paper_id, set.model_id, i + 1, parsed[i], text::word_count(parsed[i])});
  }
  return set;
}

IdeaSet generate_ideas(providers::ChatClient& client, const corpus::StrippedPaper& stripped, TemplateName tmpl,
                       const providers::GenerationConfig& config) {
  if (text::trim(stripped.text).empty()) {
    throw ValidationError("paper '" + stripped.paper_id + "' has no text to generate from");
  }
  const auto prompt = build_prompt(prompt_template(tmpl), {{"paper_text", stripped.text}});
  auto raw = client.chat(prompt.system, prompt.user, config);
  return idea_set_from_response(stripped.paper_id, config.model_name, tmpl, std::move(raw));
}

Json to_json(const IdeaSet& set) {
  Json ideas = Json::array();
  for (const auto& i : set.ideas) {
    ideas.push_back({{"index", i.index}, {"text", i.text}, {"word_count", i.word_count}});
  }
  return {{"schema", io::kSchemaVersion}, {"paper_id", set.paper_id},     {"model_id", set.model_id},
          {"template", set.template_name}, {"raw_response", set.raw_response}, {"ideas", ideas}};
}

IdeaSet idea_set_from_json(const Json& doc) {
  io::require_schema(doc, "idea set");
  IdeaSet set;
  set.paper_id = doc.at("paper_id").get<std::string>();
  set.model_id = doc.at("model_id").get<std::string>();
  set.template_name = doc.value("template", std::string{});
  set.raw_response = doc.at("raw_response").get<std::string>();
  for (const auto& i : doc.at("ideas")) {
    set.ideas.push_back({set.paper_id, set.model_id, i.at("index").get<std::size_t>(), i.at("text").get<std::string>(),
                         i.at("word_count").get<std::size_t>()});
  }
  return set;
}

}  // namespace ideaeval::generation
