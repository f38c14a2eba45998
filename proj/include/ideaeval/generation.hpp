#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ideaeval/corpus.hpp"
#include "ideaeval/io.hpp"
#include "ideaeval/providers.hpp"

namespace ideaeval::generation {

enum class TemplateName { Full, TopFive, RagAugmented, ContributionExtract, JudgeMatch };

std::string_view to_string(TemplateName n) noexcept;
TemplateName parse_template_name(std::string_view s);

/// `user_template` holds `{name}` placeholders (lowercase letters and '_').
struct PromptTemplate {
  TemplateName name;
  std::string system;
  std::string user_template;

  std::vector<std::string> placeholders() const;
};

const PromptTemplate& prompt_template(TemplateName name);

struct RenderedPrompt {
  std::string system;
  std::string user;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Single-pass substitution; bound values are never rescanned.
/// Throws ValidationError naming the first unbound placeholder.
RenderedPrompt build_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

/// Splits a model response into ideas. Top-level markers are "-", "*", "•",
/// "1.", "1)" and "(1)"; unmarked or more deeply indented lines continue the
/// previous idea; text before the first marker is dropped; "**" and "__"
/// markup is removed.
std::vector<std::string> parse_bullets(std::string_view text);

/// "- a\n- b": the form parse_bullets is idempotent over.
std::string join_bullets(const std::vector<std::string>& ideas);

struct GeneratedIdea {
  std::string paper_id;
  std::string model_id;
  std::size_t index = 0;  ///< 1-based, contiguous
  std::string text;
  std::size_t word_count = 0;
};

struct IdeaSet {
  std::string paper_id;
  std::string model_id;
  std::string template_name;
  std::vector<GeneratedIdea> ideas;
  std::string raw_response;
};

/// Parses `raw` into an IdeaSet; NoIdeasParsedError when nothing parses.
IdeaSet idea_set_from_response(std::string paper_id, std::string model_id, TemplateName tmpl, std::string raw);

IdeaSet generate_ideas(providers::ChatClient& client, const corpus::StrippedPaper& stripped, TemplateName tmpl,
                       const providers::GenerationConfig& config);

io::Json to_json(const IdeaSet& set);
IdeaSet idea_set_from_json(const io::Json& doc);

}  // namespace ideaeval::generation
