#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "grag/knowledge_graph.hpp"
#include "grag/providers.hpp"
#include "grag/retrieval.hpp"

namespace grag {

struct Diagnostics {
  std::size_t llm_calls = 0;
  std::size_t embedding_calls = 0;
  std::size_t embedded_texts = 0;
  double wall_time_ms = 0.0;
  std::size_t dropped_citations = 0;

  friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

struct Answer {
  std::string text;
  std::vector<std::string> citations;
  std::string language;
  bool empty_context = false;
  Diagnostics diagnostics;
  std::string context_data;  // serialized tables fed to the formatter; empty on the no-result path

  friend bool operator==(const Answer&, const Answer&) = default;
};

/// Provider failure during answer(); carries the calls made before it.
class AnswerError : public Error {
 public:
  AnswerError(const Error& cause, Diagnostics partial)
      : Error(cause.code(), cause.what()), partial_(partial) {}
  const Diagnostics& partial_diagnostics() const noexcept { return partial_; }

 private:
  Diagnostics partial_;
};

/// Monotonic time source used for wall_time. Tests and mock runs pass a
/// frozen clock so answers are reproducible.
using Clock = std::function<std::chrono::nanoseconds()>;
Clock steady_clock();
Clock frozen_clock();

/// English display name for a language tag ("it" -> "Italian"); unknown tags
/// are returned unchanged.
std::string language_name(std::string_view tag);

/// Replaces every {identifier} in `tmpl` from `values` in one pass.
/// Throws Error(template_error) for an identifier without a value.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

std::string build_answer_prompt(std::string_view question, std::string_view context_data,
                                const UserMetadata& user, std::string_view language);

/// Localized fixed reply; unknown languages use the table's default.
std::string no_result_response(std::string_view language);

struct CitationScan {
  std::vector<std::string> uris;
  std::size_t dropped = 0;  // tokens that were not uris
};

/// Collects uris from "[References: a; b]" and "[Ref: a]" blocks, first
/// occurrence order, deduplicated.
CitationScan scan_citations(std::string_view text);
inline std::vector<std::string> extract_citations(std::string_view text) {
  return scan_citations(text).uris;
}

struct AnswerRequest {
  std::string question;
  std::string language;
  UserMetadata user;
};

/// parse_question -> retrieve_context -> (no-result template | formatter
/// call) -> citations restricted to the uris present in the context.
Answer answer(const AnswerRequest& request, const KnowledgeGraph& g, const EmbeddingIndex& index,
              Providers providers, const RetrievalParams& params, const Clock& clock = steady_clock(),
              const ExtractionGuidance& guidance = {});

/// Wire form: {answer, citations, language, empty_context, diagnostics}, plus
/// "context" when requested.
std::string answer_json(const Answer& a, bool include_context = false);

/// No retrieval: one chat call, no citations.
Answer answer_llm_only(std::string_view question, std::string_view language, ChatProvider& chat,
                       const Clock& clock = steady_clock());

}  // namespace grag
