#include "grag/generation.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <json.hpp>

#include "grag/assets.hpp"
#include "grag/error.hpp"
#include "grag/text.hpp"

namespace grag {

using nlohmann::json;

Clock steady_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now().time_since_epoch());
  };
}

Clock frozen_clock() {
  return [] { return std::chrono::nanoseconds{0}; };
}

namespace {

const json& bundled_json(std::string_view name) {
  // One parse per asset for the life of the process.
  static const json languages = json::parse(*assets::find("strings/languages.json"));
  static const json no_result = json::parse(*assets::find("strings/no_result.json"));
  return name == "languages" ? languages : no_result;
}

std::string primary_subtag(std::string_view tag) {
  const auto dash = tag.find_first_of("-_");
  return text::to_lower_ascii(tag.substr(0, dash));
}

}  // namespace

std::string language_name(std::string_view tag) {
  const json& names = bundled_json("languages");
  const auto it = names.find(primary_subtag(tag));
  return it == names.end() ? std::string(tag) : it->get<std::string>();
}

std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] != '{') {
      out.push_back(tmpl[i++]);
      continue;
    }
    const auto close = tmpl.find('}', i);
    if (close == std::string_view::npos) {
      throw Error(ErrorCode::template_error, "unterminated placeholder in template");
    }
    const std::string_view name = tmpl.substr(i + 1, close - i - 1);
    const auto it = std::find_if(values.begin(), values.end(),
                                 [&](const auto& kv) { return kv.first == name; });
    if (it == values.end()) {
      throw Error(ErrorCode::template_error, "unresolved placeholder {" + std::string(name) + "}");
    }
    out += it->second;
    i = close + 1;
  }
  return out;
}

std::string build_answer_prompt(std::string_view question, std::string_view context_data,
                                const UserMetadata& user, std::string_view language) {
  if (context_data.empty()) throw Error(ErrorCode::invalid_argument, "answer prompt needs context data");
  std::string personalization;
  if (!user.country.empty() || !user.preferences.empty()) {
    personalization = "User context:";
    if (!user.country.empty()) personalization += " the user is located in " + user.country + ".";
    if (!user.preferences.empty()) {
      personalization += " Preferences: ";
      bool first = true;
      for (const auto& [k, v] : user.preferences) {
        if (!first) personalization += ", ";
        personalization += k + "=" + v;
        first = false;
      }
      personalization += ".";
    }
    personalization += "\n";
  }
  return render_template(*assets::find("prompts/answer_v1.txt"),
                         {{"personalization", personalization},
                          {"language", language_name(language)},
                          {"context_data", std::string(context_data)},
                          {"question", std::string(question)}});
}

std::string no_result_response(std::string_view language) {
  const json& table = bundled_json("no_result");
  const auto& messages = table.at("messages");
  const auto it = messages.find(primary_subtag(language));
  if (it != messages.end()) return it->get<std::string>();
  return messages.at(table.at("default").get<std::string>()).get<std::string>();
}

CitationScan scan_citations(std::string_view text) {
  static const std::regex block(R"(\[\s*(?:References|Ref)\s*:([^\]]*)\])");
  static const std::regex uri(R"(^[A-Za-z][A-Za-z0-9+.\-]*://[^\s/?#]+[^\s]*$)");
  CitationScan scan;
  std::set<std::string> seen;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), block); it != std::sregex_iterator(); ++it) {
    const std::string body = (*it)[1].str();
    std::size_t start = 0;
    while (start <= body.size()) {
      auto semi = body.find(';', start);
      if (semi == std::string::npos) semi = body.size();
      std::string token(text::trim(std::string_view(body).substr(start, semi - start)));
      start = semi + 1;
      if (token.empty() || token == "+more") continue;
      if (!std::regex_match(token, uri)) {
        ++scan.dropped;
        continue;
      }
      if (seen.insert(token).second) scan.uris.push_back(token);
    }
  }
  return scan;
}

namespace {

double ms_between(std::chrono::nanoseconds a, std::chrono::nanoseconds b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

Diagnostics diagnostics_of(const CountingChat& chat, const CountingEmbedder& embedder) {
  Diagnostics d;
  d.llm_calls = chat.usage().chat_calls();
  d.embedding_calls = embedder.usage().embedding_calls();
  d.embedded_texts = embedder.usage().embedded_texts();
  return d;
}

}  // namespace

Answer answer(const AnswerRequest& request, const KnowledgeGraph& g, const EmbeddingIndex& index,
              Providers providers, const RetrievalParams& params, const Clock& clock,
              const ExtractionGuidance& guidance) {
  if (request.question.empty()) throw Error(ErrorCode::invalid_argument, "question must be nonempty");
  const auto started = clock();
  CountingChat chat(providers.chat);
  CountingEmbedder embedder(providers.embedder);

  Answer a;
  a.language = request.language;
  try {
    const auto analysis = parse_question(request.question, request.language, {chat, embedder}, guidance);
    const auto ctx = retrieve_context(analysis, g, index, params);
    if (ctx.empty) {
      a.empty_context = true;
      a.text = no_result_response(request.language);
    } else {
      a.context_data = serialize_context(ctx);
      a.text = chat.chat(build_answer_prompt(request.question, a.context_data, request.user,
                                             request.language));
      const auto scan = scan_citations(a.text);
      std::set<std::string> sources;
      for (const auto& c : ctx.chunks) sources.insert(c.uri);
      for (const auto& u : scan.uris) {
        if (sources.count(u)) a.citations.push_back(u);
        else ++a.diagnostics.dropped_citations;
      }
      a.diagnostics.dropped_citations += scan.dropped;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument || e.code() == ErrorCode::template_error) throw;
    Diagnostics partial = diagnostics_of(chat, embedder);
    partial.wall_time_ms = ms_between(started, clock());
    throw AnswerError(e, partial);
  }
  const std::size_t dropped = a.diagnostics.dropped_citations;
  a.diagnostics = diagnostics_of(chat, embedder);
  a.diagnostics.dropped_citations = dropped;
  a.diagnostics.wall_time_ms = ms_between(started, clock());
  return a;
}

std::string answer_json(const Answer& a, bool include_context) {
  const Diagnostics& d = a.diagnostics;
  json j = {{"answer", a.text},
            {"citations", a.citations},
            {"language", a.language},
            {"empty_context", a.empty_context},
            {"diagnostics",
             {{"llm_calls", d.llm_calls},
              {"embedding_calls", d.embedding_calls},
              {"embedded_texts", d.embedded_texts},
              {"wall_time_ms", d.wall_time_ms},
              {"dropped_citations", d.dropped_citations}}}};
  if (include_context) j["context"] = a.context_data;
  return j.dump();
}

Answer answer_llm_only(std::string_view question, std::string_view language, ChatProvider& chat,
                       const Clock& clock) {
  if (question.empty()) throw Error(ErrorCode::invalid_argument, "question must be nonempty");
  const auto started = clock();
  CountingChat counted(chat);
  Answer a;
  a.language = language;
  const std::string prompt = render_template(
      *assets::find("prompts/llm_only_v1.txt"),
      {{"question", std::string(question)}, {"language", language_name(language)}});
  try {
    a.text = counted.chat(prompt);
  } catch (const Error& e) {
    Diagnostics partial;
    partial.llm_calls = counted.usage().chat_calls();
    partial.wall_time_ms = ms_between(started, clock());
    throw AnswerError(e, partial);
  }
  a.diagnostics.llm_calls = counted.usage().chat_calls();
  a.diagnostics.wall_time_ms = ms_between(started, clock());
  return a;
}

}  // namespace grag
