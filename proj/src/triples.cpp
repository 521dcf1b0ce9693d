#include "grag/triples.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grag/assets.hpp"
#include "grag/error.hpp"
#include "grag/text.hpp"

namespace grag {

using nlohmann::json;

TripleKey key_of(const Triple& t) {
  return TripleKey{t.head, t.head_type, t.relation, t.tail, t.tail_type};
}

std::string normalize_name(std::string_view raw) {
  std::u32string cps = text::decode_utf8(raw);
  std::u32string out;
  out.reserve(cps.size());
  for (char32_t c : cps) {
    if (c == U'_') c = U' ';
    if (text::is_space(c)) {
      if (!out.empty() && out.back() != U' ') out.push_back(U' ');
      continue;
    }
    out.push_back(text::to_lower(c));
  }
  while (!out.empty() && out.back() == U' ') out.pop_back();
  if (!out.empty()) out[0] = text::to_upper(out[0]);
  return text::encode_utf8(out);
}

bool is_canonical_name(std::string_view s) { return normalize_name(s) == s; }

std::string build_extraction_prompt(std::string_view text, const ExtractionGuidance& guidance) {
  std::string prompt(*assets::find("prompts/extraction_v1.txt"));
  if (!guidance.focus_instructions.empty()) {
    prompt += "\nExpert guidance: ";
    prompt += guidance.focus_instructions;
    prompt += '\n';
  }
  prompt += "\nText:\n";
  prompt += text;
  prompt += '\n';
  return prompt;
}

namespace {

// First '[' and its matching ']', ignoring brackets inside JSON strings.
std::optional<std::string_view> first_bracketed_array(std::string_view s) {
  const auto open = s.find('[');
  if (open == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return s.substr(open, i - open + 1);
  }
  return std::nullopt;
}

std::optional<json> parse_array(std::string_view s) {
  json j = json::parse(s, nullptr, /*allow_exceptions=*/false);
  if (j.is_array()) return j;
  return std::nullopt;
}

std::string scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

std::vector<Triple> parse_extraction_response(std::string_view response,
                                              std::string_view source_chunk_id) {
  auto parsed = parse_array(text::trim(response));
  if (!parsed) {
    if (auto inner = first_bracketed_array(response)) parsed = parse_array(*inner);
  }
  if (!parsed) {
    throw ExtractionFormatError("extraction reply is not a JSON list of objects",
                                std::string(response));
  }

  std::vector<Triple> out;
  static constexpr const char* kKeys[] = {"head", "head_type", "relation", "tail", "tail_type"};
  for (const auto& rec : *parsed) {
    if (!rec.is_object()) continue;
    bool complete = true;
    for (const char* k : kKeys) {
      const auto it = rec.find(k);
      complete = complete && it != rec.end() && it->is_string();
    }
    if (!complete) continue;
    Triple t;
    t.head = normalize_name(rec["head"].get<std::string>());
    t.head_type = normalize_name(rec["head_type"].get<std::string>());
    t.relation = normalize_name(rec["relation"].get<std::string>());
    t.tail = normalize_name(rec["tail"].get<std::string>());
    t.tail_type = normalize_name(rec["tail_type"].get<std::string>());
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) continue;
    if (const auto p = rec.find("properties"); p != rec.end() && p->is_object()) {
      for (const auto& [k, v] : p->items()) t.properties[k] = scalar_to_string(v);
    }
    t.source_chunk_id = source_chunk_id;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Triple> extract_triples(const Chunk& chunk, ChatProvider& provider,
                                    const ExtractionGuidance& guidance) {
  if (chunk.content.empty()) {
    throw Error(ErrorCode::invalid_argument, "extract_triples: empty chunk content");
  }
  const std::string reply = provider.chat(build_extraction_prompt(chunk.content, guidance));
  return parse_extraction_response(reply, chunk.chunk_id);
}

std::vector<Triple> filter_by_ontology(const std::vector<Triple>& triples,
                                       const ExtractionGuidance& guidance) {
  const auto normalized = [](const std::optional<std::set<std::string>>& s) {
    std::optional<std::set<std::string>> out;
    if (s) {
      out.emplace();
      for (const auto& v : *s) out->insert(normalize_name(v));
    }
    return out;
  };
  const auto entity_types = normalized(guidance.allowed_entity_types);
  const auto relation_types = normalized(guidance.allowed_relation_types);

  std::vector<Triple> out;
  for (const auto& t : triples) {
    if (entity_types && (!entity_types->count(normalize_name(t.head_type)) ||
                         !entity_types->count(normalize_name(t.tail_type)))) {
      continue;
    }
    if (relation_types && !relation_types->count(normalize_name(t.relation))) continue;
    out.push_back(t);
  }
  return out;
}

void save_triples(const std::filesystem::path& path, const std::vector<Triple>& triples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  for (const auto& t : triples) {
    json j = {{"head", t.head},           {"head_type", t.head_type},
              {"relation", t.relation},   {"tail", t.tail},
              {"tail_type", t.tail_type}, {"properties", t.properties},
              {"source_chunk_id", t.source_chunk_id}};
    out << j.dump() << '\n';
  }
}

std::vector<Triple> load_triples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::vector<Triple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      Triple t;
      t.head = j.at("head").get<std::string>();
      t.head_type = j.at("head_type").get<std::string>();
      t.relation = j.at("relation").get<std::string>();
      t.tail = j.at("tail").get<std::string>();
      t.tail_type = j.at("tail_type").get<std::string>();
      if (j.contains("properties")) t.properties = j["properties"].get<PropertyMap>();
      t.source_chunk_id = j.value("source_chunk_id", "");
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw RecordError(ErrorCode::corrupt_record, line_no, e.what());
    }
  }
  return out;
}

}  // namespace grag
