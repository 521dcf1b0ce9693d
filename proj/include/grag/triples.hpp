#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "grag/corpus.hpp"
#include "grag/providers.hpp"

namespace grag {

using PropertyMap = std::map<std::string, std::string>;

struct Triple {
  std::string head;
  std::string head_type;
  std::string relation;
  std::string tail;
  std::string tail_type;
  PropertyMap properties;  // attached to the head entity
  std::string source_chunk_id;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// The five naming fields; identity of a triple inside the graph.
struct TripleKey {
  std::string head;
  std::string head_type;
  std::string relation;
  std::string tail;
  std::string tail_type;

  friend auto operator<=>(const TripleKey&, const TripleKey&) = default;
  friend bool operator==(const TripleKey&, const TripleKey&) = default;
};

TripleKey key_of(const Triple& t);

struct ExtractionGuidance {
  std::string focus_instructions;
  std::optional<std::set<std::string>> allowed_entity_types;
  std::optional<std::set<std::string>> allowed_relation_types;

  bool empty() const {
    return focus_instructions.empty() && !allowed_entity_types && !allowed_relation_types;
  }
};

/// Underscores to spaces, trim, collapse whitespace, lowercase, then
/// uppercase the first character.
std::string normalize_name(std::string_view raw);

/// True when normalize_name(s) == s.
bool is_canonical_name(std::string_view s);

/// Extraction prompt: bundled template, optional expert guidance, then the
/// text to analyse.
std::string build_extraction_prompt(std::string_view text, const ExtractionGuidance& guidance);

/// Parses an extractor reply. Records missing one of the five keys, or whose
/// head/relation/tail normalize to empty, are dropped. Throws
/// ExtractionFormatError when neither the reply nor its first bracketed
/// array parses as a JSON array.
std::vector<Triple> parse_extraction_response(std::string_view response,
                                              std::string_view source_chunk_id);

/// One chat call per chunk.
std::vector<Triple> extract_triples(const Chunk& chunk, ChatProvider& provider,
                                    const ExtractionGuidance& guidance = {});

/// Keeps triples whose types and relation are in the allowlists that are
/// present; identity when none are.
std::vector<Triple> filter_by_ontology(const std::vector<Triple>& triples,
                                       const ExtractionGuidance& guidance);

void save_triples(const std::filesystem::path& path, const std::vector<Triple>& triples);
std::vector<Triple> load_triples(const std::filesystem::path& path);

}  // namespace grag
