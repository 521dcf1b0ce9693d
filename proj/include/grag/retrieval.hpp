#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grag/embedding.hpp"
#include "grag/knowledge_graph.hpp"
#include "grag/providers.hpp"
#include "grag/triples.hpp"

namespace grag {

/// Selection sizes for local, entity-based retrieval.
struct RetrievalParams {
  std::size_t k = 12;  // matched entities
  double t = 0.5;      // similarity threshold (inclusive)
  std::size_t o = 10;  // outgoing relationships
  std::size_t i = 10;  // incoming relationships
  std::size_t c = 5;   // chunks

  /// Enforces k in [3,15], t in [0.5,0.75], o,i,c in [5,10]. With
  /// allow_out_of_range only the hard bounds k,o,i,c >= 1 and 0 <= t <= 1
  /// apply. Throws Error(config).
  void validate(bool allow_out_of_range = false) const;
};

struct QuestionAnalysis {
  std::string question;
  std::string language;
  std::vector<Triple> triples;
  EmbeddingVector question_embedding;
  std::vector<std::pair<std::string, EmbeddingVector>> entity_name_embeddings;
};

/// Extracts triples from the question (one chat call), then embeds the
/// question and the distinct extracted entity names in one batch.
QuestionAnalysis parse_question(std::string_view question, std::string_view language,
                                Providers providers, const ExtractionGuidance& guidance = {});

/// Entity score is the max of cosine(question, entity) and every
/// cosine(extracted name, entity); then thresholded top-k.
std::vector<ScoredId> match_entities(const QuestionAnalysis& analysis, const EmbeddingIndex& index,
                                     const RetrievalParams& params);

struct MatchedEntity {
  NodeId id;
  std::string name;
  double score = 0.0;
  friend bool operator==(const MatchedEntity&, const MatchedEntity&) = default;
};

struct ContextRelationship {
  NodeId id;
  std::string relation;
  std::string source;
  std::string target;
  Direction direction = Direction::outgoing;
  double score = 0.0;
  friend bool operator==(const ContextRelationship&, const ContextRelationship&) = default;
};

struct ContextChunk {
  std::string chunk_id;
  std::string uri;
  std::string content;
  double score = 0.0;
  friend bool operator==(const ContextChunk&, const ContextChunk&) = default;
};

struct RetrievalContext {
  std::vector<MatchedEntity> matched_entities;
  // Outgoing block (<= o) followed by incoming block (<= i).
  std::vector<ContextRelationship> relationships;
  std::vector<ContextChunk> chunks;
  bool empty = true;

  friend bool operator==(const RetrievalContext&, const RetrievalContext&) = default;
};

/// Expands one neighbourhood ring around the matched entities. Relationships
/// and chunks are ranked by cosine to the question embedding; truncation is
/// global per direction.
RetrievalContext retrieve_context(const QuestionAnalysis& analysis, const KnowledgeGraph& g,
                                  const EmbeddingIndex& index, const RetrievalParams& params);

// Context tables ------------------------------------------------------------

/// Three '|'-delimited tables (Entities, Relationships, Sources). Cell text
/// escapes '\\', '|', newline and carriage return. Throws on an empty context.
std::string serialize_context(const RetrievalContext& ctx);

struct ContextTables {
  std::vector<std::vector<std::string>> entities;
  std::vector<std::vector<std::string>> relationships;
  std::vector<std::vector<std::string>> sources;
};

/// Inverse of serialize_context at cell level (header rows excluded).
ContextTables parse_context_tables(std::string_view data);

std::string escape_cell(std::string_view s);
std::string unescape_cell(std::string_view s);

}  // namespace grag
