#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "grag/corpus.hpp"
#include "grag/generation.hpp"
#include "grag/knowledge_graph.hpp"
#include "grag/providers.hpp"
#include "grag/retrieval.hpp"
#include "grag/triples.hpp"

namespace grag {

struct ExtractionReport {
  std::size_t chunks_processed = 0;
  std::size_t triples_extracted = 0;
  std::size_t format_failures = 0;
};

using ProgressFn = std::function<void(const ExtractionReport&)>;

/// Runs extract_triples over every chunk, then the ontology filter. Chunks
/// whose reply is unreadable are skipped and counted. With concurrency > 1
/// chunks are extracted in parallel; output order is chunk order.
std::vector<Triple> extract_corpus(const std::vector<ChunkRecord>& chunks, ChatProvider& chat,
                                   const ExtractionGuidance& guidance, std::size_t concurrency,
                                   ExtractionReport* report = nullptr,
                                   const ProgressFn& progress = {});

/// Embeds every Entity and Relationship name and every Chunk content that
/// lacks a vector. Distinct texts are embedded once, in sorted order, in
/// batches of `batch_size`.
std::size_t embed_graph(KnowledgeGraph& g, EmbeddingProvider& embedder, std::size_t batch_size = 64);

/// Adds documents and chunks from chunk records, upserts triples, embeds.
void populate_graph(KnowledgeGraph& g, const std::vector<ChunkRecord>& chunks,
                    const std::vector<Triple>& triples, EmbeddingProvider& embedder,
                    std::size_t batch_size = 64);

KnowledgeGraph build_graph(const std::vector<ChunkRecord>& chunks,
                           const std::vector<Triple>& triples, EmbeddingProvider& embedder,
                           std::size_t batch_size = 64);

/// Immutable graph + entity index pair answered against by queries.
class Engine {
 public:
  Engine(std::shared_ptr<const KnowledgeGraph> graph, Providers providers, RetrievalParams params,
         Clock clock = steady_clock(), ExtractionGuidance guidance = {});

  Answer ask(const AnswerRequest& request) const;
  Answer ask_llm_only(std::string_view question, std::string_view language) const;

  const KnowledgeGraph& graph() const { return *graph_; }
  std::shared_ptr<const KnowledgeGraph> graph_ptr() const { return graph_; }
  const EmbeddingIndex& index() const { return index_; }
  const RetrievalParams& params() const { return params_; }
  Providers providers() const { return providers_; }

 private:
  std::shared_ptr<const KnowledgeGraph> graph_;
  EmbeddingIndex index_;
  Providers providers_;
  RetrievalParams params_;
  Clock clock_;
  ExtractionGuidance guidance_;
};

}  // namespace grag
