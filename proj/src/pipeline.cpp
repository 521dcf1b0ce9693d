#include "grag/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "grag/error.hpp"

namespace grag {

std::vector<Triple> extract_corpus(const std::vector<ChunkRecord>& chunks, ChatProvider& chat,
                                   const ExtractionGuidance& guidance, std::size_t concurrency,
                                   ExtractionReport* report, const ProgressFn& progress) {
  std::vector<std::vector<Triple>> per_chunk(chunks.size());
  ExtractionReport local;
  std::mutex mutex;
  std::exception_ptr failure;

  const auto work = [&](std::size_t n) {
    const Chunk& chunk = chunks[n].chunk;
    std::vector<Triple> triples;
    bool format_failure = false;
    if (!chunk.content.empty()) {
      try {
        triples = filter_by_ontology(extract_triples(chunk, chat, guidance), guidance);
      } catch (const ExtractionFormatError&) {
        format_failure = true;
      }
    }
    std::lock_guard lock(mutex);
    ++local.chunks_processed;
    local.triples_extracted += triples.size();
    if (format_failure) ++local.format_failures;
    per_chunk[n] = std::move(triples);
    if (progress) progress(local);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(concurrency, chunks.size()));
  if (workers == 1) {
    for (std::size_t n = 0; n < chunks.size(); ++n) work(n);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t n = next++;
          if (n >= chunks.size()) return;
          try {
            work(n);
          } catch (...) {
            std::lock_guard lock(mutex);
            if (!failure) failure = std::current_exception();
            next = chunks.size();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<Triple> out;
  for (auto& v : per_chunk) {
    for (auto& t : v) out.push_back(std::move(t));
  }
  if (report) *report = local;
  return out;
}

std::size_t embed_graph(KnowledgeGraph& g, EmbeddingProvider& embedder, std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  // text -> (node, field) targets
  std::map<std::string, std::vector<std::pair<NodeId, KnowledgeGraph::EmbeddingField>>> wanted;
  for (const auto& [id, n] : g.nodes()) {
    if ((n.kind == NodeKind::Entity || n.kind == NodeKind::Relationship) && !n.name_embedding &&
        !n.name.empty()) {
      wanted[n.name].emplace_back(id, KnowledgeGraph::EmbeddingField::name);
    } else if (n.kind == NodeKind::Chunk && !n.content_embedding && !n.content.empty()) {
      wanted[n.content].emplace_back(id, KnowledgeGraph::EmbeddingField::content);
    }
  }
  std::vector<const std::string*> texts;
  for (const auto& [t, targets] : wanted) texts.push_back(&t);

  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const std::size_t end = std::min(texts.size(), start + batch_size);
    std::vector<std::string> batch;
    for (std::size_t n = start; n < end; ++n) batch.push_back(*texts[n]);
    auto vectors = embedder.embed(batch);
    for (std::size_t n = 0; n < batch.size(); ++n) {
      for (const auto& [id, field] : wanted[batch[n]]) g.attach_embedding(id, field, vectors[n]);
    }
  }
  return texts.size();
}

void populate_graph(KnowledgeGraph& g, const std::vector<ChunkRecord>& chunks,
                    const std::vector<Triple>& triples, EmbeddingProvider& embedder,
                    std::size_t batch_size) {
  for (const auto& r : chunks) {
    SourceDocument doc;
    doc.doc_id = r.chunk.doc_id;
    doc.uri = r.uri;
    doc.language = r.language;
    g.add_document(doc);
    g.add_chunk(r.chunk);
  }
  for (const auto& t : triples) g.upsert_triple(t);
  embed_graph(g, embedder, batch_size);
}

KnowledgeGraph build_graph(const std::vector<ChunkRecord>& chunks, const std::vector<Triple>& triples,
                           EmbeddingProvider& embedder, std::size_t batch_size) {
  KnowledgeGraph g = init_ontology();
  populate_graph(g, chunks, triples, embedder, batch_size);
  return g;
}

Engine::Engine(std::shared_ptr<const KnowledgeGraph> graph, Providers providers, RetrievalParams params,
               Clock clock, ExtractionGuidance guidance)
    : graph_(std::move(graph)),
      index_(build_entity_index(*graph_)),
      providers_(providers),
      params_(params),
      clock_(std::move(clock)),
      guidance_(std::move(guidance)) {}

Answer Engine::ask(const AnswerRequest& request) const {
  return answer(request, *graph_, index_, providers_, params_, clock_, guidance_);
}

Answer Engine::ask_llm_only(std::string_view question, std::string_view language) const {
  return answer_llm_only(question, language, providers_.chat, clock_);
}

}  // namespace grag
