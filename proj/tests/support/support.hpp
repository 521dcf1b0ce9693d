#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "grag/corpus.hpp"
#include "grag/evaluation.hpp"
#include "grag/knowledge_graph.hpp"
#include "grag/retrieval.hpp"
#include "grag/triples.hpp"

namespace grag::testing {

using Rng = std::mt19937_64;

/// Reference digest computed with OpenSSL's EVP interface.
std::string openssl_md5_hex(std::string_view data);

/// `count` sentences of exactly `length` characters each, every one ending
/// in ". ".
std::string sentence_corpus(std::size_t count, std::size_t length);

/// Random text mixing every separator class, a few multibyte characters and
/// long separator-free runs.
std::string random_text(Rng& rng, std::size_t max_length);

/// Checks the chunker contract on `chunks` for `text`. Returns an empty
/// string when it holds, otherwise a description of the first violation.
std::string check_chunks(std::string_view text, const ChunkingParams& params,
                         const std::vector<Chunk>& chunks);

/// Up to `max_triples` canonical triples over small name pools. Every name
/// keeps one type; source chunk ids are drawn from `chunk_ids` (or empty).
std::vector<Triple> random_triples(Rng& rng, std::size_t max_triples,
                                   const std::vector<std::string>& chunk_ids);

/// What reconstruct_triples must return after upserting `triples` into an
/// empty graph: one triple per key, key order, smallest provenance, no
/// properties.
std::vector<Triple> deduplicated(const std::vector<Triple>& triples);

/// Graph whose embeddings are small integer vectors (plenty of exact ties).
struct ToyCase {
  KnowledgeGraph graph;
  QuestionAnalysis analysis;
  RetrievalParams params;
};
ToyCase random_toy_case(Rng& rng);

/// Retrieval by exhaustive enumeration of the graph's nodes and edges.
RetrievalContext brute_force_context(const QuestionAnalysis& analysis, const KnowledgeGraph& g,
                                     const RetrievalParams& params);

/// Word-for-word description of the first difference, or empty.
std::string describe_difference(const RetrievalContext& expected, const RetrievalContext& actual);

/// 101 records: 25 IT, 25 CH, 51 Both. Ids q001..q101.
QaDataset synthetic_dataset();
std::string synthetic_dataset_jsonl();

/// Fresh empty directory under the system temp dir.
std::filesystem::path fresh_dir(std::string_view name);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view data);

}  // namespace grag::testing
