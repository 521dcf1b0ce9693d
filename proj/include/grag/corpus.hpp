#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace grag {

enum class DocumentFormat { html, plain };

struct SourceDocument {
  std::string doc_id;
  std::string uri;
  DocumentFormat format = DocumentFormat::plain;
  std::string raw;
  std::string language;
};

/// Half-open [start, end) range in code points of the cleaned text.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::size_t index = 0;
  std::string content;
  CharSpan span;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct ChunkingParams {
  std::size_t chunk_size = 1000;
  std::size_t chunk_overlap = 200;

  /// Throws Error(config) unless 1 <= chunk_size and chunk_overlap < chunk_size.
  void validate() const;
};

/// Strips markup (html) and standalone page-number lines, collapses
/// whitespace. Never fails on malformed markup.
std::string clean_document(const SourceDocument& doc);

std::string clean_html(std::string_view raw);
std::string clean_plain(std::string_view raw);

/// Chunk boundaries are chosen by the first separator level that occurs in
/// the window, taking its last occurrence; a hard cut is the last resort.
/// Levels, highest priority first.
enum class SplitLevel { paragraph, sentence, clause, word, character };

/// Splits cleaned text into overlapping chunks. Lengths and spans count code
/// points. Chunk ids and doc ids are left empty; see make_chunks.
std::vector<Chunk> chunk_text(std::string_view text, const ChunkingParams& params);

/// clean + chunk one document and stamp doc_id and chunk ids.
std::vector<Chunk> make_chunks(const SourceDocument& doc, const ChunkingParams& params);

/// Chunk id for (doc_id, index): hex MD5 of "Chunk:<doc_id>#<index>".
std::string chunk_id_for(std::string_view doc_id, std::size_t index);

// Corpus manifest: one JSON object per line with
// {doc_id, uri, format, path | text, language}. Relative paths resolve
// against the manifest's directory.
std::vector<SourceDocument> load_manifest(const std::filesystem::path& path);
std::vector<SourceDocument> parse_manifest(std::string_view jsonl,
                                           const std::filesystem::path& base_dir = {});

/// Chunk record as stored in a chunks file (one JSON object per line).
struct ChunkRecord {
  Chunk chunk;
  std::string uri;
  std::string language;
};

void save_chunks(const std::filesystem::path& path, const std::vector<ChunkRecord>& chunks);
std::vector<ChunkRecord> load_chunks(const std::filesystem::path& path);

}  // namespace grag
