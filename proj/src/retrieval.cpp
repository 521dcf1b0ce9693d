#include "grag/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>

#include "grag/error.hpp"

namespace grag {

void RetrievalParams::validate(bool allow_out_of_range) const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::config, what); };
  if (k < 1 || o < 1 || i < 1 || c < 1) fail("retrieval counts k, o, i, c must be >= 1");
  if (!(t >= 0.0 && t <= 1.0)) fail("retrieval threshold t must lie in [0, 1]");
  if (allow_out_of_range) return;
  if (k < 3 || k > 15) fail("k=" + std::to_string(k) + " outside [3, 15]");
  if (t < 0.5 || t > 0.75) fail("t=" + std::to_string(t) + " outside [0.5, 0.75]");
  if (o < 5 || o > 10) fail("o=" + std::to_string(o) + " outside [5, 10]");
  if (i < 5 || i > 10) fail("i=" + std::to_string(i) + " outside [5, 10]");
  if (c < 5 || c > 10) fail("c=" + std::to_string(c) + " outside [5, 10]");
}

QuestionAnalysis parse_question(std::string_view question, std::string_view language,
                                Providers providers, const ExtractionGuidance& guidance) {
  if (question.empty()) throw Error(ErrorCode::invalid_argument, "question must be nonempty");
  QuestionAnalysis a;
  a.question = question;
  a.language = language;

  Chunk pseudo;
  pseudo.content = question;
  try {
    a.triples = extract_triples(pseudo, providers.chat, guidance);
  } catch (const ExtractionFormatError&) {
    // An unreadable reply leaves only the whole-question embedding to match on.
  }

  std::vector<std::string> texts{std::string(question)};
  std::set<std::string> seen;
  for (const auto& t : a.triples) {
    for (const std::string* name : {&t.head, &t.tail}) {
      if (seen.insert(*name).second) texts.push_back(*name);
    }
  }
  auto vectors = providers.embedder.embed(texts);
  a.question_embedding = std::move(vectors[0]);
  for (std::size_t n = 1; n < texts.size(); ++n) {
    a.entity_name_embeddings.emplace_back(texts[n], std::move(vectors[n]));
  }
  return a;
}

std::vector<ScoredId> match_entities(const QuestionAnalysis& analysis, const EmbeddingIndex& index,
                                     const RetrievalParams& params) {
  std::vector<ScoredId> scored;
  for (const auto& entry : index.entries()) {
    double s = cosine(analysis.question_embedding, entry.vector);
    for (const auto& [name, v] : analysis.entity_name_embeddings) s = std::max(s, cosine(v, entry.vector));
    if (s >= params.t) scored.push_back({entry.id, s});
  }
  std::sort(scored.begin(), scored.end(), ranks_before);
  if (scored.size() > params.k) scored.resize(params.k);
  return scored;
}

RetrievalContext retrieve_context(const QuestionAnalysis& analysis, const KnowledgeGraph& g,
                                  const EmbeddingIndex& index, const RetrievalParams& params) {
  RetrievalContext ctx;
  const auto matched = match_entities(analysis, index, params);
  if (matched.empty()) return ctx;
  ctx.empty = false;

  const EmbeddingVector& q = analysis.question_embedding;
  std::vector<NodeId> chunk_sources;
  for (const auto& m : matched) {
    ctx.matched_entities.push_back({m.id, g.at(m.id).name, m.score});
    chunk_sources.push_back(m.id);
  }

  constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();
  const auto select = [&](Direction dir, std::size_t limit) {
    std::vector<ScoredId> ranked;
    std::set<NodeId> seen;
    for (const auto& m : matched) {
      for (const auto& nb : g.neighbors(m.id, dir, kAll)) {
        if (!seen.insert(nb.relationship).second) continue;
        const GraphNode& rel = g.at(nb.relationship);
        if (!rel.name_embedding) continue;
        ranked.push_back({nb.relationship, cosine(q, *rel.name_embedding)});
      }
    }
    std::sort(ranked.begin(), ranked.end(), ranks_before);
    if (ranked.size() > limit) ranked.resize(limit);
    for (const auto& r : ranked) {
      const GraphNode& rel = g.at(r.id);
      const auto& src = g.out_edges(r.id, EdgeLabel::hasSource);
      const auto& dst = g.out_edges(r.id, EdgeLabel::hasTarget);
      ctx.relationships.push_back({r.id, rel.name, g.at(src.at(0).to).name, g.at(dst.at(0).to).name,
                                   dir, r.score});
      chunk_sources.push_back(r.id);
    }
  };
  select(Direction::outgoing, params.o);
  select(Direction::incoming, params.i);

  const auto chunk_nodes = g.chunks_for(chunk_sources, kAll);
  std::vector<ScoredId> ranked;
  for (const GraphNode* c : chunk_nodes) {
    if (!c->content_embedding) continue;
    ranked.push_back({c->id, cosine(q, *c->content_embedding)});
  }
  std::sort(ranked.begin(), ranked.end(), ranks_before);
  if (ranked.size() > params.c) ranked.resize(params.c);
  for (const auto& r : ranked) {
    const GraphNode& c = g.at(r.id);
    const GraphNode* doc = g.find(node_id(NodeKind::Document, c.doc_id));
    ctx.chunks.push_back({r.id.hex(), doc ? doc->name : std::string(), c.content, r.score});
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Context tables

std::string escape_cell(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '|': out += "\\|"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_cell(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    const char n = s[++i];
    out.push_back(n == 'n' ? '\n' : n == 'r' ? '\r' : n);
  }
  return out;
}

namespace {

constexpr std::string_view kEntitiesHeader = "-----Entities-----";
constexpr std::string_view kRelationshipsHeader = "-----Relationships-----";
constexpr std::string_view kSourcesHeader = "-----Sources-----";

std::string format_score(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", s);
  return buf;
}

void row(std::string& out, std::initializer_list<std::string> cells) {
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out.push_back('|');
    out += escape_cell(c);
    first = false;
  }
  out.push_back('\n');
}

std::vector<std::string> split_row(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\') {
      ++i;
    } else if (line[i] == '|') {
      cells.push_back(unescape_cell(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  cells.push_back(unescape_cell(line.substr(start)));
  return cells;
}

}  // namespace

std::string serialize_context(const RetrievalContext& ctx) {
  if (ctx.empty) throw Error(ErrorCode::invalid_argument, "cannot serialize an empty context");
  std::string out;
  out += kEntitiesHeader;
  out += '\n';
  row(out, {"id", "entity", "score"});
  for (std::size_t n = 0; n < ctx.matched_entities.size(); ++n) {
    const auto& e = ctx.matched_entities[n];
    row(out, {std::to_string(n + 1), e.name, format_score(e.score)});
  }
  out += kRelationshipsHeader;
  out += '\n';
  row(out, {"id", "source", "relation", "target", "direction", "score"});
  for (std::size_t n = 0; n < ctx.relationships.size(); ++n) {
    const auto& r = ctx.relationships[n];
    row(out, {std::to_string(n + 1), r.source, r.relation, r.target, std::string(to_string(r.direction)),
              format_score(r.score)});
  }
  out += kSourcesHeader;
  out += '\n';
  row(out, {"id", "uri", "content"});
  for (std::size_t n = 0; n < ctx.chunks.size(); ++n) {
    const auto& c = ctx.chunks[n];
    row(out, {std::to_string(n + 1), c.uri, c.content});
  }
  return out;
}

ContextTables parse_context_tables(std::string_view data) {
  ContextTables tables;
  std::vector<std::vector<std::string>>* current = nullptr;
  bool header_pending = false;
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    if (nl == std::string_view::npos) nl = data.size();
    const std::string_view line = data.substr(pos, nl - pos);
    pos = nl + 1;
    if (line == kEntitiesHeader) current = &tables.entities;
    else if (line == kRelationshipsHeader) current = &tables.relationships;
    else if (line == kSourcesHeader) current = &tables.sources;
    else if (current && header_pending) header_pending = false;
    else if (current && !line.empty()) current->push_back(split_row(line));
    else continue;
    if (line == kEntitiesHeader || line == kRelationshipsHeader || line == kSourcesHeader) {
      header_pending = true;
    }
  }
  return tables;
}

}  // namespace grag
