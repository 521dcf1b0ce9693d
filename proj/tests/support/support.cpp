#include "support.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <unistd.h>

#include <openssl/evp.h>

#include <json.hpp>

#include "grag/text.hpp"

namespace grag::testing {

std::string openssl_md5_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_md5(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string sentence_corpus(std::size_t count, std::size_t length) {
  static const char* kWords[] = {"energy", "heat",  "pump",    "solar",  "panel", "grid",
                                 "saving", "house", "thermal", "boiler", "window"};
  std::string out;
  for (std::size_t s = 0; s < count; ++s) {
    std::string sentence = "Sentence " + std::to_string(s + 1);
    for (std::size_t w = 0; sentence.size() < length - 2; ++w) {
      sentence += ' ';
      sentence += kWords[(s + w) % 11];
    }
    sentence.resize(length - 2);
    if (sentence.back() == ' ') sentence.back() = 'x';
    out += sentence + ". ";
  }
  return out;
}

std::string random_text(Rng& rng, std::size_t max_length) {
  static const std::array<std::string_view, 10> kSeps = {" ", " ", " ", ", ", ". ", "! ", "? ", "\n", " ", "."};
  static const std::array<std::string_view, 4> kWide = {"\xc3\xa8", "\xc3\xbc", "\xe2\x82\xac", "\xf0\x9f\x8c\x9e"};
  std::uniform_int_distribution<std::size_t> len_dist(0, max_length);
  const std::size_t target = len_dist(rng);
  std::string out;
  while (text::decode_utf8(out).size() < target) {
    const auto roll = rng() % 20;
    if (roll == 0) {
      out.append(50 + rng() % 250, 'z');  // separator-free run
    } else if (roll == 1) {
      out += kWide[rng() % kWide.size()];
    } else {
      const std::size_t wl = 1 + rng() % 12;
      for (std::size_t i = 0; i < wl; ++i) out.push_back(static_cast<char>('a' + rng() % 26));
      out += kSeps[rng() % kSeps.size()];
    }
  }
  std::u32string u = text::decode_utf8(out);
  u.resize(std::min(u.size(), target));
  return text::encode_utf8(u);
}

namespace {

// Separator classes, highest priority first.
const std::vector<std::vector<std::u32string>> kLevels = {
    {U"\n"}, {U". ", U"! ", U"? "}, {U", "}, {U" "}};

bool ends_with_level(const std::u32string& t, std::size_t pos, std::size_t level) {
  for (const auto& sep : kLevels[level]) {
    if (pos >= sep.size() && t.compare(pos - sep.size(), sep.size(), sep) == 0) return true;
  }
  return false;
}

}  // namespace

std::string check_chunks(std::string_view text_in, const ChunkingParams& params,
                         const std::vector<Chunk>& chunks) {
  const std::u32string t = text::decode_utf8(text_in);
  const std::size_t n = t.size(), size = params.chunk_size, overlap = params.chunk_overlap;
  if (n == 0) return chunks.empty() ? "" : "empty text produced chunks";
  if (chunks.empty()) return "nonempty text produced no chunks";
  if (chunks.front().span.start != 0) return "first chunk does not start at 0";
  if (chunks.back().span.end != n) return "last chunk does not end at the text end";

  std::size_t prev_level = 0;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    const Chunk& c = chunks[k];
    const std::string at = "chunk " + std::to_string(k) + ": ";
    if (c.index != k) return at + "index out of order";
    if (c.span.end <= c.span.start) return at + "empty span";
    if (c.span.size() > size) return at + "longer than chunk_size";
    if (c.content != text::encode_utf8(t.substr(c.span.start, c.span.size()))) return at + "content differs from span";

    if (k > 0) {
      const Chunk& p = chunks[k - 1];
      if (c.span.start <= p.span.start) return at + "start not increasing";
      if (c.span.start > p.span.end) return at + "gap before chunk";
      if (p.span.end - c.span.start > overlap) return at + "overlap exceeds chunk_overlap";
      // The start is either the previous end or the earliest boundary of the
      // previous cut's class (or stronger) inside the overlap window.
      const std::size_t lo = std::max(p.span.start + 1, p.span.end >= overlap ? p.span.end - overlap : 0);
      std::size_t expect = p.span.end;
      for (std::size_t q = lo; q < p.span.end; ++q) {
        bool ok = prev_level == kLevels.size();
        for (std::size_t l = 0; l <= prev_level && l < kLevels.size() && !ok; ++l) ok = ends_with_level(t, q, l);
        if (ok) {
          expect = q;
          break;
        }
      }
      if (c.span.start != expect) return at + "start is not the earliest boundary in the overlap window";
    }

    if (n - c.span.start <= size) {
      if (c.span.end != n || k + 1 != chunks.size()) return at + "remaining text fits but was split";
      continue;
    }
    // Highest class present in (start, start + size], last occurrence.
    std::size_t level = kLevels.size(), cut = c.span.start + size;
    for (std::size_t l = 0; l < kLevels.size() && level == kLevels.size(); ++l) {
      for (std::size_t pos = c.span.start + size; pos > c.span.start; --pos) {
        if (ends_with_level(t, pos, l)) {
          level = l;
          cut = pos;
          break;
        }
      }
    }
    if (c.span.end != cut) return at + "end is not the last boundary of the best separator class";
    prev_level = level;
  }
  return "";
}

std::vector<Triple> random_triples(Rng& rng, std::size_t max_triples, const std::vector<std::string>& chunk_ids) {
  static const std::array<const char*, 10> kNames = {"Heat pump",  "Solar panel",   "Boiler",   "Insulation",
                                                     "Thermostat", "Energy audit",  "Window",   "Radiator",
                                                     "Ecobonus",   "Photovoltaics"};
  static const std::array<const char*, 4> kTypes = {"Device", "Measure", "Incentive", "Component"};
  static const std::array<const char*, 6> kRelations = {"Reduces", "Part of", "Requires",
                                                        "Funds",   "Replaces", "Heats"};
  const std::size_t count = rng() % (max_triples + 1);
  std::vector<Triple> out;
  for (std::size_t n = 0; n < count; ++n) {
    Triple t;
    const std::size_t h = rng() % kNames.size(), tl = rng() % kNames.size();
    t.head = kNames[h];
    t.head_type = kTypes[h % kTypes.size()];
    t.tail = kNames[tl];
    t.tail_type = kTypes[tl % kTypes.size()];
    t.relation = kRelations[rng() % kRelations.size()];
    if (rng() % 4 == 0) t.properties["p" + std::to_string(rng() % 3)] = std::to_string(rng() % 100);
    if (!chunk_ids.empty() && rng() % 5 != 0) t.source_chunk_id = chunk_ids[rng() % chunk_ids.size()];
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Triple> deduplicated(const std::vector<Triple>& triples) {
  std::map<TripleKey, Triple> by_key;
  for (const auto& t : triples) {
    auto [it, fresh] = by_key.try_emplace(key_of(t), t);
    Triple& kept = it->second;
    if (fresh) {
      kept.properties.clear();
      continue;
    }
    if (!t.source_chunk_id.empty() && (kept.source_chunk_id.empty() || t.source_chunk_id < kept.source_chunk_id)) {
      kept.source_chunk_id = t.source_chunk_id;
    }
  }
  std::vector<Triple> out;
  for (auto& [k, t] : by_key) out.push_back(std::move(t));
  return out;
}

namespace {

// Components in {-1, 0, 1}: many vectors repeat, so scores tie exactly.
EmbeddingVector small_vector(Rng& rng, std::size_t dim) {
  EmbeddingVector v(static_cast<Eigen::Index>(dim));
  do {
    for (std::size_t j = 0; j < dim; ++j) v[static_cast<Eigen::Index>(j)] = static_cast<double>(rng() % 3) - 1.0;
  } while (v.cwiseAbs().sum() == 0.0);
  return v;
}

}  // namespace

ToyCase random_toy_case(Rng& rng) {
  constexpr std::size_t kDim = 4;
  ToyCase tc;
  KnowledgeGraph& g = tc.graph;
  std::vector<std::string> chunk_ids;
  const std::size_t docs = 1 + rng() % 3;
  for (std::size_t d = 0; d < docs; ++d) {
    SourceDocument doc;
    doc.doc_id = "doc" + std::to_string(d);
    doc.uri = "https://example.org/doc" + std::to_string(d);
    g.add_document(doc);
    const std::size_t chunks = 1 + rng() % 4;
    for (std::size_t i = 0; i < chunks; ++i) {
      Chunk c;
      c.doc_id = doc.doc_id;
      c.index = i;
      c.content = "Text of chunk " + std::to_string(i) + " in " + doc.doc_id;
      chunk_ids.push_back(g.add_chunk(c).hex());
    }
  }
  for (const auto& t : random_triples(rng, 30, chunk_ids)) g.upsert_triple(t);

  std::vector<std::pair<NodeId, KnowledgeGraph::EmbeddingField>> targets;
  for (const auto& [id, n] : g.nodes()) {
    if (rng() % 10 == 0) continue;  // some nodes stay unembedded
    if (n.kind == NodeKind::Entity || n.kind == NodeKind::Relationship) {
      targets.emplace_back(id, KnowledgeGraph::EmbeddingField::name);
    } else if (n.kind == NodeKind::Chunk) {
      targets.emplace_back(id, KnowledgeGraph::EmbeddingField::content);
    }
  }
  for (const auto& [id, field] : targets) g.attach_embedding(id, field, small_vector(rng, kDim));

  tc.analysis.question = "toy question";
  tc.analysis.language = "en";
  tc.analysis.question_embedding = small_vector(rng, kDim);
  const std::size_t names = rng() % 4;
  for (std::size_t n = 0; n < names; ++n) {
    tc.analysis.entity_name_embeddings.emplace_back("Name " + std::to_string(n), small_vector(rng, kDim));
  }

  static const std::array<double, 3> kThresholds = {0.5, 0.6, 0.75};
  tc.params.k = 3 + rng() % 13;
  tc.params.t = kThresholds[rng() % 3];
  tc.params.o = rng() % 2 ? 5 : 10;
  tc.params.i = rng() % 2 ? 5 : 10;
  tc.params.c = rng() % 2 ? 5 : 10;
  return tc;
}

namespace {

struct Ranked {
  std::string hex;
  NodeId id;
  double score;
};

void rank_and_cut(std::vector<Ranked>& rows, std::size_t limit) {
  std::stable_sort(rows.begin(), rows.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.hex < b.hex;
  });
  if (rows.size() > limit) rows.resize(limit);
}

const GraphNode* edge_target(const KnowledgeGraph& g, const NodeId& from, EdgeLabel label) {
  for (const auto& e : g.edges()) {
    if (e.from == from && e.label == label) return &g.at(e.to);
  }
  return nullptr;
}

}  // namespace

RetrievalContext brute_force_context(const QuestionAnalysis& a, const KnowledgeGraph& g,
                                     const RetrievalParams& params) {
  RetrievalContext ctx;
  const EmbeddingVector& q = a.question_embedding;

  std::vector<Ranked> entities;
  for (const auto& [id, n] : g.nodes()) {
    if (n.kind != NodeKind::Entity || !n.name_embedding) continue;
    double best = cosine(q, *n.name_embedding);
    for (const auto& [name, v] : a.entity_name_embeddings) best = std::max(best, cosine(v, *n.name_embedding));
    if (best >= params.t) entities.push_back({id.hex(), id, best});
  }
  rank_and_cut(entities, params.k);
  if (entities.empty()) return ctx;
  ctx.empty = false;

  std::set<NodeId> sources;
  for (const auto& e : entities) {
    ctx.matched_entities.push_back({e.id, g.at(e.id).name, e.score});
    sources.insert(e.id);
  }

  for (const auto [dir, label, limit] :
       {std::tuple{Direction::outgoing, EdgeLabel::hasSource, params.o},
        std::tuple{Direction::incoming, EdgeLabel::hasTarget, params.i}}) {
    std::vector<Ranked> rels;
    for (const auto& [id, n] : g.nodes()) {
      if (n.kind != NodeKind::Relationship || !n.name_embedding) continue;
      const GraphNode* end = edge_target(g, id, label);
      bool touches = false;
      for (const auto& e : entities) touches = touches || (end && end->id == e.id);
      if (touches) rels.push_back({id.hex(), id, cosine(q, *n.name_embedding)});
    }
    rank_and_cut(rels, limit);
    for (const auto& r : rels) {
      ctx.relationships.push_back({r.id, g.at(r.id).name, edge_target(g, r.id, EdgeLabel::hasSource)->name,
                                   edge_target(g, r.id, EdgeLabel::hasTarget)->name, dir, r.score});
      sources.insert(r.id);
    }
  }

  std::vector<Ranked> chunks;
  std::set<NodeId> seen;
  for (const auto& e : g.edges()) {
    if (e.label != EdgeLabel::hasChunk || !sources.count(e.from)) continue;
    const GraphNode& c = g.at(e.to);
    if (c.kind != NodeKind::Chunk || !c.content_embedding || !seen.insert(c.id).second) continue;
    chunks.push_back({c.id.hex(), c.id, cosine(q, *c.content_embedding)});
  }
  rank_and_cut(chunks, params.c);
  for (const auto& r : chunks) {
    const GraphNode& c = g.at(r.id);
    std::string uri;
    for (const auto& [id, n] : g.nodes()) {
      if (n.kind == NodeKind::Document && n.doc_id == c.doc_id) uri = n.name;
    }
    ctx.chunks.push_back({r.hex, uri, c.content, r.score});
  }
  return ctx;
}

std::string describe_difference(const RetrievalContext& e, const RetrievalContext& a) {
  if (e.empty != a.empty) return "empty flag differs";
  if (e.matched_entities.size() != a.matched_entities.size()) return "entity count differs";
  for (std::size_t n = 0; n < e.matched_entities.size(); ++n) {
    if (!(e.matched_entities[n] == a.matched_entities[n])) return "entity " + std::to_string(n) + " differs";
  }
  if (e.relationships.size() != a.relationships.size()) return "relationship count differs";
  for (std::size_t n = 0; n < e.relationships.size(); ++n) {
    if (!(e.relationships[n] == a.relationships[n])) return "relationship " + std::to_string(n) + " differs";
  }
  if (e.chunks.size() != a.chunks.size()) return "chunk count differs";
  for (std::size_t n = 0; n < e.chunks.size(); ++n) {
    if (!(e.chunks[n] == a.chunks[n])) return "chunk " + std::to_string(n) + " differs";
  }
  return "";
}

std::string synthetic_dataset_jsonl() {
  std::string out;
  char id[8];
  for (int n = 1; n <= 101; ++n) {
    std::snprintf(id, sizeof id, "q%03d", n);
    // Countries interleave so that no block of ids shares one value.
    const char* country = n % 4 == 1 && n <= 100 ? "IT" : n % 4 == 3 && n <= 100 ? "CH" : "Both";
    const nlohmann::json j = {{"id", id},
                              {"question_it", "Domanda numero " + std::to_string(n) + " sul risparmio energetico?"},
                              {"question_en", "Question number " + std::to_string(n) + " about energy saving?"},
                              {"expected", "Expected answer " + std::to_string(n)},
                              {"country", country}};
    out += j.dump() + "\n";
  }
  return out;
}

QaDataset synthetic_dataset() { return parse_qa_dataset(synthetic_dataset_jsonl()); }

std::filesystem::path fresh_dir(std::string_view name) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("grag_test_" + std::string(name) + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
}

}  // namespace grag::testing
