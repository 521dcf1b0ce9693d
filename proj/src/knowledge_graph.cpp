#include "grag/knowledge_graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "grag/error.hpp"
#include "grag/text.hpp"

namespace grag {

using nlohmann::json;

std::string_view to_string(EdgeLabel label) {
  switch (label) {
    case EdgeLabel::hasSource: return "hasSource";
    case EdgeLabel::hasTarget: return "hasTarget";
    case EdgeLabel::hasRelationship: return "hasRelationship";
    case EdgeLabel::hasChunk: return "hasChunk";
    case EdgeLabel::isSourceOf: return "isSourceOf";
    case EdgeLabel::isTargetOf: return "isTargetOf";
    case EdgeLabel::relatesSource: return "relatesSource";
    case EdgeLabel::relatesTarget: return "relatesTarget";
  }
  return "";
}

EdgeLabel edge_label_from_string(std::string_view s) {
  for (auto l : kEdgeLabels) {
    if (to_string(l) == s) return l;
  }
  throw Error(ErrorCode::invalid_argument, "unknown edge label '" + std::string(s) + "'");
}

std::string_view to_string(Direction d) { return d == Direction::outgoing ? "outgoing" : "incoming"; }

namespace {

bool same_vector(const std::optional<EmbeddingVector>& a, const std::optional<EmbeddingVector>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->size() == b->size() && (a->array() == b->array()).all();
}

}  // namespace

bool operator==(const GraphNode& a, const GraphNode& b) {
  return a.id == b.id && a.kind == b.kind && a.name == b.name && a.type_label == b.type_label &&
         a.doc_id == b.doc_id && a.chunk_index == b.chunk_index && a.content == b.content &&
         a.properties == b.properties && same_vector(a.name_embedding, b.name_embedding) &&
         same_vector(a.content_embedding, b.content_embedding);
}

bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
  return a.schema_version_ == b.schema_version_ && a.embedding_dim_ == b.embedding_dim_ &&
         a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.users_ == b.users_;
}

// ---------------------------------------------------------------------------
// Users

void UserTable::set(UserMetadata m) {
  if (m.user_id.empty()) throw Error(ErrorCode::invalid_argument, "user_id must be nonempty");
  rows_[m.user_id] = std::move(m);
}

std::optional<UserMetadata> UserTable::get(std::string_view user_id) const {
  const auto it = rows_.find(user_id);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Graph

KnowledgeGraph::KnowledgeGraph() = default;

GraphStats KnowledgeGraph::stats() const {
  GraphStats s;
  for (const auto& [id, n] : nodes_) {
    switch (n.kind) {
      case NodeKind::Entity: ++s.entities; break;
      case NodeKind::Relationship: ++s.relationships; break;
      case NodeKind::Document: ++s.documents; break;
      case NodeKind::Chunk: ++s.chunks; break;
    }
  }
  s.embedding_dim = embedding_dim_;
  return s;
}

const GraphNode* KnowledgeGraph::find(const NodeId& id) const {
  const auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const GraphNode& KnowledgeGraph::at(const NodeId& id) const {
  const auto* n = find(id);
  if (!n) throw Error(ErrorCode::unknown_node, "unknown node " + id.hex());
  return *n;
}

GraphNode& KnowledgeGraph::node_mut(const NodeId& id) {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(ErrorCode::unknown_node, "unknown node " + id.hex());
  return it->second;
}

std::vector<GraphEdge> KnowledgeGraph::out_edges(const NodeId& from, EdgeLabel label) const {
  std::vector<GraphEdge> out;
  const auto it = adjacency_.find({from, label});
  if (it == adjacency_.end()) return out;
  for (const auto& to : it->second) out.push_back({label, from, to});
  return out;
}

bool KnowledgeGraph::insert_node(GraphNode node) {
  const NodeId id = node.id;
  return nodes_.emplace(id, std::move(node)).second;
}

bool KnowledgeGraph::insert_edge(EdgeLabel label, const NodeId& from, const NodeId& to) {
  if (!edges_.insert({label, from, to}).second) return false;
  adjacency_[{from, label}].insert(to);
  return true;
}

NodeId KnowledgeGraph::add_document(const SourceDocument& doc) {
  const NodeId id = node_id(NodeKind::Document, doc.doc_id);
  if (!contains(id)) {
    GraphNode n;
    n.id = id;
    n.kind = NodeKind::Document;
    n.name = doc.uri;
    n.doc_id = doc.doc_id;
    if (!doc.language.empty()) n.properties["language"] = doc.language;
    insert_node(std::move(n));
  }
  return id;
}

NodeId KnowledgeGraph::add_chunk(const Chunk& chunk) {
  const NodeId doc = node_id(NodeKind::Document, chunk.doc_id);
  if (!contains(doc)) {
    throw Error(ErrorCode::provenance, "chunk " + chunk.chunk_id + " references unknown document '" +
                                           chunk.doc_id + "'");
  }
  const NodeId id =
      node_id(NodeKind::Chunk, chunk.doc_id + "#" + std::to_string(chunk.index));
  if (!chunk.chunk_id.empty() && chunk.chunk_id != id.hex()) {
    throw Error(ErrorCode::invalid_key, "chunk id " + chunk.chunk_id + " does not match its position");
  }
  if (!contains(id)) {
    GraphNode n;
    n.id = id;
    n.kind = NodeKind::Chunk;
    n.doc_id = chunk.doc_id;
    n.chunk_index = chunk.index;
    n.content = chunk.content;
    insert_node(std::move(n));
  }
  insert_edge(EdgeLabel::hasChunk, doc, id);
  return id;
}

InsertReport KnowledgeGraph::upsert_triple(const Triple& t) {
  for (const std::string* name : {&t.head, &t.relation, &t.tail}) {
    if (name->empty() || !is_canonical_name(*name)) {
      throw Error(ErrorCode::invalid_argument, "triple name '" + *name + "' is not canonical");
    }
  }
  std::optional<NodeId> chunk;
  if (!t.source_chunk_id.empty()) {
    try {
      chunk = NodeId::from_hex(t.source_chunk_id);
    } catch (const Error&) {
      throw Error(ErrorCode::provenance, "malformed source_chunk_id '" + t.source_chunk_id + "'");
    }
    const auto* n = find(*chunk);
    if (!n || n->kind != NodeKind::Chunk) {
      throw Error(ErrorCode::provenance, "dangling source_chunk_id " + t.source_chunk_id);
    }
  }

  InsertReport report;
  const NodeId rel = node_id(NodeKind::Relationship, relationship_key(t.relation, t.head, t.tail));
  report.merged = contains(node_id(NodeKind::Entity, t.head)) ||
                  contains(node_id(NodeKind::Entity, t.tail)) || contains(rel);
  const auto upsert_entity = [&](const std::string& name, const std::string& type) {
    const NodeId id = node_id(NodeKind::Entity, name);
    if (contains(id)) {
      auto& n = node_mut(id);
      if (n.type_label.empty()) n.type_label = type;
    } else {
      GraphNode n;
      n.id = id;
      n.kind = NodeKind::Entity;
      n.name = name;
      n.type_label = type;
      insert_node(std::move(n));
      ++report.nodes_added;
    }
    return id;
  };
  const NodeId head = upsert_entity(t.head, t.head_type);
  const NodeId tail = upsert_entity(t.tail, t.tail_type);
  for (const auto& [k, v] : t.properties) node_mut(head).properties[k] = v;

  if (!contains(rel)) {
    GraphNode n;
    n.id = rel;
    n.kind = NodeKind::Relationship;
    n.name = t.relation;
    insert_node(std::move(n));
    ++report.nodes_added;
  }

  const auto edge = [&](EdgeLabel label, const NodeId& from, const NodeId& to) {
    if (insert_edge(label, from, to)) ++report.edges_added;
  };
  edge(EdgeLabel::hasSource, rel, head);
  edge(EdgeLabel::hasTarget, rel, tail);
  edge(EdgeLabel::hasRelationship, head, rel);
  edge(EdgeLabel::hasRelationship, tail, rel);
  edge(EdgeLabel::isSourceOf, head, rel);
  edge(EdgeLabel::isTargetOf, tail, rel);
  edge(EdgeLabel::relatesSource, rel, head);
  edge(EdgeLabel::relatesTarget, rel, tail);
  if (chunk) {
    edge(EdgeLabel::hasChunk, head, *chunk);
    edge(EdgeLabel::hasChunk, tail, *chunk);
    edge(EdgeLabel::hasChunk, rel, *chunk);
  }
  return report;
}

namespace {

const NodeId& single_target(const std::map<std::pair<NodeId, EdgeLabel>, std::set<NodeId>>& adj,
                            const NodeId& from, EdgeLabel label) {
  const auto it = adj.find({from, label});
  if (it == adj.end() || it->second.size() != 1) {
    throw Error(ErrorCode::integrity, "relationship " + from.hex() + " needs exactly one " +
                                          std::string(to_string(label)) + " edge");
  }
  return *it->second.begin();
}

}  // namespace

std::vector<Triple> KnowledgeGraph::reconstruct_triples() const {
  std::vector<Triple> out;
  for (const auto& [id, n] : nodes_) {
    if (n.kind != NodeKind::Relationship) continue;
    const GraphNode& head = at(single_target(adjacency_, id, EdgeLabel::hasSource));
    const GraphNode& tail = at(single_target(adjacency_, id, EdgeLabel::hasTarget));
    Triple t;
    t.head = head.name;
    t.head_type = head.type_label;
    t.relation = n.name;
    t.tail = tail.name;
    t.tail_type = tail.type_label;
    if (const auto it = adjacency_.find({id, EdgeLabel::hasChunk});
        it != adjacency_.end() && !it->second.empty()) {
      t.source_chunk_id = it->second.begin()->hex();
    }
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(),
            [](const Triple& a, const Triple& b) { return key_of(a) < key_of(b); });
  return out;
}

void KnowledgeGraph::check_dimension(const EmbeddingVector& v) {
  if (v.size() == 0) throw Error(ErrorCode::dimension_mismatch, "embedding must be nonempty");
  if (embedding_dim_ != 0 && static_cast<std::size_t>(v.size()) != embedding_dim_) {
    throw Error(ErrorCode::dimension_mismatch,
                "embedding dimension " + std::to_string(v.size()) + " differs from graph dimension " +
                    std::to_string(embedding_dim_));
  }
}

void KnowledgeGraph::attach_embedding(const NodeId& id, EmbeddingField field, EmbeddingVector v) {
  GraphNode& n = node_mut(id);
  check_dimension(v);
  embedding_dim_ = static_cast<std::size_t>(v.size());
  if (field == EmbeddingField::name) n.name_embedding = std::move(v);
  else n.content_embedding = std::move(v);
}

std::vector<Neighbor> KnowledgeGraph::neighbors(const NodeId& entity, Direction direction,
                                                std::size_t limit, const NodeScorer& scorer) const {
  const GraphNode& e = at(entity);
  if (e.kind != NodeKind::Entity) {
    throw Error(ErrorCode::invalid_argument, "neighbors: " + entity.hex() + " is not an Entity");
  }
  const EdgeLabel via = direction == Direction::outgoing ? EdgeLabel::isSourceOf : EdgeLabel::isTargetOf;
  const EdgeLabel end = direction == Direction::outgoing ? EdgeLabel::hasTarget : EdgeLabel::hasSource;

  struct Row {
    Neighbor n;
    const GraphNode* rel;
    const GraphNode* other;
    double score;
  };
  std::vector<Row> rows;
  if (const auto it = adjacency_.find({entity, via}); it != adjacency_.end()) {
    for (const auto& rel : it->second) {
      const NodeId& other = single_target(adjacency_, rel, end);
      const GraphNode& rn = at(rel);
      rows.push_back({{rel, other}, &rn, &at(other), scorer ? scorer(rn) : 0.0});
    }
  }
  if (scorer) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return ranks_before({a.n.relationship, a.score}, {b.n.relationship, b.score});
    });
  } else {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      if (a.rel->name != b.rel->name) return a.rel->name < b.rel->name;
      if (a.other->name != b.other->name) return a.other->name < b.other->name;
      return a.n.relationship < b.n.relationship;
    });
  }
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < rows.size() && i < limit; ++i) out.push_back(rows[i].n);
  return out;
}

std::vector<const GraphNode*> KnowledgeGraph::chunks_for(const std::vector<NodeId>& ids,
                                                         std::size_t limit,
                                                         const NodeScorer& scorer) const {
  std::set<NodeId> seen;
  std::vector<std::pair<const GraphNode*, double>> rows;
  for (const auto& id : ids) {
    const auto it = adjacency_.find({id, EdgeLabel::hasChunk});
    if (it == adjacency_.end()) continue;
    for (const auto& c : it->second) {
      if (!seen.insert(c).second) continue;
      const GraphNode& cn = at(c);
      rows.emplace_back(&cn, scorer ? scorer(cn) : 0.0);
    }
  }
  if (scorer) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return ranks_before({a.first->id, a.second}, {b.first->id, b.second});
    });
  } else {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.first->doc_id != b.first->doc_id) return a.first->doc_id < b.first->doc_id;
      return a.first->chunk_index < b.first->chunk_index;
    });
  }
  std::vector<const GraphNode*> out;
  for (std::size_t i = 0; i < rows.size() && i < limit; ++i) out.push_back(rows[i].first);
  return out;
}

void KnowledgeGraph::check_integrity() const {
  const auto has = [&](EdgeLabel l, const NodeId& from, const NodeId& to) {
    return edges_.count({l, from, to}) != 0;
  };
  for (const auto& e : edges_) {
    if (!contains(e.from) || !contains(e.to)) {
      throw Error(ErrorCode::integrity, "edge " + std::string(to_string(e.label)) + " from " +
                                            e.from.hex() + " has a missing endpoint");
    }
  }
  for (const auto& [id, n] : nodes_) {
    if (n.kind != NodeKind::Relationship) continue;
    const NodeId& head = single_target(adjacency_, id, EdgeLabel::hasSource);
    const NodeId& tail = single_target(adjacency_, id, EdgeLabel::hasTarget);
    if (at(head).kind != NodeKind::Entity || at(tail).kind != NodeKind::Entity) {
      throw Error(ErrorCode::integrity, "relationship " + id.hex() + " must connect Entity nodes");
    }
    const bool ok = has(EdgeLabel::isSourceOf, head, id) && has(EdgeLabel::isTargetOf, tail, id) &&
                    has(EdgeLabel::relatesSource, id, head) &&
                    has(EdgeLabel::relatesTarget, id, tail) &&
                    has(EdgeLabel::hasRelationship, head, id) &&
                    has(EdgeLabel::hasRelationship, tail, id);
    if (!ok) throw Error(ErrorCode::integrity, "relationship " + id.hex() + " lacks inverse edges");
    const NodeId expected = node_id(NodeKind::Relationship,
                                    relationship_key(n.name, at(head).name, at(tail).name));
    if (expected != id) {
      throw Error(ErrorCode::integrity, "relationship " + id.hex() + " id does not match its endpoints");
    }
  }
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json vector_to_json(const EmbeddingVector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

EmbeddingVector vector_from_json(const json& a) {
  EmbeddingVector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace

void KnowledgeGraph::save(std::ostream& out) const {
  out << kGraphFormatHeader << '\n';
  for (const auto& [id, n] : nodes_) {
    json j = {{"record", "node"},
              {"id", id.hex()},
              {"kind", std::string(to_string(n.kind))},
              {"name", n.name},
              {"type", n.type_label},
              {"doc_id", n.doc_id},
              {"index", n.chunk_index},
              {"content", n.content},
              {"properties", n.properties}};
    if (n.name_embedding) j["name_embedding"] = vector_to_json(*n.name_embedding);
    if (n.content_embedding) j["content_embedding"] = vector_to_json(*n.content_embedding);
    out << j.dump() << '\n';
  }
  for (const auto& e : edges_) {
    json j = {{"record", "edge"},
              {"label", std::string(to_string(e.label))},
              {"from", e.from.hex()},
              {"to", e.to.hex()}};
    out << j.dump() << '\n';
  }
  for (const auto& [uid, u] : users_.rows()) {
    json j = {{"record", "user"},
              {"user_id", u.user_id},
              {"language", u.language},
              {"country", u.country},
              {"preferences", u.preferences}};
    out << j.dump() << '\n';
  }
}

void KnowledgeGraph::save(const std::filesystem::path& path) const {
  // Write-then-rename so readers never observe a partial file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    save(out);
    if (!out) throw Error(ErrorCode::io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

KnowledgeGraph KnowledgeGraph::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw RecordError(ErrorCode::corrupt_record, 1, "missing header");
  if (line != kGraphFormatHeader) {
    if (line.rfind("graphkb ", 0) == 0) {
      throw Error(ErrorCode::version_mismatch,
                  "unsupported graph format '" + line + "', expected '" +
                      std::string(kGraphFormatHeader) + "'");
    }
    throw RecordError(ErrorCode::corrupt_record, 1, "not a graph file");
  }
  KnowledgeGraph g;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string record = j.at("record").get<std::string>();
      if (record == "node") {
        GraphNode n;
        n.id = NodeId::from_hex(j.at("id").get<std::string>());
        n.kind = node_kind_from_string(j.at("kind").get<std::string>());
        n.name = j.at("name").get<std::string>();
        n.type_label = j.at("type").get<std::string>();
        n.doc_id = j.at("doc_id").get<std::string>();
        n.chunk_index = j.at("index").get<std::size_t>();
        n.content = j.at("content").get<std::string>();
        n.properties = j.at("properties").get<PropertyMap>();
        if (j.contains("name_embedding")) {
          n.name_embedding = vector_from_json(j["name_embedding"]);
          g.check_dimension(*n.name_embedding);
          g.embedding_dim_ = static_cast<std::size_t>(n.name_embedding->size());
        }
        if (j.contains("content_embedding")) {
          n.content_embedding = vector_from_json(j["content_embedding"]);
          g.check_dimension(*n.content_embedding);
          g.embedding_dim_ = static_cast<std::size_t>(n.content_embedding->size());
        }
        if (!g.insert_node(std::move(n))) throw Error(ErrorCode::corrupt_record, "duplicate node");
      } else if (record == "edge") {
        const EdgeLabel label = edge_label_from_string(j.at("label").get<std::string>());
        const NodeId from = NodeId::from_hex(j.at("from").get<std::string>());
        const NodeId to = NodeId::from_hex(j.at("to").get<std::string>());
        if (!g.contains(from) || !g.contains(to)) {
          throw Error(ErrorCode::corrupt_record, "edge references an unknown node");
        }
        g.insert_edge(label, from, to);
      } else if (record == "user") {
        UserMetadata u;
        u.user_id = j.at("user_id").get<std::string>();
        u.language = j.at("language").get<std::string>();
        u.country = j.at("country").get<std::string>();
        u.preferences = j.at("preferences").get<PropertyMap>();
        g.users_.set(std::move(u));
      } else {
        throw Error(ErrorCode::corrupt_record, "unknown record type '" + record + "'");
      }
    } catch (const json::exception& e) {
      throw RecordError(ErrorCode::corrupt_record, line_no, e.what());
    } catch (const RecordError&) {
      throw;
    } catch (const Error& e) {
      throw RecordError(e.code() == ErrorCode::dimension_mismatch ? e.code() : ErrorCode::corrupt_record,
                        line_no, e.what());
    }
  }
  return g;
}

KnowledgeGraph KnowledgeGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return load(in);
}

EmbeddingIndex build_entity_index(const KnowledgeGraph& g) {
  EmbeddingIndex index;
  for (const auto& [id, n] : g.nodes()) {
    if (n.kind == NodeKind::Entity && n.name_embedding) index.add(id, *n.name_embedding);
  }
  return index;
}

}  // namespace grag
