#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "grag/corpus.hpp"
#include "grag/embedding.hpp"
#include "grag/ids.hpp"
#include "grag/triples.hpp"

namespace grag {

enum class EdgeLabel {
  hasSource,
  hasTarget,
  hasRelationship,
  hasChunk,
  isSourceOf,
  isTargetOf,
  relatesSource,
  relatesTarget,
};

std::string_view to_string(EdgeLabel label);
EdgeLabel edge_label_from_string(std::string_view s);

inline constexpr std::array<NodeKind, 4> kNodeKinds = {
    NodeKind::Entity, NodeKind::Relationship, NodeKind::Document, NodeKind::Chunk};
inline constexpr std::array<EdgeLabel, 8> kEdgeLabels = {
    EdgeLabel::hasSource,     EdgeLabel::hasTarget,     EdgeLabel::hasRelationship,
    EdgeLabel::hasChunk,      EdgeLabel::isSourceOf,    EdgeLabel::isTargetOf,
    EdgeLabel::relatesSource, EdgeLabel::relatesTarget};

inline constexpr std::string_view kGraphFormatHeader = "graphkb v1";
inline constexpr int kGraphSchemaVersion = 1;

struct GraphNode {
  NodeId id;
  NodeKind kind = NodeKind::Entity;
  // Entity/Relationship: canonical name. Document: uri. Chunk: empty.
  std::string name;
  // Entity type label.
  std::string type_label;
  // Document and Chunk provenance.
  std::string doc_id;
  std::size_t chunk_index = 0;
  std::string content;
  PropertyMap properties;
  std::optional<EmbeddingVector> name_embedding;
  std::optional<EmbeddingVector> content_embedding;
};

bool operator==(const GraphNode& a, const GraphNode& b);

struct GraphEdge {
  EdgeLabel label = EdgeLabel::hasSource;
  NodeId from;
  NodeId to;

  friend auto operator<=>(const GraphEdge&, const GraphEdge&) = default;
  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct UserMetadata {
  std::string user_id;
  std::string language;
  std::string country;
  PropertyMap preferences;

  friend bool operator==(const UserMetadata&, const UserMetadata&) = default;
};

/// Auxiliary per-user table.
class UserTable {
 public:
  /// Upsert. Throws Error(invalid_argument) on empty user_id.
  void set(UserMetadata m);
  std::optional<UserMetadata> get(std::string_view user_id) const;
  const std::map<std::string, UserMetadata, std::less<>>& rows() const { return rows_; }

  friend bool operator==(const UserTable&, const UserTable&) = default;

 private:
  std::map<std::string, UserMetadata, std::less<>> rows_;
};

struct InsertReport {
  std::size_t nodes_added = 0;
  std::size_t edges_added = 0;
  bool merged = false;
};

enum class Direction { outgoing, incoming };
std::string_view to_string(Direction d);

struct Neighbor {
  NodeId relationship;
  NodeId other;
};

/// Optional ranking key. When set, results are ordered by score descending,
/// id ascending.
using NodeScorer = std::function<double(const GraphNode&)>;

struct GraphStats {
  std::size_t entities = 0;
  std::size_t relationships = 0;
  std::size_t documents = 0;
  std::size_t chunks = 0;
  std::size_t embedding_dim = 0;
};

/// Ontology-typed store of Entity, Relationship, Document and Chunk nodes.
/// Single writer, many readers: const members may run concurrently.
class KnowledgeGraph {
 public:
  /// Empty graph with the ontology registered.
  KnowledgeGraph();

  int schema_version() const { return schema_version_; }
  std::span<const NodeKind> node_kinds() const { return kNodeKinds; }
  std::span<const EdgeLabel> edge_labels() const { return kEdgeLabels; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t embedding_dim() const { return embedding_dim_; }
  GraphStats stats() const;

  const GraphNode* find(const NodeId& id) const;
  const GraphNode& at(const NodeId& id) const;  // throws unknown_node
  bool contains(const NodeId& id) const { return nodes_.count(id) != 0; }
  const std::map<NodeId, GraphNode>& nodes() const { return nodes_; }
  const std::set<GraphEdge>& edges() const { return edges_; }
  std::vector<GraphEdge> out_edges(const NodeId& from, EdgeLabel label) const;

  NodeId add_document(const SourceDocument& doc);
  /// Requires the chunk's document to have been added.
  NodeId add_chunk(const Chunk& chunk);

  InsertReport upsert_triple(const Triple& t);

  /// Every stored (head, relation, tail) chain, sorted by key. Provenance is
  /// the smallest attached chunk id; properties are not reconstructed.
  std::vector<Triple> reconstruct_triples() const;

  /// First attachment fixes the graph-wide dimension.
  enum class EmbeddingField { name, content };
  void attach_embedding(const NodeId& id, EmbeddingField field, EmbeddingVector v);

  std::vector<Neighbor> neighbors(const NodeId& entity, Direction direction, std::size_t limit,
                                  const NodeScorer& scorer = {}) const;

  std::vector<const GraphNode*> chunks_for(const std::vector<NodeId>& ids, std::size_t limit,
                                           const NodeScorer& scorer = {}) const;

  /// Throws Error(integrity) naming the first violating node.
  void check_integrity() const;

  UserTable& users() { return users_; }
  const UserTable& users() const { return users_; }

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static KnowledgeGraph load(std::istream& in);
  static KnowledgeGraph load(const std::filesystem::path& path);

  friend bool operator==(const KnowledgeGraph&, const KnowledgeGraph&);

 private:
  GraphNode& node_mut(const NodeId& id);
  bool insert_node(GraphNode node);
  bool insert_edge(EdgeLabel label, const NodeId& from, const NodeId& to);
  void check_dimension(const EmbeddingVector& v);

  int schema_version_ = kGraphSchemaVersion;
  std::size_t embedding_dim_ = 0;
  std::map<NodeId, GraphNode> nodes_;
  std::set<GraphEdge> edges_;
  // (from, label) -> targets, mirrors edges_.
  std::map<std::pair<NodeId, EdgeLabel>, std::set<NodeId>> adjacency_;
  UserTable users_;
};

inline KnowledgeGraph init_ontology() { return KnowledgeGraph{}; }

inline void set_user_metadata(KnowledgeGraph& g, UserMetadata m) { g.users().set(std::move(m)); }
inline std::optional<UserMetadata> get_user_metadata(const KnowledgeGraph& g,
                                                     std::string_view user_id) {
  return g.users().get(user_id);
}

/// Entity name vectors, ready for similarity search.
EmbeddingIndex build_entity_index(const KnowledgeGraph& g);

}  // namespace grag
