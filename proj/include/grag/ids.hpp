#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace grag {

enum class NodeKind { Entity, Relationship, Document, Chunk };

std::string_view to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view s);

/// 32 lowercase hex characters: MD5 of "<kind>:<key>".
class NodeId {
 public:
  NodeId() = default;
  /// Wraps an existing digest; throws Error(invalid_key) unless it is 32
  /// lowercase hex characters.
  static NodeId from_hex(std::string_view hex);

  const std::string& hex() const noexcept { return hex_; }
  bool empty() const noexcept { return hex_.empty(); }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
  friend bool operator==(const NodeId&, const NodeId&) = default;

 private:
  explicit NodeId(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
};

/// Throws Error(invalid_key) on an empty key.
NodeId node_id(NodeKind kind, std::string_view key);

/// Identity key of a relationship instance.
std::string relationship_key(std::string_view relation, std::string_view head,
                             std::string_view tail);

}  // namespace grag

template <>
struct std::hash<grag::NodeId> {
  std::size_t operator()(const grag::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.hex());
  }
};
