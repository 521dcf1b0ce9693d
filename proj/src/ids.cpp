#include "grag/ids.hpp"

#include "grag/error.hpp"
#include "grag/md5.hpp"

namespace grag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::invalid_key: return "invalid_key";
    case ErrorCode::provenance: return "provenance";
    case ErrorCode::integrity: return "integrity";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::unknown_node: return "unknown_node";
    case ErrorCode::zero_norm: return "zero_norm";
    case ErrorCode::extraction_format: return "extraction_format";
    case ErrorCode::transport: return "transport";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::auth: return "auth";
    case ErrorCode::rate_limit: return "rate_limit";
    case ErrorCode::malformed_response: return "malformed_response";
    case ErrorCode::scripting_gap: return "scripting_gap";
    case ErrorCode::template_error: return "template_error";
    case ErrorCode::dataset: return "dataset";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::corrupt_record: return "corrupt_record";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Entity: return "Entity";
    case NodeKind::Relationship: return "Relationship";
    case NodeKind::Document: return "Document";
    case NodeKind::Chunk: return "Chunk";
  }
  return "";
}

NodeKind node_kind_from_string(std::string_view s) {
  if (s == "Entity") return NodeKind::Entity;
  if (s == "Relationship") return NodeKind::Relationship;
  if (s == "Document") return NodeKind::Document;
  if (s == "Chunk") return NodeKind::Chunk;
  throw Error(ErrorCode::invalid_argument, "unknown node kind '" + std::string(s) + "'");
}

NodeId NodeId::from_hex(std::string_view hex) {
  bool ok = hex.size() == 32;
  for (char c : hex) ok = ok && ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'));
  if (!ok) throw Error(ErrorCode::invalid_key, "not a node id: '" + std::string(hex) + "'");
  return NodeId(std::string(hex));
}

NodeId node_id(NodeKind kind, std::string_view key) {
  if (key.empty()) throw Error(ErrorCode::invalid_key, "node key must be nonempty");
  std::string input(to_string(kind));
  input.push_back(':');
  input.append(key);
  return NodeId::from_hex(md5_hex(input));
}

std::string relationship_key(std::string_view relation, std::string_view head,
                             std::string_view tail) {
  std::string key(relation);
  key.push_back('|');
  key.append(head);
  key.push_back('|');
  key.append(tail);
  return key;
}

}  // namespace grag
