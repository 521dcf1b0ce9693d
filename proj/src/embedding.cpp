#include "grag/embedding.hpp"

#include <algorithm>

namespace grag {

std::vector<ScoredId> top_k(const EmbeddingVector& query, std::span<const IndexedVector> candidates,
                            std::size_t k, double threshold) {
  std::vector<ScoredId> scored;
  for (const auto& c : candidates) {
    const double s = cosine(query, c.vector);
    if (s >= threshold) scored.push_back({c.id, s});
  }
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    ranks_before);
  scored.resize(keep);
  return scored;
}

void EmbeddingIndex::add(NodeId id, EmbeddingVector v) {
  if (v.size() == 0) throw Error(ErrorCode::dimension_mismatch, "index: empty vector");
  if (dim_ != 0 && static_cast<std::size_t>(v.size()) != dim_) {
    throw Error(ErrorCode::dimension_mismatch, "index: dimension " + std::to_string(v.size()) +
                                                   " differs from " + std::to_string(dim_));
  }
  dim_ = static_cast<std::size_t>(v.size());
  entries_.push_back({std::move(id), std::move(v)});
}

std::vector<ScoredId> EmbeddingIndex::top_k(const EmbeddingVector& query, std::size_t k,
                                            double threshold) const {
  if (dim_ != 0 && static_cast<std::size_t>(query.size()) != dim_) {
    throw Error(ErrorCode::dimension_mismatch, "query dimension " + std::to_string(query.size()) +
                                                   " differs from index dimension " +
                                                   std::to_string(dim_));
  }
  return grag::top_k(query, entries_, k, threshold);
}

}  // namespace grag
