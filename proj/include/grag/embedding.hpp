#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "grag/error.hpp"
#include "grag/ids.hpp"

namespace grag {

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using EmbeddingVector = Embedding<double>;

/// Cosine similarity, accumulated in double precision whatever the stored
/// scalar. Throws on dimension mismatch or a zero-norm operand.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "cosine: dimensions " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  const auto ad = a.template cast<double>();
  const auto bd = b.template cast<double>();
  const double na = ad.norm();
  const double nb = bd.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_norm, "cosine: zero-norm vector");
  return ad.dot(bd) / (na * nb);
}

struct ScoredId {
  NodeId id;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Score descending, then id ascending.
inline bool ranks_before(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

struct IndexedVector {
  NodeId id;
  EmbeddingVector vector;
};

/// Exhaustive top-k: keeps scores >= threshold, sorts by ranks_before and
/// truncates to k.
std::vector<ScoredId> top_k(const EmbeddingVector& query, std::span<const IndexedVector> candidates,
                            std::size_t k, double threshold);

/// Flat cosine index over a fixed-dimension vector set. Immutable once
/// queries begin; queries are const and may run concurrently.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  void add(NodeId id, EmbeddingVector v);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }
  std::span<const IndexedVector> entries() const { return entries_; }

  std::vector<ScoredId> top_k(const EmbeddingVector& query, std::size_t k,
                              double threshold) const;

 private:
  std::size_t dim_ = 0;
  std::vector<IndexedVector> entries_;
};

}  // namespace grag
