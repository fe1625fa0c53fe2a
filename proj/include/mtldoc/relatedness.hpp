#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "mtldoc/corpus.hpp"

namespace mtldoc {

/// Continuous Tanimoto coefficient <a,b> / (|a|^2 + |b|^2 - <a,b>). Equals the
/// Jaccard index on 0/1 vectors. Two empty vectors give 0.
template <typename Scalar>
Scalar tanimoto(const BasicSparseVector<Scalar>& a, const BasicSparseVector<Scalar>& b) {
  if (a.has_negative() || b.has_negative()) {
    throw Error("tanimoto similarity requires non-negative feature values");
  }
  const Scalar ab = a.dot(b);
  const Scalar denom = a.squared_norm() + b.squared_norm() - ab;
  return denom > Scalar(0) ? ab / denom : Scalar(0);
}

struct Neighbor {
  ClassId class_id = 0;
  double similarity = 0.0;

  bool operator==(const Neighbor&) const = default;
};

// For every class of `source`, the k most similar classes of other(source),
// most similar first.
struct NeighborMap {
  Source source = Source::S1;
  int k = 0;
  std::map<ClassId, std::vector<Neighbor>> entries;

  const std::vector<Neighbor>& at(ClassId c) const;
  bool operator==(const NeighborMap&) const = default;
};

/// Ties in similarity go to the lower class id. `normalize` l2-normalizes the
/// centroids before comparing them.
NeighborMap knn_related(std::span<const Centroid> src, std::span<const Centroid> other, int k,
                        bool normalize = false);

/// CSV with header `source,class_id,rank,neighbor_class_id,similarity`; rank is 1-based.
void write_neighbor_csv(std::ostream& out, const NeighborMap& map, bool header = true);

}  // namespace mtldoc
