#include "mtldoc/relatedness.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace mtldoc {

const std::vector<Neighbor>& NeighborMap::at(ClassId c) const {
  const auto it = entries.find(c);
  if (it == entries.end()) {
    throw Error("no neighbors recorded for " + to_string(source) + " class " + std::to_string(c));
  }
  return it->second;
}

NeighborMap knn_related(std::span<const Centroid> src, std::span<const Centroid> other, int k,
                        bool normalize) {
  if (src.empty()) throw Error("knn_related: no source centroids");
  if (k < 1 || static_cast<std::size_t>(k) > other.size()) {
    throw Error("k=" + std::to_string(k) + " is outside [1, " + std::to_string(other.size()) + "]");
  }
  NeighborMap map;
  map.source = src.front().source;
  map.k = k;
  for (const Centroid& c : src) {
    if (c.source != map.source) throw Error("knn_related: mixed sources among task centroids");
  }
  for (const Centroid& c : other) {
    if (c.source == map.source) throw Error("knn_related: neighbor candidates must come from the other source");
  }

  std::vector<SparseVector> cand;
  cand.reserve(other.size());
  for (const Centroid& c : other) cand.push_back(normalize ? c.vector.normalized() : c.vector);

  std::vector<Neighbor> scored(other.size());
  for (const Centroid& c : src) {
    const SparseVector v = normalize ? c.vector.normalized() : c.vector;
    for (std::size_t j = 0; j < other.size(); ++j) {
      scored[j] = {other[j].class_id, tanimoto(v, cand[j])};
    }
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                        if (a.similarity != b.similarity) return a.similarity > b.similarity;
                        return a.class_id < b.class_id;
                      });
    map.entries[c.class_id].assign(scored.begin(), scored.begin() + k);
  }
  return map;
}

void write_neighbor_csv(std::ostream& out, const NeighborMap& map, bool header) {
  if (header) out << "source,class_id,rank,neighbor_class_id,similarity\n";
  char buf[64];
  for (const auto& [c, list] : map.entries) {
    for (std::size_t r = 0; r < list.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", list[r].similarity);
      out << to_string(map.source) << ',' << c << ',' << r + 1 << ',' << list[r].class_id << ','
          << buf << '\n';
    }
  }
}

}  // namespace mtldoc
