#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mtldoc/error.hpp"

namespace mtldoc {

using FeatureId = std::int32_t;

/// Sparse feature vector: strictly increasing feature ids, finite values,
/// no stored zeros. Documents, centroids and gradients of single examples
/// all use this representation.
template <typename Scalar>
class BasicSparseVector {
 public:
  using Entry = std::pair<FeatureId, Scalar>;

  BasicSparseVector() = default;

  /// Canonicalizes `entries`: sorts by feature id and drops zeros. Throws
  /// Error on a negative id, a repeated id or a non-finite value.
  static BasicSparseVector from_entries(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    BasicSparseVector out;
    out.indices_.reserve(entries.size());
    out.values_.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto [id, value] = entries[i];
      if (id < 0) throw Error("negative feature id " + std::to_string(id));
      if (i > 0 && entries[i - 1].first == id) {
        throw Error("duplicate feature id " + std::to_string(id));
      }
      if (!std::isfinite(value)) {
        throw Error("non-finite value for feature " + std::to_string(id));
      }
      if (value == Scalar(0)) continue;
      out.indices_.push_back(id);
      out.values_.push_back(value);
    }
    return out;
  }

  std::span<const FeatureId> indices() const { return indices_; }
  std::span<const Scalar> values() const { return values_; }
  std::size_t nnz() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }

  /// One past the largest stored id; 0 for the empty vector.
  FeatureId extent() const { return indices_.empty() ? 0 : indices_.back() + 1; }

  Scalar squared_norm() const {
    Scalar s(0);
    for (Scalar v : values_) s += v * v;
    return s;
  }

  Scalar dot(const BasicSparseVector& other) const {
    Scalar s(0);
    std::size_t i = 0, j = 0;
    while (i < indices_.size() && j < other.indices_.size()) {
      if (indices_[i] < other.indices_[j]) {
        ++i;
      } else if (indices_[i] > other.indices_[j]) {
        ++j;
      } else {
        s += values_[i++] * other.values_[j++];
      }
    }
    return s;
  }

  /// Inner product with a dense vector of length >= extent().
  template <typename Derived>
  Scalar dot(const Eigen::MatrixBase<Derived>& dense) const {
    Scalar s(0);
    for (std::size_t i = 0; i < indices_.size(); ++i) s += values_[i] * dense(indices_[i]);
    return s;
  }

  BasicSparseVector scaled(Scalar alpha) const {
    if (alpha == Scalar(0)) return {};
    BasicSparseVector out = *this;
    for (Scalar& v : out.values_) v *= alpha;
    return out;
  }

  /// Unit l2 length; the empty vector stays empty.
  BasicSparseVector normalized() const {
    const Scalar norm = std::sqrt(squared_norm());
    return norm > Scalar(0) ? scaled(Scalar(1) / norm) : *this;
  }

  bool has_negative() const {
    return std::any_of(values_.begin(), values_.end(), [](Scalar v) { return v < Scalar(0); });
  }

  bool operator==(const BasicSparseVector&) const = default;

 private:
  std::vector<FeatureId> indices_;
  std::vector<Scalar> values_;
};

using SparseVector = BasicSparseVector<double>;

}  // namespace mtldoc
