#ifndef MIXSTREAM_SPARSE_VECTOR_HPP
#define MIXSTREAM_SPARSE_VECTOR_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mixstream/errors.hpp"

namespace mixstream {

// Canonical sparse feature vector: entries sorted by index, duplicates
// summed, zeros dropped. All feature vectors (fixed-effect x and
// random-effect z) use this form.
class SparseVector {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  SparseVector() = default;

  // Canonicalizes arbitrary (index, value) pairs.
  static SparseVector from_pairs(std::vector<Entry> entries);

  // Dense -> sparse, dropping exact zeros.
  static SparseVector from_dense(const Eigen::VectorXd& v);

  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t nnz() const { return entries_.size(); }

  // Smallest dense dimension that can hold this vector.
  std::uint32_t min_dim() const {
    return entries_.empty() ? 0u : entries_.back().first + 1u;
  }

  double dot(const Eigen::VectorXd& w) const;

  // out += c * this. Throws DimensionError if out is too small.
  void add_scaled_to(double c, Eigen::VectorXd& out) const;

  bool operator==(const SparseVector& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace mixstream

#endif  // MIXSTREAM_SPARSE_VECTOR_HPP
