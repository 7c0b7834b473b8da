#include "mixstream/sparse_vector.hpp"

#include <algorithm>

namespace mixstream {

SparseVector SparseVector::from_pairs(std::vector<Entry> entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.first < b.first; });
  SparseVector out;
  out.entries_.reserve(entries.size());
  for (const Entry& e : entries) {
    if (!out.entries_.empty() && out.entries_.back().first == e.first) {
      out.entries_.back().second += e.second;
    } else {
      out.entries_.push_back(e);
    }
  }
  std::erase_if(out.entries_, [](const Entry& e) { return e.second == 0.0; });
  return out;
}

SparseVector SparseVector::from_dense(const Eigen::VectorXd& v) {
  SparseVector out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) {
      out.entries_.emplace_back(static_cast<std::uint32_t>(i), v[i]);
    }
  }
  return out;
}

double SparseVector::dot(const Eigen::VectorXd& w) const {
  if (min_dim() > w.size()) {
    throw DimensionError("sparse index " + std::to_string(min_dim() - 1) +
                         " out of range for dense vector of size " +
                         std::to_string(w.size()));
  }
  double acc = 0.0;
  for (const Entry& e : entries_) acc += e.second * w[e.first];
  return acc;
}

void SparseVector::add_scaled_to(double c, Eigen::VectorXd& out) const {
  if (min_dim() > out.size()) {
    throw DimensionError("sparse index out of range in add_scaled_to");
  }
  for (const Entry& e : entries_) out[e.first] += c * e.second;
}

}  // namespace mixstream
