#ifndef MIXSTREAM_HESSIAN_HPP
#define MIXSTREAM_HESSIAN_HPP

#include <string>

#include <Eigen/Core>

#include "mixstream/errors.hpp"
#include "mixstream/sparse_vector.hpp"

namespace mixstream {

enum class HessianMode { kFull, kDiagonal };

std::string to_string(HessianMode mode);
HessianMode hessian_mode_from_string(const std::string& s);

// Accumulated data curvature of a coefficient vector. Stores only the data
// term; the lambda*I prior precision is applied at solve and covariance time,
// never folded in here, so regularization stays independent of update count.
class HessianStore {
 public:
  HessianStore() = default;

  static HessianStore zero(HessianMode mode, Eigen::Index dim);
  static HessianStore full(Eigen::MatrixXd m);
  static HessianStore diagonal(Eigen::VectorXd d);

  HessianMode mode() const { return mode_; }
  Eigen::Index dim() const { return dim_; }

  void scale(double c);
  void add(const HessianStore& other);
  // this += w * z z^T (diagonal mode keeps only the squared entries).
  void add_outer(double w, const SparseVector& z);

  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const;
  double quad(const Eigen::VectorXd& v) const;  // v^T H v

  Eigen::MatrixXd dense() const;
  Eigen::VectorXd diagonal_entries() const;

  // In full mode the raw matrix; throws if diagonal.
  const Eigen::MatrixXd& full_matrix() const;
  const Eigen::VectorXd& diag_vector() const;

  // PSD within tolerance: full mode checks eigenvalues >= -1e-8 * trace,
  // diagonal mode checks entries >= 0.
  bool is_psd() const;

  double max_abs_diff(const HessianStore& other) const;

  bool operator==(const HessianStore& other) const;

 private:
  HessianMode mode_ = HessianMode::kFull;
  Eigen::Index dim_ = 0;
  Eigen::MatrixXd full_;
  Eigen::VectorXd diag_;
};

}  // namespace mixstream

#endif  // MIXSTREAM_HESSIAN_HPP
