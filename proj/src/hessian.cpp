#include "mixstream/hessian.hpp"

#include <Eigen/Eigenvalues>

namespace mixstream {

std::string to_string(HessianMode mode) {
  return mode == HessianMode::kFull ? "full" : "diagonal";
}

HessianMode hessian_mode_from_string(const std::string& s) {
  if (s == "full") return HessianMode::kFull;
  if (s == "diagonal" || s == "diag") return HessianMode::kDiagonal;
  throw DataError("unknown hessian mode: " + s);
}

HessianStore HessianStore::zero(HessianMode mode, Eigen::Index dim) {
  HessianStore h;
  h.mode_ = mode;
  h.dim_ = dim;
  if (mode == HessianMode::kFull) {
    h.full_ = Eigen::MatrixXd::Zero(dim, dim);
  } else {
    h.diag_ = Eigen::VectorXd::Zero(dim);
  }
  return h;
}

HessianStore HessianStore::full(Eigen::MatrixXd m) {
  if (m.rows() != m.cols()) throw DimensionError("full hessian must be square");
  HessianStore h;
  h.mode_ = HessianMode::kFull;
  h.dim_ = m.rows();
  h.full_ = std::move(m);
  return h;
}

HessianStore HessianStore::diagonal(Eigen::VectorXd d) {
  HessianStore h;
  h.mode_ = HessianMode::kDiagonal;
  h.dim_ = d.size();
  h.diag_ = std::move(d);
  return h;
}

void HessianStore::scale(double c) {
  if (mode_ == HessianMode::kFull) {
    full_ *= c;
  } else {
    diag_ *= c;
  }
}

void HessianStore::add(const HessianStore& other) {
  if (other.mode_ != mode_ || other.dim_ != dim_) {
    throw DimensionError("hessian add: mode or dimension mismatch");
  }
  if (mode_ == HessianMode::kFull) {
    full_ += other.full_;
  } else {
    diag_ += other.diag_;
  }
}

void HessianStore::add_outer(double w, const SparseVector& z) {
  if (z.min_dim() > dim_) {
    throw DimensionError("hessian add_outer: feature index out of range");
  }
  const auto& entries = z.entries();
  if (mode_ == HessianMode::kFull) {
    for (std::size_t a = 0; a < entries.size(); ++a) {
      const auto& [i, vi] = entries[a];
      full_(i, i) += w * vi * vi;
      for (std::size_t b = a + 1; b < entries.size(); ++b) {
        const auto& [j, vj] = entries[b];
        const double v = w * vi * vj;  // one rounding, mirrored exactly
        full_(i, j) += v;
        full_(j, i) += v;
      }
    }
  } else {
    for (const auto& [i, vi] : entries) {
      diag_[i] += w * vi * vi;
    }
  }
}

Eigen::VectorXd HessianStore::multiply(const Eigen::VectorXd& v) const {
  if (v.size() != dim_) throw DimensionError("hessian multiply: size mismatch");
  if (mode_ == HessianMode::kFull) return full_ * v;
  return diag_.cwiseProduct(v);
}

double HessianStore::quad(const Eigen::VectorXd& v) const {
  return v.dot(multiply(v));
}

Eigen::MatrixXd HessianStore::dense() const {
  if (mode_ == HessianMode::kFull) return full_;
  return diag_.asDiagonal();
}

Eigen::VectorXd HessianStore::diagonal_entries() const {
  if (mode_ == HessianMode::kFull) return full_.diagonal();
  return diag_;
}

const Eigen::MatrixXd& HessianStore::full_matrix() const {
  if (mode_ != HessianMode::kFull) {
    throw DimensionError("full_matrix() on a diagonal hessian");
  }
  return full_;
}

const Eigen::VectorXd& HessianStore::diag_vector() const {
  if (mode_ != HessianMode::kDiagonal) {
    throw DimensionError("diag_vector() on a full hessian");
  }
  return diag_;
}

bool HessianStore::is_psd() const {
  if (mode_ == HessianMode::kDiagonal) {
    return (diag_.array() >= 0.0).all();
  }
  if (dim_ == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full_, Eigen::EigenvaluesOnly);
  const double tol = 1e-8 * std::max(1.0, full_.trace());
  return es.eigenvalues().minCoeff() >= -tol;
}

double HessianStore::max_abs_diff(const HessianStore& other) const {
  if (other.mode_ != mode_ || other.dim_ != dim_) {
    throw DimensionError("hessian diff: mode or dimension mismatch");
  }
  if (dim_ == 0) return 0.0;
  if (mode_ == HessianMode::kFull) {
    return (full_ - other.full_).cwiseAbs().maxCoeff();
  }
  return (diag_ - other.diag_).cwiseAbs().maxCoeff();
}

bool HessianStore::operator==(const HessianStore& other) const {
  if (mode_ != other.mode_ || dim_ != other.dim_) return false;
  if (mode_ == HessianMode::kFull) return full_ == other.full_;
  return diag_ == other.diag_;
}

}  // namespace mixstream
