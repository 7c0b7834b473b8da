#include "mixstream/incremental.hpp"

#include <cmath>

#include "mixstream/errors.hpp"
#include "mixstream/solver.hpp"

namespace mixstream {

PosteriorCovariance PosteriorCovariance::compute(const CoefficientState& state) {
  if (!(state.lambda > 0.0)) throw DataError("lambda must be positive");
  PosteriorCovariance out;
  out.mode_ = state.hessian.mode();
  out.dim_ = state.hessian.dim();
  if (out.mode_ == HessianMode::kDiagonal) {
    out.diag_cov_ =
        (state.hessian.diag_vector().array() + state.lambda).inverse().matrix();
    if (!(out.diag_cov_.array() > 0.0).all()) {
      throw NumericError("posterior precision has non-positive diagonal");
    }
    return out;
  }
  Eigen::MatrixXd precision = state.hessian.full_matrix();
  precision.diagonal().array() += state.lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericError(
        "posterior precision not positive definite (trace " +
        std::to_string(precision.trace()) + ", min diag " +
        std::to_string(precision.diagonal().minCoeff()) + ")");
  }
  out.cov_ = llt.solve(Eigen::MatrixXd::Identity(out.dim_, out.dim_));
  return out;
}

Eigen::MatrixXd PosteriorCovariance::dense() const {
  if (mode_ == HessianMode::kDiagonal) {
    return diag_cov_.asDiagonal();
  }
  return cov_;
}

Eigen::MatrixXd PosteriorCovariance::cholesky_lower() const {
  if (mode_ == HessianMode::kDiagonal) {
    return diag_cov_.cwiseSqrt().asDiagonal();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw NumericError("covariance Cholesky failed");
  }
  return llt.matrixL();
}

double PosteriorCovariance::quad(const SparseVector& z) const {
  if (z.min_dim() > dim_) {
    throw DimensionError("feature index out of range in covariance quad form");
  }
  if (mode_ == HessianMode::kDiagonal) {
    double acc = 0.0;
    for (const auto& [i, v] : z.entries()) acc += v * v * diag_cov_[i];
    return acc;
  }
  double acc = 0.0;
  for (const auto& [i, vi] : z.entries()) {
    for (const auto& [j, vj] : z.entries()) acc += vi * vj * cov_(i, j);
  }
  return acc;
}

IncrementalUpdateResult incremental_update(const CoefficientState& state,
                                           std::span<const OffsetInstance> batch,
                                           const TrainerConfig& config) {
  config.validate();
  if (state.hessian.mode() != config.hessian_mode) {
    throw DimensionError("coefficient state stores a " +
                         to_string(state.hessian.mode()) +
                         " hessian but the update runs in " +
                         to_string(config.hessian_mode) + " mode");
  }
  const double delta = config.delta;
  const double lambda = state.lambda;

  IncrementalUpdateResult out;
  out.batch_loss_before = entity_objective(batch, state.mean, state.hessian,
                                           delta, lambda, state.mean);
  SolveOutcome solved = per_entity_solve(batch, state.mean, state.hessian,
                                         delta, lambda, config, state.mean);
  out.batch_loss_after = entity_objective(batch, state.mean, state.hessian,
                                          delta, lambda, solved.mean);

  out.state.mean = std::move(solved.mean);
  out.state.hessian = state.hessian;
  out.state.hessian.scale(delta);
  out.state.hessian.add(solved.data_hessian);
  out.state.lambda = lambda;
  out.state.version = state.version + 1;
  out.state.last_update_ts = state.last_update_ts;
  return out;
}

ChainCheckReport chained_update_equivalence_check(
    const CoefficientState& initial,
    std::span<const std::vector<OffsetInstance>> batches,
    const TrainerConfig& config) {
  ChainCheckReport report;
  CoefficientState state = initial;
  std::vector<Eigen::VectorXd> means;
  means.reserve(batches.size());

  std::vector<HessianStore> chained;
  for (const auto& batch : batches) {
    state = incremental_update(state, batch, config).state;
    means.push_back(state.mean);
    chained.push_back(state.hessian);
  }

  // Independent recomputation from the recorded means.
  for (std::size_t t = 0; t < batches.size(); ++t) {
    HessianStore expected = initial.hessian;
    expected.scale(std::pow(config.delta, static_cast<double>(t + 1)));
    for (std::size_t k = 0; k <= t; ++k) {
      HessianStore contrib =
          hessian_contrib(batches[k], means[k], config.hessian_mode);
      contrib.scale(std::pow(config.delta, static_cast<double>(t - k)));
      expected.add(contrib);
    }
    const double diff = chained[t].max_abs_diff(expected);
    report.per_step_max_diff.push_back(diff);
    report.max_diff = std::max(report.max_diff, diff);
  }
  return report;
}

}  // namespace mixstream
