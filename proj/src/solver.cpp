#include "mixstream/solver.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "mixstream/errors.hpp"

namespace mixstream {

namespace {

constexpr double kArmijoC = 1e-4;
constexpr int kMaxBacktracks = 60;

Eigen::VectorXd objective_gradient(std::span<const OffsetInstance> batch,
                                   const Eigen::VectorXd& prior_mean,
                                   const HessianStore& prior_hessian,
                                   double delta_weight, double lambda,
                                   const Eigen::VectorXd& beta) {
  Eigen::VectorXd g = loss_gradient(batch, beta);
  if (delta_weight != 0.0) {
    g += delta_weight * prior_hessian.multiply(beta - prior_mean);
  }
  g += lambda * beta;
  return g;
}

}  // namespace

double entity_objective(std::span<const OffsetInstance> batch,
                        const Eigen::VectorXd& prior_mean,
                        const HessianStore& prior_hessian, double delta_weight,
                        double lambda, const Eigen::VectorXd& beta) {
  double obj = logloss(batch, beta);
  if (delta_weight != 0.0) {
    obj += 0.5 * delta_weight * prior_hessian.quad(beta - prior_mean);
  }
  obj += 0.5 * lambda * beta.squaredNorm();
  return obj;
}

SolveOutcome per_entity_solve(std::span<const OffsetInstance> batch,
                              const Eigen::VectorXd& prior_mean,
                              const HessianStore& prior_hessian,
                              double delta_weight, double lambda,
                              const TrainerConfig& config,
                              std::optional<Eigen::VectorXd> warm_start) {
  const Eigen::Index dim = prior_mean.size();
  if (delta_weight < 0.0) throw DataError("delta_weight must be >= 0");
  if (prior_hessian.dim() != dim) {
    throw DimensionError("prior hessian dimension does not match prior mean");
  }
  for (const OffsetInstance& inst : batch) {
    if (inst.features.min_dim() > dim) {
      throw DimensionError("batch feature index exceeds coefficient dimension");
    }
    if (!std::isfinite(inst.offset)) throw DataError("non-finite offset");
  }

  Eigen::VectorXd beta = warm_start ? std::move(*warm_start) : prior_mean;
  if (beta.size() != dim) throw DimensionError("warm start dimension mismatch");

  double obj = entity_objective(batch, prior_mean, prior_hessian, delta_weight,
                                lambda, beta);
  Eigen::VectorXd grad = objective_gradient(batch, prior_mean, prior_hessian,
                                            delta_weight, lambda, beta);
  double grad_norm = grad.norm();

  const bool full = config.hessian_mode == HessianMode::kFull;
  int iter = 0;
  for (; iter < config.solver_max_iter && grad_norm > config.solver_tol; ++iter) {
    Eigen::VectorXd direction(dim);
    if (full) {
      Eigen::MatrixXd h = hessian_contrib(batch, beta, HessianMode::kFull).dense();
      if (delta_weight != 0.0) h += delta_weight * prior_hessian.dense();
      h.diagonal().array() += lambda;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() != Eigen::Success) {
        throw NumericError("objective hessian factorization failed");
      }
      direction = -ldlt.solve(grad);
    } else {
      Eigen::VectorXd d =
          hessian_contrib(batch, beta, HessianMode::kDiagonal).diag_vector();
      if (delta_weight != 0.0) d += delta_weight * prior_hessian.diagonal_entries();
      d.array() += lambda;
      direction = -grad.cwiseQuotient(d);
    }

    const double slope = grad.dot(direction);
    // Near the optimum the predicted decrease drops below the objective's
    // ulp; the slack keeps the final Newton steps acceptable.
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() *
                         (std::abs(obj) + 1.0);
    double step = 1.0;
    Eigen::VectorXd candidate;
    double cand_obj = obj;
    bool accepted = false;
    for (int k = 0; k < kMaxBacktracks; ++k) {
      candidate = beta + step * direction;
      cand_obj = entity_objective(batch, prior_mean, prior_hessian,
                                  delta_weight, lambda, candidate);
      if (std::isfinite(cand_obj) &&
          cand_obj <= obj + kArmijoC * step * slope + slack) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search stalled; report via SolverError below

    beta = std::move(candidate);
    obj = cand_obj;
    grad = objective_gradient(batch, prior_mean, prior_hessian, delta_weight,
                              lambda, beta);
    grad_norm = grad.norm();
    if (!std::isfinite(obj) || !std::isfinite(grad_norm)) {
      throw NumericError("non-finite objective during solve");
    }
  }

  if (grad_norm > config.solver_tol) {
    throw SolverError("per-entity solve did not converge: grad norm " +
                          std::to_string(grad_norm) + " after " +
                          std::to_string(iter) + " iterations",
                      std::move(beta), grad_norm);
  }

  SolveOutcome out;
  out.data_hessian = hessian_contrib(batch, beta, config.hessian_mode);
  out.mean = std::move(beta);
  out.iterations = iter;
  out.grad_norm = grad_norm;
  return out;
}

}  // namespace mixstream
