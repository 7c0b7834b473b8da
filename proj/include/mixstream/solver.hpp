#ifndef MIXSTREAM_SOLVER_HPP
#define MIXSTREAM_SOLVER_HPP

#include <optional>
#include <span>

#include <Eigen/Core>

#include "mixstream/config.hpp"
#include "mixstream/game_model.hpp"
#include "mixstream/loss.hpp"

namespace mixstream {

struct SolveOutcome {
  Eigen::VectorXd mean;
  // Data curvature of the batch at the solution (prior and lambda excluded).
  HessianStore data_hessian;
  int iterations = 0;
  double grad_norm = 0.0;
};

// Minimizes
//   (delta_weight/2) (b - prior_mean)^T prior_H (b - prior_mean)
//     + logloss(batch, b) + (lambda/2) |b|^2
// to gradient norm <= config.solver_tol. Full mode runs damped Newton with
// Armijo backtracking; diagonal mode runs gradient descent preconditioned by
// the diagonal curvature. Shared by the offline batch path
// (prior_H = 0, delta_weight = 0) and the incremental path.
//
// Throws SolverError (carrying the last iterate and gradient norm) if the
// tolerance is not reached within config.solver_max_iter iterations.
SolveOutcome per_entity_solve(std::span<const OffsetInstance> batch,
                              const Eigen::VectorXd& prior_mean,
                              const HessianStore& prior_hessian,
                              double delta_weight, double lambda,
                              const TrainerConfig& config,
                              std::optional<Eigen::VectorXd> warm_start = {});

// Objective value of the problem above; exposed for tests and the
// incremental update's before/after bookkeeping.
double entity_objective(std::span<const OffsetInstance> batch,
                        const Eigen::VectorXd& prior_mean,
                        const HessianStore& prior_hessian, double delta_weight,
                        double lambda, const Eigen::VectorXd& beta);

}  // namespace mixstream

#endif  // MIXSTREAM_SOLVER_HPP
