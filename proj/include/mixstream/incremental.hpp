#ifndef MIXSTREAM_INCREMENTAL_HPP
#define MIXSTREAM_INCREMENTAL_HPP

#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "mixstream/config.hpp"
#include "mixstream/game_model.hpp"
#include "mixstream/loss.hpp"

namespace mixstream {

// Posterior covariance (H + lambda I)^{-1}: Cholesky-backed in full mode,
// elementwise reciprocal in diagonal mode.
class PosteriorCovariance {
 public:
  static PosteriorCovariance compute(const CoefficientState& state);

  Eigen::Index dim() const { return dim_; }
  HessianMode mode() const { return mode_; }

  Eigen::MatrixXd dense() const;
  // L with L L^T = covariance; used by Thompson sampling.
  Eigen::MatrixXd cholesky_lower() const;
  double quad(const SparseVector& z) const;  // z^T Sigma z

 private:
  HessianMode mode_ = HessianMode::kFull;
  Eigen::Index dim_ = 0;
  Eigen::MatrixXd cov_;        // full mode
  Eigen::VectorXd diag_cov_;   // diagonal mode
};

struct IncrementalUpdateResult {
  CoefficientState state;  // new mean, new H, version + 1
  double batch_loss_before = 0.0;  // incremental objective at the old mean
  double batch_loss_after = 0.0;   // incremental objective at the new mean
};

// One mini-batch step: solve
//   argmin (delta/2) |b - mean|^2_H + f_t(b) + (lambda/2) |b|^2
// warm-started at the previous mean, then chain the Hessian,
//   H <- delta H + hessian_contrib(batch, new_mean).
// The lambda term is never folded into H. An empty batch is legal: H decays
// by delta and the mean re-solves the data-free objective, which keeps the
// update operator total for clocked experiments.
IncrementalUpdateResult incremental_update(const CoefficientState& state,
                                           std::span<const OffsetInstance> batch,
                                           const TrainerConfig& config);

// Per-step outcome of re-deriving the chained Hessian from scratch:
//   H_t == delta^t H_init + sum_k delta^{t-k} hessian_contrib(batch_k, mean_k).
struct ChainCheckReport {
  std::vector<double> per_step_max_diff;
  double max_diff = 0.0;

  bool ok(double tol) const { return max_diff <= tol; }
};

// Runs the incremental chain over the batches, then independently recomputes
// each step's Hessian from the recorded means and reports elementwise
// deviations.
ChainCheckReport chained_update_equivalence_check(
    const CoefficientState& initial,
    std::span<const std::vector<OffsetInstance>> batches,
    const TrainerConfig& config);

}  // namespace mixstream

#endif  // MIXSTREAM_INCREMENTAL_HPP
