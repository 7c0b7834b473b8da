#ifndef MIXSTREAM_LOSS_HPP
#define MIXSTREAM_LOSS_HPP

#include <span>

#include <Eigen/Core>

#include "mixstream/hessian.hpp"
#include "mixstream/sparse_vector.hpp"

namespace mixstream {

// One observation reduced to the coordinate system of a single
// random-effect solve: the frozen score of every other model part (offset),
// the active effect's features, and the label.
struct OffsetInstance {
  double offset = 0.0;
  SparseVector features;
  int label = 0;
};

// 1/(1+e^{-s}); the argument is clamped to [-700, 700] before
// exponentiation so saturated scores stay finite.
double sigmoid(double s);

// log(1 + e^{s}) via the log1p form stable for either sign.
double softplus(double s);

// Sum over the batch of -log p(y_n | offset_n + z_n . beta) under the
// Bernoulli-logistic likelihood with labels in {0,1}.
double logloss(std::span<const OffsetInstance> batch, const Eigen::VectorXd& beta);

// Gradient of logloss: sum (sigmoid(s_n) - y_n) z_n.
Eigen::VectorXd loss_gradient(std::span<const OffsetInstance> batch,
                              const Eigen::VectorXd& beta);

// Data curvature: sum w_n z_n z_n^T with w_n = sigmoid(s_n)(1 - sigmoid(s_n)).
// Diagonal mode keeps only the diagonal of each term.
HessianStore hessian_contrib(std::span<const OffsetInstance> batch,
                             const Eigen::VectorXd& beta, HessianMode mode);

}  // namespace mixstream

#endif  // MIXSTREAM_LOSS_HPP
