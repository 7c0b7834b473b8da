#include "mixstream/loss.hpp"

#include <cmath>

namespace mixstream {

namespace {
constexpr double kScoreClamp = 700.0;

double clamp_score(double s) {
  if (s > kScoreClamp) return kScoreClamp;
  if (s < -kScoreClamp) return -kScoreClamp;
  return s;
}
}  // namespace

double sigmoid(double s) {
  s = clamp_score(s);
  if (s >= 0.0) {
    return 1.0 / (1.0 + std::exp(-s));
  }
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double softplus(double s) {
  s = clamp_score(s);
  if (s > 0.0) return s + std::log1p(std::exp(-s));
  return std::log1p(std::exp(s));
}

double logloss(std::span<const OffsetInstance> batch, const Eigen::VectorXd& beta) {
  double acc = 0.0;
  for (const OffsetInstance& inst : batch) {
    const double s = inst.offset + inst.features.dot(beta);
    // -y log(sigma) - (1-y) log(1-sigma) == softplus(s) - y*s
    acc += softplus(s) - static_cast<double>(inst.label) * clamp_score(s);
  }
  return acc;
}

Eigen::VectorXd loss_gradient(std::span<const OffsetInstance> batch,
                              const Eigen::VectorXd& beta) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(beta.size());
  for (const OffsetInstance& inst : batch) {
    const double s = inst.offset + inst.features.dot(beta);
    inst.features.add_scaled_to(sigmoid(s) - inst.label, g);
  }
  return g;
}

HessianStore hessian_contrib(std::span<const OffsetInstance> batch,
                             const Eigen::VectorXd& beta, HessianMode mode) {
  HessianStore h = HessianStore::zero(mode, beta.size());
  for (const OffsetInstance& inst : batch) {
    const double p = sigmoid(inst.offset + inst.features.dot(beta));
    h.add_outer(p * (1.0 - p), inst.features);
  }
  return h;
}

}  // namespace mixstream
