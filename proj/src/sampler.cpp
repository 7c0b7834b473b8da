#include "mixstream/sampler.hpp"

#include "mixstream/incremental.hpp"
#include "mixstream/rng.hpp"

namespace mixstream {

Eigen::VectorXd thompson_sample(const CoefficientState& state, std::uint64_t seed) {
  const PosteriorCovariance cov = PosteriorCovariance::compute(state);
  CounterRng rng(seed);
  Eigen::VectorXd eps(cov.dim());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.next_normal();
  if (cov.mode() == HessianMode::kDiagonal) {
    return state.mean + cov.cholesky_lower().diagonal().cwiseProduct(eps);
  }
  return state.mean + cov.cholesky_lower() * eps;
}

double sampled_score(const GameModel& model, const Instance& inst,
                     std::uint64_t seed) {
  double s = fixed_score(model, inst);
  for (const auto& a : inst.re) {
    const Eigen::Index dim = model.schema.dim_for(a.re_type);
    if (a.features.min_dim() > dim) {
      throw DimensionError("random-effect feature index exceeds schema for " +
                           a.re_type);
    }
    const CoefficientState* state = model.find(a.key());
    CoefficientState cold;
    if (state == nullptr) {
      cold = CoefficientState::prior(HessianMode::kDiagonal, dim,
                                     model.prior_lambda);
      state = &cold;
    }
    const std::uint64_t sub_seed = derive_seed(seed, a.re_type, a.re_id);
    s += a.features.dot(thompson_sample(*state, sub_seed));
  }
  return s;
}

}  // namespace mixstream
