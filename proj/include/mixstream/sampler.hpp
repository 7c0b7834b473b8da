#ifndef MIXSTREAM_SAMPLER_HPP
#define MIXSTREAM_SAMPLER_HPP

#include <cstdint>

#include <Eigen/Core>

#include "mixstream/game_model.hpp"
#include "mixstream/instance.hpp"

namespace mixstream {

// Draw from N(mean, (H + lambda I)^{-1}). Full mode maps iid normals through
// the Cholesky factor of the covariance; diagonal mode scales them
// coordinatewise. Deterministic given the seed.
Eigen::VectorXd thompson_sample(const CoefficientState& state, std::uint64_t seed);

// Deterministic fixed-effect score plus Thompson-sampled random-effect
// contributions. Entities without a stored state sample from the cold-start
// prior N(0, (prior_lambda I)^{-1}), which is what gives brand-new ids their
// exploratory spread. Per-assignment seeds are derived from
// (seed, re_type, re_id).
double sampled_score(const GameModel& model, const Instance& inst,
                     std::uint64_t seed);

}  // namespace mixstream

#endif  // MIXSTREAM_SAMPLER_HPP
