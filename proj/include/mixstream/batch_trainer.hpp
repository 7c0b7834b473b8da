#ifndef MIXSTREAM_BATCH_TRAINER_HPP
#define MIXSTREAM_BATCH_TRAINER_HPP

#include <span>

#include "mixstream/config.hpp"
#include "mixstream/game_model.hpp"
#include "mixstream/instance.hpp"

namespace mixstream {

// Offline training of the initial model: alternating (backfitting) rounds,
// fixed effect first, then each random-effect type in sorted order. Each
// block is an L2-regularized logistic fit with every other block's score as
// offset. The returned coefficient states carry the data Hessian of their
// group evaluated at the fitted mean, ready to seed incremental updates.
GameModel train_batch(std::span<const Instance> data, const ModelSchema& schema,
                      const TrainerConfig& config, int rounds = 3);

// Re-fits only the random effects of `model` on `data`, holding the fixed
// coefficients stationary. Entities absent from `data` are dropped back to
// the prior (they are keyed off the data, not the previous model). Used by
// the batch arms of the evaluation harness.
void retrain_random_effects(GameModel& model, std::span<const Instance> data,
                            const TrainerConfig& config, int rounds = 1);

// Regularized negative log likelihood: data logloss plus (lambda/2)|b|^2 for
// the fixed block and every random-effect block.
double game_objective(const GameModel& model, std::span<const Instance> data,
                      const TrainerConfig& config);

}  // namespace mixstream

#endif  // MIXSTREAM_BATCH_TRAINER_HPP
