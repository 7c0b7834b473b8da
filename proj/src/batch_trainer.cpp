#include "mixstream/batch_trainer.hpp"

#include <cmath>
#include <map>
#include <vector>

#include "mixstream/errors.hpp"
#include "mixstream/loss.hpp"
#include "mixstream/solver.hpp"

namespace mixstream {

namespace {

// Score of every model part except the fixed effect.
double random_effect_score(const GameModel& model, const Instance& inst) {
  double s = 0.0;
  for (const auto& a : inst.re) {
    if (const CoefficientState* state = model.find(a.key())) {
      s += a.features.dot(state->mean);
    }
  }
  return s;
}

// Offset for entity (skip_type, *): everything but that type's contribution.
double offset_excluding_type(const GameModel& model, const Instance& inst,
                             const std::string& skip_type) {
  double s = fixed_score(model, inst);
  for (const auto& a : inst.re) {
    if (a.re_type == skip_type) continue;
    if (const CoefficientState* state = model.find(a.key())) {
      s += a.features.dot(state->mean);
    }
  }
  return s;
}

void fit_fixed_block(GameModel& model, std::span<const Instance> data,
                     const TrainerConfig& config) {
  std::vector<OffsetInstance> block;
  block.reserve(data.size());
  for (const Instance& inst : data) {
    block.push_back(OffsetInstance{random_effect_score(model, inst),
                                   inst.fixed_features, inst.label});
  }
  SolveOutcome fit = per_entity_solve(
      block, Eigen::VectorXd::Zero(model.schema.fixed_dim),
      HessianStore::zero(config.hessian_mode, model.schema.fixed_dim),
      /*delta_weight=*/0.0, config.lambda, config, model.fixed_coeffs);
  model.fixed_coeffs = std::move(fit.mean);
}

// One pass over all entities of one type. Entities of the same type never
// share instances, so the pass is a well-defined block-coordinate step.
void fit_type_block(GameModel& model, const std::string& re_type,
                    const std::map<EntityKey, std::vector<const Instance*>>& groups,
                    const TrainerConfig& config, bool final_pass) {
  const Eigen::Index dim = model.schema.dim_for(re_type);
  const double lambda = config.lambda_for(re_type);
  for (const auto& [key, members] : groups) {
    if (key.first != re_type) continue;
    std::vector<OffsetInstance> block;
    block.reserve(members.size());
    for (const Instance* inst : members) {
      block.push_back(
          OffsetInstance{offset_excluding_type(model, *inst, re_type),
                         inst->find_assignment(re_type)->features, inst->label});
    }
    auto it = model.random_effects.find(key);
    Eigen::VectorXd warm = it != model.random_effects.end()
                               ? it->second.mean
                               : Eigen::VectorXd::Zero(dim);
    SolveOutcome fit = per_entity_solve(
        block, Eigen::VectorXd::Zero(dim),
        HessianStore::zero(config.hessian_mode, dim),
        /*delta_weight=*/0.0, lambda, config, std::move(warm));
    CoefficientState& state = model.random_effects[key];
    state.mean = std::move(fit.mean);
    state.lambda = lambda;
    if (final_pass) {
      state.hessian = std::move(fit.data_hessian);
    } else if (state.hessian.dim() != dim) {
      state.hessian = HessianStore::zero(config.hessian_mode, dim);
    }
  }
}

std::map<EntityKey, std::vector<const Instance*>> group_by_entity(
    std::span<const Instance> data, const ModelSchema& schema) {
  std::map<EntityKey, std::vector<const Instance*>> groups;
  for (const Instance& inst : data) {
    inst.validate();
    if (inst.fixed_features.min_dim() > schema.fixed_dim) {
      throw DimensionError("fixed feature index exceeds schema dimension");
    }
    for (const auto& a : inst.re) {
      if (a.features.min_dim() > schema.dim_for(a.re_type)) {
        throw DimensionError("random-effect feature index exceeds schema for " +
                             a.re_type);
      }
      groups[a.key()].push_back(&inst);
    }
  }
  return groups;
}

}  // namespace

double game_objective(const GameModel& model, std::span<const Instance> data,
                      const TrainerConfig& config) {
  double obj = 0.0;
  for (const Instance& inst : data) {
    const double s = score(model, inst);
    obj += softplus(s) - static_cast<double>(inst.label) * s;
  }
  obj += 0.5 * config.lambda * model.fixed_coeffs.squaredNorm();
  for (const auto& [key, state] : model.random_effects) {
    obj += 0.5 * config.lambda_for(key.first) * state.mean.squaredNorm();
  }
  return obj;
}

GameModel train_batch(std::span<const Instance> data, const ModelSchema& schema,
                      const TrainerConfig& config, int rounds) {
  config.validate();
  if (data.empty()) throw DataError("train_batch: empty training data");
  if (rounds < 1) throw DataError("train_batch: rounds must be >= 1");

  GameModel model;
  model.schema = schema;
  model.fixed_coeffs = Eigen::VectorXd::Zero(schema.fixed_dim);
  model.prior_lambda = config.lambda;

  auto groups = group_by_entity(data, schema);

  for (int round = 0; round < rounds; ++round) {
    const bool last = round + 1 == rounds;
    fit_fixed_block(model, data, config);
    for (const auto& [type, dim] : schema.re_dims) {
      (void)dim;
      fit_type_block(model, type, groups, config, last);
    }
    const double obj = game_objective(model, data, config);
    if (!std::isfinite(obj)) {
      throw NumericError("non-finite objective after backfitting round");
    }
  }
  return model;
}

void retrain_random_effects(GameModel& model, std::span<const Instance> data,
                            const TrainerConfig& config, int rounds) {
  config.validate();
  if (rounds < 1) throw DataError("retrain_random_effects: rounds must be >= 1");
  auto groups = group_by_entity(data, model.schema);
  model.random_effects.clear();
  for (int round = 0; round < rounds; ++round) {
    const bool last = round + 1 == rounds;
    for (const auto& [type, dim] : model.schema.re_dims) {
      (void)dim;
      fit_type_block(model, type, groups, config, last);
    }
  }
}

}  // namespace mixstream
