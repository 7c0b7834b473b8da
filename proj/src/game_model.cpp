#include "mixstream/game_model.hpp"

#include "mixstream/errors.hpp"

namespace mixstream {

Eigen::Index ModelSchema::dim_for(const std::string& re_type) const {
  auto it = re_dims.find(re_type);
  if (it == re_dims.end()) {
    throw DimensionError("random-effect type not in schema: " + re_type);
  }
  return it->second;
}

double fixed_score(const GameModel& model, const Instance& inst) {
  if (inst.fixed_features.min_dim() > model.schema.fixed_dim) {
    throw DimensionError("fixed feature index exceeds schema dimension");
  }
  return inst.fixed_features.dot(model.fixed_coeffs);
}

double score(const GameModel& model, const Instance& inst) {
  double s = fixed_score(model, inst);
  for (const auto& a : inst.re) {
    const Eigen::Index d = model.schema.dim_for(a.re_type);
    if (a.features.min_dim() > d) {
      throw DimensionError("random-effect feature index exceeds schema for " +
                           a.re_type);
    }
    if (const CoefficientState* state = model.find(a.key())) {
      s += a.features.dot(state->mean);
    }
    // Unseen ids: zero prior mean, zero contribution.
  }
  return s;
}

}  // namespace mixstream
