#ifndef MIXSTREAM_GAME_MODEL_HPP
#define MIXSTREAM_GAME_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>

#include <Eigen/Core>

#include "mixstream/hessian.hpp"
#include "mixstream/instance.hpp"

namespace mixstream {

// Posterior state of one random-effect coefficient vector. `hessian` holds
// data curvature only; the served covariance is (H + lambda I)^{-1}.
struct CoefficientState {
  Eigen::VectorXd mean;
  HessianStore hessian;
  double lambda = 1.0;
  std::uint64_t version = 0;
  std::int64_t last_update_ts = 0;

  static CoefficientState prior(HessianMode mode, Eigen::Index dim, double lambda) {
    CoefficientState s;
    s.mean = Eigen::VectorXd::Zero(dim);
    s.hessian = HessianStore::zero(mode, dim);
    s.lambda = lambda;
    return s;
  }

  bool same_values(const CoefficientState& other) const {
    return mean == other.mean && hessian == other.hessian &&
           lambda == other.lambda && version == other.version &&
           last_update_ts == other.last_update_ts;
  }
};

// Feature dimensions declared up front. Fixed and random-effect feature
// indices live in independent namespaces; out-of-range indices are hard
// errors, never silent growth.
struct ModelSchema {
  Eigen::Index fixed_dim = 0;
  std::map<std::string, Eigen::Index> re_dims;

  Eigen::Index dim_for(const std::string& re_type) const;
};

// Stationary fixed-effect coefficients plus a keyed collection of
// per-entity coefficient states. The fixed part never changes during
// incremental training.
struct GameModel {
  ModelSchema schema;
  Eigen::VectorXd fixed_coeffs;
  std::map<EntityKey, CoefficientState> random_effects;
  double prior_lambda = 1.0;  // prior precision for entities not yet trained
  std::int64_t data_cutoff_ts = 0;  // exclusive upper bound of training data

  const CoefficientState* find(const EntityKey& key) const {
    auto it = random_effects.find(key);
    return it == random_effects.end() ? nullptr : &it->second;
  }
};

// s_n: fixed-effect score plus the sum of random-effect contributions.
// Unseen (type, id) pairs contribute zero (the zero prior mean).
double score(const GameModel& model, const Instance& inst);

// Fixed-effect part only.
double fixed_score(const GameModel& model, const Instance& inst);

}  // namespace mixstream

#endif  // MIXSTREAM_GAME_MODEL_HPP
