#ifndef MIXSTREAM_CONFIG_HPP
#define MIXSTREAM_CONFIG_HPP

#include <map>
#include <string>

#include "mixstream/errors.hpp"
#include "mixstream/hessian.hpp"

namespace mixstream {

struct TrainerConfig {
  double delta = 0.95;   // forgetting factor, (0,1]
  double lambda = 1.0;   // prior precision of N(0, lambda^{-1} I)
  HessianMode hessian_mode = HessianMode::kFull;
  double solver_tol = 1e-8;  // gradient-norm stopping tolerance
  int solver_max_iter = 100;
  // Optional per-type prior precision; falls back to `lambda`.
  std::map<std::string, double> lambda_per_type;

  double lambda_for(const std::string& re_type) const {
    auto it = lambda_per_type.find(re_type);
    return it == lambda_per_type.end() ? lambda : it->second;
  }

  void validate() const {
    if (!(delta > 0.0 && delta <= 1.0)) {
      throw DataError("delta must be in (0, 1]");
    }
    if (!(lambda > 0.0)) throw DataError("lambda must be positive");
    for (const auto& [type, l] : lambda_per_type) {
      if (!(l > 0.0)) throw DataError("lambda for type " + type + " must be positive");
    }
    if (!(solver_tol > 0.0)) throw DataError("solver_tol must be positive");
    if (solver_max_iter < 1) throw DataError("solver_max_iter must be >= 1");
  }
};

}  // namespace mixstream

#endif  // MIXSTREAM_CONFIG_HPP
