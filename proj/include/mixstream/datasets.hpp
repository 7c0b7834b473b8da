#ifndef MIXSTREAM_DATASETS_HPP
#define MIXSTREAM_DATASETS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mixstream/game_model.hpp"
#include "mixstream/instance.hpp"

namespace mixstream {

// 1 for ratings >= 4.0, else 0.
int binarize(double rating);

// Linear map of [t_min, t_max] onto [0, target_span_ms], rounded to the
// nearest millisecond. Default target is 14 days.
constexpr std::int64_t kFourteenDaysMs = 14LL * 24 * 3600 * 1000;
std::int64_t compress_time(std::int64_t ts, std::int64_t t_min, std::int64_t t_max,
                           std::int64_t target_span_ms = kFourteenDaysMs);

struct Rating {
  std::int64_t user_id;
  std::int64_t item_id;
  double rating;
  std::int64_t ts;  // original clock (seconds or ms, caller's choice)
};

// Sparse user x item ratings with contiguous internal indices.
struct RatingsMatrix {
  std::vector<std::int64_t> user_ids;  // internal index -> external id
  std::vector<std::int64_t> item_ids;
  std::vector<std::vector<std::pair<int, double>>> by_user;  // (item idx, rating)
  std::vector<std::vector<std::pair<int, double>>> by_item;  // (user idx, rating)

  static RatingsMatrix build(const std::vector<Rating>& ratings);
  int n_users() const { return static_cast<int>(user_ids.size()); }
  int n_items() const { return static_cast<int>(item_ids.size()); }
};

struct AlsFactors {
  Eigen::MatrixXd user_factors;  // n_users x rank
  Eigen::MatrixXd item_factors;  // n_items x rank
};

// Alternating ridge solves for sum_{(u,i)} (r_ui - p_u . q_i)^2
// + reg (|P|^2 + |Q|^2). Objective is non-increasing per half-iteration;
// iters = 0 returns the seeded random init.
AlsFactors als_factorize(const RatingsMatrix& ratings, int rank, double reg,
                         int iters, std::uint64_t seed);

double als_objective(const RatingsMatrix& ratings, const AlsFactors& f, double reg);

// userId,movieId,rating,timestamp with an optional header row. Errors name
// the 1-based line number.
std::vector<Rating> read_ratings_csv(const std::string& path);

// Optional desk-scale caps applied before factorization: keep the
// `max_users` / `max_items` most frequent ids (ties by id).
std::vector<Rating> cap_ratings(std::vector<Rating> ratings, int max_users,
                                int max_items);

struct MovieLensOutput {
  std::vector<Instance> instances;  // sorted by compressed timestamp
  ModelSchema schema;
  AlsFactors factors;
  RatingsMatrix matrix;
};

// Per rating: label = binarize(rating); fixed features = item latent factors
// at indices 0..rank-1 plus a bias term at index rank; one random-effect
// assignment per user over the same vector; timestamps compressed onto the
// target span.
MovieLensOutput build_movielens_instances(const std::vector<Rating>& ratings,
                                          int rank, double reg, int iters,
                                          std::uint64_t seed,
                                          std::int64_t target_span_ms = kFourteenDaysMs);

struct SynthParams {
  int n_entities = 100;
  int n_per_entity = 100;
  double drift_at = 0.5;       // fraction of each entity's sequence
  double drift_magnitude = 0.0;
  std::uint64_t seed = 1;
  int fixed_dim = 4;           // 3 random features + bias
  int re_dim = 3;
  bool one_hot = false;        // orthogonal one-hot random-effect features
  std::int64_t step_ms = 3600LL * 1000;  // one instance per entity per step
  double fixed_scale = 0.5;
  double entity_scale = 1.0;
};

struct TruthRecord {
  std::int64_t ts;
  std::string entity;
  double p;  // ground-truth click probability
};

struct SynthStream {
  std::vector<Instance> instances;  // chronological
  std::vector<TruthRecord> truth;
  ModelSchema schema;
  std::int64_t drift_ts = 0;  // first timestamp generated under drifted truth
};

// Per entity, logistic labels from a fixed ground-truth weight vector; at the
// drift point the vector is perturbed by drift_magnitude along a random unit
// direction. Deterministic given the seed.
SynthStream synth_drift_stream(const SynthParams& params);

}  // namespace mixstream

#endif  // MIXSTREAM_DATASETS_HPP
