#include "mixstream/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Cholesky>

#include "mixstream/errors.hpp"
#include "mixstream/loss.hpp"
#include "mixstream/rng.hpp"

namespace mixstream {

int binarize(double rating) {
  if (!std::isfinite(rating)) throw DataError("non-finite rating");
  return rating >= 4.0 ? 1 : 0;
}

std::int64_t compress_time(std::int64_t ts, std::int64_t t_min, std::int64_t t_max,
                           std::int64_t target_span_ms) {
  if (t_min >= t_max) throw DataError("compress_time: t_min must be < t_max");
  if (ts < t_min || ts > t_max) {
    throw DataError("compress_time: timestamp outside [t_min, t_max]");
  }
  const __int128 num = static_cast<__int128>(ts - t_min) * target_span_ms;
  const __int128 den = t_max - t_min;
  return static_cast<std::int64_t>((num + den / 2) / den);
}

RatingsMatrix RatingsMatrix::build(const std::vector<Rating>& ratings) {
  RatingsMatrix m;
  std::map<std::int64_t, int> user_index;
  std::map<std::int64_t, int> item_index;
  for (const Rating& r : ratings) {
    user_index.emplace(r.user_id, 0);
    item_index.emplace(r.item_id, 0);
  }
  for (auto& [id, idx] : user_index) {
    idx = static_cast<int>(m.user_ids.size());
    m.user_ids.push_back(id);
  }
  for (auto& [id, idx] : item_index) {
    idx = static_cast<int>(m.item_ids.size());
    m.item_ids.push_back(id);
  }
  m.by_user.resize(m.user_ids.size());
  m.by_item.resize(m.item_ids.size());
  for (const Rating& r : ratings) {
    const int u = user_index[r.user_id];
    const int i = item_index[r.item_id];
    m.by_user[u].emplace_back(i, r.rating);
    m.by_item[i].emplace_back(u, r.rating);
  }
  return m;
}

double als_objective(const RatingsMatrix& ratings, const AlsFactors& f, double reg) {
  double obj = 0.0;
  for (int u = 0; u < ratings.n_users(); ++u) {
    for (const auto& [i, r] : ratings.by_user[u]) {
      const double e = r - f.user_factors.row(u).dot(f.item_factors.row(i));
      obj += e * e;
    }
  }
  obj += reg * (f.user_factors.squaredNorm() + f.item_factors.squaredNorm());
  return obj;
}

namespace {

// One ridge half-iteration: re-solve every row of `target` given `other`.
void als_half_step(const std::vector<std::vector<std::pair<int, double>>>& groups,
                   const Eigen::MatrixXd& other, double reg,
                   Eigen::MatrixXd& target) {
  const int rank = static_cast<int>(other.cols());
  Eigen::MatrixXd gram(rank, rank);
  Eigen::VectorXd rhs(rank);
  for (std::size_t row = 0; row < groups.size(); ++row) {
    gram.setZero();
    rhs.setZero();
    for (const auto& [j, r] : groups[row]) {
      gram.noalias() += other.row(j).transpose() * other.row(j);
      rhs.noalias() += r * other.row(j).transpose();
    }
    gram.diagonal().array() += reg;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw NumericError("singular ridge system in ALS (reg too small?)");
    }
    target.row(row) = llt.solve(rhs).transpose();
  }
}

}  // namespace

AlsFactors als_factorize(const RatingsMatrix& ratings, int rank, double reg,
                         int iters, std::uint64_t seed) {
  if (rank < 1) throw DataError("ALS rank must be >= 1");
  for (int u = 0; u < ratings.n_users(); ++u) {
    if (ratings.by_user[u].empty()) throw DataError("ALS: user with no ratings");
  }
  for (int i = 0; i < ratings.n_items(); ++i) {
    if (ratings.by_item[i].empty()) throw DataError("ALS: item with no ratings");
  }

  AlsFactors f;
  CounterRng rng(derive_seed(seed, "als-init"));
  f.user_factors.resize(ratings.n_users(), rank);
  f.item_factors.resize(ratings.n_items(), rank);
  for (int u = 0; u < ratings.n_users(); ++u) {
    for (int k = 0; k < rank; ++k) f.user_factors(u, k) = 0.1 * rng.next_normal();
  }
  for (int i = 0; i < ratings.n_items(); ++i) {
    for (int k = 0; k < rank; ++k) f.item_factors(i, k) = 0.1 * rng.next_normal();
  }

  for (int it = 0; it < iters; ++it) {
    als_half_step(ratings.by_user, f.item_factors, reg, f.user_factors);
    als_half_step(ratings.by_item, f.user_factors, reg, f.item_factors);
  }
  return f;
}

std::vector<Rating> read_ratings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file: " + path);
  std::vector<Rating> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("userId", 0) == 0) continue;  // header
    std::istringstream ss(line);
    std::string field;
    Rating r{};
    try {
      if (!std::getline(ss, field, ',')) throw DataError("missing userId");
      r.user_id = std::stoll(field);
      if (!std::getline(ss, field, ',')) throw DataError("missing movieId");
      r.item_id = std::stoll(field);
      if (!std::getline(ss, field, ',')) throw DataError("missing rating");
      r.rating = std::stod(field);
      if (!std::getline(ss, field, ',')) throw DataError("missing timestamp");
      r.ts = std::stoll(field);
    } catch (const std::exception& e) {
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": malformed rating row (" + e.what() + ")");
    }
    out.push_back(r);
  }
  if (out.empty()) throw DataError("no ratings in " + path);
  return out;
}

std::vector<Rating> cap_ratings(std::vector<Rating> ratings, int max_users,
                                int max_items) {
  auto top_ids = [](std::map<std::int64_t, int>& counts, int cap) {
    std::vector<std::pair<std::int64_t, int>> items(counts.begin(), counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::map<std::int64_t, int> keep;
    for (int i = 0; i < cap && i < static_cast<int>(items.size()); ++i) {
      keep.emplace(items[i].first, 0);
    }
    return keep;
  };

  if (max_users > 0) {
    std::map<std::int64_t, int> counts;
    for (const Rating& r : ratings) counts[r.user_id]++;
    auto keep = top_ids(counts, max_users);
    std::erase_if(ratings, [&keep](const Rating& r) { return !keep.count(r.user_id); });
  }
  if (max_items > 0) {
    std::map<std::int64_t, int> counts;
    for (const Rating& r : ratings) counts[r.item_id]++;
    auto keep = top_ids(counts, max_items);
    std::erase_if(ratings, [&keep](const Rating& r) { return !keep.count(r.item_id); });
  }
  return ratings;
}

MovieLensOutput build_movielens_instances(const std::vector<Rating>& ratings,
                                          int rank, double reg, int iters,
                                          std::uint64_t seed,
                                          std::int64_t target_span_ms) {
  if (ratings.empty()) throw DataError("no ratings to transform");
  MovieLensOutput out;
  out.matrix = RatingsMatrix::build(ratings);
  out.factors = als_factorize(out.matrix, rank, reg, iters, seed);

  std::map<std::int64_t, int> item_index;
  for (int i = 0; i < out.matrix.n_items(); ++i) {
    item_index[out.matrix.item_ids[i]] = i;
  }

  std::int64_t t_min = ratings.front().ts;
  std::int64_t t_max = ratings.front().ts;
  for (const Rating& r : ratings) {
    t_min = std::min(t_min, r.ts);
    t_max = std::max(t_max, r.ts);
  }
  if (t_min == t_max) t_max = t_min + 1;  // degenerate single-timestamp input

  const Eigen::Index dim = rank + 1;  // latent factors + bias
  out.schema.fixed_dim = dim;
  out.schema.re_dims["user"] = dim;

  out.instances.reserve(ratings.size());
  for (const Rating& r : ratings) {
    auto it = item_index.find(r.item_id);
    if (it == item_index.end()) throw DataError("unknown item id");
    Eigen::VectorXd features(dim);
    features.head(rank) = out.factors.item_factors.row(it->second).transpose();
    features[rank] = 1.0;  // bias
    SparseVector z = SparseVector::from_dense(features);
    Instance inst;
    inst.ts_ms = compress_time(r.ts, t_min, t_max, target_span_ms);
    inst.label = binarize(r.rating);
    inst.fixed_features = z;
    inst.re.push_back(ReAssignment{"user", std::to_string(r.user_id), z});
    out.instances.push_back(std::move(inst));
  }
  std::stable_sort(out.instances.begin(), out.instances.end(),
                   [](const Instance& a, const Instance& b) { return a.ts_ms < b.ts_ms; });
  return out;
}

SynthStream synth_drift_stream(const SynthParams& params) {
  if (params.n_entities < 1 || params.n_per_entity < 1) {
    throw DataError("synth stream needs positive entity and instance counts");
  }
  if (!(params.drift_at > 0.0 && params.drift_at < 1.0)) {
    throw DataError("drift_at must be in (0, 1)");
  }

  SynthStream out;
  out.schema.fixed_dim = params.fixed_dim;
  out.schema.re_dims["entity"] = params.re_dim;

  Eigen::VectorXd fixed_truth(params.fixed_dim);
  {
    CounterRng rng(derive_seed(params.seed, "fixed-truth"));
    for (int k = 0; k < params.fixed_dim; ++k) {
      fixed_truth[k] = params.fixed_scale * rng.next_normal();
    }
  }

  struct EntityTruth {
    Eigen::VectorXd before;
    Eigen::VectorXd after;
  };
  std::vector<EntityTruth> truths(params.n_entities);
  for (int e = 0; e < params.n_entities; ++e) {
    CounterRng rng(derive_seed(params.seed, "entity-truth", std::to_string(e)));
    EntityTruth& t = truths[e];
    t.before.resize(params.re_dim);
    for (int k = 0; k < params.re_dim; ++k) {
      t.before[k] = params.entity_scale * rng.next_normal();
    }
    Eigen::VectorXd direction(params.re_dim);
    for (int k = 0; k < params.re_dim; ++k) direction[k] = rng.next_normal();
    const double norm = direction.norm();
    if (norm > 0.0) direction /= norm;
    t.after = t.before + params.drift_magnitude * direction;
  }

  const int drift_index =
      static_cast<int>(std::floor(params.drift_at * params.n_per_entity));
  out.drift_ts = static_cast<std::int64_t>(drift_index) * params.step_ms;

  CounterRng label_rng(derive_seed(params.seed, "labels"));
  CounterRng feature_rng(derive_seed(params.seed, "features"));
  out.instances.reserve(static_cast<std::size_t>(params.n_entities) *
                        params.n_per_entity);
  for (int j = 0; j < params.n_per_entity; ++j) {
    for (int e = 0; e < params.n_entities; ++e) {
      const std::int64_t ts =
          static_cast<std::int64_t>(j) * params.step_ms +
          static_cast<std::int64_t>(e) * params.step_ms / params.n_entities;

      Eigen::VectorXd x(params.fixed_dim);
      for (int k = 0; k < params.fixed_dim - 1; ++k) x[k] = feature_rng.next_normal();
      x[params.fixed_dim - 1] = 1.0;  // bias

      Eigen::VectorXd z(params.re_dim);
      if (params.one_hot) {
        z.setZero();
        z[j % params.re_dim] = 1.0;
      } else {
        for (int k = 0; k < params.re_dim - 1; ++k) z[k] = feature_rng.next_normal();
        z[params.re_dim - 1] = 1.0;  // per-entity intercept
      }

      const Eigen::VectorXd& w =
          j >= drift_index ? truths[e].after : truths[e].before;
      const double p = sigmoid(x.dot(fixed_truth) + z.dot(w));
      const int label = label_rng.next_double() < p ? 1 : 0;

      Instance inst;
      inst.ts_ms = ts;
      inst.label = label;
      inst.fixed_features = SparseVector::from_dense(x);
      inst.re.push_back(
          ReAssignment{"entity", std::to_string(e), SparseVector::from_dense(z)});
      out.instances.push_back(std::move(inst));
      out.truth.push_back(TruthRecord{ts, std::to_string(e), p});
    }
  }
  return out;
}

}  // namespace mixstream
