#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mixstream/incremental.hpp"
#include "mixstream/rng.hpp"
#include "mixstream/sampler.hpp"

using namespace mixstream;

namespace {

CoefficientState diag_state(Eigen::VectorXd mean, Eigen::VectorXd h, double lambda) {
  CoefficientState s;
  s.mean = std::move(mean);
  s.hessian = HessianStore::diagonal(std::move(h));
  s.lambda = lambda;
  return s;
}

}  // namespace

TEST_CASE("thompson_sample: same seed, same draw") {
  CoefficientState s = diag_state(Eigen::VectorXd::Zero(3),
                                  Eigen::VectorXd::Constant(3, 2.0), 1.0);
  CHECK(thompson_sample(s, 77) == thompson_sample(s, 77));
  CHECK(thompson_sample(s, 77) != thompson_sample(s, 78));
}

TEST_CASE("thompson_sample: vanishing covariance collapses onto the mean") {
  CoefficientState s = diag_state((Eigen::VectorXd(2) << 1.0, -2.0).finished(),
                                  Eigen::VectorXd::Zero(2), 1e12);
  Eigen::VectorXd draw = thompson_sample(s, 5);
  CHECK((draw - s.mean).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("thompson_sample: empirical moments match the posterior") {
  // d = 2, mean [1,-1], H = diag(3), lambda = 1 -> Sigma = 0.25 I.
  CoefficientState s = diag_state((Eigen::VectorXd(2) << 1.0, -1.0).finished(),
                                  Eigen::VectorXd::Constant(2, 3.0), 1.0);
  const int n = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd draw = thompson_sample(s, derive_seed(99, i));
    sum += draw;
    sum_sq += draw.cwiseAbs2();
  }
  Eigen::VectorXd mean = sum / n;
  Eigen::VectorXd var = sum_sq / n - mean.cwiseAbs2();
  CHECK(std::abs(mean[0] - 1.0) <= 0.02);
  CHECK(std::abs(mean[1] + 1.0) <= 0.02);
  CHECK(std::abs(var[0] - 0.25) <= 0.05 * 0.25);
  CHECK(std::abs(var[1] - 0.25) <= 0.05 * 0.25);
}

TEST_CASE("thompson_sample: affine reconstruction through the factor") {
  CounterRng seed_rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 3;
    Eigen::MatrixXd a(dim, dim);
    CounterRng rng(derive_seed(31, trial));
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) a(i, j) = rng.next_normal();
    }
    CoefficientState s;
    s.mean = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < dim; ++i) s.mean[i] = rng.next_normal();
    s.hessian = HessianStore::full((a * a.transpose()).eval());
    s.lambda = 0.7;

    const std::uint64_t seed = seed_rng.next_u64();
    const Eigen::VectorXd draw = thompson_sample(s, seed);

    const PosteriorCovariance cov = PosteriorCovariance::compute(s);
    const Eigen::MatrixXd l = cov.cholesky_lower();
    CHECK((l * l.transpose() - cov.dense()).cwiseAbs().maxCoeff() <= 1e-12);

    CounterRng replay(seed);
    Eigen::VectorXd eps(dim);
    for (int i = 0; i < dim; ++i) eps[i] = replay.next_normal();
    CHECK((draw - (s.mean + l * eps)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("new entities sample with strictly larger score variance") {
  SparseVector z = SparseVector::from_pairs({{0, 1.0}, {1, 0.5}});
  CoefficientState cold = diag_state(Eigen::VectorXd::Zero(2),
                                     Eigen::VectorXd::Zero(2), 1.0);
  CoefficientState warm = diag_state(Eigen::VectorXd::Zero(2),
                                     Eigen::VectorXd::Constant(2, 50.0), 1.0);
  const double var_cold = PosteriorCovariance::compute(cold).quad(z);
  const double var_warm = PosteriorCovariance::compute(warm).quad(z);
  CHECK(var_cold > var_warm);
}

TEST_CASE("sampled_score: no random effects means the deterministic score") {
  GameModel model;
  model.schema.fixed_dim = 2;
  model.fixed_coeffs = (Eigen::VectorXd(2) << 0.5, -1.0).finished();
  Instance inst;
  inst.fixed_features = SparseVector::from_pairs({{0, 2.0}, {1, 1.0}});
  CHECK(sampled_score(model, inst, 3) == score(model, inst));
}

TEST_CASE("sampled_score: zero-covariance limit equals the mean score") {
  GameModel model;
  model.schema.fixed_dim = 1;
  model.schema.re_dims["ad"] = 2;
  model.fixed_coeffs = Eigen::VectorXd::Zero(1);
  model.random_effects[{"ad", "a"}] = diag_state(
      (Eigen::VectorXd(2) << 0.3, 0.4).finished(), Eigen::VectorXd::Zero(2), 1e12);
  Instance inst;
  inst.fixed_features = SparseVector::from_pairs({{0, 1.0}});
  inst.re.push_back(ReAssignment{"ad", "a", SparseVector::from_pairs({{0, 1.0}, {1, 1.0}})});
  CHECK(std::abs(sampled_score(model, inst, 11) - score(model, inst)) <= 1e-5);
}

TEST_CASE("sampled_score: cold entity variance matches the quadratic form") {
  GameModel model;
  model.schema.fixed_dim = 1;
  model.schema.re_dims["ad"] = 2;
  model.fixed_coeffs = Eigen::VectorXd::Zero(1);
  model.prior_lambda = 1.0;

  Instance inst;
  inst.fixed_features = SparseVector{};
  SparseVector z = SparseVector::from_pairs({{0, 1.0}, {1, -0.5}});
  inst.re.push_back(ReAssignment{"ad", "new-ad", z});

  // H = 0, lambda = 1 -> Sigma = I, z^T Sigma z = 1.25.
  const double expected = 1.25;
  const int n = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = sampled_score(model, inst, derive_seed(123, i));
    sum += s;
    sum_sq += s * s;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(var - expected) <= 0.05 * expected);
}
