#ifndef MIXSTREAM_EVALUATION_HPP
#define MIXSTREAM_EVALUATION_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixstream/config.hpp"
#include "mixstream/game_model.hpp"
#include "mixstream/instance.hpp"
#include "mixstream/loss.hpp"

namespace mixstream {

// Model-update strategies compared by the harness: no updates, ideal batch
// updates (zero training cost), real-world batch updates delayed by tau, and
// incremental updates every increment.
enum class Variant { kNU, kIBU, kRWBU, kLL };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct EvalConfig {
  std::int64_t delta_ms = 3600LL * 1000;  // increment duration
  std::int64_t tau_ms = 0;                // batch-training delay (RWBU)
  std::int64_t warm_start_ts = 0;         // cold/warm boundary
  Variant variant = Variant::kLL;
  double forgetting = 0.95;               // incremental forgetting factor
  HessianMode hessian_mode = HessianMode::kFull;
  // Batch (re)training looks back this far from its cutoff; 0 = unbounded.
  std::int64_t train_window_ms = 0;
  int max_increments = 0;                 // 0 = evaluate the whole warm span
  int rounds = 3;                         // backfitting rounds
  // Score with Thompson draws instead of posterior means. Offline AUC
  // defaults to means; sampling adds variance without changing expected
  // ranking quality.
  bool sampled_scoring = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Which model scores each increment, and what data that model may see.
struct IncrementPlan {
  int index = 0;
  std::int64_t eval_start = 0;   // inclusive
  std::int64_t eval_end = 0;     // exclusive
  std::int64_t train_cutoff = 0; // training data strictly before this
  int model_ref = 0;             // 0 = the cold base model
};

struct EvalPlan {
  Variant variant = Variant::kNU;
  std::vector<IncrementPlan> increments;
};

// NU scores everything with the base model; IBU retrains before every
// increment; RWBU_tau retrains on data older than eval_start - tau (clamped
// to the warm boundary); LL chains an incremental update after each
// increment.
EvalPlan plan_variant(const EvalConfig& config, std::int64_t total_warm_span_ms);

// Probability that a random positive outranks a random negative, ties 0.5;
// rank-sum formulation. Throws DataError when a class is missing.
double auc(std::span<const double> scores, std::span<const int> labels);

struct IncrementResult {
  int index = 0;
  std::int64_t start_ts = 0;
  double auc_value = 0.0;
  bool degenerate = false;  // single-class increment, flagged not scored
  int model_ref = 0;
};

struct EvalResult {
  Variant variant = Variant::kNU;
  std::vector<IncrementResult> series;
  double aggregate_auc = 0.0;  // pooled over all increments' (score, label)
  int increments = 0;
  EvalConfig config;           // run metadata
};

// Evaluate-then-train over the warm span. Scoring uses posterior means.
// When `base` is null the cold model is trained on the (windowed) data
// before warm_start_ts.
EvalResult run_eval(std::span<const Instance> instances, const ModelSchema& schema,
                    const EvalConfig& config, const TrainerConfig& trainer,
                    const GameModel* base = nullptr);

struct DecayPoint {
  int increment = 0;
  double nu_mean = 0.0, nu_lo = 0.0, nu_hi = 0.0;
  double ll_mean = 0.0, ll_lo = 0.0, ll_hi = 0.0;
};

struct DecayCurves {
  std::vector<DecayPoint> points;
  bool ci_defined = false;  // false when n_runs == 1 (width undefined)
  int n_runs = 0;
};

// Per-increment NU and LL curves averaged over runs anchored at random start
// times in [anchor_lo_ts, anchor_hi_ts]; 95% normal-approximation intervals.
DecayCurves decay_experiment(std::span<const Instance> instances,
                             const ModelSchema& schema, const EvalConfig& config,
                             const TrainerConfig& trainer, int horizon_increments,
                             int n_runs, std::uint64_t seed,
                             std::int64_t anchor_lo_ts, std::int64_t anchor_hi_ts);

struct SweepCell {
  double forgetting = 0.0;
  std::int64_t delta_ms = 0;
  double auc_raw = 0.0;
  double auc_scaled = 0.0;
  bool scaled_defined = false;  // false when the column has zero spread
};

// LL aggregate AUC over the (forgetting, increment-duration) grid, plus
// per-column z-scaling. Cells run across `n_threads` workers; the result is
// ordered by (forgetting, Delta).
std::vector<SweepCell> delta_sweep(std::span<const Instance> instances,
                                   const ModelSchema& schema,
                                   const EvalConfig& config,
                                   const TrainerConfig& trainer,
                                   std::span<const double> forgettings,
                                   std::span<const std::int64_t> deltas_ms,
                                   int n_threads = 1);

// A single-entity problem for the optimality-gap checks: a base batch
// standing in for the initial training set plus a chain of mini-batches.
struct TheoremProblem {
  std::vector<OffsetInstance> base;
  std::vector<std::vector<OffsetInstance>> batches;
};

struct GapStep {
  int t = 0;
  double gap = 0.0;        // F_t(beta0) - F_t(beta_t)
  double bound = 0.0;      // (lambda/2) |beta0 - beta_t|^2
  double gamma_bar = 0.0;  // max pairwise iterate distance
  bool pass = false;       // gap >= bound - c_cubic * gamma_bar^3
};

struct GapReport {
  std::vector<GapStep> steps;
  double c_cubic = 0.0;
  bool all_pass = true;
};

// Solves the base problem, runs the incremental chain, and evaluates the
// discounted cumulative loss exactly at the stale and incremental iterates.
// c_cubic absorbs the unstated constant of the cubic remainder.
GapReport theorem_gap_check(const TheoremProblem& problem,
                            const TrainerConfig& config, double c_cubic = 10.0);

// Stationary logistic data with a shared ground truth across base and
// batches; dimensions and sizes stay small so iterate drift is mild.
TheoremProblem make_random_theorem_problem(std::uint64_t seed, int max_dim = 4,
                                           int max_base = 50, int max_batch = 20,
                                           int n_batches = 3);

// CSV emission (schemas used by the CLI).
std::string series_csv(const EvalResult& result);
std::string sweep_csv(std::span<const SweepCell> cells);
std::string decay_csv(const DecayCurves& curves);
std::string theorem_csv(std::span<const GapReport> reports);

}  // namespace mixstream

#endif  // MIXSTREAM_EVALUATION_HPP
