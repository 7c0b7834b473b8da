#include "mixstream/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "mixstream/batch_trainer.hpp"
#include "mixstream/errors.hpp"
#include "mixstream/incremental.hpp"
#include "mixstream/rng.hpp"
#include "mixstream/sampler.hpp"
#include "mixstream/solver.hpp"
#include "mixstream/stream_engine.hpp"

namespace mixstream {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kNU: return "nu";
    case Variant::kIBU: return "ibu";
    case Variant::kRWBU: return "rwbu";
    case Variant::kLL: return "ll";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "nu") return Variant::kNU;
  if (s == "ibu") return Variant::kIBU;
  if (s == "rwbu") return Variant::kRWBU;
  if (s == "ll") return Variant::kLL;
  throw DataError("unknown variant: " + s);
}

void EvalConfig::validate() const {
  if (delta_ms <= 0) throw DataError("increment duration must be positive");
  if (tau_ms < 0) throw DataError("tau must be >= 0");
  if (tau_ms > 0 && variant != Variant::kRWBU) {
    throw DataError("tau is only meaningful for the rwbu variant");
  }
  if (!(forgetting > 0.0 && forgetting <= 1.0)) {
    throw DataError("forgetting factor must be in (0, 1]");
  }
  if (train_window_ms < 0) throw DataError("train window must be >= 0");
  if (max_increments < 0) throw DataError("max_increments must be >= 0");
  if (rounds < 1) throw DataError("rounds must be >= 1");
}

EvalPlan plan_variant(const EvalConfig& config, std::int64_t total_warm_span_ms) {
  config.validate();
  if (total_warm_span_ms < config.delta_ms) {
    throw DataError("warm span shorter than one increment");
  }
  const std::int64_t delta = config.delta_ms;
  int n_inc = static_cast<int>((total_warm_span_ms + delta - 1) / delta);
  if (config.max_increments > 0) n_inc = std::min(n_inc, config.max_increments);

  EvalPlan plan;
  plan.variant = config.variant;
  std::map<std::int64_t, int> cutoff_refs;  // distinct retrain cutoffs
  for (int i = 0; i < n_inc; ++i) {
    IncrementPlan inc;
    inc.index = i;
    inc.eval_start = config.warm_start_ts + i * delta;
    inc.eval_end = inc.eval_start + delta;
    switch (config.variant) {
      case Variant::kNU:
        inc.train_cutoff = config.warm_start_ts;
        inc.model_ref = 0;
        break;
      case Variant::kIBU:
      case Variant::kRWBU: {
        const std::int64_t tau = config.variant == Variant::kIBU ? 0 : config.tau_ms;
        inc.train_cutoff = std::max(config.warm_start_ts, inc.eval_start - tau);
        if (inc.train_cutoff <= config.warm_start_ts) {
          inc.model_ref = 0;  // clamped to the cold model
        } else {
          auto [it, inserted] = cutoff_refs.emplace(
              inc.train_cutoff, static_cast<int>(cutoff_refs.size()) + 1);
          (void)inserted;
          inc.model_ref = it->second;
        }
        break;
      }
      case Variant::kLL:
        inc.train_cutoff = inc.eval_start;  // chain has seen prior increments
        inc.model_ref = i;
        break;
    }
    if (inc.train_cutoff > inc.eval_start) {
      throw NumericError("plan would train on the evaluation window");
    }
    plan.increments.push_back(inc);
  }
  return plan;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("auc: scores and labels differ in length");
  }
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auc: labels must be 0/1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("auc: needs at least one positive and one negative label");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // 1-based ranks i+1 .. j+1 share the average rank.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double u = pos_rank_sum -
                   0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

struct WarmLayout {
  std::size_t warm_begin = 0;       // index of first warm instance
  std::int64_t t_end = 0;           // exclusive upper timestamp
  std::int64_t warm_span = 0;
};

WarmLayout split_warm(std::span<const Instance> instances,
                      const EvalConfig& config) {
  if (instances.empty()) throw DataError("no instances to evaluate");
  std::int64_t prev = instances.front().ts_ms;
  for (const Instance& inst : instances) {
    if (inst.ts_ms < prev) throw DataError("instances not sorted by timestamp");
    prev = inst.ts_ms;
  }
  WarmLayout layout;
  while (layout.warm_begin < instances.size() &&
         instances[layout.warm_begin].ts_ms < config.warm_start_ts) {
    ++layout.warm_begin;
  }
  if (layout.warm_begin == instances.size()) {
    throw DataError("warm split degenerate: no instances after warm_start_ts");
  }
  layout.t_end = instances.back().ts_ms + 1;
  layout.warm_span = layout.t_end - config.warm_start_ts;
  return layout;
}

// Instances with ts in [lo, hi); instances are sorted so this is a range.
std::span<const Instance> time_slice(std::span<const Instance> instances,
                                     std::int64_t lo, std::int64_t hi) {
  auto begin = std::lower_bound(
      instances.begin(), instances.end(), lo,
      [](const Instance& inst, std::int64_t t) { return inst.ts_ms < t; });
  auto end = std::lower_bound(
      instances.begin(), instances.end(), hi,
      [](const Instance& inst, std::int64_t t) { return inst.ts_ms < t; });
  return instances.subspan(static_cast<std::size_t>(begin - instances.begin()),
                           static_cast<std::size_t>(end - begin));
}

TrainerConfig effective_trainer(const EvalConfig& config, const TrainerConfig& trainer) {
  TrainerConfig t = trainer;
  t.delta = config.forgetting;
  t.hessian_mode = config.hessian_mode;
  return t;
}

GameModel train_base_model(std::span<const Instance> instances,
                           const ModelSchema& schema, const EvalConfig& config,
                           const TrainerConfig& trainer) {
  const std::int64_t lo = config.train_window_ms > 0
                              ? config.warm_start_ts - config.train_window_ms
                              : INT64_MIN;
  std::span<const Instance> cold = time_slice(instances, lo, config.warm_start_ts);
  if (cold.empty()) throw DataError("empty training window before warm start");
  GameModel base = train_batch(cold, schema, effective_trainer(config, trainer),
                               config.rounds);
  base.data_cutoff_ts = config.warm_start_ts;
  return base;
}

// One incremental pass over the increment's data: per-entity mini-batches in
// key order, offsets from the current model, states updated in place.
void ll_update_on_increment(GameModel& model, std::span<const Instance> increment,
                            const TrainerConfig& trainer) {
  std::map<EntityKey, MiniBatch> batches;
  for (const Instance& inst : increment) {
    for (const auto& a : inst.re) {
      MiniBatch& b = batches[a.key()];
      if (b.instances.empty()) {
        b.re_type = a.re_type;
        b.re_id = a.re_id;
      }
      b.instances.push_back(inst);
    }
  }
  for (auto& [key, batch] : batches) {
    std::vector<OffsetInstance> offsets = compute_offsets(model, batch);
    auto it = model.random_effects.find(key);
    CoefficientState state =
        it != model.random_effects.end()
            ? it->second
            : CoefficientState::prior(trainer.hessian_mode,
                                      model.schema.dim_for(key.first),
                                      trainer.lambda_for(key.first));
    IncrementalUpdateResult result = incremental_update(state, offsets, trainer);
    result.state.last_update_ts = batch.last_ts();
    model.random_effects[key] = std::move(result.state);
  }
}

}  // namespace

EvalResult run_eval(std::span<const Instance> instances, const ModelSchema& schema,
                    const EvalConfig& config, const TrainerConfig& trainer,
                    const GameModel* base) {
  config.validate();
  const WarmLayout layout = split_warm(instances, config);
  const TrainerConfig eff = effective_trainer(config, trainer);

  GameModel base_model =
      base != nullptr ? *base : train_base_model(instances, schema, config, trainer);

  EvalPlan plan = plan_variant(config, layout.warm_span);

  EvalResult result;
  result.variant = config.variant;
  result.increments = static_cast<int>(plan.increments.size());
  result.config = config;

  std::vector<double> pooled_scores;
  std::vector<int> pooled_labels;

  auto score_increment = [&](const GameModel& model, const IncrementPlan& inc) {
    std::span<const Instance> window =
        time_slice(instances, inc.eval_start, inc.eval_end);
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(window.size());
    labels.reserve(window.size());
    std::uint64_t request = 0;
    for (const Instance& inst : window) {
      if (config.sampled_scoring) {
        scores.push_back(sampled_score(
            model, inst,
            derive_seed(config.seed, static_cast<std::uint64_t>(inc.index) << 32 |
                                         request++)));
      } else {
        scores.push_back(score(model, inst));
      }
      labels.push_back(inst.label);
    }
    pooled_scores.insert(pooled_scores.end(), scores.begin(), scores.end());
    pooled_labels.insert(pooled_labels.end(), labels.begin(), labels.end());

    IncrementResult ir;
    ir.index = inc.index;
    ir.start_ts = inc.eval_start;
    ir.model_ref = inc.model_ref;
    try {
      ir.auc_value = auc(scores, labels);
    } catch (const DataError&) {
      ir.degenerate = true;
      ir.auc_value = std::numeric_limits<double>::quiet_NaN();
    }
    result.series.push_back(ir);
  };

  switch (config.variant) {
    case Variant::kNU: {
      for (const IncrementPlan& inc : plan.increments) {
        score_increment(base_model, inc);
      }
      break;
    }
    case Variant::kIBU:
    case Variant::kRWBU: {
      // Group increments by retrain cutoff; retrain once per distinct cutoff.
      std::map<int, GameModel> models;
      models.emplace(0, base_model);
      for (const IncrementPlan& inc : plan.increments) {
        auto it = models.find(inc.model_ref);
        if (it == models.end()) {
          const std::int64_t lo = config.train_window_ms > 0
                                      ? inc.train_cutoff - config.train_window_ms
                                      : INT64_MIN;
          GameModel retrained = base_model;
          retrain_random_effects(retrained,
                                 time_slice(instances, lo, inc.train_cutoff), eff,
                                 config.rounds);
          it = models.emplace(inc.model_ref, std::move(retrained)).first;
        }
        score_increment(it->second, inc);
      }
      break;
    }
    case Variant::kLL: {
      GameModel chain = base_model;
      for (const IncrementPlan& inc : plan.increments) {
        score_increment(chain, inc);
        // The increment just evaluated becomes available for training.
        ll_update_on_increment(
            chain, time_slice(instances, inc.eval_start, inc.eval_end), eff);
      }
      break;
    }
  }

  result.aggregate_auc = auc(pooled_scores, pooled_labels);
  return result;
}

DecayCurves decay_experiment(std::span<const Instance> instances,
                             const ModelSchema& schema, const EvalConfig& config,
                             const TrainerConfig& trainer, int horizon_increments,
                             int n_runs, std::uint64_t seed,
                             std::int64_t anchor_lo_ts, std::int64_t anchor_hi_ts) {
  if (horizon_increments < 1) throw DataError("horizon must be >= 1");
  if (n_runs < 1) throw DataError("n_runs must be >= 1");
  if (anchor_lo_ts > anchor_hi_ts) throw DataError("anchor range is empty");
  if (instances.empty()) throw DataError("no instances");
  const std::int64_t t_end = instances.back().ts_ms + 1;
  if (anchor_hi_ts + static_cast<std::int64_t>(horizon_increments) * config.delta_ms >
      t_end) {
    throw DataError("horizon does not fit in the stream for the latest anchor");
  }

  CounterRng rng(derive_seed(seed, "decay-anchors"));
  std::vector<std::vector<double>> nu_runs(horizon_increments);
  std::vector<std::vector<double>> ll_runs(horizon_increments);

  for (int run = 0; run < n_runs; ++run) {
    EvalConfig run_cfg = config;
    run_cfg.warm_start_ts =
        anchor_lo_ts +
        static_cast<std::int64_t>(rng.next_double() *
                                  static_cast<double>(anchor_hi_ts - anchor_lo_ts));
    run_cfg.max_increments = horizon_increments;
    run_cfg.tau_ms = 0;

    GameModel base = train_base_model(instances, schema, run_cfg, trainer);

    run_cfg.variant = Variant::kNU;
    EvalResult nu = run_eval(instances, schema, run_cfg, trainer, &base);
    run_cfg.variant = Variant::kLL;
    EvalResult ll = run_eval(instances, schema, run_cfg, trainer, &base);

    for (int i = 0; i < horizon_increments; ++i) {
      if (i < static_cast<int>(nu.series.size()) && !nu.series[i].degenerate) {
        nu_runs[i].push_back(nu.series[i].auc_value);
      }
      if (i < static_cast<int>(ll.series.size()) && !ll.series[i].degenerate) {
        ll_runs[i].push_back(ll.series[i].auc_value);
      }
    }
  }

  auto summarize = [n_runs](const std::vector<double>& xs, double& mean, double& lo,
                            double& hi) {
    if (xs.empty()) {
      mean = lo = hi = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (n_runs < 2 || xs.size() < 2) {
      lo = hi = mean;
      return;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) /
                      std::sqrt(static_cast<double>(xs.size()));
    lo = mean - 1.96 * se;
    hi = mean + 1.96 * se;
  };

  DecayCurves curves;
  curves.n_runs = n_runs;
  curves.ci_defined = n_runs > 1;
  for (int i = 0; i < horizon_increments; ++i) {
    DecayPoint p;
    p.increment = i;
    summarize(nu_runs[i], p.nu_mean, p.nu_lo, p.nu_hi);
    summarize(ll_runs[i], p.ll_mean, p.ll_lo, p.ll_hi);
    curves.points.push_back(p);
  }
  return curves;
}

std::vector<SweepCell> delta_sweep(std::span<const Instance> instances,
                                   const ModelSchema& schema,
                                   const EvalConfig& config,
                                   const TrainerConfig& trainer,
                                   std::span<const double> forgettings,
                                   std::span<const std::int64_t> deltas_ms,
                                   int n_threads) {
  if (forgettings.empty() || deltas_ms.empty()) {
    throw DataError("sweep grids must be non-empty");
  }
  // The base model does not depend on the cell parameters.
  GameModel base = train_base_model(instances, schema, config, trainer);

  struct Cell {
    double forgetting;
    std::int64_t delta_ms;
  };
  std::vector<Cell> cells;
  for (double f : forgettings) {
    for (std::int64_t d : deltas_ms) cells.push_back(Cell{f, d});
  }
  std::vector<SweepCell> out(cells.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < cells.size();
         i = next.fetch_add(1)) {
      EvalConfig cell_cfg = config;
      cell_cfg.variant = Variant::kLL;
      cell_cfg.forgetting = cells[i].forgetting;
      cell_cfg.delta_ms = cells[i].delta_ms;
      cell_cfg.tau_ms = 0;
      EvalResult r = run_eval(instances, schema, cell_cfg, trainer, &base);
      out[i] = SweepCell{cells[i].forgetting, cells[i].delta_ms, r.aggregate_auc,
                         0.0, false};
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Per-column (per-Delta) z-scaling.
  for (std::int64_t d : deltas_ms) {
    std::vector<std::size_t> column;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].delta_ms == d) column.push_back(i);
    }
    double mean = 0.0;
    for (std::size_t i : column) mean += out[i].auc_raw;
    mean /= static_cast<double>(column.size());
    double ss = 0.0;
    for (std::size_t i : column) {
      ss += (out[i].auc_raw - mean) * (out[i].auc_raw - mean);
    }
    const double sd = column.size() > 1
                          ? std::sqrt(ss / static_cast<double>(column.size() - 1))
                          : 0.0;
    for (std::size_t i : column) {
      if (sd > 0.0) {
        out[i].auc_scaled = (out[i].auc_raw - mean) / sd;
        out[i].scaled_defined = true;
      } else {
        out[i].auc_scaled = std::numeric_limits<double>::quiet_NaN();
        out[i].scaled_defined = false;
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const SweepCell& a, const SweepCell& b) {
    if (a.forgetting != b.forgetting) return a.forgetting < b.forgetting;
    return a.delta_ms < b.delta_ms;
  });
  return out;
}

GapReport theorem_gap_check(const TheoremProblem& problem,
                            const TrainerConfig& config, double c_cubic) {
  config.validate();
  if (problem.batches.empty()) throw DataError("theorem check needs >= 1 batch");

  Eigen::Index dim = 0;
  for (const auto& inst : problem.base) {
    dim = std::max<Eigen::Index>(dim, inst.features.min_dim());
  }
  for (const auto& batch : problem.batches) {
    for (const auto& inst : batch) {
      dim = std::max<Eigen::Index>(dim, inst.features.min_dim());
    }
  }

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dim);
  SolveOutcome base_fit =
      per_entity_solve(problem.base, zero, HessianStore::zero(config.hessian_mode, dim),
                       0.0, config.lambda, config);
  const Eigen::VectorXd beta0 = base_fit.mean;

  CoefficientState state;
  state.mean = beta0;
  state.hessian = base_fit.data_hessian;
  state.lambda = config.lambda;

  std::vector<Eigen::VectorXd> iterates{beta0};
  GapReport report;
  report.c_cubic = c_cubic;

  for (std::size_t t = 1; t <= problem.batches.size(); ++t) {
    state = incremental_update(state, problem.batches[t - 1], config).state;
    iterates.push_back(state.mean);

    // F_t at a point: delta-discounted data losses, base counted as f_0.
    auto cumulative_loss = [&](const Eigen::VectorXd& beta) {
      double acc = std::pow(config.delta, static_cast<double>(t)) *
                   logloss(problem.base, beta);
      for (std::size_t k = 1; k <= t; ++k) {
        acc += std::pow(config.delta, static_cast<double>(t - k)) *
               logloss(problem.batches[k - 1], beta);
      }
      return acc;
    };

    GapStep step;
    step.t = static_cast<int>(t);
    step.gap = cumulative_loss(beta0) - cumulative_loss(state.mean);
    step.bound = 0.5 * config.lambda * (beta0 - state.mean).squaredNorm();
    double gamma = 0.0;
    for (const Eigen::VectorXd& it : iterates) {
      gamma = std::max(gamma, (it - state.mean).norm());
      gamma = std::max(gamma, (it - beta0).norm());
    }
    step.gamma_bar = gamma;
    step.pass = step.gap >= step.bound - c_cubic * gamma * gamma * gamma;
    report.all_pass = report.all_pass && step.pass;
    report.steps.push_back(step);
  }
  return report;
}

TheoremProblem make_random_theorem_problem(std::uint64_t seed, int max_dim,
                                           int max_base, int max_batch,
                                           int n_batches) {
  CounterRng rng(derive_seed(seed, "theorem-problem"));
  const int dim = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_dim)));
  Eigen::VectorXd truth(dim);
  for (int k = 0; k < dim; ++k) {
    truth[k] = 0.4 / std::sqrt(static_cast<double>(dim)) * rng.next_normal();
  }

  auto draw = [&rng, &truth, dim]() {
    OffsetInstance inst;
    Eigen::VectorXd z(dim);
    for (int k = 0; k < dim; ++k) z[k] = rng.next_normal();
    inst.offset = 0.0;
    inst.features = SparseVector::from_dense(z);
    inst.label = rng.next_double() < sigmoid(z.dot(truth)) ? 1 : 0;
    return inst;
  };

  TheoremProblem problem;
  const int n_base = std::max(max_base / 2, 1) +
                     static_cast<int>(rng.next_below(
                         static_cast<std::uint64_t>(max_base - max_base / 2 + 1)));
  for (int i = 0; i < n_base; ++i) problem.base.push_back(draw());
  for (int b = 0; b < n_batches; ++b) {
    const int n = std::max(max_batch / 2, 1) +
                  static_cast<int>(rng.next_below(
                      static_cast<std::uint64_t>(max_batch - max_batch / 2 + 1)));
    std::vector<OffsetInstance> batch;
    for (int i = 0; i < n; ++i) batch.push_back(draw());
    problem.batches.push_back(std::move(batch));
  }
  return problem;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string series_csv(const EvalResult& result) {
  std::ostringstream os;
  os << "increment,start_ts,auc,model_version\n";
  for (const IncrementResult& r : result.series) {
    os << r.index << ',' << r.start_ts << ',' << format_double(r.auc_value) << ','
       << r.model_ref << '\n';
  }
  return os.str();
}

std::string sweep_csv(std::span<const SweepCell> cells) {
  std::ostringstream os;
  os << "delta,Delta,auc_raw,auc_scaled\n";
  for (const SweepCell& c : cells) {
    os << format_double(c.forgetting) << ',' << c.delta_ms << ','
       << format_double(c.auc_raw) << ',' << format_double(c.auc_scaled) << '\n';
  }
  return os.str();
}

std::string decay_csv(const DecayCurves& curves) {
  std::ostringstream os;
  os << "increment,variant,auc_mean,ci_lo,ci_hi\n";
  for (const DecayPoint& p : curves.points) {
    os << p.increment << ",nu," << format_double(p.nu_mean) << ','
       << format_double(p.nu_lo) << ',' << format_double(p.nu_hi) << '\n';
    os << p.increment << ",ll," << format_double(p.ll_mean) << ','
       << format_double(p.ll_lo) << ',' << format_double(p.ll_hi) << '\n';
  }
  return os.str();
}

std::string theorem_csv(std::span<const GapReport> reports) {
  std::ostringstream os;
  os << "t,gap,bound,gamma_bar,pass\n";
  for (const GapReport& report : reports) {
    for (const GapStep& s : report.steps) {
      os << s.t << ',' << format_double(s.gap) << ',' << format_double(s.bound)
         << ',' << format_double(s.gamma_bar) << ',' << (s.pass ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

}  // namespace mixstream
