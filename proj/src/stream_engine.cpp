#include "mixstream/stream_engine.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "mixstream/errors.hpp"
#include "mixstream/incremental.hpp"

namespace mixstream {

void TriggerPolicy::validate() const {
  if (!max_count && !max_age_ms && !variance_threshold) {
    throw DataError("trigger policy needs at least one criterion");
  }
  if (max_count && *max_count < 1) throw DataError("max_count must be >= 1");
  if (max_age_ms && *max_age_ms < 1) throw DataError("max_age_ms must be >= 1");
  if (variance_threshold && !(*variance_threshold > 0.0)) {
    throw DataError("variance_threshold must be positive");
  }
}

std::optional<CoefficientState> CoefficientStore::read(const EntityKey& key,
                                                       std::int64_t now) const {
  if (config_.cache_ttl_ms) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end() && now - it->second.cached_ts <= *config_.cache_ttl_ms) {
      return it->second.state;
    }
  }
  auto state = read_backing(key, now);
  if (state && config_.cache_ttl_ms) {
    std::lock_guard lock(mu_);
    cache_[key] = CacheEntry{*state, now};
  }
  return state;
}

std::optional<CoefficientState> CoefficientStore::read_backing(
    const EntityKey& key, std::int64_t now) const {
  std::lock_guard lock(mu_);
  auto it = versions_.find(key);
  if (it == versions_.end()) return std::nullopt;
  const std::int64_t visible_ts = now - config_.read_staleness_ms;
  const std::vector<Versioned>& hist = it->second;
  for (auto rit = hist.rbegin(); rit != hist.rend(); ++rit) {
    if (rit->write_ts <= visible_ts) return rit->state;
  }
  return std::nullopt;
}

void CoefficientStore::write(const EntityKey& key, CoefficientState state,
                             std::int64_t now) {
  std::lock_guard lock(mu_);
  std::vector<Versioned>& hist = versions_[key];
  if (!hist.empty() && state.version <= hist.back().state.version) {
    throw DataError("store write would regress version for " + key_to_string(key));
  }
  if (config_.cache_ttl_ms) {
    cache_[key] = CacheEntry{state, now};
  }
  hist.push_back(Versioned{std::move(state), now});
  // Versions that can never be visible again are dropped: only the newest
  // write at or before (now - staleness) plus anything newer can be served.
  const std::int64_t visible_ts = now - config_.read_staleness_ms;
  std::size_t keep_from = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (hist[i].write_ts <= visible_ts) keep_from = i;
  }
  if (keep_from > 0) hist.erase(hist.begin(), hist.begin() + keep_from);
}

std::mutex& CoefficientStore::key_mutex(const EntityKey& key) {
  std::lock_guard lock(mu_);
  auto& slot = key_locks_[key];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::map<EntityKey, CoefficientState> CoefficientStore::latest_states() const {
  std::lock_guard lock(mu_);
  std::map<EntityKey, CoefficientState> out;
  for (const auto& [key, hist] : versions_) {
    if (!hist.empty()) out.emplace(key, hist.back().state);
  }
  return out;
}

std::optional<std::uint64_t> CoefficientStore::latest_version(
    const EntityKey& key) const {
  std::lock_guard lock(mu_);
  auto it = versions_.find(key);
  if (it == versions_.end() || it->second.empty()) return std::nullopt;
  return it->second.back().state.version;
}

void ReplayBuffer::record(const MiniBatch& batch) {
  std::lock_guard lock(mu_);
  newest_ts_ = std::max(newest_ts_, batch.last_ts());
  buffers_[batch.key()].push_back(batch);
  const std::int64_t horizon = newest_ts_ - capacity_ms_;
  for (auto& [key, ring] : buffers_) {
    while (!ring.empty() && ring.front().last_ts() < horizon) ring.pop_front();
  }
}

std::vector<MiniBatch> ReplayBuffer::newer_than(std::int64_t watermark_ts) const {
  std::lock_guard lock(mu_);
  std::vector<MiniBatch> out;
  for (const auto& [key, ring] : buffers_) {
    for (const MiniBatch& b : ring) {
      if (b.last_ts() > watermark_ts) out.push_back(b);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const MiniBatch& a, const MiniBatch& b) {
                     if (a.last_ts() != b.last_ts()) return a.last_ts() < b.last_ts();
                     return a.key() < b.key();
                   });
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [key, ring] : buffers_) n += ring.size();
  return n;
}

std::vector<OffsetInstance> compute_offsets(const Eigen::VectorXd& fixed_coeffs,
                                            const ModelSchema& schema,
                                            const MeanLookup& lookup,
                                            const MiniBatch& batch) {
  std::vector<OffsetInstance> out;
  out.reserve(batch.instances.size());
  for (const Instance& inst : batch.instances) {
    if (inst.fixed_features.min_dim() > schema.fixed_dim) {
      throw DimensionError("fixed feature index exceeds schema dimension");
    }
    double zeta = inst.fixed_features.dot(fixed_coeffs);
    const ReAssignment* active = nullptr;
    for (const auto& a : inst.re) {
      if (a.features.min_dim() > schema.dim_for(a.re_type)) {
        throw DimensionError("random-effect feature index exceeds schema for " +
                             a.re_type);
      }
      if (a.re_type == batch.re_type && a.re_id == batch.re_id) {
        active = &a;
        continue;
      }
      if (auto mean = lookup(a.key())) {
        zeta += a.features.dot(*mean);
      }
    }
    if (active == nullptr) {
      throw DataError("batch instance lacks assignment for " +
                      key_to_string(batch.key()));
    }
    out.push_back(OffsetInstance{zeta, active->features, inst.label});
  }
  return out;
}

std::vector<OffsetInstance> compute_offsets(const GameModel& model,
                                            const MiniBatch& batch) {
  MeanLookup lookup = [&model](const EntityKey& key) -> std::optional<Eigen::VectorXd> {
    if (const CoefficientState* state = model.find(key)) return state->mean;
    return std::nullopt;
  };
  return compute_offsets(model.fixed_coeffs, model.schema, lookup, batch);
}

StreamEngine::StreamEngine(GameModel base, Options options)
    : base_(std::move(base)),
      options_(std::move(options)),
      store_(options_.store),
      replay_(options_.replay_capacity_ms) {
  options_.trigger.validate();
  options_.trainer.validate();
  now_ms_.store(base_.data_cutoff_ts);
  for (const auto& [key, state] : base_.random_effects) {
    store_.write(key, state, base_.data_cutoff_ts);
  }
  base_.random_effects.clear();  // the store is authoritative from here on
}

bool StreamEngine::variance_fires(const EntityKey& key) const {
  if (!options_.trigger.variance_threshold) return false;
  auto state = store_.read(key, now_ms_.load());
  if (!state) {
    // Brand-new id: prior variance 1/lambda.
    return 1.0 / base_.prior_lambda > *options_.trigger.variance_threshold;
  }
  const PosteriorCovariance cov = PosteriorCovariance::compute(*state);
  double max_var = 0.0;
  for (Eigen::Index i = 0; i < state->mean.size(); ++i) {
    SparseVector basis = SparseVector::from_pairs({{static_cast<std::uint32_t>(i), 1.0}});
    max_var = std::max(max_var, cov.quad(basis));
  }
  return max_var > *options_.trigger.variance_threshold;
}

MiniBatch StreamEngine::emit(const EntityKey& key, Accumulator& acc) {
  MiniBatch batch;
  batch.re_type = key.first;
  batch.re_id = key.second;
  batch.instances = std::move(acc.pending);
  batch.batch_seq = acc.next_seq++;
  acc.pending.clear();
  std::stable_sort(batch.instances.begin(), batch.instances.end(),
                   [](const Instance& a, const Instance& b) { return a.ts_ms < b.ts_ms; });
  return batch;
}

std::vector<MiniBatch> StreamEngine::ingest(const Instance& inst) {
  inst.validate();
  std::int64_t prev = now_ms_.load();
  while (inst.ts_ms > prev && !now_ms_.compare_exchange_weak(prev, inst.ts_ms)) {
  }

  std::vector<MiniBatch> fired;
  std::lock_guard lock(accumulators_mu_);
  for (const auto& a : inst.re) {
    const EntityKey key = a.key();
    Accumulator& acc = accumulators_[key];
    if (acc.pending.empty()) acc.oldest_arrival_ts = inst.ts_ms;
    acc.pending.push_back(inst);

    bool fire = false;
    if (options_.trigger.max_count &&
        static_cast<int>(acc.pending.size()) >= *options_.trigger.max_count) {
      fire = true;
    }
    if (!fire && options_.trigger.max_age_ms &&
        now_ms_.load() - acc.oldest_arrival_ts >= *options_.trigger.max_age_ms) {
      fire = true;
    }
    if (!fire && variance_fires(key)) fire = true;
    if (fire) fired.push_back(emit(key, acc));
  }
  return fired;
}

std::vector<MiniBatch> StreamEngine::tick(std::int64_t now_ms) {
  std::int64_t prev = now_ms_.load();
  while (now_ms > prev && !now_ms_.compare_exchange_weak(prev, now_ms)) {
  }
  std::vector<MiniBatch> fired;
  if (!options_.trigger.max_age_ms) return fired;
  std::lock_guard lock(accumulators_mu_);
  for (auto& [key, acc] : accumulators_) {
    if (!acc.pending.empty() &&
        now_ms_.load() - acc.oldest_arrival_ts >= *options_.trigger.max_age_ms) {
      fired.push_back(emit(key, acc));
    }
  }
  return fired;
}

std::vector<MiniBatch> StreamEngine::flush() {
  std::vector<MiniBatch> fired;
  std::lock_guard lock(accumulators_mu_);
  for (auto& [key, acc] : accumulators_) {
    if (!acc.pending.empty()) fired.push_back(emit(key, acc));
  }
  return fired;
}

std::optional<std::uint64_t> StreamEngine::rtw(const MiniBatch& batch) {
  return rtw_impl(batch, /*record_replay=*/true);
}

std::optional<std::uint64_t> StreamEngine::rtw_impl(const MiniBatch& batch,
                                                    bool record_replay) {
  batch.validate();
  if (record_replay) replay_.record(batch);

  const EntityKey key = batch.key();
  std::lock_guard key_lock(store_.key_mutex(key));
  const std::int64_t now = std::max(now_ms_.load(), batch.last_ts());

  CoefficientState state;
  if (auto existing = store_.read(key, now)) {
    state = std::move(*existing);
  } else {
    state = CoefficientState::prior(options_.trainer.hessian_mode,
                                    base_.schema.dim_for(key.first),
                                    options_.trainer.lambda_for(key.first));
  }

  MeanLookup lookup = [this, now](const EntityKey& k) -> std::optional<Eigen::VectorXd> {
    if (auto s = store_.read(k, now)) return s->mean;
    return std::nullopt;
  };
  try {
    std::vector<OffsetInstance> offsets =
        compute_offsets(base_.fixed_coeffs, base_.schema, lookup, batch);
    IncrementalUpdateResult result =
        incremental_update(state, offsets, options_.trainer);
    result.state.last_update_ts = now;
    store_.write(key, result.state, now);
    {
      std::lock_guard log_lock(log_mu_);
      events_.push_back(UpdateEvent{key, result.state.version, now,
                                    result.batch_loss_before,
                                    result.batch_loss_after});
    }
    return result.state.version;
  } catch (const NumericError& e) {
    std::lock_guard log_lock(log_mu_);
    dead_letters_.push_back(DeadLetter{batch, e.what()});
    return std::nullopt;
  }
}

SnapshotReport StreamEngine::apply_batch_snapshot(const GameModel& snapshot,
                                                  std::int64_t snapshot_data_ts) {
  if (snapshot_data_ts > now_ms_.load()) {
    throw DataError("snapshot data watermark is in the future");
  }
  for (const auto& [key, state] : snapshot.random_effects) {
    std::lock_guard key_lock(store_.key_mutex(key));
    CoefficientState incoming = state;
    if (auto latest = store_.latest_version(key)) {
      incoming.version = std::max(incoming.version, *latest + 1);
    }
    store_.write(key, std::move(incoming), now_ms_.load());
  }

  SnapshotReport report;
  for (const MiniBatch& batch : replay_.newer_than(snapshot_data_ts)) {
    if (rtw_impl(batch, /*record_replay=*/false)) {
      report.replayed_per_key[batch.key()]++;
      report.replayed_total++;
    } else {
      report.failed++;
    }
  }
  return report;
}

GameModel StreamEngine::current_model() const {
  GameModel model = base_;
  model.random_effects = store_.latest_states();
  return model;
}

std::vector<UpdateEvent> StreamEngine::events() const {
  std::lock_guard lock(log_mu_);
  return events_;
}

std::vector<DeadLetter> StreamEngine::dead_letters() const {
  std::lock_guard lock(log_mu_);
  return dead_letters_;
}

std::string StreamEngine::events_jsonl() const {
  std::ostringstream os;
  for (const UpdateEvent& e : events()) {
    nlohmann::json obj;
    obj["type"] = e.key.first;
    obj["id"] = e.key.second;
    obj["version"] = e.version;
    obj["ts"] = e.ts;
    obj["loss_before"] = e.loss_before;
    obj["loss_after"] = e.loss_after;
    os << obj.dump() << '\n';
  }
  return os.str();
}

}  // namespace mixstream
