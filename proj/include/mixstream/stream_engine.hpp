#ifndef MIXSTREAM_STREAM_ENGINE_HPP
#define MIXSTREAM_STREAM_ENGINE_HPP

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mixstream/config.hpp"
#include "mixstream/game_model.hpp"
#include "mixstream/instance.hpp"
#include "mixstream/loss.hpp"

namespace mixstream {

// When an accumulated group of instances becomes a mini-batch. At least one
// criterion must be set: impression count covers high-velocity periods, age
// covers low-velocity periods, and the variance threshold fast-paths new or
// poorly observed ids.
struct TriggerPolicy {
  std::optional<int> max_count;
  std::optional<std::int64_t> max_age_ms;
  std::optional<double> variance_threshold;

  void validate() const;
};

// Versioned keyed store for coefficient states with two serving-layer
// behaviors simulated in-process: reads lag writes by `read_staleness_ms`
// (weak consistency), and an optional write-through TTL cache restores
// read-your-writes on top of the weak store.
class CoefficientStore {
 public:
  struct Config {
    std::int64_t read_staleness_ms = 0;
    std::optional<std::int64_t> cache_ttl_ms;  // nullopt disables the cache
  };

  CoefficientStore() = default;
  explicit CoefficientStore(Config config) : config_(config) {}

  // Read through the cache when enabled, else from the (possibly stale)
  // backing view.
  std::optional<CoefficientState> read(const EntityKey& key, std::int64_t now) const;

  // The backing view only: newest version whose write landed at least
  // read_staleness_ms ago. Never consults or fills the cache.
  std::optional<CoefficientState> read_backing(const EntityKey& key,
                                               std::int64_t now) const;

  // Versions must strictly increase per key. Updates the cache.
  void write(const EntityKey& key, CoefficientState state, std::int64_t now);

  // Lock serializing read-train-write cycles for one key.
  std::mutex& key_mutex(const EntityKey& key);

  // Latest written version per key, ignoring staleness. Deterministic order.
  std::map<EntityKey, CoefficientState> latest_states() const;

  std::optional<std::uint64_t> latest_version(const EntityKey& key) const;

 private:
  struct Versioned {
    CoefficientState state;
    std::int64_t write_ts;
  };
  struct CacheEntry {
    CoefficientState state;
    std::int64_t cached_ts;
  };

  Config config_;
  mutable std::mutex mu_;
  std::map<EntityKey, std::vector<Versioned>> versions_;
  mutable std::map<EntityKey, CacheEntry> cache_;
  std::map<EntityKey, std::unique_ptr<std::mutex>> key_locks_;
};

// Recent mini-batches per key, kept for replay on top of batch snapshots.
// Entries older than capacity_ms behind the newest recorded batch expire.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::int64_t capacity_ms) : capacity_ms_(capacity_ms) {}

  void record(const MiniBatch& batch);
  // Batches with last instance timestamp strictly greater than the
  // watermark, ordered by (timestamp, key).
  std::vector<MiniBatch> newer_than(std::int64_t watermark_ts) const;
  std::size_t size() const;

 private:
  std::int64_t capacity_ms_;
  std::int64_t newest_ts_ = INT64_MIN;
  mutable std::mutex mu_;
  std::map<EntityKey, std::deque<MiniBatch>> buffers_;
};

struct UpdateEvent {
  EntityKey key;
  std::uint64_t version;
  std::int64_t ts;
  double loss_before;
  double loss_after;
};

struct DeadLetter {
  MiniBatch batch;
  std::string error;
};

struct SnapshotReport {
  std::map<EntityKey, int> replayed_per_key;
  int replayed_total = 0;
  int failed = 0;
};

// ζ for each batch instance: fixed-effect score plus every OTHER
// random-effect type's contribution at its current mean; the active type's
// features become the OffsetInstance features.
using MeanLookup = std::function<std::optional<Eigen::VectorXd>(const EntityKey&)>;
std::vector<OffsetInstance> compute_offsets(const Eigen::VectorXd& fixed_coeffs,
                                            const ModelSchema& schema,
                                            const MeanLookup& lookup,
                                            const MiniBatch& batch);
std::vector<OffsetInstance> compute_offsets(const GameModel& model,
                                            const MiniBatch& batch);

// In-process simulation of the nearline training pipeline: keyed mini-batch
// assembly with trigger policies, read-train-write against the versioned
// store, and replay of recent batches after a batch snapshot lands. Time is
// fully simulated: the clock only advances through ingested timestamps and
// explicit tick() calls.
class StreamEngine {
 public:
  struct Options {
    TriggerPolicy trigger;
    TrainerConfig trainer;
    CoefficientStore::Config store;
    std::int64_t replay_capacity_ms = 24LL * 3600 * 1000;
  };

  StreamEngine(GameModel base, Options options);

  // Routes the instance into one accumulator per assignment and returns the
  // mini-batches whose trigger fired on this ingestion.
  std::vector<MiniBatch> ingest(const Instance& inst);

  // Advances the clock and fires age-based triggers.
  std::vector<MiniBatch> tick(std::int64_t now_ms);

  // Force-emits every pending accumulator (sorted by key).
  std::vector<MiniBatch> flush();

  // Read-train-write: per-key atomic read through the cache, incremental
  // update, write back with version + 1. Returns the applied version, or
  // nullopt when the solve failed and the batch was dead-lettered.
  std::optional<std::uint64_t> rtw(const MiniBatch& batch);

  // Overwrites stored states with the snapshot, then replays buffered
  // batches newer than snapshot_data_ts through rtw in timestamp order.
  SnapshotReport apply_batch_snapshot(const GameModel& snapshot,
                                      std::int64_t snapshot_data_ts);

  std::int64_t now() const { return now_ms_.load(); }
  CoefficientStore& store() { return store_; }
  const GameModel& base() const { return base_; }

  // Fixed part plus the latest stored coefficient states.
  GameModel current_model() const;

  std::vector<UpdateEvent> events() const;
  std::vector<DeadLetter> dead_letters() const;
  std::string events_jsonl() const;

 private:
  struct Accumulator {
    std::vector<Instance> pending;
    std::int64_t oldest_arrival_ts = 0;
    std::int64_t next_seq = 0;
  };

  MiniBatch emit(const EntityKey& key, Accumulator& acc);
  bool variance_fires(const EntityKey& key) const;
  std::optional<std::uint64_t> rtw_impl(const MiniBatch& batch, bool record_replay);

  GameModel base_;
  Options options_;
  CoefficientStore store_;
  ReplayBuffer replay_;
  std::atomic<std::int64_t> now_ms_{0};

  std::mutex accumulators_mu_;
  std::map<EntityKey, Accumulator> accumulators_;

  mutable std::mutex log_mu_;
  std::vector<UpdateEvent> events_;
  std::vector<DeadLetter> dead_letters_;
};

}  // namespace mixstream

#endif  // MIXSTREAM_STREAM_ENGINE_HPP
