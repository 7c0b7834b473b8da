#ifndef MIXSTREAM_INSTANCE_HPP
#define MIXSTREAM_INSTANCE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mixstream/sparse_vector.hpp"

namespace mixstream {

// Identifies one random-effect coefficient vector: (type, id),
// e.g. ("user", "1234").
using EntityKey = std::pair<std::string, std::string>;

inline std::string key_to_string(const EntityKey& k) {
  return k.first + ":" + k.second;
}

// One (type, id, features) assignment on an observation. A given instance
// carries at most one assignment per type.
struct ReAssignment {
  std::string re_type;
  std::string re_id;
  SparseVector features;

  EntityKey key() const { return {re_type, re_id}; }
};

// A labeled observation from the stream.
struct Instance {
  std::int64_t ts_ms = 0;
  int label = 0;  // {0,1}
  SparseVector fixed_features;
  std::vector<ReAssignment> re;

  // Label in {0,1} and at most one assignment per random-effect type.
  void validate() const;

  const ReAssignment* find_assignment(const std::string& re_type) const {
    for (const auto& a : re) {
      if (a.re_type == re_type) return &a;
    }
    return nullptr;
  }
};

// All buffered instances for one (type, id), ready for an incremental update.
struct MiniBatch {
  std::string re_type;
  std::string re_id;
  std::vector<Instance> instances;  // sorted by timestamp
  std::int64_t batch_seq = 0;

  EntityKey key() const { return {re_type, re_id}; }
  std::int64_t last_ts() const {
    return instances.empty() ? 0 : instances.back().ts_ms;
  }

  // Every instance names this batch's (type, id) and timestamps ascend.
  void validate() const;
};

}  // namespace mixstream

#endif  // MIXSTREAM_INSTANCE_HPP
