#include "mixstream/instance.hpp"

#include <set>

#include "mixstream/errors.hpp"

namespace mixstream {

void Instance::validate() const {
  if (label != 0 && label != 1) {
    throw DataError("label must be 0 or 1, got " + std::to_string(label));
  }
  std::set<std::string> seen;
  for (const auto& a : re) {
    if (!seen.insert(a.re_type).second) {
      throw DataError("duplicate random-effect type on one instance: " + a.re_type);
    }
  }
}

void MiniBatch::validate() const {
  std::int64_t prev = INT64_MIN;
  for (const auto& inst : instances) {
    inst.validate();
    if (inst.find_assignment(re_type) == nullptr ||
        inst.find_assignment(re_type)->re_id != re_id) {
      throw DataError("mini-batch instance does not belong to " +
                      key_to_string({re_type, re_id}));
    }
    if (inst.ts_ms < prev) {
      throw DataError("mini-batch instances not sorted by timestamp");
    }
    prev = inst.ts_ms;
  }
}

}  // namespace mixstream
