#ifndef MIXSTREAM_SERIALIZATION_HPP
#define MIXSTREAM_SERIALIZATION_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "mixstream/game_model.hpp"
#include "mixstream/instance.hpp"

namespace mixstream {

// Instance wire format, one object per line:
//   {"ts": int_ms, "label": 0|1, "x": {"idx": val, ...},
//    "re": [{"type": str, "id": str, "z": {"idx": val, ...}}, ...]}
std::string instance_to_json(const Instance& inst);
Instance instance_from_json(const std::string& line);

void write_instances_jsonl(std::ostream& os, const std::vector<Instance>& instances);
// Errors name the offending 1-based line number.
std::vector<Instance> read_instances_jsonl(std::istream& is);
std::vector<Instance> load_instances(const std::string& path);
void save_instances(const std::string& path, const std::vector<Instance>& instances);

// Model snapshot: JSON with explicit hessian_mode, dense mean arrays, and the
// full Hessian as a row-major lower triangle (diagonal mode stores the
// diagonal). Serialization is bit-exact for doubles; map ordering makes the
// bytes reproducible.
std::string model_to_json(const GameModel& model);
GameModel model_from_json(const std::string& text);
GameModel load_model(const std::string& path);
void save_model(const std::string& path, const GameModel& model);

// Schema inferred from data: smallest dimensions covering every index seen.
ModelSchema infer_schema(const std::vector<Instance>& instances);

}  // namespace mixstream

#endif  // MIXSTREAM_SERIALIZATION_HPP
