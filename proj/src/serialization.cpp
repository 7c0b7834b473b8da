#include "mixstream/serialization.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mixstream/errors.hpp"

namespace mixstream {

namespace {

using nlohmann::json;

json sparse_to_json(const SparseVector& v) {
  json obj = json::object();
  for (const auto& [idx, val] : v.entries()) {
    obj[std::to_string(idx)] = val;
  }
  return obj;
}

SparseVector sparse_from_json(const json& obj) {
  std::vector<SparseVector::Entry> entries;
  entries.reserve(obj.size());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    std::size_t pos = 0;
    unsigned long idx = std::stoul(it.key(), &pos);
    if (pos != it.key().size()) {
      throw DataError("non-numeric feature index: " + it.key());
    }
    entries.emplace_back(static_cast<std::uint32_t>(idx), it->get<double>());
  }
  return SparseVector::from_pairs(std::move(entries));
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json hessian_to_json(const HessianStore& h) {
  json arr = json::array();
  if (h.mode() == HessianMode::kDiagonal) {
    const Eigen::VectorXd& d = h.diag_vector();
    for (Eigen::Index i = 0; i < d.size(); ++i) arr.push_back(d[i]);
  } else {
    const Eigen::MatrixXd& m = h.full_matrix();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) arr.push_back(m(i, j));
    }
  }
  return arr;
}

HessianStore hessian_from_json(const json& arr, HessianMode mode,
                               Eigen::Index dim) {
  if (mode == HessianMode::kDiagonal) {
    if (static_cast<Eigen::Index>(arr.size()) != dim) {
      throw DataError("diagonal hessian length mismatch");
    }
    return HessianStore::diagonal(vector_from_json(arr));
  }
  if (static_cast<Eigen::Index>(arr.size()) != dim * (dim + 1) / 2) {
    throw DataError("lower-triangle hessian length mismatch");
  }
  Eigen::MatrixXd m(dim, dim);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = arr[k++].get<double>();
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return HessianStore::full(std::move(m));
}

}  // namespace

std::string instance_to_json(const Instance& inst) {
  json obj;
  obj["ts"] = inst.ts_ms;
  obj["label"] = inst.label;
  obj["x"] = sparse_to_json(inst.fixed_features);
  json res = json::array();
  for (const auto& a : inst.re) {
    res.push_back(
        {{"type", a.re_type}, {"id", a.re_id}, {"z", sparse_to_json(a.features)}});
  }
  obj["re"] = std::move(res);
  return obj.dump();
}

Instance instance_from_json(const std::string& line) {
  json obj = json::parse(line);
  Instance inst;
  inst.ts_ms = obj.at("ts").get<std::int64_t>();
  inst.label = obj.at("label").get<int>();
  inst.fixed_features = sparse_from_json(obj.at("x"));
  for (const auto& a : obj.at("re")) {
    inst.re.push_back(ReAssignment{a.at("type").get<std::string>(),
                                   a.at("id").get<std::string>(),
                                   sparse_from_json(a.at("z"))});
  }
  inst.validate();
  return inst;
}

void write_instances_jsonl(std::ostream& os, const std::vector<Instance>& instances) {
  for (const Instance& inst : instances) {
    os << instance_to_json(inst) << '\n';
  }
}

std::vector<Instance> read_instances_jsonl(std::istream& is) {
  std::vector<Instance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(instance_from_json(line));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Instance> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open instance file: " + path);
  return read_instances_jsonl(in);
}

void save_instances(const std::string& path, const std::vector<Instance>& instances) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write instance file: " + path);
  write_instances_jsonl(out, instances);
}

std::string model_to_json(const GameModel& model) {
  HessianMode mode = HessianMode::kFull;
  if (!model.random_effects.empty()) {
    mode = model.random_effects.begin()->second.hessian.mode();
  }
  json obj;
  obj["hessian_mode"] = to_string(mode);
  obj["prior_lambda"] = model.prior_lambda;
  obj["data_cutoff_ts"] = model.data_cutoff_ts;
  json schema;
  schema["fixed_dim"] = model.schema.fixed_dim;
  json dims = json::object();
  for (const auto& [type, dim] : model.schema.re_dims) dims[type] = dim;
  schema["re_types"] = std::move(dims);
  obj["schema"] = std::move(schema);
  obj["fixed_coeffs"] = vector_to_json(model.fixed_coeffs);
  json res = json::array();
  for (const auto& [key, state] : model.random_effects) {
    res.push_back({{"type", key.first},
                   {"id", key.second},
                   {"mean", vector_to_json(state.mean)},
                   {"hessian", hessian_to_json(state.hessian)},
                   {"lambda", state.lambda},
                   {"version", state.version},
                   {"last_update_ts", state.last_update_ts}});
  }
  obj["random_effects"] = std::move(res);
  return obj.dump(2);
}

GameModel model_from_json(const std::string& text) {
  json obj = json::parse(text);
  GameModel model;
  const HessianMode mode =
      hessian_mode_from_string(obj.at("hessian_mode").get<std::string>());
  model.prior_lambda = obj.at("prior_lambda").get<double>();
  model.data_cutoff_ts = obj.at("data_cutoff_ts").get<std::int64_t>();
  model.schema.fixed_dim = obj.at("schema").at("fixed_dim").get<Eigen::Index>();
  for (auto it = obj.at("schema").at("re_types").begin();
       it != obj.at("schema").at("re_types").end(); ++it) {
    model.schema.re_dims[it.key()] = it->get<Eigen::Index>();
  }
  model.fixed_coeffs = vector_from_json(obj.at("fixed_coeffs"));
  if (model.fixed_coeffs.size() != model.schema.fixed_dim) {
    throw DataError("fixed_coeffs length disagrees with schema");
  }
  for (const auto& entry : obj.at("random_effects")) {
    EntityKey key{entry.at("type").get<std::string>(),
                  entry.at("id").get<std::string>()};
    CoefficientState state;
    state.mean = vector_from_json(entry.at("mean"));
    const Eigen::Index dim = model.schema.dim_for(key.first);
    if (state.mean.size() != dim) {
      throw DataError("coefficient mean length disagrees with schema for " +
                      key.first);
    }
    state.hessian = hessian_from_json(entry.at("hessian"), mode, dim);
    state.lambda = entry.at("lambda").get<double>();
    state.version = entry.at("version").get<std::uint64_t>();
    state.last_update_ts = entry.at("last_update_ts").get<std::int64_t>();
    model.random_effects.emplace(std::move(key), std::move(state));
  }
  return model;
}

GameModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return model_from_json(ss.str());
  } catch (const json::exception& e) {
    throw DataError("malformed model snapshot " + path + ": " + e.what());
  }
}

void save_model(const std::string& path, const GameModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << model_to_json(model) << '\n';
}

ModelSchema infer_schema(const std::vector<Instance>& instances) {
  ModelSchema schema;
  for (const Instance& inst : instances) {
    schema.fixed_dim = std::max<Eigen::Index>(schema.fixed_dim,
                                              inst.fixed_features.min_dim());
    for (const auto& a : inst.re) {
      auto& dim = schema.re_dims[a.re_type];
      dim = std::max<Eigen::Index>(dim, a.features.min_dim());
    }
  }
  return schema;
}

}  // namespace mixstream
