#ifndef SGLDVR_CONFIG_HPP
#define SGLDVR_CONFIG_HPP

#include <cstdint>
#include <memory>
#include <string>

#include <json.hpp>

#include "sgldvr/dynamics.hpp"
#include "sgldvr/objectives.hpp"

namespace sgldvr {

// Objective selected by string identifier from an experiment config.
struct NamedObjective {
  std::shared_ptr<const FiniteSumObjective> objective;
  ObjectiveMetadata meta;
  std::string id;
  // Non-null only for type "binary_classifier"; exposes the dataset and
  // misclassification rates.
  std::shared_ptr<const NeuralNetObjective> classifier;
};

// {"type": "quadratic", "dim": .., "scale": ..}
// {"type": "saddle", "dim": .., "neg_eig": .., "pos_eig": ..}
// {"type": "sigmoid_net", "rows": .., "dim": .., "gamma": .., "offset": ..,
//  "matrix_seed": ..} or an explicit "matrix" of rows
// {"type": "binary_classifier", "n_samples": .., "widths": [w1, w2],
//  "data_seed": .., "lipschitz_pairs": ..}
NamedObjective make_objective(const nlohmann::json& spec);

DecaySchedule schedule_from_json(const nlohmann::json& j);
SgldVrConfig config_from_json(const nlohmann::json& j);

// {"type":"zeros"} | {"type":"gaussian","scale":s} | {"type":"explicit","values":[..]}
Vec initial_point(const nlohmann::json& spec, std::size_t dim, std::uint64_t seed);

nlohmann::json metadata_to_json(const ObjectiveMetadata& meta);

// Assembles every derived constant computable from the request: feasibility,
// Lyapunov sequences, gradient-norm bound, recurrence constants, saddle
// quantities and the ergodicity horizon, keyed by what the request provides.
nlohmann::json theory_report(const nlohmann::json& request);

nlohmann::json load_json_file(const std::string& path);

}  // namespace sgldvr

#endif
