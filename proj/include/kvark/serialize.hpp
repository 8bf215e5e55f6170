#pragma once

#include "kvark/config.hpp"
#include "kvark/excitation.hpp"
#include "kvark/gp_baseline.hpp"
#include "kvark/kmp.hpp"
#include "kvark/mixture.hpp"
#include "kvark/observer.hpp"

#include <json.hpp>

#include <string>
#include <variant>
#include <vector>

namespace kvark::io {

using json = nlohmann::json;

class SchemaError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kFormatVersion = 1;

/// Every file is an object carrying "schema" and "version" keys.
json envelope(const std::string& schema);
void check_envelope(const json& j, const std::string& schema);

json to_json(const excitation::FourierTrajectoryParams& p);
excitation::FourierTrajectoryParams params_from_json(const json& j);

json to_json(const mixture::GmmModel& g);
mixture::GmmModel gmm_from_json(const json& j);

json to_json(const mixture::ReferenceTrajectory& r);
mixture::ReferenceTrajectory reference_from_json(const json& j);

/// Regressor files share one schema with a "type" tag: "kmp" or "gp".
json to_json(const kmp::KmpModel& m);
json to_json(const gp::GpModel& m);
kmp::KmpModel kmp_from_json(const json& j);
gp::GpModel gp_from_json(const json& j);

json to_json(const observer::FilterConfig& c);
observer::FilterConfig filter_config_from_json(const json& j);

json to_json(const harness::ExperimentConfig& c);
harness::ExperimentConfig experiment_config_from_json(const json& j);

/// Trained per-joint models of one run.
struct ModelSet {
  std::vector<mixture::GmmModel> gmms;
  std::vector<kmp::KmpModel> kmp;
  std::vector<gp::GpModel> gp;
  Vec static_residual_variance;  // mean squared KMP residual on the training split
};
json to_json(const ModelSet& m);
ModelSet model_set_from_json(const json& j);

json read_json(const std::string& path);
void write_json(const std::string& path, const json& j);

harness::ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace kvark::io
