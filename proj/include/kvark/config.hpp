#pragma once

#include "kvark/common.hpp"
#include "kvark/dynamics.hpp"
#include "kvark/excitation.hpp"
#include "kvark/kmp.hpp"
#include "kvark/observer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kvark::harness {

struct ArmConfig {
  std::string type = "planar2";  // pendulum | planar2 | chain
  double gravity = 9.81;
  std::vector<dynamics::PlanarLink> planar;
  std::vector<dynamics::DhLink> chain;
  dynamics::JointLimits limits;

  int dof() const;
  dynamics::ManipulatorModel build() const;
};

struct ExcitationPlan {
  excitation::ExcitationSettings settings;
  excitation::GaConfig ga;
  int trajectories = 3;
  double duration = 20.0;  // s per trajectory
};

/// Piecewise-constant external torque on every joint.
struct DisturbancePlan {
  double duration = 20.0;
  double segment_min = 2.0;
  double segment_max = 4.0;
  double level = 5.0;      // N m, levels drawn uniformly in [-level, level]
  double lead_in = 1.0;    // s of zero torque at the start
};

struct SimulationPlan {
  double t_s = 0.004;
  int substeps = 10;
  double natural_frequency = 100.0;
  double damping_ratio = 1.0;
};

struct MixturePlan {
  int components = 20;
  int support_points = 20;
  double test_fraction = 0.2;
};

/// Per-joint KMP / GP hyperparameters.
struct HyperparamPlan {
  std::vector<kmp::KmpHyperparams> joints;
};

struct FilterPlan {
  double forgetting = 0.02;
  int vb_iterations = 3;
  bool iw_per_iteration = false;
  double iw_dof_offset = 2.0;     // lambda_0 = n + 1 + offset
  double process_prior = 1e-4;    // prior mean of Sigma_d, N^2 m^2
  double emp_init = 1e-2;         // N^2 m^2, scaled by t_s^2
  double emp_min = 1e-8;          // momentum units
  double emp_max = 1e2;
  double p0 = 1.0;
  double akf_rho_nu = 0.02;
  double akf_rho_d = 0.02;

  observer::FilterConfig build(int n, double t_s) const;
};

struct ExperimentConfig {
  ArmConfig arm;
  dynamics::FrictionProfile friction;
  ExcitationPlan excitation;
  SimulationPlan simulation;
  DisturbancePlan disturbance;
  MixturePlan mixture;
  HyperparamPlan hyperparams;
  FilterPlan filter;
  std::vector<std::string> observers{"kvark", "gmr_gp", "static_kf", "akf"};
  std::vector<std::string> train_files;  // optional pre-recorded training CSVs
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1};   // used by bench
  std::string output = "out";

  void validate() const;
  /// Checks that every referenced file exists.
  void check_files() const;
};

/// The shipped 2-link planar scenario with heteroscedastic friction.
ExperimentConfig default_config();

}  // namespace kvark::harness
