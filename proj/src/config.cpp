#include "kvark/config.hpp"

#include <filesystem>
#include <set>

namespace kvark::harness {

namespace {
constexpr const char* kStage = "config";
}

int ArmConfig::dof() const {
  if (type == "pendulum") return 1;
  if (type == "planar2") return 2;
  if (type == "chain") return static_cast<int>(chain.size());
  throw InvalidInput(kStage, "unknown arm type '" + type + "'");
}

dynamics::ManipulatorModel ArmConfig::build() const {
  auto model = [&] {
    if (type == "pendulum") {
      if (planar.size() != 1) throw InvalidInput(kStage, "pendulum needs exactly one link");
      return dynamics::ManipulatorModel::pendulum(planar[0], gravity);
    }
    if (type == "planar2") {
      if (planar.size() != 2) throw InvalidInput(kStage, "planar2 needs exactly two links");
      return dynamics::ManipulatorModel::planar_two_link(planar[0], planar[1], gravity);
    }
    if (type == "chain") {
      if (chain.empty()) throw InvalidInput(kStage, "chain needs at least one link");
      return dynamics::ManipulatorModel::chain(chain, gravity);
    }
    throw InvalidInput(kStage, "unknown arm type '" + type + "'");
  }();
  if (limits.q_min.size() > 0) model.set_limits(limits);
  return model;
}

observer::FilterConfig FilterPlan::build(int n, double t_s) const {
  observer::FilterConfig c = observer::FilterConfig::defaults(n, t_s);
  c.forgetting = forgetting;
  c.vb_iterations = vb_iterations;
  c.iw_per_iteration = iw_per_iteration;
  c.iw_dof = n + 1.0 + iw_dof_offset;
  c.iw_scale = process_prior * iw_dof_offset * Mat::Identity(n, n);
  c.emp_init = Vec::Constant(n, t_s * t_s * emp_init);
  c.emp_min = Vec::Constant(n, emp_min);
  c.emp_max = Vec::Constant(n, emp_max);
  c.p0 = p0 * Mat::Identity(n, n);
  c.static_process = process_prior * Mat::Identity(n, n);
  c.static_measurement = t_s * t_s * emp_init * Mat::Identity(n, n);
  c.akf_rho_nu = akf_rho_nu;
  c.akf_rho_d = akf_rho_d;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  const int n = arm.dof();
  auto sized = [n](const Vec& v) { return v.size() == n; };
  if (arm.limits.q_min.size() > 0 &&
      (!sized(arm.limits.q_min) || !sized(arm.limits.q_max) || !sized(arm.limits.dq_max) ||
       !sized(arm.limits.ddq_max)))
    throw InvalidInput(kStage, "joint limit vectors must have length n");
  if (static_cast<int>(friction.joints.size()) != n)
    throw InvalidInput(kStage, "friction profile must list every joint");
  if (static_cast<int>(hyperparams.joints.size()) != n)
    throw InvalidInput(kStage, "hyperparameters must list every joint");
  for (const auto& hp : hyperparams.joints) hp.validate();
  excitation.ga.validate();
  if (excitation.trajectories < 1) throw InvalidInput(kStage, "need at least one trajectory");
  if (!(excitation.duration > 0.0) || !(disturbance.duration > 0.0))
    throw InvalidInput(kStage, "durations must be positive");
  if (!(simulation.t_s > 0.0) || simulation.substeps < 1)
    throw InvalidInput(kStage, "invalid sampling settings");
  if (!(disturbance.segment_min > 0.0) || disturbance.segment_max < disturbance.segment_min)
    throw InvalidInput(kStage, "invalid disturbance segment range");
  if (mixture.components < 1 || mixture.support_points < 2)
    throw InvalidInput(kStage, "invalid mixture sizes");
  if (!(mixture.test_fraction >= 0.0 && mixture.test_fraction < 1.0))
    throw InvalidInput(kStage, "test fraction must lie in [0, 1)");
  static const std::set<std::string> known{"kvark", "gmr_gp", "static_kf", "akf"};
  for (const auto& o : observers)
    if (!known.count(o)) throw InvalidInput(kStage, "unknown observer '" + o + "'");
  if (seeds.empty()) throw InvalidInput(kStage, "seed list is empty");
  filter.build(n, simulation.t_s);
}

void ExperimentConfig::check_files() const {
  for (const auto& f : train_files)
    if (!std::filesystem::exists(f)) throw InvalidInput(kStage, "missing file " + f);
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.arm.type = "planar2";
  c.arm.planar = {{2.0, 0.5, 0.25, 2.0 * 0.25 / 12.0}, {1.5, 0.4, 0.2, 1.5 * 0.16 / 12.0}};
  c.arm.limits.q_min = Vec{{-1.5, 0.4}};
  c.arm.limits.q_max = Vec{{1.5, 2.6}};
  c.arm.limits.dq_max = Vec{{3.5, 3.5}};
  c.arm.limits.ddq_max = Vec{{30.0, 30.0}};

  c.excitation.settings.limit_margin = 0.8;

  dynamics::JointFriction j1;
  j1.coulomb = 1.0;
  j1.viscous = 0.6;
  j1.stribeck = 0.4;
  j1.noise_base = 0.03;
  j1.noise_slope = 0.25;
  dynamics::JointFriction j2;
  j2.coulomb = 0.6;
  j2.viscous = 0.4;
  j2.stribeck = 0.3;
  j2.noise_base = 0.03;
  j2.noise_slope = 0.2;
  c.friction.joints = {j1, j2};

  kmp::KmpHyperparams hp;
  hp.length_scale = 0.04;
  hp.signal_variance = 1.0;
  hp.lambda_mean = 0.05;
  hp.lambda_var = 20.0;
  c.hyperparams.joints = {hp, hp};
  c.seeds = {1, 2, 3};
  return c;
}

}  // namespace kvark::harness
