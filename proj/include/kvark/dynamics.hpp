#pragma once

#include "kvark/common.hpp"

#include <Eigen/Geometry>

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace kvark::dynamics {

/// Planar link: rotation about the joint's z axis, gravity along -y,
/// joint angle measured from +x.
struct PlanarLink {
  double mass = 1.0;       // kg
  double length = 1.0;     // m
  double com = 0.5;        // m, distance from the joint axis
  double inertia = 0.0;    // kg m^2 about the centre of mass
};

/// Standard Denavit-Hartenberg link for the spatial chain model.
struct DhLink {
  double a = 0.0;
  double alpha = 0.0;
  double d = 0.0;
  double theta_offset = 0.0;
  double mass = 1.0;
  Eigen::Vector3d com = Eigen::Vector3d::Zero();         // in link frame
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();     // about com, link frame
};

struct JointLimits {
  Vec q_min;
  Vec q_max;
  Vec dq_max;
  Vec ddq_max;

  static JointLimits symmetric(int n, double q, double dq, double ddq);
  bool contains(const Vec& q) const;
};

class ManipulatorModel {
 public:
  enum class Kind { Pendulum, PlanarTwoLink, Chain };

  static ManipulatorModel pendulum(const PlanarLink& link, double gravity = 9.81);
  static ManipulatorModel planar_two_link(const PlanarLink& l1, const PlanarLink& l2,
                                          double gravity = 9.81);
  /// Serial chain of revolute joints, gravity along -z of the base frame.
  static ManipulatorModel chain(std::vector<DhLink> links, double gravity = 9.81);

  Kind kind() const { return kind_; }
  int dof() const { return n_; }
  double gravity_accel() const { return gravity_; }
  const JointLimits& limits() const { return limits_; }
  void set_limits(JointLimits limits);
  const std::vector<PlanarLink>& planar_links() const { return planar_; }
  const std::vector<DhLink>& dh_links() const { return dh_; }

  Mat mass_matrix(const Vec& q) const;
  /// dM/dq_i for every joint i.
  std::vector<Mat> mass_matrix_partials(const Vec& q) const;
  /// Christoffel-symbol Coriolis matrix; Mdot - 2C is skew-symmetric.
  Mat coriolis_matrix(const Vec& q, const Vec& dq) const;
  Vec gravity_vector(const Vec& q) const;
  Vec inverse_dynamics(const Vec& q, const Vec& dq, const Vec& ddq) const;
  Vec generalized_momentum(const Vec& q, const Vec& dq) const;
  /// u = C^T dq - g + tau_m
  Vec momentum_input(const Vec& q, const Vec& dq, const Vec& tau_m) const;
  /// ddq = M^-1 (tau - C dq - g)
  Vec forward_dynamics(const Vec& q, const Vec& dq, const Vec& tau) const;

  /// Task-space Jacobian: (x, y) rows for planar arms, (v, w) for the chain.
  Mat jacobian(const Vec& q) const;
  /// Number of task-space wrench components (2 for planar arms, 6 for the chain).
  int task_dim() const { return kind_ == Kind::Chain ? 6 : 2; }

  /// Recursive Newton-Euler for the chain model (independent of M, C, g).
  Vec rnea(const Vec& q, const Vec& dq, const Vec& ddq, bool with_gravity) const;

 private:
  ManipulatorModel() = default;
  void check_size(const Vec& v, const char* what) const;

  struct ChainFrames {
    std::vector<Eigen::Vector3d> z;       // joint axes z_0..z_{n-1}
    std::vector<Eigen::Vector3d> origin;  // o_0..o_n
    std::vector<Eigen::Matrix3d> rot;     // R_1..R_n
  };
  ChainFrames chain_frames(const Vec& q) const;

  Kind kind_ = Kind::Pendulum;
  int n_ = 0;
  double gravity_ = 9.81;
  std::vector<PlanarLink> planar_;
  std::vector<DhLink> dh_;
  JointLimits limits_;
};

/// Friction ground truth for one joint: smooth Stribeck curve plus
/// zero-mean noise whose standard deviation grows with |dq|.
struct JointFriction {
  double coulomb = 0.0;           // N m
  double viscous = 0.0;           // N m s / rad
  double stribeck = 0.0;          // N m
  double stribeck_velocity = 0.1; // rad/s
  double smoothing = 0.01;        // rad/s, tanh width of the sign function
  double noise_base = 0.0;        // N m
  double noise_slope = 0.0;       // N m s / rad
};

struct FrictionProfile {
  std::vector<JointFriction> joints;

  static FrictionProfile none(int n);
  Vec deterministic(const Vec& dq) const;
  Vec noise_std(const Vec& dq) const;
};

struct SampledTrajectory {
  double t_s = 0.0;
  Vec t;
  Mat q;    // rows = samples, cols = joints
  Mat dq;
  Mat ddq;
  Mat tau_m;
  std::optional<Mat> tau_ext;

  int dof() const { return static_cast<int>(q.cols()); }
  Eigen::Index size() const { return q.rows(); }
  /// Throws InvalidInput when the trajectory breaks its invariants.
  void validate(const JointLimits* limits = nullptr) const;
};

struct ReferenceState {
  Vec q, dq, ddq;
};
using ReferenceFn = std::function<ReferenceState(double)>;
using ExternalTorqueFn = std::function<Vec(double)>;

struct SimulationOptions {
  double t_s = 0.004;
  double duration = 10.0;
  std::uint64_t seed = 1;
  int substeps = 10;
  double natural_frequency = 60.0;  // rad/s, PD loop
  double damping_ratio = 1.0;
};

class LimitViolation : public Error {
 public:
  LimitViolation(int joint, double time, const std::string& what)
      : Error("simulate", what), joint_(joint), time_(time) {}
  int joint() const { return joint_; }
  double time() const { return time_; }

 private:
  int joint_;
  double time_;
};

/// Tracks `reference` with computed-torque PD control (zero-order hold at t_s)
/// and integrates the plant with RK4 substeps. The recorded tau_m is the
/// commanded torque and ddq the realized acceleration at each sample.
SampledTrajectory simulate(const ManipulatorModel& model, const FrictionProfile& friction,
                           const ReferenceFn& reference, const ExternalTorqueFn& tau_ext,
                           const SimulationOptions& options);

class SingularConfiguration : public Error {
 public:
  using Error::Error;
};

/// Least-squares solution of J^T(q) F = tau. Throws SingularConfiguration when
/// a singular value of J falls below `rcond` times the largest one.
Vec cartesian_wrench(const ManipulatorModel& model, const Vec& q, const Vec& tau,
                     double rcond = 1e-10);

/// tau_m - tau_EL row by row.
Mat residual_torques(const ManipulatorModel& model, const SampledTrajectory& traj);

}  // namespace kvark::dynamics
