#include "kvark/dynamics.hpp"

#include <cmath>
#include <sstream>

namespace kvark::dynamics {

namespace {

void check_limits(const JointLimits& limits, const Vec& q, const Vec& dq, double t) {
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    if (q(j) < limits.q_min(j) || q(j) > limits.q_max(j)) {
      std::ostringstream os;
      os << "joint " << j + 1 << " position " << q(j) << " outside ["
         << limits.q_min(j) << ", " << limits.q_max(j) << "] at t=" << t << " s";
      throw LimitViolation(static_cast<int>(j), t, os.str());
    }
    if (std::abs(dq(j)) > limits.dq_max(j)) {
      std::ostringstream os;
      os << "joint " << j + 1 << " velocity " << dq(j) << " exceeds " << limits.dq_max(j)
         << " at t=" << t << " s";
      throw LimitViolation(static_cast<int>(j), t, os.str());
    }
  }
}

}  // namespace

SampledTrajectory simulate(const ManipulatorModel& model, const FrictionProfile& friction,
                           const ReferenceFn& reference, const ExternalTorqueFn& tau_ext,
                           const SimulationOptions& options) {
  if (!(options.t_s > 0.0)) throw InvalidInput("simulate", "t_s must be positive");
  if (!(options.duration > options.t_s)) throw InvalidInput("simulate", "duration too short");
  if (options.substeps < 1) throw InvalidInput("simulate", "substeps must be >= 1");
  const int n = model.dof();
  if (static_cast<int>(friction.joints.size()) != n)
    throw InvalidInput("simulate", "friction profile has wrong joint count");

  const auto rows = static_cast<Eigen::Index>(std::llround(options.duration / options.t_s));
  SampledTrajectory out;
  out.t_s = options.t_s;
  out.t.resize(rows);
  out.q.resize(rows, n);
  out.dq.resize(rows, n);
  out.ddq.resize(rows, n);
  out.tau_m.resize(rows, n);
  out.tau_ext = Mat(rows, n);

  const double kp = options.natural_frequency * options.natural_frequency;
  const double kd = 2.0 * options.damping_ratio * options.natural_frequency;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ReferenceState r0 = reference(0.0);
  Vec q = r0.q;
  Vec dq = r0.dq;
  const double h = options.t_s / options.substeps;

  for (Eigen::Index k = 0; k < rows; ++k) {
    const double t = static_cast<double>(k) * options.t_s;
    check_limits(model.limits(), q, dq, t);
    const ReferenceState ref = reference(t);
    const Vec v = ref.ddq + kp * (ref.q - q) + kd * (ref.dq - dq);
    const Vec tau_m = model.mass_matrix(q) * v + model.coriolis_matrix(q, dq) * dq +
                      model.gravity_vector(q);
    const Vec ext = tau_ext(t);
    Vec z(n);
    for (int j = 0; j < n; ++j) z(j) = normal(rng);

    // Plant torque with the sample's noise draw held over the interval.
    auto accel = [&](const Vec& qs, const Vec& dqs) {
      const Vec tau_r =
          friction.deterministic(dqs) + friction.noise_std(dqs).cwiseProduct(z);
      return model.forward_dynamics(qs, dqs, tau_m - ext - tau_r);
    };

    out.t(k) = t;
    out.q.row(k) = q.transpose();
    out.dq.row(k) = dq.transpose();
    out.ddq.row(k) = accel(q, dq).transpose();
    out.tau_m.row(k) = tau_m.transpose();
    out.tau_ext->row(k) = ext.transpose();

    for (int s = 0; s < options.substeps; ++s) {
      const Vec k1q = dq;
      const Vec k1v = accel(q, dq);
      const Vec k2q = dq + 0.5 * h * k1v;
      const Vec k2v = accel(q + 0.5 * h * k1q, k2q);
      const Vec k3q = dq + 0.5 * h * k2v;
      const Vec k3v = accel(q + 0.5 * h * k2q, k3q);
      const Vec k4q = dq + h * k3v;
      const Vec k4v = accel(q + h * k3q, k4q);
      q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
      dq += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
  }
  return out;
}

}  // namespace kvark::dynamics
