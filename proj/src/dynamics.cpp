#include "kvark/dynamics.hpp"

#include <cmath>

namespace kvark::dynamics {

namespace {

constexpr const char* kStage = "dynamics";

Eigen::Matrix4d dh_transform(const DhLink& l, double q) {
  const double th = q + l.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(l.alpha), sa = std::sin(l.alpha);
  Eigen::Matrix4d a;
  a << ct, -st * ca, st * sa, l.a * ct,
       st, ct * ca, -ct * sa, l.a * st,
       0.0, sa, ca, l.d,
       0.0, 0.0, 0.0, 1.0;
  return a;
}

}  // namespace

JointLimits JointLimits::symmetric(int n, double q, double dq, double ddq) {
  JointLimits l;
  l.q_min = Vec::Constant(n, -q);
  l.q_max = Vec::Constant(n, q);
  l.dq_max = Vec::Constant(n, dq);
  l.ddq_max = Vec::Constant(n, ddq);
  return l;
}

bool JointLimits::contains(const Vec& q) const {
  return (q.array() >= q_min.array()).all() && (q.array() <= q_max.array()).all();
}

ManipulatorModel ManipulatorModel::pendulum(const PlanarLink& link, double gravity) {
  ManipulatorModel m;
  m.kind_ = Kind::Pendulum;
  m.n_ = 1;
  m.gravity_ = gravity;
  m.planar_ = {link};
  m.limits_ = JointLimits::symmetric(1, M_PI, 10.0, 100.0);
  return m;
}

ManipulatorModel ManipulatorModel::planar_two_link(const PlanarLink& l1, const PlanarLink& l2,
                                                   double gravity) {
  ManipulatorModel m;
  m.kind_ = Kind::PlanarTwoLink;
  m.n_ = 2;
  m.gravity_ = gravity;
  m.planar_ = {l1, l2};
  m.limits_ = JointLimits::symmetric(2, M_PI, 10.0, 100.0);
  return m;
}

ManipulatorModel ManipulatorModel::chain(std::vector<DhLink> links, double gravity) {
  if (links.empty()) throw InvalidInput(kStage, "chain needs at least one link");
  ManipulatorModel m;
  m.kind_ = Kind::Chain;
  m.n_ = static_cast<int>(links.size());
  m.gravity_ = gravity;
  m.dh_ = std::move(links);
  m.limits_ = JointLimits::symmetric(m.n_, M_PI, 10.0, 100.0);
  return m;
}

void ManipulatorModel::set_limits(JointLimits limits) {
  if (limits.q_min.size() != n_ || limits.q_max.size() != n_ || limits.dq_max.size() != n_ ||
      limits.ddq_max.size() != n_)
    throw InvalidInput(kStage, "joint limit vectors must have one entry per joint");
  limits_ = std::move(limits);
}

void ManipulatorModel::check_size(const Vec& v, const char* what) const {
  if (v.size() != n_)
    throw InvalidInput(kStage, std::string(what) + " has " + std::to_string(v.size()) +
                                   " entries, expected " + std::to_string(n_));
  require_finite(v, kStage, what);
}

ManipulatorModel::ChainFrames ManipulatorModel::chain_frames(const Vec& q) const {
  ChainFrames f;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  f.origin.push_back(Eigen::Vector3d::Zero());
  for (int i = 0; i < n_; ++i) {
    f.z.push_back(t.block<3, 1>(0, 2));
    t = t * dh_transform(dh_[i], q(i));
    f.rot.push_back(t.block<3, 3>(0, 0));
    f.origin.push_back(t.block<3, 1>(0, 3));
  }
  return f;
}

Vec ManipulatorModel::rnea(const Vec& q, const Vec& dq, const Vec& ddq, bool with_gravity) const {
  if (kind_ != Kind::Chain) {
    Vec tau = mass_matrix(q) * ddq + coriolis_matrix(q, dq) * dq;
    if (with_gravity) tau += gravity_vector(q);
    return tau;
  }
  const ChainFrames f = chain_frames(q);
  std::vector<Eigen::Vector3d> force(n_), moment(n_), com(n_);
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  Eigen::Vector3d dw = Eigen::Vector3d::Zero();
  Eigen::Vector3d a(0.0, 0.0, with_gravity ? gravity_ : 0.0);

  for (int i = 0; i < n_; ++i) {
    const Eigen::Vector3d& z = f.z[i];
    const Eigen::Vector3d w_prev = w;
    w = w_prev + dq(i) * z;
    dw = dw + ddq(i) * z + w_prev.cross(dq(i) * z);
    const Eigen::Vector3d r = f.origin[i + 1] - f.origin[i];
    a = a + dw.cross(r) + w.cross(w.cross(r));
    const Eigen::Vector3d rc = f.rot[i] * dh_[i].com;
    com[i] = f.origin[i + 1] + rc;
    const Eigen::Vector3d ac = a + dw.cross(rc) + w.cross(w.cross(rc));
    const Eigen::Matrix3d inertia = f.rot[i] * dh_[i].inertia * f.rot[i].transpose();
    force[i] = dh_[i].mass * ac;
    moment[i] = inertia * dw + w.cross(inertia * w);
  }

  Vec tau(n_);
  Eigen::Vector3d f_next = Eigen::Vector3d::Zero();
  Eigen::Vector3d n_next = Eigen::Vector3d::Zero();
  for (int i = n_ - 1; i >= 0; --i) {
    const Eigen::Vector3d& o_prev = f.origin[i];
    const Eigen::Vector3d n_i = moment[i] + n_next + (com[i] - o_prev).cross(force[i]) +
                                (f.origin[i + 1] - o_prev).cross(f_next);
    const Eigen::Vector3d f_i = force[i] + f_next;
    tau(i) = n_i.dot(f.z[i]);
    f_next = f_i;
    n_next = n_i;
  }
  return tau;
}

Mat ManipulatorModel::mass_matrix(const Vec& q) const {
  check_size(q, "q");
  switch (kind_) {
    case Kind::Pendulum: {
      const auto& l = planar_[0];
      return Mat::Constant(1, 1, l.mass * l.com * l.com + l.inertia);
    }
    case Kind::PlanarTwoLink: {
      const auto& l1 = planar_[0];
      const auto& l2 = planar_[1];
      const double c2 = std::cos(q(1));
      const double m22 = l2.mass * l2.com * l2.com + l2.inertia;
      const double m12 = m22 + l2.mass * l1.length * l2.com * c2;
      const double m11 = l1.mass * l1.com * l1.com + l1.inertia +
                         l2.mass * (l1.length * l1.length + 2.0 * l1.length * l2.com * c2) + m22;
      Mat m(2, 2);
      m << m11, m12, m12, m22;
      return m;
    }
    case Kind::Chain: {
      Mat m(n_, n_);
      const Vec zero = Vec::Zero(n_);
      for (int j = 0; j < n_; ++j) m.col(j) = rnea(q, zero, Vec::Unit(n_, j), false);
      return symmetrize(m);
    }
  }
  return {};
}

std::vector<Mat> ManipulatorModel::mass_matrix_partials(const Vec& q) const {
  check_size(q, "q");
  std::vector<Mat> d(n_, Mat::Zero(n_, n_));
  switch (kind_) {
    case Kind::Pendulum:
      break;
    case Kind::PlanarTwoLink: {
      const auto& l1 = planar_[0];
      const auto& l2 = planar_[1];
      const double h = -l2.mass * l1.length * l2.com * std::sin(q(1));
      d[1] << 2.0 * h, h, h, 0.0;
      break;
    }
    case Kind::Chain: {
      const double step = 1e-6;
      for (int i = 0; i < n_; ++i) {
        Vec qp = q, qm = q;
        qp(i) += step;
        qm(i) -= step;
        d[i] = (mass_matrix(qp) - mass_matrix(qm)) / (2.0 * step);
      }
      break;
    }
  }
  return d;
}

Mat ManipulatorModel::coriolis_matrix(const Vec& q, const Vec& dq) const {
  check_size(dq, "dq");
  const std::vector<Mat> dm = mass_matrix_partials(q);
  Mat c = Mat::Zero(n_, n_);
  for (int k = 0; k < n_; ++k)
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < n_; ++i)
        c(k, j) += 0.5 * (dm[i](k, j) + dm[j](k, i) - dm[k](i, j)) * dq(i);
  return c;
}

Vec ManipulatorModel::gravity_vector(const Vec& q) const {
  check_size(q, "q");
  switch (kind_) {
    case Kind::Pendulum: {
      const auto& l = planar_[0];
      return Vec::Constant(1, l.mass * gravity_ * l.com * std::cos(q(0)));
    }
    case Kind::PlanarTwoLink: {
      const auto& l1 = planar_[0];
      const auto& l2 = planar_[1];
      const double c1 = std::cos(q(0));
      const double c12 = std::cos(q(0) + q(1));
      Vec g(2);
      g(1) = l2.mass * gravity_ * l2.com * c12;
      g(0) = (l1.mass * l1.com + l2.mass * l1.length) * gravity_ * c1 + g(1);
      return g;
    }
    case Kind::Chain:
      return rnea(q, Vec::Zero(n_), Vec::Zero(n_), true);
  }
  return {};
}

Vec ManipulatorModel::inverse_dynamics(const Vec& q, const Vec& dq, const Vec& ddq) const {
  check_size(q, "q");
  check_size(dq, "dq");
  check_size(ddq, "ddq");
  if (kind_ == Kind::Chain) return rnea(q, dq, ddq, true);
  return mass_matrix(q) * ddq + coriolis_matrix(q, dq) * dq + gravity_vector(q);
}

Vec ManipulatorModel::generalized_momentum(const Vec& q, const Vec& dq) const {
  check_size(dq, "dq");
  return mass_matrix(q) * dq;
}

Vec ManipulatorModel::momentum_input(const Vec& q, const Vec& dq, const Vec& tau_m) const {
  check_size(tau_m, "tau_m");
  return coriolis_matrix(q, dq).transpose() * dq - gravity_vector(q) + tau_m;
}

Vec ManipulatorModel::forward_dynamics(const Vec& q, const Vec& dq, const Vec& tau) const {
  const Vec bias = kind_ == Kind::Chain ? rnea(q, dq, Vec::Zero(n_), true)
                                        : Vec(coriolis_matrix(q, dq) * dq + gravity_vector(q));
  return mass_matrix(q).llt().solve(tau - bias);
}

Mat ManipulatorModel::jacobian(const Vec& q) const {
  check_size(q, "q");
  if (kind_ == Kind::Chain) {
    const ChainFrames f = chain_frames(q);
    Mat j(6, n_);
    for (int i = 0; i < n_; ++i) {
      j.block<3, 1>(0, i) = f.z[i].cross(f.origin[n_] - f.origin[i]);
      j.block<3, 1>(3, i) = f.z[i];
    }
    return j;
  }
  Mat j = Mat::Zero(2, n_);
  double angle = 0.0;
  // Column i collects the tip velocity contribution of joint i.
  std::vector<double> cum(n_);
  for (int i = 0; i < n_; ++i) {
    angle += q(i);
    cum[i] = angle;
  }
  for (int i = 0; i < n_; ++i) {
    for (int k = i; k < n_; ++k) {
      j(0, i) -= planar_[k].length * std::sin(cum[k]);
      j(1, i) += planar_[k].length * std::cos(cum[k]);
    }
  }
  return j;
}

FrictionProfile FrictionProfile::none(int n) {
  FrictionProfile p;
  p.joints.assign(n, JointFriction{});
  return p;
}

Vec FrictionProfile::deterministic(const Vec& dq) const {
  Vec tau(dq.size());
  for (Eigen::Index j = 0; j < dq.size(); ++j) {
    const auto& f = joints[j];
    const double v = dq(j);
    const double ratio = v / f.stribeck_velocity;
    const double level = f.coulomb + f.stribeck * std::exp(-ratio * ratio);
    tau(j) = level * std::tanh(v / f.smoothing) + f.viscous * v;
  }
  return tau;
}

Vec FrictionProfile::noise_std(const Vec& dq) const {
  Vec s(dq.size());
  for (Eigen::Index j = 0; j < dq.size(); ++j)
    s(j) = joints[j].noise_base + joints[j].noise_slope * std::abs(dq(j));
  return s;
}

void SampledTrajectory::validate(const JointLimits* limits) const {
  constexpr const char* stage = "trajectory";
  const Eigen::Index rows = q.rows();
  if (rows < 2) throw InvalidInput(stage, "trajectory needs at least two rows");
  if (!(t_s > 0.0)) throw InvalidInput(stage, "sampling period must be positive");
  if (t.size() != rows || dq.rows() != rows || ddq.rows() != rows || tau_m.rows() != rows)
    throw InvalidInput(stage, "column blocks have inconsistent row counts");
  const Eigen::Index n = q.cols();
  if (dq.cols() != n || ddq.cols() != n || tau_m.cols() != n ||
      (tau_ext && (tau_ext->rows() != rows || tau_ext->cols() != n)))
    throw InvalidInput(stage, "column blocks have inconsistent joint counts");
  for (Eigen::Index k = 1; k < rows; ++k) {
    const double dt = t(k) - t(k - 1);
    if (!(dt > 0.0)) throw InvalidInput(stage, "timestamps must be strictly increasing");
    if (std::abs(dt - t_s) > 1e-6 * t_s + 1e-12 * std::abs(t(k)))
      throw InvalidInput(stage, "timestamps are not uniformly spaced at t_s");
  }
  if (limits) {
    for (Eigen::Index k = 0; k < rows; ++k)
      if (!limits->contains(q.row(k).transpose()))
        throw InvalidInput(stage, "joint position outside limits at row " + std::to_string(k));
  }
}

Vec cartesian_wrench(const ManipulatorModel& model, const Vec& q, const Vec& tau, double rcond) {
  if (tau.size() != model.dof()) throw InvalidInput("cartesian_wrench", "tau has wrong size");
  const Mat j = model.jacobian(q);
  Eigen::JacobiSVD<Mat> svd(j.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double tol = rcond * std::max(1.0, s.size() ? s(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++rank;
  if (rank < j.rows())
    throw SingularConfiguration("cartesian_wrench",
                                "Jacobian is rank deficient (rank " + std::to_string(rank) +
                                    " < " + std::to_string(j.rows()) + ")");
  return svd.solve(tau);
}

Mat residual_torques(const ManipulatorModel& model, const SampledTrajectory& traj) {
  Mat r(traj.size(), traj.dof());
  for (Eigen::Index k = 0; k < traj.size(); ++k) {
    const Vec tau_el = model.inverse_dynamics(traj.q.row(k).transpose(), traj.dq.row(k).transpose(),
                                              traj.ddq.row(k).transpose());
    r.row(k) = traj.tau_m.row(k) - tau_el.transpose();
  }
  return r;
}

}  // namespace kvark::dynamics
