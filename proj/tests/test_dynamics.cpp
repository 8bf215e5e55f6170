#include "kvark/dynamics.hpp"
#include "kvark/excitation.hpp"
#include "kvark/observer.hpp"
#include "kvark/trajectory_io.hpp"
#include "dynamics_oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace kvark;
using namespace kvark::dynamics;
using namespace kvark::testing;
using kvark::testing::min_eig;

namespace {

// Chain configured as the planar two-link arm: z axes parallel, com measured
// back from the distal frame.
ManipulatorModel chain_as_planar(double g) {
  std::vector<DhLink> links(2);
  const PlanarLink p[2] = {link1(), link2()};
  for (int i = 0; i < 2; ++i) {
    links[i].a = p[i].length;
    links[i].mass = p[i].mass;
    links[i].com = Eigen::Vector3d(p[i].com - p[i].length, 0.0, 0.0);
    links[i].inertia = Eigen::Vector3d(1e-3, 1e-3, p[i].inertia).asDiagonal();
  }
  return ManipulatorModel::chain(links, g);
}

excitation::FourierTrajectoryParams gentle_reference() {
  auto p = excitation::FourierTrajectoryParams::zeros(Vec{{0.0, 1.5}}, 3, 10.0);
  p.a(0, 0) = 0.3;
  p.b(1, 0) = 0.25;
  p.a(1, 1) = 0.05;
  p.b(0, 2) = 0.02;
  return p;
}

SampledTrajectory run_gentle(const ExternalTorqueFn& ext, const FrictionProfile& fr,
                             std::uint64_t seed = 3, double duration = 4.0, double t_s = 0.004) {
  auto model = two_link();
  model.set_limits(JointLimits::symmetric(2, 3.0, 5.0, 50.0));
  const auto params = gentle_reference();
  SimulationOptions o;
  o.t_s = t_s;
  o.duration = duration;
  o.seed = seed;
  o.natural_frequency = 100.0;
  return simulate(model, fr, [&](double t) { return excitation::eval_trajectory(params, t); }, ext,
                  o);
}

}  // namespace

TEST_CASE("pendulum closed forms") {
  const auto p = unit_pendulum();
  for (double q : {-1.0, 0.0, 0.7, 2.0}) CHECK(p.mass_matrix(Vec::Constant(1, q))(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.gravity_vector(Vec::Constant(1, 0.0))(0) == doctest::Approx(9.81).epsilon(1e-14));
  CHECK(std::abs(p.gravity_vector(Vec::Constant(1, kPi / 2))(0)) < 1e-14);
  CHECK(p.coriolis_matrix(Vec::Constant(1, 0.3), Vec::Constant(1, 2.0))(0, 0) == 0.0);
  CHECK(p.inverse_dynamics(Vec::Constant(1, kPi / 2), Vec::Zero(1), Vec::Constant(1, 2.0))(0) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p.generalized_momentum(Vec::Constant(1, 0.4), Vec::Constant(1, 3.0))(0) == doctest::Approx(3.0));
  CHECK(p.momentum_input(Vec::Zero(1), Vec::Zero(1), Vec::Zero(1))(0) == doctest::Approx(-9.81));
  const auto flat = unit_pendulum(0.0);
  CHECK(flat.gravity_vector(Vec::Constant(1, 0.3)).norm() == 0.0);
}

TEST_CASE("two-link terms match the symbolic Lagrangian") {
  const auto m = two_link();
  const TwoLinkOracle o;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec q = testing::random_vec(rng, 2, -3, 3), dq = testing::random_vec(rng, 2, -4, 4),
              ddq = testing::random_vec(rng, 2, -20, 20);
    CHECK((m.mass_matrix(q) - o.M(q)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.inverse_dynamics(q, dq, ddq) - o.tau(q, dq, ddq)).cwiseAbs().maxCoeff() < 1e-8);
  }
  const Vec q{{0.3, kPi / 2}};
  const auto b = link2();
  CHECK(m.mass_matrix(q)(0, 1) == doctest::Approx(b.mass * 0.5 * b.com * std::cos(kPi / 2) +
                                                  b.mass * b.com * b.com + b.inertia));
}

TEST_CASE("static pose and zero velocity") {
  const auto m = two_link();
  const Vec q{{0.2, 1.1}};
  CHECK((m.inverse_dynamics(q, Vec::Zero(2), Vec::Zero(2)) - m.gravity_vector(q)).norm() < 1e-14);
  CHECK(m.coriolis_matrix(q, Vec::Zero(2)).norm() == 0.0);
  CHECK(m.generalized_momentum(q, Vec::Zero(2)).norm() == 0.0);
  CHECK(m.momentum_input(q, Vec::Zero(2), m.gravity_vector(q)).norm() < 1e-14);
}

TEST_CASE("mass matrix symmetric positive definite") {
  std::mt19937_64 rng(5);
  const auto m = two_link();
  const auto c = six_chain();
  for (int i = 0; i < 1000; ++i) {
    const Vec q = testing::random_vec(rng, 2, -3, 3);
    const Mat M = m.mass_matrix(q);
    CHECK(testing::is_symmetric(M));
    CHECK(min_eig(M) > 0.0);
  }
  for (int i = 0; i < 200; ++i) {
    const Mat M = c.mass_matrix(testing::random_vec(rng, 6, -3, 3));
    CHECK(testing::is_symmetric(M));
    CHECK(min_eig(M) > 0.0);
  }
}

TEST_CASE("skew symmetry of Mdot - 2C") {
  std::mt19937_64 rng(9);
  for (const auto& m : {two_link(), six_chain()}) {
    const int n = m.dof();
    for (int i = 0; i < 100; ++i) {
      const Vec q = testing::random_vec(rng, n, -3, 3), dq = testing::random_vec(rng, n, -2, 2),
                z = testing::random_vec(rng, n, -1, 1);
      const Mat N = mdot_fd(m, q, dq) - 2 * m.coriolis_matrix(q, dq);
      CHECK(std::abs(z.dot(N * z)) < 1e-6);
    }
  }
}

TEST_CASE("chain model agrees with the planar closed form") {
  const auto planar = two_link();
  const auto chain = chain_as_planar(9.81);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    const Vec q = testing::random_vec(rng, 2, -3, 3), dq = testing::random_vec(rng, 2, -3, 3),
              ddq = testing::random_vec(rng, 2, -10, 10);
    CHECK((chain.mass_matrix(q) - planar.mass_matrix(q)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((chain.coriolis_matrix(q, dq) - planar.coriolis_matrix(q, dq)).cwiseAbs().maxCoeff() <
          1e-9);
    // Gravity along -z is orthogonal to the plane of motion.
    CHECK(chain.gravity_vector(q).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((chain.rnea(q, dq, ddq, false) - planar.inverse_dynamics(q, dq, ddq) +
           planar.gravity_vector(q))
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }
}

TEST_CASE("recursive Newton-Euler matches M, C and g") {
  const auto c = six_chain();
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Vec q = testing::random_vec(rng, 6, -3, 3), dq = testing::random_vec(rng, 6, -2, 2),
              ddq = testing::random_vec(rng, 6, -5, 5);
    const Vec ref = c.mass_matrix(q) * ddq + c.coriolis_matrix(q, dq) * dq + c.gravity_vector(q);
    CHECK((c.rnea(q, dq, ddq, true) - ref).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((c.inverse_dynamics(q, dq, ddq) - ref).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("forward dynamics inverts inverse dynamics") {
  const auto c = six_chain();
  std::mt19937_64 rng(8);
  const Vec q = testing::random_vec(rng, 6, -2, 2), dq = testing::random_vec(rng, 6, -1, 1),
            ddq = testing::random_vec(rng, 6, -3, 3);
  CHECK((c.forward_dynamics(q, dq, c.inverse_dynamics(q, dq, ddq)) - ddq).norm() < 1e-9);
}

TEST_CASE("energy balance along an integrated trajectory") {
  const auto m = two_link();
  const TwoLinkOracle o;
  auto tau = [](double t) { return Vec{{2.0 * std::sin(3 * t), -1.0 + std::cos(2 * t)}}; };
  const auto r = energy_run(m, o, tau, 3.0, 1e-4);
  const double change = r.e1 - r.e0;
  CHECK(std::abs(change - r.work) < 1e-4 * std::max(std::abs(change), std::abs(r.work)));
}

TEST_CASE("passivity with zero torque and zero gravity") {
  const auto m = two_link(0.0);
  TwoLinkOracle o;
  o.g = 0.0;
  const auto r = energy_run(m, o, [](double) { return Vec::Zero(2); }, 10.0, 1e-3);
  CHECK(std::abs(r.e1 - r.e0) < 1e-8 * r.e0);
  CHECK(r.work == 0.0);
}

TEST_CASE("friction deterministic part is odd") {
  FrictionProfile f;
  f.joints = {{1.0, 0.6, 0.4, 0.1, 0.01, 0.03, 0.25}, {0.6, 0.4, 0.3, 0.05, 0.02, 0.0, 0.0}};
  std::mt19937_64 rng(2);
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec v = testing::random_vec(rng, 2, -4, 4);
    const Vec s = f.deterministic(v) + f.deterministic(-v);
    sum += s.cwiseAbs().sum();
  }
  CHECK(sum == 0.0);
  CHECK(f.deterministic(Vec::Zero(2)).norm() == 0.0);
  CHECK(f.noise_std(Vec{{2.0, -1.0}})(0) == doctest::Approx(0.03 + 0.5));
  CHECK(FrictionProfile::none(3).deterministic(Vec::Ones(3)).norm() == 0.0);
}

TEST_CASE("simulation reproduces commanded torque without friction") {
  const auto m = two_link();
  const auto tr = run_gentle([](double) { return Vec::Zero(2); }, FrictionProfile::none(2));
  const Mat res = residual_torques(m, tr);
  CHECK(std::sqrt(res.array().square().mean()) < 1e-3);
  CHECK(tr.tau_ext.has_value());
  CHECK(tr.size() == 1000);
}

TEST_CASE("constant external torque shows up in the residual") {
  const auto m = two_link();
  const Vec ext{{1.5, -0.7}};
  const auto tr = run_gentle([&](double) { return ext; }, FrictionProfile::none(2));
  const Mat res = residual_torques(m, tr);
  for (Eigen::Index k = 0; k < tr.size(); ++k) CHECK((res.row(k).transpose() - ext).norm() < 1e-6);
}

TEST_CASE("simulation is deterministic per seed") {
  FrictionProfile f;
  f.joints = {{1.0, 0.6, 0.4, 0.1, 0.01, 0.03, 0.25}, {0.6, 0.4, 0.3, 0.1, 0.01, 0.03, 0.2}};
  auto ext = [](double t) { return Vec{{t > 1 ? 2.0 : 0.0, 0.5}}; };
  const auto a = run_gentle(ext, f, 5), b = run_gentle(ext, f, 5), c = run_gentle(ext, f, 6);
  CHECK(a.tau_m == b.tau_m);
  CHECK(a.q == b.q);
  CHECK(a.ddq == b.ddq);
  CHECK(a.tau_m != c.tau_m);
}

TEST_CASE("tracking error stays small") {
  const auto tr = run_gentle([](double) { return Vec::Zero(2); }, FrictionProfile::none(2));
  const auto params = gentle_reference();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < tr.size(); ++k) {
    const auto ref = excitation::eval_trajectory(params, tr.t(k));
    worst = std::max(worst, (tr.q.row(k).transpose() - ref.q).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("limit violation names the joint") {
  auto model = two_link();
  model.set_limits(JointLimits::symmetric(2, 3.0, 5.0, 50.0));
  auto p = excitation::FourierTrajectoryParams::zeros(Vec{{0.0, 0.0}}, 1, 10.0);
  p.a(1, 0) = 4.0;
  SimulationOptions o;
  o.duration = 5.0;
  bool thrown = false;
  try {
    simulate(model, FrictionProfile::none(2),
             [&](double t) { return excitation::eval_trajectory(p, t); },
             [](double) { return Vec::Zero(2); }, o);
  } catch (const LimitViolation& e) {
    thrown = true;
    CHECK(e.joint() == 1);
    CHECK(e.time() >= 0.0);
    CHECK(e.stage() == "simulate");
  }
  CHECK(thrown);
}

TEST_CASE("momentum recursion along a simulation") {
  const auto m = two_link();
  const Vec ext{{0.8, -0.4}};
  const auto tr = run_gentle([&](double) { return ext; }, FrictionProfile::none(2), 3, 2.0, 0.001);
  const double ts = tr.t_s;
  double worst = 0.0, scale = 0.0;
  for (Eigen::Index k = 0; k + 1 < tr.size(); ++k) {
    const Vec q0 = tr.q.row(k).transpose(), q1 = tr.q.row(k + 1).transpose();
    const Vec v0 = tr.dq.row(k).transpose(), v1 = tr.dq.row(k + 1).transpose();
    const Vec tau = tr.tau_m.row(k).transpose();
    const Vec pdot = (m.generalized_momentum(q1, v1) - m.generalized_momentum(q0, v0)) / ts;
    const Vec drift = 0.5 * (m.momentum_input(q0, v0, Vec::Zero(2)) +
                             m.momentum_input(q1, v1, Vec::Zero(2)));
    worst = std::max(worst, (pdot - (drift + tau - ext)).cwiseAbs().maxCoeff());
    scale = std::max(scale, pdot.cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-3 * std::max(1.0, scale));
}

TEST_CASE("forward Euler momentum update by substitution") {
  const auto m = two_link();
  std::mt19937_64 rng(12);
  const Vec q = testing::random_vec(rng, 2, -1, 1), dq = testing::random_vec(rng, 2, -1, 1);
  const Vec tau_m = testing::random_vec(rng, 2, -5, 5), tau_ext{{0.7, -0.3}},
            tau_r = testing::random_vec(rng, 2, -1, 1);
  const double ts = 0.004;
  const Vec x0 = m.generalized_momentum(q, dq);
  const Vec u0 = m.momentum_input(q, dq, tau_m);
  const Vec x1 = x0 + ts * (u0 - tau_ext - tau_r);
  const Vec zeta = observer::virtual_measurement(x1, x0, u0, tau_r, ts);
  CHECK((zeta + ts * tau_ext).cwiseAbs().maxCoeff() < 1e-9);
  const Vec zero = observer::virtual_measurement(x0 + ts * (u0 - tau_r), x0, u0, tau_r, ts);
  CHECK(zero.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("one-step pendulum virtual measurement") {
  const auto p = unit_pendulum();
  const double ts = 0.01;
  const Vec q0 = Vec::Constant(1, kPi / 2), v0 = Vec::Zero(1);
  const Vec tau_m = p.gravity_vector(q0);
  const Vec ext = Vec::Constant(1, 1.0);
  Vec q = q0, v = v0;
  const int sub = 100;
  const double h = ts / sub;
  for (int i = 0; i < sub; ++i) {
    auto f = [&](const Vec& qq, const Vec& vv) { return p.forward_dynamics(qq, vv, tau_m - ext); };
    const Vec a1 = f(q, v);
    const Vec a2 = f(q + h / 2 * v, v + h / 2 * a1);
    const Vec a3 = f(q + h / 2 * (v + h / 2 * a1), v + h / 2 * a2);
    const Vec a4 = f(q + h * (v + h / 2 * a2), v + h * a3);
    q += h * v + h * h / 6 * (a1 + a2 + a3);
    v += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
  }
  const Vec zeta = observer::virtual_measurement(p.generalized_momentum(q, v),
                                                 p.generalized_momentum(q0, v0),
                                                 p.momentum_input(q0, v0, tau_m), Vec::Zero(1), ts);
  CHECK(zeta(0) == doctest::Approx(-0.01).epsilon(1e-3));
  CHECK(std::abs(zeta(0) + 0.01) < 1e-5);
}

TEST_CASE("cartesian wrench round trip") {
  const auto m = two_link();
  const Vec q{{0.0, kPi / 2}};
  const Vec F{{3.0, -2.0}};
  const Vec tau = m.jacobian(q).transpose() * F;
  CHECK((cartesian_wrench(m, q, tau) - F).norm() < 1e-8);
  CHECK(cartesian_wrench(m, q, Vec::Zero(2)).norm() == 0.0);
  // Tip force by hand: tip at (L1, L2) so tau_1 = x*Fy - y*Fx, tau_2 = L2*(-Fx).
  CHECK(tau(0) == doctest::Approx(0.5 * -2.0 - 0.4 * 3.0));
  CHECK(tau(1) == doctest::Approx(-0.4 * 3.0));
  CHECK_THROWS_AS(cartesian_wrench(m, Vec{{0.3, 0.0}}, Vec{{1.0, 1.0}}), SingularConfiguration);

  const auto c = six_chain();
  std::mt19937_64 rng(3);
  const Vec qc = testing::random_vec(rng, 6, -1.5, 1.5);
  const Vec W = testing::random_vec(rng, 6, -5, 5);
  CHECK((cartesian_wrench(c, qc, c.jacobian(qc).transpose() * W) - W).norm() < 1e-8);
}

TEST_CASE("trajectory CSV round trip") {
  FrictionProfile f;
  f.joints = {{1.0, 0.6, 0.4, 0.1, 0.01, 0.03, 0.25}, {0.6, 0.4, 0.3, 0.1, 0.01, 0.03, 0.2}};
  const auto tr = run_gentle([](double) { return Vec{{1.0, 0.0}}; }, f, 2, 1.0);
  std::stringstream ss;
  write_trajectory_csv(ss, tr);
  const std::string text = ss.str();
  CHECK(text.rfind("# ts=", 0) == 0);
  CHECK(text.find("t,q_1,q_2,dq_1,dq_2,ddq_1,ddq_2,tau_m_1,tau_m_2,tau_ext_1,tau_ext_2") !=
        std::string::npos);
  const auto back = read_trajectory_csv(ss);
  CHECK(back.t_s == tr.t_s);
  CHECK(back.t == tr.t);
  CHECK(back.q == tr.q);
  CHECK(back.dq == tr.dq);
  CHECK(back.ddq == tr.ddq);
  CHECK(back.tau_m == tr.tau_m);
  REQUIRE(back.tau_ext.has_value());
  CHECK(*back.tau_ext == *tr.tau_ext);
  std::stringstream bad("t,q_1\n0,1\n");
  CHECK_THROWS_AS(read_trajectory_csv(bad), InvalidInput);
}

TEST_CASE("trajectory validation") {
  auto tr = run_gentle([](double) { return Vec::Zero(2); }, FrictionProfile::none(2), 1, 0.5);
  CHECK_NOTHROW(tr.validate());
  tr.t(3) = tr.t(2);
  CHECK_THROWS_AS(tr.validate(), InvalidInput);
}

TEST_CASE("non-finite inputs are rejected") {
  const auto m = two_link();
  Vec q{{0.1, std::nan("")}};
  CHECK_THROWS_AS(m.mass_matrix(q), InvalidInput);
  CHECK_THROWS_AS(m.mass_matrix(Vec::Zero(3)), InvalidInput);
}
