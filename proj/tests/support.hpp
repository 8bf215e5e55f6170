#pragma once

#include "kvark/config.hpp"
#include "kvark/dynamics.hpp"
#include "kvark/observer.hpp"

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <random>
#include <string>

namespace kvark::testing {

inline double min_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline bool is_symmetric(const Mat& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() == 0.0; }

/// Residual model that knows the simulator's friction law exactly.
class TrueResidual final : public observer::ResidualModel {
 public:
  explicit TrueResidual(dynamics::FrictionProfile f) : f_(std::move(f)) {}
  int dof() const override { return static_cast<int>(f_.joints.size()); }
  void predict(const Vec& dq, Vec& mean, Vec& variance) const override {
    mean = f_.deterministic(dq);
    variance = f_.noise_std(dq).array().square().matrix();
  }

 private:
  dynamics::FrictionProfile f_;
};

/// Reduced scenario that runs the full pipeline in about a second.
inline harness::ExperimentConfig small_config() {
  auto c = harness::default_config();
  c.excitation.trajectories = 2;
  c.excitation.duration = 10.0;
  c.excitation.ga.population = 12;
  c.excitation.ga.generations = 8;
  c.disturbance.duration = 6.0;
  c.mixture.components = 6;
  c.mixture.support_points = 12;
  c.seeds = {7};
  c.seed = 7;
  return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kvark_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Vec random_vec(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace kvark::testing
