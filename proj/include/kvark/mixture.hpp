#pragma once

#include "kvark/common.hpp"

#include <cstdint>
#include <vector>

namespace kvark::mixture {

struct GaussianComponent {
  double weight = 1.0;
  Vec mean;
  Mat cov;
};

struct GmmFitInfo {
  std::uint64_t seed = 0;
  int iterations = 0;
  double log_likelihood = 0.0;
  double covariance_floor = 1e-8;
  int reseeds = 0;
  std::vector<double> log_likelihood_history;
  std::vector<int> reseed_iterations;
};

struct GmmModel {
  std::vector<GaussianComponent> components;
  GmmFitInfo info;

  int dim() const { return components.empty() ? 0 : static_cast<int>(components[0].mean.size()); }
  int size() const { return static_cast<int>(components.size()); }
  double log_density(const Vec& x) const;
  double log_likelihood(const Mat& data) const;
};

struct EmOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-7;
  double covariance_floor = 1e-8;
};

/// Clamps the eigenvalues of a symmetric matrix from below.
Mat floor_covariance(const Mat& cov, double floor);

/// E-step kernel: row-wise log of pi_c N(x; mu_c, Sigma_c) normalized into
/// responsibilities. Writes per-row log-likelihoods into `row_loglik`.
void compute_responsibilities(const Mat& data, const std::vector<GaussianComponent>& components,
                              Mat& resp, Vec& row_loglik, Execution exec = Execution::Parallel);

/// EM with k-means++ initialization. A component whose effective count drops
/// below one point is re-seeded at the worst-explained data point.
GmmModel em_fit(const Mat& data, int n_components, std::uint64_t seed,
                const EmOptions& options = {}, Execution exec = Execution::Parallel);

/// N support triples (s, conditional mean, conditional covariance).
struct ReferenceTrajectory {
  Mat inputs;                 // N x d
  std::vector<Vec> means;     // N of length o
  std::vector<Mat> covs;      // N of o x o

  int size() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  int output_dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  void validate() const;
};

/// Gaussian mixture regression: conditions the joint model on its first
/// `input_dim` coordinates at every support point.
ReferenceTrajectory gmr_condition(const GmmModel& gmm, const Mat& support, int input_dim,
                                  double covariance_floor = 1e-8);

/// N equally spaced points spanning [min, max] of `values`.
Vec support_grid(const Vec& values, int count);

}  // namespace kvark::mixture
