#pragma once

#include "kvark/common.hpp"
#include "kvark/mixture.hpp"

namespace kvark::kmp {

/// The four KMP hyperparameters. `length_scale` enters the kernel exponent
/// as a divisor of the squared distance: exp(-0.5 |s - s'|^2 / l).
struct KmpHyperparams {
  double length_scale = 1.0;
  double signal_variance = 1.0;
  double lambda_mean = 1.0;
  double lambda_var = 1.0;

  void validate() const;
};

double se_kernel(const Vec& s, const Vec& s2, double length_scale, double signal_variance);

struct KmpPrediction {
  Vec mean;
  Mat cov;
};

class IllConditionedReference : public Error {
 public:
  using Error::Error;
};

class KmpModel {
 public:
  /// Builds the block Gram matrix and caches Cholesky factors of
  /// (K + lambda_mean Sigma) and (K + lambda_var Sigma).
  static KmpModel train(mixture::ReferenceTrajectory reference, const KmpHyperparams& hp);

  KmpPrediction predict(const Vec& query) const;
  /// Scalar-output shortcut; requires output_dim() == 1.
  void predict_scalar(double query, double& mean, double& variance) const;
  /// (N / lambda_var) sigma_f^2 I, the far-field covariance.
  Mat asymptotic_variance() const;

  const mixture::ReferenceTrajectory& reference() const { return ref_; }
  const KmpHyperparams& hyperparams() const { return hp_; }
  const Mat& gram() const { return gram_; }
  const Vec& mean_weights() const { return w1_; }
  const Vec& stacked_mean() const { return mu_; }
  const Mat& stacked_cov() const { return sigma_; }
  double mean_jitter() const { return jitter_mean_; }
  double var_jitter() const { return jitter_var_; }

 private:
  KmpModel() = default;
  Mat kernel_blocks(const Vec& query) const;

  mixture::ReferenceTrajectory ref_;
  KmpHyperparams hp_;
  Mat gram_;
  Mat sigma_;
  Vec mu_;
  Eigen::LLT<Mat> mean_factor_;
  Eigen::LLT<Mat> var_factor_;
  Vec w1_;
  double jitter_mean_ = 0.0;
  double jitter_var_ = 0.0;
};

/// Cholesky with a single jitter retry: on failure 1e-10 times the mean
/// diagonal is added once. Returns the jitter used.
double factor_with_jitter(const Mat& a, Eigen::LLT<Mat>& llt, const char* what);

}  // namespace kvark::kmp
