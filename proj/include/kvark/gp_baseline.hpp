#pragma once

#include "kvark/common.hpp"
#include "kvark/mixture.hpp"

namespace kvark::gp {

/// Dense GP regressor over the GMR support points, zero prior mean, with
/// per-point noise lambda_mean * Sigma_hat_i.
class GpModel {
 public:
  static GpModel train(const mixture::ReferenceTrajectory& reference, double length_scale,
                       double signal_variance, double lambda_mean);

  /// Posterior mean and variance (clamped at zero).
  void predict(const Vec& query, double& mean, double& variance) const;
  void predict_scalar(double query, double& mean, double& variance) const;

  const Mat& inputs() const { return inputs_; }
  const Vec& targets() const { return targets_; }
  const Vec& noise() const { return noise_; }
  double length_scale() const { return length_scale_; }
  double signal_variance() const { return signal_variance_; }
  double lambda_mean() const { return lambda_mean_; }
  const mixture::ReferenceTrajectory& reference() const { return ref_; }
  const Mat& factor_matrix() const { return factor_.matrixLLT(); }

 private:
  GpModel() = default;

  mixture::ReferenceTrajectory ref_;
  Mat inputs_;
  Vec targets_;
  Vec noise_;
  double length_scale_ = 1.0;
  double signal_variance_ = 1.0;
  double lambda_mean_ = 0.0;
  Eigen::LLT<Mat> factor_;
  Vec alpha_;
};

}  // namespace kvark::gp
