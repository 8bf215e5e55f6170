#include "kvark/gp_baseline.hpp"

#include "kvark/kmp.hpp"

#include <cmath>

namespace kvark::gp {

GpModel GpModel::train(const mixture::ReferenceTrajectory& reference, double length_scale,
                       double signal_variance, double lambda_mean) {
  reference.validate();
  if (reference.output_dim() != 1) throw InvalidInput("gp", "GP baseline supports scalar outputs only");
  if (!(length_scale > 0.0) || !(signal_variance > 0.0) || !(lambda_mean >= 0.0))
    throw InvalidInput("gp", "invalid hyperparameters");
  const int n = reference.size();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((reference.inputs.row(i) - reference.inputs.row(j)).squaredNorm() == 0.0)
        throw InvalidInput("gp", "training inputs must be distinct");

  GpModel m;
  m.ref_ = reference;
  m.inputs_ = reference.inputs;
  m.length_scale_ = length_scale;
  m.signal_variance_ = signal_variance;
  m.lambda_mean_ = lambda_mean;
  m.targets_.resize(n);
  m.noise_.resize(n);
  Mat k(n, n);
  for (int i = 0; i < n; ++i) {
    m.targets_(i) = reference.means[static_cast<std::size_t>(i)](0);
    m.noise_(i) = lambda_mean * reference.covs[static_cast<std::size_t>(i)](0, 0);
    for (int j = 0; j < n; ++j)
      k(i, j) = kmp::se_kernel(m.inputs_.row(i).transpose(), m.inputs_.row(j).transpose(),
                               length_scale, signal_variance);
  }
  k.diagonal() += m.noise_;
  kmp::factor_with_jitter(k, m.factor_, "K + noise");
  m.alpha_ = m.factor_.solve(m.targets_);
  return m;
}

void GpModel::predict(const Vec& query, double& mean, double& variance) const {
  if (query.size() != inputs_.cols()) throw InvalidInput("gp", "query has wrong dimension");
  const auto n = inputs_.rows();
  Vec k(n);
  for (Eigen::Index i = 0; i < n; ++i)
    k(i) = kmp::se_kernel(query, inputs_.row(i).transpose(), length_scale_, signal_variance_);
  mean = k.dot(alpha_);
  variance = std::max(0.0, signal_variance_ - k.dot(factor_.solve(k)));
}

void GpModel::predict_scalar(double query, double& mean, double& variance) const {
  const auto n = inputs_.rows();
  Vec k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = query - inputs_(i, 0);
    k(i) = signal_variance_ * std::exp(-0.5 * d * d / length_scale_);
  }
  mean = k.dot(alpha_);
  variance = std::max(0.0, signal_variance_ - k.dot(factor_.solve(k)));
}

}  // namespace kvark::gp
