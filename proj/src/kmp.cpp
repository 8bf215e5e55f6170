#include "kvark/kmp.hpp"

#include <cmath>

namespace kvark::kmp {

void KmpHyperparams::validate() const {
  if (!(length_scale > 0.0)) throw InvalidInput("kmp", "length scale must be > 0");
  if (!(signal_variance > 0.0)) throw InvalidInput("kmp", "signal variance must be > 0");
  if (!(lambda_mean >= 0.0)) throw InvalidInput("kmp", "lambda_mean must be >= 0");
  if (!(lambda_var > 0.0)) throw InvalidInput("kmp", "lambda_var must be > 0");
}

double se_kernel(const Vec& s, const Vec& s2, double length_scale, double signal_variance) {
  return signal_variance * std::exp(-0.5 * (s - s2).squaredNorm() / length_scale);
}

double factor_with_jitter(const Mat& a, Eigen::LLT<Mat>& llt, const char* what) {
  llt.compute(a);
  if (llt.info() == Eigen::Success) return 0.0;
  const double jitter = 1e-10 * std::max(1.0, a.diagonal().mean());
  Mat b = a;
  b.diagonal().array() += jitter;
  llt.compute(b);
  if (llt.info() != Eigen::Success)
    throw IllConditionedReference("kmp", std::string(what) + " is not positive definite after jitter");
  return jitter;
}

KmpModel KmpModel::train(mixture::ReferenceTrajectory reference, const KmpHyperparams& hp) {
  hp.validate();
  reference.validate();
  KmpModel m;
  m.ref_ = std::move(reference);
  m.hp_ = hp;
  const int n = m.ref_.size();
  const int o = m.ref_.output_dim();
  const int dim = n * o;

  m.gram_ = Mat::Zero(dim, dim);
  m.sigma_ = Mat::Zero(dim, dim);
  m.mu_.resize(dim);
  for (int i = 0; i < n; ++i) {
    const Vec si = m.ref_.inputs.row(i).transpose();
    for (int j = i; j < n; ++j) {
      const double k = se_kernel(si, m.ref_.inputs.row(j).transpose(), hp.length_scale,
                                 hp.signal_variance);
      for (int r = 0; r < o; ++r) {
        m.gram_(i * o + r, j * o + r) = k;
        m.gram_(j * o + r, i * o + r) = k;
      }
    }
    m.sigma_.block(i * o, i * o, o, o) = m.ref_.covs[static_cast<std::size_t>(i)];
    m.mu_.segment(i * o, o) = m.ref_.means[static_cast<std::size_t>(i)];
  }

  m.jitter_mean_ = factor_with_jitter(m.gram_ + hp.lambda_mean * m.sigma_, m.mean_factor_,
                                      "K + lambda_mean Sigma");
  m.jitter_var_ = factor_with_jitter(m.gram_ + hp.lambda_var * m.sigma_, m.var_factor_,
                                     "K + lambda_var Sigma");
  m.w1_ = m.mean_factor_.solve(m.mu_);
  return m;
}

Mat KmpModel::kernel_blocks(const Vec& query) const {
  const int n = ref_.size();
  const int o = ref_.output_dim();
  Mat k = Mat::Zero(n * o, o);
  for (int i = 0; i < n; ++i) {
    const double v = se_kernel(query, ref_.inputs.row(i).transpose(), hp_.length_scale,
                               hp_.signal_variance);
    for (int r = 0; r < o; ++r) k(i * o + r, r) = v;
  }
  return k;
}

KmpPrediction KmpModel::predict(const Vec& query) const {
  if (query.size() != ref_.input_dim()) throw InvalidInput("kmp", "query has wrong dimension");
  require_finite(query, "kmp", "query");
  const int o = ref_.output_dim();
  const Mat k = kernel_blocks(query);
  KmpPrediction p;
  p.mean = k.transpose() * w1_;
  const Mat quad = k.transpose() * var_factor_.solve(k);
  Mat cov = (static_cast<double>(ref_.size()) / hp_.lambda_var) *
            (hp_.signal_variance * Mat::Identity(o, o) - quad);
  cov = symmetrize(cov);
  if (o == 1) {
    cov(0, 0) = std::max(0.0, cov(0, 0));
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    if (es.eigenvalues().minCoeff() < 0.0) {
      const Vec ev = es.eigenvalues().cwiseMax(0.0);
      cov = symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    }
  }
  p.cov = cov;
  return p;
}

void KmpModel::predict_scalar(double query, double& mean, double& variance) const {
  if (ref_.output_dim() != 1 || ref_.input_dim() != 1)
    throw InvalidInput("kmp", "predict_scalar needs scalar input and output");
  const int n = ref_.size();
  Vec k(n);
  for (int i = 0; i < n; ++i) {
    const double d = query - ref_.inputs(i, 0);
    k(i) = hp_.signal_variance * std::exp(-0.5 * d * d / hp_.length_scale);
  }
  mean = k.dot(w1_);
  const double quad = k.dot(var_factor_.solve(k));
  variance = std::max(0.0, static_cast<double>(n) / hp_.lambda_var * (hp_.signal_variance - quad));
}

Mat KmpModel::asymptotic_variance() const {
  const int o = ref_.output_dim();
  return (static_cast<double>(ref_.size()) / hp_.lambda_var) * hp_.signal_variance *
         Mat::Identity(o, o);
}

}  // namespace kvark::kmp
