#include "kvark/observer.hpp"

#include <algorithm>
#include <cmath>

namespace kvark::observer {

namespace {
constexpr const char* kStage = "observer";

void check_psd(const Mat& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(kStage, std::string(what) + " is not finite");
}
}  // namespace

void KmpResidualModel::predict(const Vec& dq, Vec& mean, Vec& variance) const {
  const auto n = static_cast<Eigen::Index>(joints_.size());
  if (dq.size() != n) throw InvalidInput("residual", "velocity vector has wrong size");
  mean.resize(n);
  variance.resize(n);
  for (Eigen::Index j = 0; j < n; ++j)
    joints_[static_cast<std::size_t>(j)].predict_scalar(dq(j), mean(j), variance(j));
}

void GpResidualModel::predict(const Vec& dq, Vec& mean, Vec& variance) const {
  const auto n = static_cast<Eigen::Index>(joints_.size());
  if (dq.size() != n) throw InvalidInput("residual", "velocity vector has wrong size");
  mean.resize(n);
  variance.resize(n);
  for (Eigen::Index j = 0; j < n; ++j)
    joints_[static_cast<std::size_t>(j)].predict_scalar(dq(j), mean(j), variance(j));
}

FilterConfig FilterConfig::defaults(int n, double t_s) {
  FilterConfig c;
  c.t_s = t_s;
  c.iw_dof = n + 3.0;
  c.iw_scale = 1e-4 * (c.iw_dof - n - 1.0) * Mat::Identity(n, n);
  c.emp_init = Vec::Constant(n, t_s * t_s * 1e-2);
  c.emp_min = Vec::Constant(n, 1e-8);
  c.emp_max = Vec::Constant(n, 1e2);
  c.p0 = Mat::Identity(n, n);
  c.omega0 = Vec::Zero(n);
  c.static_process = 1e-4 * Mat::Identity(n, n);
  c.static_measurement = t_s * t_s * 1e-2 * Mat::Identity(n, n);
  return c;
}

void FilterConfig::validate() const {
  const int n = dof();
  if (n < 1) throw InvalidInput(kStage, "filter dimension must be >= 1");
  if (!(t_s > 0.0)) throw InvalidInput(kStage, "t_s must be positive");
  if (!(forgetting > 0.0 && forgetting < 1.0) && forgetting != 0.0)
    throw InvalidInput(kStage, "forgetting factor must lie in (0, 1)");
  if (vb_iterations < 1) throw InvalidInput(kStage, "VB iterations must be >= 1");
  if (!(iw_dof > n + 1.0)) throw InvalidInput(kStage, "IW dof must exceed n + 1");
  auto square = [n](const Mat& m) { return m.rows() == n && m.cols() == n; };
  if (!square(iw_scale) || !square(p0) || !square(static_process) || !square(static_measurement))
    throw InvalidInput(kStage, "covariance matrices must be n x n");
  if (emp_init.size() != n || emp_min.size() != n || emp_max.size() != n)
    throw InvalidInput(kStage, "empirical-noise vectors must have length n");
  if ((emp_min.array() > emp_max.array()).any())
    throw InvalidInput(kStage, "empirical-noise lower bound exceeds upper bound");
  if ((emp_init.array() <= 0.0).any()) throw InvalidInput(kStage, "initial Sigma_emp must be PD");
  if (akf_rho_nu < 0.0 || akf_rho_nu > 1.0 || akf_rho_d < 0.0 || akf_rho_d > 1.0)
    throw InvalidInput(kStage, "AKF forgetting factors must lie in [0, 1]");
}

FilterState FilterState::initial(const FilterConfig& config) {
  config.validate();
  FilterState s;
  s.omega = config.omega0;
  s.P = config.p0;
  s.iw_dof = config.iw_dof;
  s.iw_scale = config.iw_scale;
  s.sigma_d = config.prior_process_mean();
  s.sigma_emp = config.emp_init.asDiagonal();
  s.sigma_nu = config.static_measurement;
  return s;
}

Vec virtual_measurement(const Vec& x_k, const Vec& x_prev, const Vec& u_prev, const Vec& mu_star,
                        double t_s) {
  return x_k - x_prev - t_s * u_prev + t_s * mu_star;
}

Mat measurement_covariance(const Mat& sigma_star, const Mat& sigma_emp, double t_s) {
  return t_s * t_s * sigma_star + sigma_emp;
}

Mat update_empirical_noise(const Mat& sigma_emp, const Vec& innovation, double rho,
                           const Vec& lower, const Vec& upper) {
  Mat r2 = innovation.array().square().matrix().asDiagonal();
  Mat out = sigma_emp + rho * (r2 - sigma_emp);
  for (Eigen::Index j = 0; j < out.rows(); ++j) out(j, j) = std::clamp(out(j, j), lower(j), upper(j));
  return out;
}

KfUpdate kf_update(const Vec& omega_pred, const Mat& p_pred, const Vec& zeta, const Mat& sigma_nu,
                   double t_s) {
  const auto n = omega_pred.size();
  // H = -t_s I, so H P H^T = t_s^2 P and P H^T = -t_s P.
  KfUpdate u;
  u.innovation = zeta + t_s * omega_pred;
  u.innovation_cov = symmetrize(t_s * t_s * p_pred + sigma_nu);
  Eigen::LLT<Mat> llt(u.innovation_cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError(kStage, "innovation covariance is not positive definite");
  // K = P H^T S^-1 = -t_s P S^-1 (S symmetric).
  u.gain = (-t_s * llt.solve(p_pred)).transpose();
  u.omega = omega_pred + u.gain * u.innovation;
  const Mat ikh = Mat::Identity(n, n) + t_s * u.gain;  // I - K H
  u.P = symmetrize(ikh * p_pred);
  u.nis = u.innovation.dot(llt.solve(u.innovation));
  check_psd(u.P, "posterior covariance");
  return u;
}

FilterState kf_step(const FilterState& state, const Vec& zeta, const Mat& sigma_nu,
                    const FilterConfig& config, StepDiagnostics* diag) {
  FilterState next = state;
  const Mat p_pred = state.P + state.sigma_d;
  const KfUpdate u = kf_update(state.omega, p_pred, zeta, sigma_nu, config.t_s);
  next.omega = u.omega;
  next.P = u.P;
  next.sigma_nu = sigma_nu;
  ++next.steps;
  if (diag) {
    diag->measured = true;
    diag->zeta = zeta;
    diag->sigma_nu = sigma_nu;
    diag->omega_pred = state.omega;
    diag->innovation = u.innovation;
    diag->innovation_cov = u.innovation_cov;
    diag->gain = u.gain;
    diag->nis = u.nis;
  }
  return next;
}

VbUpdate vb_update(double dof, const Mat& scale, const Vec& e, const Mat& p_kk) {
  const auto n = static_cast<double>(e.size());
  if (!(dof > n + 1.0)) throw InvalidInput(kStage, "IW dof must exceed n + 1");
  VbUpdate v;
  v.dof = dof + 1.0;
  v.scale = symmetrize(scale + e * e.transpose() + p_kk);
  v.sigma_d = v.scale / (v.dof - n - 1.0);
  return v;
}

FilterState kvark_update(const FilterState& state, const Vec& zeta, const Mat& sigma_star,
                         const FilterConfig& config, StepDiagnostics* diag) {
  const double ts = config.t_s;
  FilterState next = state;
  const Vec omega_pred = state.omega;

  const Mat sigma_nu = measurement_covariance(sigma_star, state.sigma_emp, ts);
  const Vec r = zeta + ts * omega_pred;
  next.sigma_emp =
      update_empirical_noise(state.sigma_emp, r, config.forgetting, config.emp_min, config.emp_max);

  // VB fixed point: each pass re-predicts with the latest Sigma_d.
  Mat sigma_d = state.sigma_d;
  double dof = state.iw_dof;
  Mat scale = state.iw_scale;
  KfUpdate u;
  VbUpdate vb;
  for (int i = 0; i < config.vb_iterations; ++i) {
    const Mat p_pred = state.P + sigma_d;
    u = kf_update(omega_pred, p_pred, zeta, sigma_nu, ts);
    const Vec e = u.omega - omega_pred;
    if (config.iw_per_iteration) {
      vb = vb_update(dof, scale, e, u.P);
      dof = vb.dof;
      scale = vb.scale;
    } else {
      vb = vb_update(state.iw_dof, state.iw_scale, e, u.P);
    }
    sigma_d = vb.sigma_d;
  }

  next.omega = u.omega;
  next.P = u.P;
  next.sigma_d = symmetrize(sigma_d);
  next.iw_dof = vb.dof;
  next.iw_scale = vb.scale;
  next.sigma_nu = sigma_nu;
  ++next.steps;
  if (diag) {
    diag->measured = true;
    diag->zeta = zeta;
    diag->sigma_star = sigma_star;
    diag->sigma_nu = sigma_nu;
    diag->omega_pred = omega_pred;
    diag->innovation = u.innovation;
    diag->innovation_cov = u.innovation_cov;
    diag->gain = u.gain;
    diag->nis = u.nis;
  }
  return next;
}

FilterState kvark_step(const FilterState& state, const Vec& q, const Vec& dq, const Vec& tau_m,
                       const dynamics::ManipulatorModel& model, const ResidualModel& residual,
                       const FilterConfig& config, StepDiagnostics* diag) {
  const Vec x = model.generalized_momentum(q, dq);
  const Vec u = model.momentum_input(q, dq, tau_m);
  if (!state.primed) {
    FilterState next = state;
    next.x_prev = x;
    next.u_prev = u;
    next.primed = true;
    if (diag) diag->measured = false;
    return next;
  }
  Vec mu, var;
  residual.predict(dq, mu, var);
  const Vec zeta = virtual_measurement(x, state.x_prev, state.u_prev, mu, config.t_s);
  FilterState next = kvark_update(state, zeta, Mat(var.asDiagonal()), config, diag);
  next.x_prev = x;
  next.u_prev = u;
  if (diag) diag->mu_star = mu;
  return next;
}

FilterState innovation_akf_step(const FilterState& state, const Vec& zeta,
                                const FilterConfig& config, StepDiagnostics* diag) {
  const double ts = config.t_s;
  FilterState next = state;
  const Mat p_pred = state.P + state.sigma_d;
  const Vec r = zeta + ts * state.omega;
  next.sigma_nu = symmetrize((1.0 - config.akf_rho_nu) * state.sigma_nu +
                             config.akf_rho_nu * (r * r.transpose() + ts * ts * p_pred));
  const KfUpdate u = kf_update(state.omega, p_pred, zeta, next.sigma_nu, ts);
  next.omega = u.omega;
  next.P = u.P;
  const Vec kr = u.gain * u.innovation;
  next.sigma_d = symmetrize((1.0 - config.akf_rho_d) * state.sigma_d +
                            config.akf_rho_d * kr * kr.transpose());
  ++next.steps;
  if (diag) {
    diag->measured = true;
    diag->zeta = zeta;
    diag->sigma_nu = next.sigma_nu;
    diag->omega_pred = state.omega;
    diag->innovation = u.innovation;
    diag->innovation_cov = u.innovation_cov;
    diag->gain = u.gain;
    diag->nis = u.nis;
  }
  return next;
}

FilterState static_kf_step(const FilterState& state, const Vec& zeta, const FilterConfig& config,
                           StepDiagnostics* diag) {
  FilterState s = state;
  s.sigma_d = config.static_process;
  return kf_step(s, zeta, config.static_measurement, config, diag);
}

double random_walk_dare(double q, double r, double t_s) {
  // Posterior P solves P^2 + q P - q r / t_s^2 = 0.
  const double c = q * r / (t_s * t_s);
  return 0.5 * (-q + std::sqrt(q * q + 4.0 * c));
}

Observer::Observer(std::string name, ObserverKind kind, const dynamics::ManipulatorModel& model,
                   std::shared_ptr<const ResidualModel> residual, FilterConfig config)
    : name_(std::move(name)),
      kind_(kind),
      model_(&model),
      residual_(std::move(residual)),
      config_(std::move(config)) {
  if (!residual_ || residual_->dof() != model.dof())
    throw InvalidInput(kStage, "residual model does not match the manipulator");
  reset();
}

void Observer::reset() {
  state_ = FilterState::initial(config_);
  if (kind_ == ObserverKind::StaticKf || kind_ == ObserverKind::InnovationAkf)
    state_.sigma_d = config_.static_process;
  diag_ = StepDiagnostics{};
}

const Vec& Observer::step(const Vec& q, const Vec& dq, const Vec& tau_m) {
  if (kind_ == ObserverKind::Kvark) {
    state_ = kvark_step(state_, q, dq, tau_m, *model_, *residual_, config_, &diag_);
    return state_.omega;
  }
  const Vec x = model_->generalized_momentum(q, dq);
  const Vec u = model_->momentum_input(q, dq, tau_m);
  if (!state_.primed) {
    state_.x_prev = x;
    state_.u_prev = u;
    state_.primed = true;
    diag_.measured = false;
    return state_.omega;
  }
  Vec mu, var;
  residual_->predict(dq, mu, var);
  const Vec zeta = virtual_measurement(x, state_.x_prev, state_.u_prev, mu, config_.t_s);
  state_ = kind_ == ObserverKind::StaticKf ? static_kf_step(state_, zeta, config_, &diag_)
                                           : innovation_akf_step(state_, zeta, config_, &diag_);
  state_.x_prev = x;
  state_.u_prev = u;
  diag_.mu_star = mu;
  return state_.omega;
}

}  // namespace kvark::observer
