#pragma once

#include "kvark/common.hpp"
#include "kvark/dynamics.hpp"
#include "kvark/gp_baseline.hpp"
#include "kvark/kmp.hpp"

#include <memory>
#include <string>
#include <vector>

namespace kvark::observer {

/// Per-joint residual torque regressor queried at the joint velocity.
class ResidualModel {
 public:
  virtual ~ResidualModel() = default;
  virtual int dof() const = 0;
  /// Mean (N m) and variance (N^2 m^2) of the residual torque of every joint.
  virtual void predict(const Vec& dq, Vec& mean, Vec& variance) const = 0;
};

class KmpResidualModel final : public ResidualModel {
 public:
  explicit KmpResidualModel(std::vector<kmp::KmpModel> joints) : joints_(std::move(joints)) {}
  int dof() const override { return static_cast<int>(joints_.size()); }
  void predict(const Vec& dq, Vec& mean, Vec& variance) const override;
  const std::vector<kmp::KmpModel>& joints() const { return joints_; }

 private:
  std::vector<kmp::KmpModel> joints_;
};

class GpResidualModel final : public ResidualModel {
 public:
  explicit GpResidualModel(std::vector<gp::GpModel> joints) : joints_(std::move(joints)) {}
  int dof() const override { return static_cast<int>(joints_.size()); }
  void predict(const Vec& dq, Vec& mean, Vec& variance) const override;
  const std::vector<gp::GpModel>& joints() const { return joints_; }

 private:
  std::vector<gp::GpModel> joints_;
};

struct FilterConfig {
  double t_s = 0.004;
  double forgetting = 0.02;           // rho of the empirical-noise EWMA
  int vb_iterations = 3;              // M
  bool iw_per_iteration = false;      // increment the IW dof on every VB iteration
  double iw_dof = 0.0;                // lambda_0, must exceed n + 1
  Mat iw_scale;                       // Upsilon_0
  Vec emp_init;                       // diagonal of Sigma_emp at k = 0
  Vec emp_min;                        // per-joint bounds on diag(Sigma_emp)
  Vec emp_max;
  Mat p0;
  Vec omega0;
  // Baselines.
  Mat static_process;                 // Sigma_d of the static KF / initial AKF value
  Mat static_measurement;             // Sigma_nu of the static KF / initial AKF value
  double akf_rho_nu = 0.02;
  double akf_rho_d = 0.02;

  /// Weakly informative defaults: lambda_0 = n + 3, prior mean Sigma_d = 1e-4 I.
  static FilterConfig defaults(int n, double t_s);
  int dof() const { return static_cast<int>(omega0.size()); }
  Mat prior_process_mean() const { return iw_scale / (iw_dof - dof() - 1.0); }
  void validate() const;
};

struct FilterState {
  Vec omega;        // tau_ext estimate
  Mat P;
  Mat sigma_d;
  Mat sigma_emp;
  Mat sigma_nu;     // last measurement covariance (adapted in the AKF baseline)
  double iw_dof = 0.0;
  Mat iw_scale;
  Vec x_prev;       // momentum at k-1
  Vec u_prev;       // momentum input at k-1
  bool primed = false;
  long steps = 0;

  static FilterState initial(const FilterConfig& config);
};

struct StepDiagnostics {
  bool measured = false;
  Vec zeta;
  Vec mu_star;
  Mat sigma_star;
  Mat sigma_nu;
  Vec omega_pred;
  Vec innovation;
  Mat innovation_cov;
  Mat gain;
  double nis = 0.0;
};

/// zeta = x_k - x_{k-1} - t_s u_{k-1} + t_s mu_*
Vec virtual_measurement(const Vec& x_k, const Vec& x_prev, const Vec& u_prev, const Vec& mu_star,
                        double t_s);

/// Sigma_nu = t_s^2 Sigma_* + Sigma_emp
Mat measurement_covariance(const Mat& sigma_star, const Mat& sigma_emp, double t_s);

/// EWMA toward diag(r^2) followed by an elementwise clamp of the diagonal.
Mat update_empirical_noise(const Mat& sigma_emp, const Vec& innovation, double rho,
                           const Vec& lower, const Vec& upper);

/// Measurement update with H = -t_s I.
struct KfUpdate {
  Vec omega;
  Mat P;
  Mat gain;
  Vec innovation;
  Mat innovation_cov;
  double nis = 0.0;
};
KfUpdate kf_update(const Vec& omega_pred, const Mat& p_pred, const Vec& zeta, const Mat& sigma_nu,
                   double t_s);

/// Random-walk prediction with state.sigma_d followed by kf_update.
FilterState kf_step(const FilterState& state, const Vec& zeta, const Mat& sigma_nu,
                    const FilterConfig& config, StepDiagnostics* diag = nullptr);

struct VbUpdate {
  double dof = 0.0;
  Mat scale;
  Mat sigma_d;
};
/// Inverse-Wishart update: dof + 1, scale + e e^T + P, Sigma_d = scale' / (dof' - n - 1).
VbUpdate vb_update(double dof, const Mat& scale, const Vec& e, const Mat& p_kk);

/// One K-VARK step from a ready virtual measurement and the residual
/// model's predictive covariance.
FilterState kvark_update(const FilterState& state, const Vec& zeta, const Mat& sigma_star,
                         const FilterConfig& config, StepDiagnostics* diag = nullptr);

/// Full online step: momentum, residual query at dq, virtual measurement,
/// then kvark_update. The first call only primes x_{k-1}, u_{k-1}.
FilterState kvark_step(const FilterState& state, const Vec& q, const Vec& dq, const Vec& tau_m,
                       const dynamics::ManipulatorModel& model, const ResidualModel& residual,
                       const FilterConfig& config, StepDiagnostics* diag = nullptr);

/// Innovation-based adaptive KF baseline (forgetting factors akf_rho_nu, akf_rho_d).
FilterState innovation_akf_step(const FilterState& state, const Vec& zeta,
                                const FilterConfig& config, StepDiagnostics* diag = nullptr);

/// KF with the constant covariances config.static_process / static_measurement.
FilterState static_kf_step(const FilterState& state, const Vec& zeta, const FilterConfig& config,
                           StepDiagnostics* diag = nullptr);

/// Discrete algebraic Riccati fixed point (posterior covariance) of the
/// scalar random-walk filter with H = -t_s.
double random_walk_dare(double q, double r, double t_s);

enum class ObserverKind { Kvark, StaticKf, InnovationAkf };

/// Stateful wrapper used by the harness: owns the momentum bookkeeping and
/// dispatches to one of the step functions.
class Observer {
 public:
  Observer(std::string name, ObserverKind kind, const dynamics::ManipulatorModel& model,
           std::shared_ptr<const ResidualModel> residual, FilterConfig config);

  const std::string& name() const { return name_; }
  ObserverKind kind() const { return kind_; }
  const FilterState& state() const { return state_; }
  const StepDiagnostics& last() const { return diag_; }
  void reset();
  const Vec& step(const Vec& q, const Vec& dq, const Vec& tau_m);

 private:
  std::string name_;
  ObserverKind kind_;
  const dynamics::ManipulatorModel* model_;
  std::shared_ptr<const ResidualModel> residual_;
  FilterConfig config_;
  FilterState state_;
  StepDiagnostics diag_;
};

}  // namespace kvark::observer
