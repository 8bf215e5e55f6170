#include "kvark/metrics.hpp"

#include <cmath>

namespace kvark::harness {

namespace {
constexpr const char* kStage = "metrics";
}

Vec rmse(const Mat& estimate, const Mat& truth) {
  if (estimate.rows() == 0) throw InvalidInput(kStage, "empty series");
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw InvalidInput(kStage, "estimate and truth shapes differ");
  return ((estimate - truth).array().square().colwise().sum() /
          static_cast<double>(estimate.rows()))
      .sqrt()
      .transpose();
}

Mat ground_truth_ext(const dynamics::SampledTrajectory& loaded,
                     const dynamics::SampledTrajectory& free) {
  if (loaded.size() != free.size() || loaded.dof() != free.dof())
    throw InvalidInput(kStage, "loaded and free runs differ in length or joint count");
  if (loaded.t_s != free.t_s) throw InvalidInput(kStage, "loaded and free runs differ in t_s");
  return loaded.tau_m - free.tau_m;
}

double aggregate_norm(const Vec& per_axis) { return per_axis.norm(); }

CartesianRmse cartesian_rmse(const dynamics::ManipulatorModel& model, const Mat& q,
                             const Mat& estimate, const Mat& truth, double rcond) {
  if (q.rows() != estimate.rows() || q.rows() != truth.rows())
    throw InvalidInput(kStage, "series lengths differ");
  if (q.rows() == 0) throw InvalidInput(kStage, "empty series");
  const int m = model.task_dim();
  Vec sum = Vec::Zero(m);
  long used = 0;
  CartesianRmse out;
  for (Eigen::Index k = 0; k < q.rows(); ++k) {
    const Vec qk = q.row(k).transpose();
    try {
      const Vec fe = dynamics::cartesian_wrench(model, qk, estimate.row(k).transpose(), rcond);
      const Vec ft = dynamics::cartesian_wrench(model, qk, truth.row(k).transpose(), rcond);
      sum += (fe - ft).array().square().matrix();
      ++used;
    } catch (const dynamics::SingularConfiguration&) {
      ++out.skipped;
    }
  }
  if (used == 0) throw NumericalError(kStage, "every configuration was singular");
  out.per_axis = (sum / static_cast<double>(used)).array().sqrt().matrix();
  out.aggregate = aggregate_norm(out.per_axis);
  return out;
}

}  // namespace kvark::harness
