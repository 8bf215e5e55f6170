#pragma once

#include "kvark/common.hpp"
#include "kvark/dynamics.hpp"

namespace kvark::harness {

/// Column-wise root mean square error.
Vec rmse(const Mat& estimate, const Mat& truth);

/// tau_m(loaded) - tau_m(free), row by row.
Mat ground_truth_ext(const dynamics::SampledTrajectory& loaded,
                     const dynamics::SampledTrajectory& free);

struct CartesianRmse {
  Vec per_axis;
  double aggregate = 0.0;   // Euclidean norm of per_axis
  long skipped = 0;         // rows at singular or ill-conditioned configurations
};

double aggregate_norm(const Vec& per_axis);

/// Maps estimate and truth rows to task-space wrenches at q and compares them.
CartesianRmse cartesian_rmse(const dynamics::ManipulatorModel& model, const Mat& q,
                             const Mat& estimate, const Mat& truth, double rcond = 1e-3);

}  // namespace kvark::harness
