#pragma once

#include "kvark/dynamics.hpp"

#include <iosfwd>
#include <string>

namespace kvark::dynamics {

/// CSV layout: a `# ts=<value>` comment line, then the header
/// `t,q_1..q_n,dq_1..dq_n,ddq_1..ddq_n,tau_m_1..tau_m_n[,tau_ext_1..tau_ext_n]`,
/// then one row per sample with 17 significant digits.
void write_trajectory_csv(std::ostream& os, const SampledTrajectory& traj);
void save_trajectory_csv(const std::string& path, const SampledTrajectory& traj);

SampledTrajectory read_trajectory_csv(std::istream& is);
SampledTrajectory load_trajectory_csv(const std::string& path);

}  // namespace kvark::dynamics
