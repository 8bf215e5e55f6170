#pragma once

#include "kvark/common.hpp"
#include "kvark/dynamics.hpp"

#include <functional>
#include <random>
#include <vector>

namespace kvark::excitation {

/// Finite Fourier series per joint:
///   q_j(t) = midpoint_j + sum_k a_jk sin(w_k t) + b_jk cos(w_k t),  w_k = 2 pi k / period.
struct FourierTrajectoryParams {
  Vec midpoint;   // n
  Mat a;          // n x K
  Mat b;          // n x K
  double period = 10.0;

  int dof() const { return static_cast<int>(midpoint.size()); }
  int harmonics() const { return static_cast<int>(a.cols()); }
  double omega(int k) const;  // k is 1-based

  /// Parameter vector of length 2nK: a (row-major by joint) followed by b.
  Vec theta() const;
  static FourierTrajectoryParams from_theta(const Vec& midpoint, const Vec& theta,
                                            int harmonics, double period);
  static FourierTrajectoryParams zeros(const Vec& midpoint, int harmonics, double period);
};

dynamics::ReferenceState eval_trajectory(const FourierTrajectoryParams& params, double t);

/// Uniform time grid of `count` points on [0, period).
std::vector<double> time_grid(double period, int count);

/// Rows z_t = (q, dq, ddq)(t) in R^{3n}.
Mat state_cloud(const FourierTrajectoryParams& params, const std::vector<double>& grid);

/// -log det of the unbiased sample covariance (plus 1e-9 I jitter);
/// +infinity for a non-finite cloud.
double logdet_objective(const Mat& cloud);

/// Sum over grid points and joints of the amount by which q, |dq| and |ddq|
/// exceed their limits. Zero means feasible on that grid.
double limit_violation(const FourierTrajectoryParams& params, const dynamics::JointLimits& limits,
                       const std::vector<double>& grid);

struct GaConfig {
  int population = 40;
  int generations = 100;
  int tournament = 3;
  double crossover_rate = 0.9;
  double mutation_std = 0.02;
  double penalty_weight = 1e3;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Box-free minimization problem for the GA.
struct GaProblem {
  int dim = 0;
  std::function<double(const Vec&)> objective;
  std::function<double(const Vec&)> violation;
  std::function<Vec(std::mt19937_64&)> sample;
};

struct GaResult {
  Vec best;
  double best_fitness = 0.0;
  std::vector<double> history;  // best penalized fitness after each generation
};

class InfeasiblePopulation : public Error {
 public:
  using Error::Error;
};

/// Tournament GA with blend crossover, Gaussian mutation and single-elite
/// survival. Each individual draws from its own RNG stream derived from the
/// master seed, so the serial and OpenMP paths produce identical traces.
GaResult ga_optimize(const GaProblem& problem, const GaConfig& config,
                     Execution exec = Execution::Parallel);

struct ExcitationSettings {
  int harmonics = 5;
  double period = 10.0;
  int grid_points = 200;
  double limit_margin = 0.95;     // optimization uses this fraction of the limits
  double init_amplitude = 0.3;    // rad, for the first harmonic
};

struct ExcitationResult {
  FourierTrajectoryParams params;
  GaResult ga;
  double objective = 0.0;
};

GaProblem make_excitation_problem(const dynamics::JointLimits& limits,
                                  const ExcitationSettings& settings);

/// Runs the GA and verifies the winner on a 10x denser grid against the
/// full limits; throws InfeasiblePopulation if that check fails.
ExcitationResult optimize_excitation(const dynamics::JointLimits& limits,
                                     const ExcitationSettings& settings, const GaConfig& config,
                                     Execution exec = Execution::Parallel);

}  // namespace kvark::excitation
