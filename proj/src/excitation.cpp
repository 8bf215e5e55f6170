#include "kvark/excitation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kvark::excitation {

double FourierTrajectoryParams::omega(int k) const { return 2.0 * M_PI * k / period; }

Vec FourierTrajectoryParams::theta() const {
  const int n = dof(), kk = harmonics();
  Vec th(2 * n * kk);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < kk; ++k) {
      th(j * kk + k) = a(j, k);
      th(n * kk + j * kk + k) = b(j, k);
    }
  return th;
}

FourierTrajectoryParams FourierTrajectoryParams::from_theta(const Vec& midpoint, const Vec& theta,
                                                            int harmonics, double period) {
  const auto n = static_cast<int>(midpoint.size());
  if (theta.size() != 2 * n * harmonics)
    throw InvalidInput("excitation", "parameter vector must have length 2nK");
  FourierTrajectoryParams p = zeros(midpoint, harmonics, period);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < harmonics; ++k) {
      p.a(j, k) = theta(j * harmonics + k);
      p.b(j, k) = theta(n * harmonics + j * harmonics + k);
    }
  return p;
}

FourierTrajectoryParams FourierTrajectoryParams::zeros(const Vec& midpoint, int harmonics,
                                                       double period) {
  if (harmonics < 1) throw InvalidInput("excitation", "need at least one harmonic");
  if (!(period > 0.0)) throw InvalidInput("excitation", "period must be positive");
  FourierTrajectoryParams p;
  p.midpoint = midpoint;
  p.a = Mat::Zero(midpoint.size(), harmonics);
  p.b = Mat::Zero(midpoint.size(), harmonics);
  p.period = period;
  return p;
}

dynamics::ReferenceState eval_trajectory(const FourierTrajectoryParams& p, double t) {
  const int n = p.dof();
  dynamics::ReferenceState s{p.midpoint, Vec::Zero(n), Vec::Zero(n)};
  for (int k = 1; k <= p.harmonics(); ++k) {
    const double w = p.omega(k);
    const double sn = std::sin(w * t), cs = std::cos(w * t);
    for (int j = 0; j < n; ++j) {
      const double a = p.a(j, k - 1), b = p.b(j, k - 1);
      s.q(j) += a * sn + b * cs;
      s.dq(j) += a * w * cs - b * w * sn;
      s.ddq(j) += -w * w * (a * sn + b * cs);
    }
  }
  return s;
}

std::vector<double> time_grid(double period, int count) {
  if (count < 1) throw InvalidInput("excitation", "grid must be nonempty");
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = period * i / count;
  return g;
}

Mat state_cloud(const FourierTrajectoryParams& params, const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidInput("excitation", "grid must be nonempty");
  const int n = params.dof();
  Mat cloud(static_cast<Eigen::Index>(grid.size()), 3 * n);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto s = eval_trajectory(params, grid[i]);
    const auto r = static_cast<Eigen::Index>(i);
    cloud.block(r, 0, 1, n) = s.q.transpose();
    cloud.block(r, n, 1, n) = s.dq.transpose();
    cloud.block(r, 2 * n, 1, n) = s.ddq.transpose();
  }
  return cloud;
}

double logdet_objective(const Mat& cloud) {
  const Eigen::Index rows = cloud.rows(), dim = cloud.cols();
  if (rows < dim + 1) throw InvalidInput("excitation", "cloud needs at least dim+1 samples");
  const Eigen::RowVectorXd mean = cloud.colwise().mean();
  const Mat centered = cloud.rowwise() - mean;
  Mat cov = centered.transpose() * centered / static_cast<double>(rows - 1);
  cov.diagonal().array() += 1e-9;
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double j = -logdet;
  return std::isfinite(j) ? j : std::numeric_limits<double>::infinity();
}

double limit_violation(const FourierTrajectoryParams& params, const dynamics::JointLimits& limits,
                       const std::vector<double>& grid) {
  double total = 0.0;
  for (double t : grid) {
    const auto s = eval_trajectory(params, t);
    for (int j = 0; j < params.dof(); ++j) {
      total += std::max(0.0, s.q(j) - limits.q_max(j)) + std::max(0.0, limits.q_min(j) - s.q(j));
      total += std::max(0.0, std::abs(s.dq(j)) - limits.dq_max(j));
      total += std::max(0.0, std::abs(s.ddq(j)) - limits.ddq_max(j));
    }
  }
  return total;
}

void GaConfig::validate() const {
  if (population < 1) throw InvalidInput("ga", "population must be >= 1");
  if (generations < 1) throw InvalidInput("ga", "generations must be >= 1");
  if (tournament < 1) throw InvalidInput("ga", "tournament size must be >= 1");
  if (crossover_rate < 0.0 || crossover_rate > 1.0)
    throw InvalidInput("ga", "crossover rate must lie in [0, 1]");
  if (mutation_std < 0.0) throw InvalidInput("ga", "mutation std must be >= 0");
  if (penalty_weight < 0.0) throw InvalidInput("ga", "penalty weight must be >= 0");
}

namespace {

constexpr int kMaxRejections = 1000;

struct Individual {
  Vec genes;
  double fitness = std::numeric_limits<double>::infinity();
};

double penalized(const GaProblem& p, const GaConfig& c, const Vec& x) {
  return p.objective(x) + c.penalty_weight * p.violation(x);
}

std::size_t tournament_pick(const std::vector<Individual>& pop, int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  std::size_t best = pick(rng);
  for (int i = 1; i < size; ++i) {
    const std::size_t c = pick(rng);
    if (pop[c].fitness < pop[best].fitness) best = c;
  }
  return best;
}

std::size_t argmin(const std::vector<Individual>& pop) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pop.size(); ++i)
    if (pop[i].fitness < pop[best].fitness) best = i;
  return best;
}

}  // namespace

GaResult ga_optimize(const GaProblem& problem, const GaConfig& config, Execution exec) {
  config.validate();
  if (problem.dim < 1 || !problem.objective || !problem.violation || !problem.sample)
    throw InvalidInput("ga", "incomplete problem definition");

  const int pop_size = config.population;
  std::vector<Individual> pop(static_cast<std::size_t>(pop_size));
  std::vector<int> failed(static_cast<std::size_t>(pop_size), 0);

  // Rejection-sample a feasible initial population.
  auto init_one = [&](int i) {
    std::mt19937_64 rng(derive_seed(config.seed, 0, static_cast<std::uint64_t>(i)));
    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
      Vec x = problem.sample(rng);
      if (problem.violation(x) == 0.0) {
        pop[static_cast<std::size_t>(i)].genes = std::move(x);
        pop[static_cast<std::size_t>(i)].fitness = problem.objective(pop[static_cast<std::size_t>(i)].genes);
        return;
      }
    }
    failed[static_cast<std::size_t>(i)] = 1;
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < pop_size; ++i) init_one(i);
  } else {
    for (int i = 0; i < pop_size; ++i) init_one(i);
  }
  for (int i = 0; i < pop_size; ++i)
    if (failed[static_cast<std::size_t>(i)])
      throw InfeasiblePopulation("ga", "no feasible candidate for individual " +
                                           std::to_string(i) + " after " +
                                           std::to_string(kMaxRejections) + " samples");

  GaResult result;
  std::size_t elite = argmin(pop);
  result.history.push_back(pop[elite].fitness);

  for (int gen = 1; gen < config.generations; ++gen) {
    std::vector<Individual> next(pop.size());
    next[0] = pop[elite];

    auto breed = [&](int i) {
      std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(gen),
                                      static_cast<std::uint64_t>(i)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const Vec& p1 = pop[tournament_pick(pop, config.tournament, rng)].genes;
      const Vec& p2 = pop[tournament_pick(pop, config.tournament, rng)].genes;
      Vec child = p1;
      if (unit(rng) < config.crossover_rate) {
        for (Eigen::Index d = 0; d < child.size(); ++d) {
          const double alpha = unit(rng);
          child(d) = alpha * p1(d) + (1.0 - alpha) * p2(d);
        }
      }
      for (Eigen::Index d = 0; d < child.size(); ++d) child(d) += config.mutation_std * gauss(rng);
      auto& slot = next[static_cast<std::size_t>(i)];
      slot.fitness = penalized(problem, config, child);
      slot.genes = std::move(child);
    };
    if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
      for (int i = 1; i < pop_size; ++i) breed(i);
    } else {
      for (int i = 1; i < pop_size; ++i) breed(i);
    }
    pop = std::move(next);
    elite = argmin(pop);
    result.history.push_back(pop[elite].fitness);
  }

  result.best = pop[elite].genes;
  result.best_fitness = pop[elite].fitness;
  return result;
}

GaProblem make_excitation_problem(const dynamics::JointLimits& limits,
                                  const ExcitationSettings& settings) {
  const auto n = static_cast<int>(limits.q_min.size());
  const Vec midpoint = 0.5 * (limits.q_min + limits.q_max);
  dynamics::JointLimits inner = limits;
  const Vec half = 0.5 * (limits.q_max - limits.q_min) * settings.limit_margin;
  inner.q_min = midpoint - half;
  inner.q_max = midpoint + half;
  inner.dq_max = limits.dq_max * settings.limit_margin;
  inner.ddq_max = limits.ddq_max * settings.limit_margin;
  const auto grid = time_grid(settings.period, settings.grid_points);
  const int kk = settings.harmonics;
  const double period = settings.period;

  GaProblem p;
  p.dim = 2 * n * kk;
  p.objective = [=](const Vec& th) {
    return logdet_objective(state_cloud(FourierTrajectoryParams::from_theta(midpoint, th, kk, period), grid));
  };
  p.violation = [=](const Vec& th) {
    return limit_violation(FourierTrajectoryParams::from_theta(midpoint, th, kk, period), inner, grid);
  };
  const double amp = settings.init_amplitude;
  p.sample = [=](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec th(2 * n * kk);
    for (int half_block = 0; half_block < 2; ++half_block)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < kk; ++k)
          th(half_block * n * kk + j * kk + k) = amp * u(rng) / (k + 1);
    return th;
  };
  return p;
}

ExcitationResult optimize_excitation(const dynamics::JointLimits& limits,
                                     const ExcitationSettings& settings, const GaConfig& config,
                                     Execution exec) {
  const GaProblem problem = make_excitation_problem(limits, settings);
  ExcitationResult r;
  r.ga = ga_optimize(problem, config, exec);
  const Vec midpoint = 0.5 * (limits.q_min + limits.q_max);
  r.params = FourierTrajectoryParams::from_theta(midpoint, r.ga.best, settings.harmonics,
                                                 settings.period);
  r.objective = problem.objective(r.ga.best);
  const auto dense = time_grid(settings.period, 10 * settings.grid_points);
  if (limit_violation(r.params, limits, dense) > 0.0)
    throw InfeasiblePopulation("excitation", "optimized trajectory violates joint limits on the dense grid");
  return r;
}

}  // namespace kvark::excitation
