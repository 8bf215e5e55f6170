#pragma once

#include "kvark/config.hpp"
#include "kvark/dynamics.hpp"
#include "kvark/excitation.hpp"
#include "kvark/metrics.hpp"
#include "kvark/observer.hpp"
#include "kvark/serialize.hpp"

#include <memory>
#include <string>
#include <vector>

namespace kvark::harness {

/// Stream ids used to split the run seed.
enum SeedStream : std::uint64_t {
  kTrainGa = 100,
  kTrainSim = 200,
  kEvalGa = 300,
  kEvalSim = 301,
  kDisturbance = 302,
  kEm = 400,
  kSplit = 500,
};

struct PiecewiseProfile {
  std::vector<double> starts;  // segment start times, ascending
  Mat levels;                  // segments x n

  Vec operator()(double t) const;
};

PiecewiseProfile make_disturbance(const DisturbancePlan& plan, int n, std::uint64_t seed);

struct TrainingData {
  std::vector<excitation::FourierTrajectoryParams> params;
  std::vector<dynamics::SampledTrajectory> runs;
};

TrainingData generate_training(const ExperimentConfig& cfg, const dynamics::ManipulatorModel& model,
                               std::uint64_t seed, Execution exec = Execution::Parallel);

struct EvaluationData {
  excitation::FourierTrajectoryParams params;
  dynamics::SampledTrajectory loaded;
  dynamics::SampledTrajectory free;
};

EvaluationData generate_evaluation(const ExperimentConfig& cfg,
                                   const dynamics::ManipulatorModel& model, std::uint64_t seed,
                                   Execution exec = Execution::Parallel);

struct TrainedModels {
  io::ModelSet models;
  Vec kmp_test_rmse;  // held-out residual RMSE per joint
  Vec gp_test_rmse;
};

TrainedModels train_models(const ExperimentConfig& cfg, const dynamics::ManipulatorModel& model,
                           const std::vector<dynamics::SampledTrajectory>& runs,
                           std::uint64_t seed, Execution exec = Execution::Parallel);

/// Builds the named observer ("kvark", "gmr_gp", "static_kf", "akf").
observer::Observer make_observer(const std::string& name, const dynamics::ManipulatorModel& model,
                                 const io::ModelSet& models, const ExperimentConfig& cfg);

struct EstimateTrace {
  std::string name;
  Vec t;
  Mat estimate;
  Mat p_diag;
  Mat sigma_d_diag;
  Mat sigma_nu_diag;
  Vec nis;           // 0 on the priming row
  double seconds = 0.0;
};

EstimateTrace run_observer(observer::Observer& obs, const dynamics::SampledTrajectory& data);

void write_estimates_csv(const std::string& path, const EstimateTrace& trace);
EstimateTrace read_estimates_csv(const std::string& path);

struct ObserverMetrics {
  std::string name;
  Vec joint_rmse;
  CartesianRmse cartesian;
  double seconds = 0.0;
  double per_sample = 0.0;
};

/// Scores an estimate trace against the loaded-minus-free ground truth,
/// skipping the priming row.
ObserverMetrics score(const dynamics::ManipulatorModel& model, const EstimateTrace& trace,
                      const dynamics::SampledTrajectory& loaded, const Mat& truth);

struct RunResult {
  std::uint64_t seed = 0;
  Vec kmp_test_rmse;
  Vec gp_test_rmse;
  std::vector<ObserverMetrics> observers;
  std::vector<EstimateTrace> traces;
};

/// excite -> simulate -> train -> estimate -> score for one seed. When
/// `out_dir` is non-empty every artifact is written below it.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                         const std::string& out_dir = "", Execution exec = Execution::Parallel);

/// Deterministic summary (no timing).
io::json report_json(const ExperimentConfig& cfg, const std::vector<RunResult>& runs);
io::json timing_json(const std::vector<RunResult>& runs);

}  // namespace kvark::harness
