#include "kvark/experiment.hpp"

#include "kvark/mixture.hpp"
#include "kvark/trajectory_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace kvark::harness {

namespace fs = std::filesystem;

namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(name, e.what());
  }
}

dynamics::SimulationOptions sim_options(const ExperimentConfig& cfg, double duration,
                                        std::uint64_t seed) {
  dynamics::SimulationOptions o;
  o.t_s = cfg.simulation.t_s;
  o.duration = duration;
  o.seed = seed;
  o.substeps = cfg.simulation.substeps;
  o.natural_frequency = cfg.simulation.natural_frequency;
  o.damping_ratio = cfg.simulation.damping_ratio;
  return o;
}

dynamics::ReferenceFn reference_of(const excitation::FourierTrajectoryParams& p) {
  return [p](double t) { return excitation::eval_trajectory(p, t); };
}

excitation::FourierTrajectoryParams excite_one(const ExperimentConfig& cfg,
                                               const dynamics::ManipulatorModel& model,
                                               std::uint64_t seed, Execution exec) {
  excitation::GaConfig ga = cfg.excitation.ga;
  ga.seed = seed;
  return excitation::optimize_excitation(model.limits(), cfg.excitation.settings, ga, exec).params;
}

std::string seed_dir(const std::string& out, std::uint64_t seed) {
  return (fs::path(out) / ("seed_" + std::to_string(seed))).string();
}

}  // namespace

Vec PiecewiseProfile::operator()(double t) const {
  const auto it = std::upper_bound(starts.begin(), starts.end(), t);
  if (it == starts.begin()) return Vec::Zero(levels.cols());
  return levels.row(std::distance(starts.begin(), it) - 1).transpose();
}

PiecewiseProfile make_disturbance(const DisturbancePlan& plan, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> len(plan.segment_min, plan.segment_max);
  std::uniform_real_distribution<double> level(-plan.level, plan.level);
  PiecewiseProfile p;
  std::vector<Vec> rows{Vec::Zero(n)};
  p.starts.push_back(0.0);
  double t = plan.lead_in;
  while (t < plan.duration) {
    Vec v(n);
    for (int j = 0; j < n; ++j) v(j) = level(rng);
    p.starts.push_back(t);
    rows.push_back(v);
    t += len(rng);
  }
  p.levels.resize(static_cast<Eigen::Index>(rows.size()), n);
  for (std::size_t i = 0; i < rows.size(); ++i)
    p.levels.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return p;
}

TrainingData generate_training(const ExperimentConfig& cfg, const dynamics::ManipulatorModel& model,
                               std::uint64_t seed, Execution exec) {
  TrainingData d;
  const int n = model.dof();
  for (int i = 0; i < cfg.excitation.trajectories; ++i) {
    auto params = stage("excite", [&] {
      return excite_one(cfg, model, derive_seed(seed, kTrainGa, static_cast<std::uint64_t>(i)), exec);
    });
    auto run = stage("simulate", [&] {
      return dynamics::simulate(
          model, cfg.friction, reference_of(params), [n](double) { return Vec::Zero(n); },
          sim_options(cfg, cfg.excitation.duration,
                      derive_seed(seed, kTrainSim, static_cast<std::uint64_t>(i))));
    });
    d.params.push_back(std::move(params));
    d.runs.push_back(std::move(run));
  }
  return d;
}

EvaluationData generate_evaluation(const ExperimentConfig& cfg,
                                   const dynamics::ManipulatorModel& model, std::uint64_t seed,
                                   Execution exec) {
  const int n = model.dof();
  EvaluationData e;
  e.params = stage("excite", [&] { return excite_one(cfg, model, derive_seed(seed, kEvalGa), exec); });
  const PiecewiseProfile profile = make_disturbance(cfg.disturbance, n, derive_seed(seed, kDisturbance));
  const auto opts = sim_options(cfg, cfg.disturbance.duration, derive_seed(seed, kEvalSim));
  stage("simulate", [&] {
    e.loaded = dynamics::simulate(model, cfg.friction, reference_of(e.params), profile, opts);
    e.free = dynamics::simulate(model, cfg.friction, reference_of(e.params),
                                [n](double) { return Vec::Zero(n); }, opts);
    return 0;
  });
  return e;
}

TrainedModels train_models(const ExperimentConfig& cfg, const dynamics::ManipulatorModel& model,
                           const std::vector<dynamics::SampledTrajectory>& runs,
                           std::uint64_t seed, Execution exec) {
  return stage("train", [&] {
    const int n = model.dof();
    if (runs.empty()) throw InvalidInput("train", "no training trajectories");
    Eigen::Index rows = 0;
    for (const auto& r : runs) {
      if (r.dof() != n) throw InvalidInput("train", "training trajectory has wrong joint count");
      rows += r.size();
    }
    Mat dq(rows, n), tau_r(rows, n);
    Eigen::Index off = 0;
    for (const auto& r : runs) {
      dq.middleRows(off, r.size()) = r.dq;
      tau_r.middleRows(off, r.size()) = dynamics::residual_torques(model, r);
      off += r.size();
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(derive_seed(seed, kSplit));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<Eigen::Index>(cfg.mixture.test_fraction * static_cast<double>(rows));
    const Eigen::Index n_train = rows - n_test;

    TrainedModels out;
    out.kmp_test_rmse = Vec::Zero(n);
    out.gp_test_rmse = Vec::Zero(n);
    out.models.static_residual_variance = Vec::Zero(n);
    for (int j = 0; j < n; ++j) {
      Mat data(n_train, 2);
      for (Eigen::Index i = 0; i < n_train; ++i) {
        const Eigen::Index r = order[static_cast<std::size_t>(i)];
        data(i, 0) = dq(r, j);
        data(i, 1) = tau_r(r, j);
      }
      auto gmm = mixture::em_fit(data, cfg.mixture.components,
                                 derive_seed(seed, kEm, static_cast<std::uint64_t>(j)), {}, exec);
      const Vec grid = mixture::support_grid(data.col(0), cfg.mixture.support_points);
      auto ref = mixture::gmr_condition(gmm, Mat(grid), 1, gmm.info.covariance_floor);
      const auto& hp = cfg.hyperparams.joints[static_cast<std::size_t>(j)];
      auto kmp = kmp::KmpModel::train(ref, hp);
      auto gp = gp::GpModel::train(ref, hp.length_scale, hp.signal_variance, hp.lambda_mean);

      double sq = 0.0;
      for (Eigen::Index i = 0; i < n_train; ++i) {
        double m = 0.0, v = 0.0;
        kmp.predict_scalar(data(i, 0), m, v);
        sq += (data(i, 1) - m) * (data(i, 1) - m);
      }
      out.models.static_residual_variance(j) = sq / static_cast<double>(n_train);

      double ek = 0.0, eg = 0.0;
      for (Eigen::Index i = n_train; i < rows; ++i) {
        const Eigen::Index r = order[static_cast<std::size_t>(i)];
        double m = 0.0, v = 0.0;
        kmp.predict_scalar(dq(r, j), m, v);
        ek += (tau_r(r, j) - m) * (tau_r(r, j) - m);
        gp.predict_scalar(dq(r, j), m, v);
        eg += (tau_r(r, j) - m) * (tau_r(r, j) - m);
      }
      if (n_test > 0) {
        out.kmp_test_rmse(j) = std::sqrt(ek / static_cast<double>(n_test));
        out.gp_test_rmse(j) = std::sqrt(eg / static_cast<double>(n_test));
      }
      out.models.gmms.push_back(std::move(gmm));
      out.models.kmp.push_back(std::move(kmp));
      out.models.gp.push_back(std::move(gp));
    }
    return out;
  });
}

observer::Observer make_observer(const std::string& name, const dynamics::ManipulatorModel& model,
                                 const io::ModelSet& models, const ExperimentConfig& cfg) {
  const int n = model.dof();
  if (static_cast<int>(models.kmp.size()) != n)
    throw InvalidInput("estimate", "model set does not match the manipulator");
  observer::FilterConfig fc = cfg.filter.build(n, cfg.simulation.t_s);
  const double ts2 = cfg.simulation.t_s * cfg.simulation.t_s;
  fc.static_measurement = ts2 * Mat(models.static_residual_variance.asDiagonal());
  fc.validate();
  auto kmp_residual = std::make_shared<observer::KmpResidualModel>(models.kmp);
  if (name == "kvark")
    return observer::Observer(name, observer::ObserverKind::Kvark, model, kmp_residual, fc);
  if (name == "gmr_gp")
    return observer::Observer(name, observer::ObserverKind::Kvark, model,
                              std::make_shared<observer::GpResidualModel>(models.gp), fc);
  if (name == "static_kf")
    return observer::Observer(name, observer::ObserverKind::StaticKf, model, kmp_residual, fc);
  if (name == "akf")
    return observer::Observer(name, observer::ObserverKind::InnovationAkf, model, kmp_residual, fc);
  throw InvalidInput("estimate", "unknown observer '" + name + "'");
}

EstimateTrace run_observer(observer::Observer& obs, const dynamics::SampledTrajectory& data) {
  return stage("estimate", [&] {
    const auto rows = data.size();
    const int n = data.dof();
    EstimateTrace tr;
    tr.name = obs.name();
    tr.t = data.t;
    tr.estimate.resize(rows, n);
    tr.p_diag.resize(rows, n);
    tr.sigma_d_diag.resize(rows, n);
    tr.sigma_nu_diag.resize(rows, n);
    tr.nis = Vec::Zero(rows);
    obs.reset();
    std::vector<Vec> q(static_cast<std::size_t>(rows)), dq(q.size()), tau(q.size());
    for (Eigen::Index k = 0; k < rows; ++k) {
      q[static_cast<std::size_t>(k)] = data.q.row(k).transpose();
      dq[static_cast<std::size_t>(k)] = data.dq.row(k).transpose();
      tau[static_cast<std::size_t>(k)] = data.tau_m.row(k).transpose();
    }
    const auto start = std::chrono::steady_clock::now();
    for (Eigen::Index k = 0; k < rows; ++k) {
      const auto i = static_cast<std::size_t>(k);
      tr.estimate.row(k) = obs.step(q[i], dq[i], tau[i]).transpose();
      const auto& s = obs.state();
      tr.p_diag.row(k) = s.P.diagonal().transpose();
      tr.sigma_d_diag.row(k) = s.sigma_d.diagonal().transpose();
      tr.sigma_nu_diag.row(k) = s.sigma_nu.diagonal().transpose();
      if (obs.last().measured) tr.nis(k) = obs.last().nis;
    }
    tr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tr;
  });
}

void write_estimates_csv(const std::string& path, const EstimateTrace& tr) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("estimate", "cannot write " + path);
  const auto n = tr.estimate.cols();
  out << "t";
  for (Eigen::Index j = 1; j <= n; ++j) out << ",tauhat_" << j;
  for (Eigen::Index j = 1; j <= n; ++j) out << ",P_" << j << j;
  for (Eigen::Index j = 1; j <= n; ++j) out << ",Sigma_d_" << j << j;
  for (Eigen::Index j = 1; j <= n; ++j) out << ",Sigma_nu_" << j << j;
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (Eigen::Index k = 0; k < tr.estimate.rows(); ++k) {
    put(tr.t(k));
    for (const Mat* m : {&tr.estimate, &tr.p_diag, &tr.sigma_d_diag, &tr.sigma_nu_diag})
      for (Eigen::Index j = 0; j < n; ++j) {
        out << ',';
        put((*m)(k, j));
      }
    out << '\n';
  }
  if (!out) throw InvalidInput("estimate", "write failed for " + path);
}

EstimateTrace read_estimates_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("report", "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,tauhat_1", 0) != 0)
    throw InvalidInput("report", path + ": not an estimates file");
  const auto cols = std::count(line.begin(), line.end(), ',') + 1;
  if ((cols - 1) % 4 != 0) throw InvalidInput("report", path + ": bad column count");
  const auto n = static_cast<Eigen::Index>((cols - 1) / 4);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidInput("report", path + ": bad number '" + cell + "'");
      }
    }
    if (static_cast<long>(r.size()) != cols) throw InvalidInput("report", path + ": ragged row");
    rows.push_back(std::move(r));
  }
  EstimateTrace tr;
  tr.name = fs::path(path).stem().string();
  const auto m = static_cast<Eigen::Index>(rows.size());
  tr.t.resize(m);
  tr.estimate.resize(m, n);
  tr.p_diag.resize(m, n);
  tr.sigma_d_diag.resize(m, n);
  tr.sigma_nu_diag.resize(m, n);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    tr.t(k) = r[0];
    for (Eigen::Index j = 0; j < n; ++j) {
      tr.estimate(k, j) = r[static_cast<std::size_t>(1 + j)];
      tr.p_diag(k, j) = r[static_cast<std::size_t>(1 + n + j)];
      tr.sigma_d_diag(k, j) = r[static_cast<std::size_t>(1 + 2 * n + j)];
      tr.sigma_nu_diag(k, j) = r[static_cast<std::size_t>(1 + 3 * n + j)];
    }
  }
  return tr;
}

ObserverMetrics score(const dynamics::ManipulatorModel& model, const EstimateTrace& trace,
                      const dynamics::SampledTrajectory& loaded, const Mat& truth) {
  return stage("report", [&] {
    const auto rows = truth.rows();
    if (trace.estimate.rows() != rows || loaded.size() != rows)
      throw InvalidInput("report", "trace length does not match the ground truth");
    if (rows < 2) throw InvalidInput("report", "need at least two samples");
    ObserverMetrics m;
    m.name = trace.name;
    const Mat est = trace.estimate.bottomRows(rows - 1);
    const Mat tru = truth.bottomRows(rows - 1);
    m.joint_rmse = rmse(est, tru);
    m.cartesian = cartesian_rmse(model, loaded.q.bottomRows(rows - 1), est, tru);
    m.seconds = trace.seconds;
    m.per_sample = trace.seconds / static_cast<double>(rows);
    return m;
  });
}

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                         const std::string& out_dir, Execution exec) {
  stage("config", [&] {
    cfg.validate();
    cfg.check_files();
    return 0;
  });
  const auto model = stage("config", [&] { return cfg.arm.build(); });
  const bool write = !out_dir.empty();
  const std::string dir = write ? seed_dir(out_dir, seed) : "";
  if (write) fs::create_directories(dir);

  std::vector<dynamics::SampledTrajectory> runs;
  if (!cfg.train_files.empty()) {
    for (const auto& f : cfg.train_files)
      runs.push_back(stage("train", [&] {
        auto r = dynamics::load_trajectory_csv(f);
        r.validate(&model.limits());
        return r;
      }));
  } else {
    TrainingData td = generate_training(cfg, model, seed, exec);
    if (write)
      for (std::size_t i = 0; i < td.runs.size(); ++i) {
        io::write_json((fs::path(dir) / ("excitation_" + std::to_string(i + 1) + ".json")).string(),
                       io::to_json(td.params[i]));
        dynamics::save_trajectory_csv(
            (fs::path(dir) / ("train_" + std::to_string(i + 1) + ".csv")).string(), td.runs[i]);
      }
    runs = std::move(td.runs);
  }

  const EvaluationData ev = generate_evaluation(cfg, model, seed, exec);
  const Mat truth = ground_truth_ext(ev.loaded, ev.free);
  const TrainedModels tm = train_models(cfg, model, runs, seed, exec);
  if (write) {
    io::write_json((fs::path(dir) / "excitation_eval.json").string(), io::to_json(ev.params));
    dynamics::save_trajectory_csv((fs::path(dir) / "eval_loaded.csv").string(), ev.loaded);
    dynamics::save_trajectory_csv((fs::path(dir) / "eval_free.csv").string(), ev.free);
    io::write_json((fs::path(dir) / "models.json").string(), io::to_json(tm.models));
  }

  RunResult res;
  res.seed = seed;
  res.kmp_test_rmse = tm.kmp_test_rmse;
  res.gp_test_rmse = tm.gp_test_rmse;
  for (const auto& name : cfg.observers) {
    auto obs = make_observer(name, model, tm.models, cfg);
    EstimateTrace tr = run_observer(obs, ev.loaded);
    if (write) write_estimates_csv((fs::path(dir) / ("estimates_" + name + ".csv")).string(), tr);
    ObserverMetrics m = score(model, tr, ev.loaded, truth);
    m.name = name;
    res.observers.push_back(std::move(m));
    res.traces.push_back(std::move(tr));
  }
  return res;
}

namespace {
io::json vec_array(const Vec& v) {
  io::json a = io::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}
}  // namespace

io::json report_json(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  io::json j = io::envelope("kvark.report");
  j["config"] = io::to_json(cfg);
  j["config"].erase("output");
  io::json per_seed = io::json::array();
  for (const auto& r : runs) {
    io::json obs = io::json::object();
    for (const auto& m : r.observers)
      obs[m.name] = {{"joint_rmse", vec_array(m.joint_rmse)},
                     {"cartesian_rmse", vec_array(m.cartesian.per_axis)},
                     {"cartesian_aggregate", m.cartesian.aggregate},
                     {"cartesian_skipped", m.cartesian.skipped}};
    per_seed.push_back({{"seed", r.seed},
                        {"residual_test_rmse",
                         {{"kmp", vec_array(r.kmp_test_rmse)}, {"gp", vec_array(r.gp_test_rmse)}}},
                        {"observers", obs}});
  }
  j["runs"] = per_seed;

  if (!runs.empty()) {
    io::json mean = io::json::object();
    for (std::size_t o = 0; o < runs[0].observers.size(); ++o) {
      Vec jr = Vec::Zero(runs[0].observers[o].joint_rmse.size());
      Vec cr = Vec::Zero(runs[0].observers[o].cartesian.per_axis.size());
      for (const auto& r : runs) {
        jr += r.observers[o].joint_rmse;
        cr += r.observers[o].cartesian.per_axis;
      }
      jr /= static_cast<double>(runs.size());
      cr /= static_cast<double>(runs.size());
      mean[runs[0].observers[o].name] = {{"joint_rmse", vec_array(jr)},
                                         {"cartesian_rmse", vec_array(cr)},
                                         {"cartesian_aggregate", aggregate_norm(cr)}};
    }
    j["mean"] = mean;
  }
  return j;
}

io::json timing_json(const std::vector<RunResult>& runs) {
  io::json j = io::envelope("kvark.timing");
  io::json arr = io::json::array();
  for (const auto& r : runs) {
    io::json obs = io::json::object();
    for (const auto& m : r.observers)
      obs[m.name] = {{"total_s", m.seconds}, {"per_sample_s", m.per_sample}};
    arr.push_back({{"seed", r.seed}, {"observers", obs}});
  }
  j["runs"] = arr;
  return j;
}

}  // namespace kvark::harness
