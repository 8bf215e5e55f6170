#include "kvark/experiment.hpp"
#include "kvark/serialize.hpp"
#include "kvark/trajectory_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace kvark;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool serial = false;
};

harness::ExperimentConfig load_config(const Common& c) {
  harness::ExperimentConfig cfg =
      c.config.empty() ? harness::default_config() : io::load_experiment_config(c.config);
  if (c.seed_set) {
    cfg.seed = c.seed;
    cfg.seeds = {c.seed};
  }
  if (!c.out.empty()) cfg.output = c.out;
  cfg.validate();
  return cfg;
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

Execution exec_of(const Common& c) { return c.serial ? Execution::Serial : Execution::Parallel; }

void cmd_excite(const Common& c) {
  const auto cfg = load_config(c);
  const auto model = cfg.arm.build();
  fs::create_directories(cfg.output);
  const auto td = harness::generate_training(cfg, model, cfg.seed, exec_of(c));
  for (std::size_t i = 0; i < td.runs.size(); ++i) {
    const auto tag = std::to_string(i + 1);
    io::write_json(path_in(cfg.output, "excitation_" + tag + ".json"), io::to_json(td.params[i]));
    dynamics::save_trajectory_csv(path_in(cfg.output, "train_" + tag + ".csv"), td.runs[i]);
  }
  std::cout << "wrote " << td.runs.size() << " excitation trajectories to " << cfg.output << '\n';
}

void cmd_simulate(const Common& c, const std::string& params_file) {
  auto cfg = load_config(c);
  const auto model = cfg.arm.build();
  fs::create_directories(cfg.output);
  harness::EvaluationData ev;
  if (params_file.empty()) {
    ev = harness::generate_evaluation(cfg, model, cfg.seed, exec_of(c));
  } else {
    const auto params = io::params_from_json(io::read_json(params_file));
    const int n = model.dof();
    const auto profile =
        harness::make_disturbance(cfg.disturbance, n, derive_seed(cfg.seed, harness::kDisturbance));
    dynamics::SimulationOptions o;
    o.t_s = cfg.simulation.t_s;
    o.duration = cfg.disturbance.duration;
    o.seed = derive_seed(cfg.seed, harness::kEvalSim);
    o.substeps = cfg.simulation.substeps;
    o.natural_frequency = cfg.simulation.natural_frequency;
    o.damping_ratio = cfg.simulation.damping_ratio;
    auto ref = [&](double t) { return excitation::eval_trajectory(params, t); };
    ev.params = params;
    ev.loaded = dynamics::simulate(model, cfg.friction, ref, profile, o);
    ev.free = dynamics::simulate(model, cfg.friction, ref, [n](double) { return Vec::Zero(n); }, o);
  }
  io::write_json(path_in(cfg.output, "excitation_eval.json"), io::to_json(ev.params));
  dynamics::save_trajectory_csv(path_in(cfg.output, "eval_loaded.csv"), ev.loaded);
  dynamics::save_trajectory_csv(path_in(cfg.output, "eval_free.csv"), ev.free);
  std::cout << "wrote evaluation runs (" << ev.loaded.size() << " samples) to " << cfg.output
            << '\n';
}

void cmd_train(const Common& c, std::vector<std::string> data) {
  auto cfg = load_config(c);
  const auto model = cfg.arm.build();
  if (data.empty()) data = cfg.train_files;
  if (data.empty())
    for (int i = 1;; ++i) {
      const auto p = path_in(cfg.output, "train_" + std::to_string(i) + ".csv");
      if (!fs::exists(p)) break;
      data.push_back(p);
    }
  if (data.empty()) throw InvalidInput("train", "no training trajectories found");
  std::vector<dynamics::SampledTrajectory> runs;
  for (const auto& f : data) {
    auto r = dynamics::load_trajectory_csv(f);
    r.validate(&model.limits());
    runs.push_back(std::move(r));
  }
  const auto tm = harness::train_models(cfg, model, runs, cfg.seed, exec_of(c));
  fs::create_directories(cfg.output);
  io::write_json(path_in(cfg.output, "models.json"), io::to_json(tm.models));
  io::json summary = io::envelope("kvark.train_summary");
  summary["residual_test_rmse"] = {
      {"kmp", std::vector<double>(tm.kmp_test_rmse.data(),
                                  tm.kmp_test_rmse.data() + tm.kmp_test_rmse.size())},
      {"gp", std::vector<double>(tm.gp_test_rmse.data(),
                                 tm.gp_test_rmse.data() + tm.gp_test_rmse.size())}};
  io::write_json(path_in(cfg.output, "train_summary.json"), summary);
  std::cout << "trained " << tm.models.kmp.size() << " joint models; held-out KMP RMSE "
            << tm.kmp_test_rmse.transpose() << '\n';
}

void cmd_estimate(const Common& c, std::string data, std::string models_file,
                  const std::string& filter_file, std::vector<std::string> observers) {
  auto cfg = load_config(c);
  const auto model = cfg.arm.build();
  if (data.empty()) data = path_in(cfg.output, "eval_loaded.csv");
  if (models_file.empty()) models_file = path_in(cfg.output, "models.json");
  if (observers.empty()) observers = cfg.observers;
  const auto traj = dynamics::load_trajectory_csv(data);
  const auto models = io::model_set_from_json(io::read_json(models_file));
  std::optional<observer::FilterConfig> fc;
  if (!filter_file.empty()) fc = io::filter_config_from_json(io::read_json(filter_file));
  fs::create_directories(cfg.output);
  for (const auto& name : observers) {
    auto obs = harness::make_observer(name, model, models, cfg);
    if (fc) {
      auto kind = obs.kind();
      std::shared_ptr<const observer::ResidualModel> res;
      if (name == "gmr_gp")
        res = std::make_shared<observer::GpResidualModel>(models.gp);
      else
        res = std::make_shared<observer::KmpResidualModel>(models.kmp);
      obs = observer::Observer(name, kind, model, res, *fc);
    }
    const auto tr = harness::run_observer(obs, traj);
    harness::write_estimates_csv(path_in(cfg.output, "estimates_" + name + ".csv"), tr);
    std::cout << name << ": " << traj.size() << " samples, " << tr.seconds / traj.size() * 1e6
              << " us/sample\n";
  }
}

void cmd_report(const Common& c) {
  auto cfg = load_config(c);
  const auto model = cfg.arm.build();
  const auto loaded = dynamics::load_trajectory_csv(path_in(cfg.output, "eval_loaded.csv"));
  const auto free = dynamics::load_trajectory_csv(path_in(cfg.output, "eval_free.csv"));
  const Mat truth = harness::ground_truth_ext(loaded, free);
  harness::RunResult run;
  run.seed = cfg.seed;
  const auto summary_path = path_in(cfg.output, "train_summary.json");
  const int n = model.dof();
  run.kmp_test_rmse = Vec::Zero(n);
  run.gp_test_rmse = Vec::Zero(n);
  if (fs::exists(summary_path)) {
    const auto s = io::read_json(summary_path);
    io::check_envelope(s, "kvark.train_summary");
    const auto k = s.at("residual_test_rmse").at("kmp").get<std::vector<double>>();
    const auto g = s.at("residual_test_rmse").at("gp").get<std::vector<double>>();
    if (static_cast<int>(k.size()) != n || static_cast<int>(g.size()) != n)
      throw InvalidInput("report", "train summary has wrong joint count");
    run.kmp_test_rmse = Eigen::Map<const Vec>(k.data(), n);
    run.gp_test_rmse = Eigen::Map<const Vec>(g.data(), n);
  }
  for (const auto& name : cfg.observers) {
    auto tr = harness::read_estimates_csv(path_in(cfg.output, "estimates_" + name + ".csv"));
    auto m = harness::score(model, tr, loaded, truth);
    m.name = name;
    run.observers.push_back(std::move(m));
  }
  io::write_json(path_in(cfg.output, "report.json"), harness::report_json(cfg, {run}));
  for (const auto& m : run.observers)
    std::cout << m.name << ": joint RMSE " << m.joint_rmse.transpose() << " | cartesian "
              << m.cartesian.aggregate << '\n';
}

void cmd_bench(const Common& c) {
  auto cfg = load_config(c);
  fs::create_directories(cfg.output);
  std::vector<harness::RunResult> runs;
  for (auto seed : cfg.seeds) {
    runs.push_back(harness::run_experiment(cfg, seed, cfg.output, exec_of(c)));
    std::cout << "seed " << seed << ':';
    for (const auto& m : runs.back().observers)
      std::cout << ' ' << m.name << '=' << m.joint_rmse.transpose();
    std::cout << '\n';
  }
  io::write_json(path_in(cfg.output, "report.json"), harness::report_json(cfg, runs));
  io::write_json(path_in(cfg.output, "timing.json"), harness::timing_json(runs));
  std::cout << "report written to " << path_in(cfg.output, "report.json") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"K-VARK external torque estimation pipeline"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& s) {
          common.seed = s;
          common.seed_set = true;
        },
        "master seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_flag("--serial", common.serial, "use the serial reference kernels");
  };

  auto* excite = app.add_subcommand("excite", "optimize excitation trajectories and record them");
  add_common(excite);

  std::string params_file;
  auto* simulate = app.add_subcommand("simulate", "record loaded and free evaluation runs");
  add_common(simulate);
  simulate->add_option("--params", params_file, "excitation params (JSON)")
      ->check(CLI::ExistingFile);

  std::vector<std::string> train_data;
  auto* train = app.add_subcommand("train", "fit GMM/GMR, KMP and GP residual models");
  add_common(train);
  train->add_option("--data", train_data, "training trajectory CSVs")->check(CLI::ExistingFile);

  std::string est_data, est_models, est_filter;
  std::vector<std::string> est_observers;
  auto* estimate = app.add_subcommand("estimate", "run observers over a trajectory");
  add_common(estimate);
  estimate->add_option("--data", est_data, "trajectory CSV")->check(CLI::ExistingFile);
  estimate->add_option("--models", est_models, "model file (JSON)")->check(CLI::ExistingFile);
  estimate->add_option("--filter", est_filter, "filter config (JSON)")->check(CLI::ExistingFile);
  estimate->add_option("--observer", est_observers, "observer names");

  auto* report = app.add_subcommand("report", "score estimate traces against ground truth");
  add_common(report);
  auto* bench = app.add_subcommand("bench", "run the full pipeline for every configured seed");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error [cli]: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*excite) cmd_excite(common);
    if (*simulate) cmd_simulate(common, params_file);
    if (*train) cmd_train(common, train_data);
    if (*estimate) cmd_estimate(common, est_data, est_models, est_filter, est_observers);
    if (*report) cmd_report(common);
    if (*bench) cmd_bench(common);
  } catch (const Error& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
