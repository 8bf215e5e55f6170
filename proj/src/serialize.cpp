#include "kvark/serialize.hpp"

#include <fstream>
#include <sstream>

namespace kvark::io {

namespace {
constexpr const char* kStage = "serialize";

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec json_vec(const json& j) {
  if (!j.is_array()) throw SchemaError(kStage, "expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError(kStage, "expected a number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json mat_json(const Mat& m) {
  json d = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) d.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", d}};
}

Mat json_mat(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const Vec d = json_vec(j.at("data"));
  if (rows < 0 || cols < 0 || d.size() != rows * cols)
    throw SchemaError(kStage, "matrix size does not match its data");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d(r * cols + c);
  return m;
}

template <class F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const json::exception& e) {
    throw SchemaError(kStage, std::string("malformed document: ") + e.what());
  }
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json hp_json(const kmp::KmpHyperparams& hp) {
  return {{"length_scale", hp.length_scale},
          {"signal_variance", hp.signal_variance},
          {"lambda_mean", hp.lambda_mean},
          {"lambda_var", hp.lambda_var}};
}

kmp::KmpHyperparams json_hp(const json& j) {
  kmp::KmpHyperparams hp;
  hp.length_scale = j.at("length_scale").get<double>();
  hp.signal_variance = j.at("signal_variance").get<double>();
  hp.lambda_mean = j.at("lambda_mean").get<double>();
  hp.lambda_var = j.at("lambda_var").get<double>();
  return hp;
}

json friction_json(const dynamics::JointFriction& f) {
  return {{"coulomb", f.coulomb},       {"viscous", f.viscous},
          {"stribeck", f.stribeck},     {"stribeck_velocity", f.stribeck_velocity},
          {"smoothing", f.smoothing},   {"noise_base", f.noise_base},
          {"noise_slope", f.noise_slope}};
}

dynamics::JointFriction json_friction(const json& j) {
  dynamics::JointFriction f;
  maybe(j, "coulomb", f.coulomb);
  maybe(j, "viscous", f.viscous);
  maybe(j, "stribeck", f.stribeck);
  maybe(j, "stribeck_velocity", f.stribeck_velocity);
  maybe(j, "smoothing", f.smoothing);
  maybe(j, "noise_base", f.noise_base);
  maybe(j, "noise_slope", f.noise_slope);
  return f;
}
}  // namespace

json envelope(const std::string& schema) {
  return {{"schema", schema}, {"version", kFormatVersion}};
}

void check_envelope(const json& j, const std::string& schema) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string())
    throw SchemaError(kStage, "missing schema tag (expected '" + schema + "')");
  if (j["schema"].get<std::string>() != schema)
    throw SchemaError(kStage, "schema '" + j["schema"].get<std::string>() + "' where '" + schema +
                                  "' was expected");
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw VersionError(kStage, "missing version tag");
  const int v = j["version"].get<int>();
  if (v != kFormatVersion)
    throw VersionError(kStage, "unsupported version " + std::to_string(v) + " (expected " +
                                   std::to_string(kFormatVersion) + ")");
}

json to_json(const excitation::FourierTrajectoryParams& p) {
  json j = envelope("kvark.excitation");
  j["period"] = p.period;
  j["midpoint"] = vec_json(p.midpoint);
  j["a"] = mat_json(p.a);
  j["b"] = mat_json(p.b);
  return j;
}

excitation::FourierTrajectoryParams params_from_json(const json& j) {
  return guarded([&] {
    check_envelope(j, "kvark.excitation");
    excitation::FourierTrajectoryParams p;
    p.period = j.at("period").get<double>();
    p.midpoint = json_vec(j.at("midpoint"));
    p.a = json_mat(j.at("a"));
    p.b = json_mat(j.at("b"));
    if (p.a.rows() != p.midpoint.size() || p.b.rows() != p.a.rows() || p.b.cols() != p.a.cols())
      throw SchemaError(kStage, "inconsistent Fourier coefficient shapes");
    if (!(p.period > 0.0)) throw SchemaError(kStage, "period must be positive");
    return p;
  });
}

json to_json(const mixture::GmmModel& g) {
  json j = envelope("kvark.gmm");
  json comps = json::array();
  for (const auto& c : g.components)
    comps.push_back({{"weight", c.weight}, {"mean", vec_json(c.mean)}, {"cov", mat_json(c.cov)}});
  j["components"] = comps;
  j["fit"] = {{"seed", g.info.seed},
              {"iterations", g.info.iterations},
              {"log_likelihood", g.info.log_likelihood},
              {"covariance_floor", g.info.covariance_floor},
              {"reseeds", g.info.reseeds},
              {"log_likelihood_history", g.info.log_likelihood_history},
              {"reseed_iterations", g.info.reseed_iterations}};
  return j;
}

mixture::GmmModel gmm_from_json(const json& j) {
  return guarded([&] {
    check_envelope(j, "kvark.gmm");
    mixture::GmmModel g;
    for (const auto& c : j.at("components")) {
      mixture::GaussianComponent comp;
      comp.weight = c.at("weight").get<double>();
      comp.mean = json_vec(c.at("mean"));
      comp.cov = json_mat(c.at("cov"));
      if (comp.cov.rows() != comp.mean.size() || comp.cov.cols() != comp.mean.size())
        throw SchemaError(kStage, "component covariance does not match its mean");
      g.components.push_back(std::move(comp));
    }
    if (g.components.empty()) throw SchemaError(kStage, "mixture has no components");
    const auto& f = j.at("fit");
    g.info.seed = f.at("seed").get<std::uint64_t>();
    g.info.iterations = f.at("iterations").get<int>();
    g.info.log_likelihood = f.at("log_likelihood").get<double>();
    g.info.covariance_floor = f.at("covariance_floor").get<double>();
    g.info.reseeds = f.at("reseeds").get<int>();
    g.info.log_likelihood_history = f.at("log_likelihood_history").get<std::vector<double>>();
    g.info.reseed_iterations = f.at("reseed_iterations").get<std::vector<int>>();
    return g;
  });
}

json to_json(const mixture::ReferenceTrajectory& r) {
  json points = json::array();
  for (int i = 0; i < r.size(); ++i)
    points.push_back({{"s", vec_json(r.inputs.row(i).transpose())},
                      {"mean", vec_json(r.means[static_cast<std::size_t>(i)])},
                      {"cov", mat_json(r.covs[static_cast<std::size_t>(i)])}});
  return {{"points", points}};
}

mixture::ReferenceTrajectory reference_from_json(const json& j) {
  return guarded([&] {
    const auto& pts = j.at("points");
    if (!pts.is_array() || pts.empty()) throw SchemaError(kStage, "reference has no points");
    mixture::ReferenceTrajectory r;
    const Vec s0 = json_vec(pts[0].at("s"));
    r.inputs.resize(static_cast<Eigen::Index>(pts.size()), s0.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec s = json_vec(pts[i].at("s"));
      if (s.size() != s0.size()) throw SchemaError(kStage, "ragged reference inputs");
      r.inputs.row(static_cast<Eigen::Index>(i)) = s.transpose();
      r.means.push_back(json_vec(pts[i].at("mean")));
      r.covs.push_back(json_mat(pts[i].at("cov")));
    }
    r.validate();
    return r;
  });
}

json to_json(const kmp::KmpModel& m) {
  json j = envelope("kvark.regressor");
  j["type"] = "kmp";
  j["hyperparams"] = hp_json(m.hyperparams());
  j["reference"] = to_json(m.reference());
  return j;
}

json to_json(const gp::GpModel& m) {
  json j = envelope("kvark.regressor");
  j["type"] = "gp";
  j["hyperparams"] = {{"length_scale", m.length_scale()},
                      {"signal_variance", m.signal_variance()},
                      {"lambda_mean", m.lambda_mean()}};
  j["reference"] = to_json(m.reference());
  return j;
}

namespace {
void check_type(const json& j, const char* type) {
  check_envelope(j, "kvark.regressor");
  if (!j.contains("type") || j["type"] != type)
    throw SchemaError(kStage, std::string("regressor type tag is not '") + type + "'");
}
}  // namespace

kmp::KmpModel kmp_from_json(const json& j) {
  return guarded([&] {
    check_type(j, "kmp");
    return kmp::KmpModel::train(reference_from_json(j.at("reference")), json_hp(j.at("hyperparams")));
  });
}

gp::GpModel gp_from_json(const json& j) {
  return guarded([&] {
    check_type(j, "gp");
    const auto& hp = j.at("hyperparams");
    return gp::GpModel::train(reference_from_json(j.at("reference")),
                              hp.at("length_scale").get<double>(),
                              hp.at("signal_variance").get<double>(),
                              hp.at("lambda_mean").get<double>());
  });
}

json to_json(const observer::FilterConfig& c) {
  json j = envelope("kvark.filter");
  j["t_s"] = c.t_s;
  j["forgetting"] = c.forgetting;
  j["vb_iterations"] = c.vb_iterations;
  j["iw_per_iteration"] = c.iw_per_iteration;
  j["iw_dof"] = c.iw_dof;
  j["iw_scale"] = mat_json(c.iw_scale);
  j["emp_init"] = vec_json(c.emp_init);
  j["emp_min"] = vec_json(c.emp_min);
  j["emp_max"] = vec_json(c.emp_max);
  j["p0"] = mat_json(c.p0);
  j["omega0"] = vec_json(c.omega0);
  j["static_process"] = mat_json(c.static_process);
  j["static_measurement"] = mat_json(c.static_measurement);
  j["akf_rho_nu"] = c.akf_rho_nu;
  j["akf_rho_d"] = c.akf_rho_d;
  return j;
}

observer::FilterConfig filter_config_from_json(const json& j) {
  return guarded([&] {
    check_envelope(j, "kvark.filter");
    observer::FilterConfig c;
    c.t_s = j.at("t_s").get<double>();
    c.forgetting = j.at("forgetting").get<double>();
    c.vb_iterations = j.at("vb_iterations").get<int>();
    c.iw_per_iteration = j.at("iw_per_iteration").get<bool>();
    c.iw_dof = j.at("iw_dof").get<double>();
    c.iw_scale = json_mat(j.at("iw_scale"));
    c.emp_init = json_vec(j.at("emp_init"));
    c.emp_min = json_vec(j.at("emp_min"));
    c.emp_max = json_vec(j.at("emp_max"));
    c.p0 = json_mat(j.at("p0"));
    c.omega0 = json_vec(j.at("omega0"));
    c.static_process = json_mat(j.at("static_process"));
    c.static_measurement = json_mat(j.at("static_measurement"));
    c.akf_rho_nu = j.at("akf_rho_nu").get<double>();
    c.akf_rho_d = j.at("akf_rho_d").get<double>();
    c.validate();
    return c;
  });
}

json to_json(const harness::ExperimentConfig& c) {
  json j = envelope("kvark.experiment");
  json arm = {{"type", c.arm.type}, {"gravity", c.arm.gravity}};
  json links = json::array();
  for (const auto& l : c.arm.planar)
    links.push_back(
        {{"mass", l.mass}, {"length", l.length}, {"com", l.com}, {"inertia", l.inertia}});
  for (const auto& l : c.arm.chain) {
    Mat inertia = l.inertia;
    links.push_back({{"a", l.a},
                     {"alpha", l.alpha},
                     {"d", l.d},
                     {"theta_offset", l.theta_offset},
                     {"mass", l.mass},
                     {"com", vec_json(Vec(l.com))},
                     {"inertia", mat_json(inertia)}});
  }
  arm["links"] = links;
  if (c.arm.limits.q_min.size() > 0)
    arm["limits"] = {{"q_min", vec_json(c.arm.limits.q_min)},
                     {"q_max", vec_json(c.arm.limits.q_max)},
                     {"dq_max", vec_json(c.arm.limits.dq_max)},
                     {"ddq_max", vec_json(c.arm.limits.ddq_max)}};
  j["arm"] = arm;
  json fr = json::array();
  for (const auto& f : c.friction.joints) fr.push_back(friction_json(f));
  j["friction"] = fr;
  const auto& s = c.excitation.settings;
  const auto& ga = c.excitation.ga;
  j["excitation"] = {{"harmonics", s.harmonics},
                     {"period", s.period},
                     {"grid_points", s.grid_points},
                     {"limit_margin", s.limit_margin},
                     {"init_amplitude", s.init_amplitude},
                     {"trajectories", c.excitation.trajectories},
                     {"duration", c.excitation.duration},
                     {"ga",
                      {{"population", ga.population},
                       {"generations", ga.generations},
                       {"tournament", ga.tournament},
                       {"crossover_rate", ga.crossover_rate},
                       {"mutation_std", ga.mutation_std},
                       {"penalty_weight", ga.penalty_weight}}}};
  j["simulation"] = {{"t_s", c.simulation.t_s},
                     {"substeps", c.simulation.substeps},
                     {"natural_frequency", c.simulation.natural_frequency},
                     {"damping_ratio", c.simulation.damping_ratio}};
  j["disturbance"] = {{"duration", c.disturbance.duration},
                      {"segment_min", c.disturbance.segment_min},
                      {"segment_max", c.disturbance.segment_max},
                      {"level", c.disturbance.level},
                      {"lead_in", c.disturbance.lead_in}};
  j["mixture"] = {{"components", c.mixture.components},
                  {"support_points", c.mixture.support_points},
                  {"test_fraction", c.mixture.test_fraction}};
  json hps = json::array();
  for (const auto& hp : c.hyperparams.joints) hps.push_back(hp_json(hp));
  j["hyperparams"] = hps;
  const auto& f = c.filter;
  j["filter"] = {{"forgetting", f.forgetting},   {"vb_iterations", f.vb_iterations},
                 {"iw_per_iteration", f.iw_per_iteration},
                 {"iw_dof_offset", f.iw_dof_offset},
                 {"process_prior", f.process_prior},
                 {"emp_init", f.emp_init},       {"emp_min", f.emp_min},
                 {"emp_max", f.emp_max},         {"p0", f.p0},
                 {"akf_rho_nu", f.akf_rho_nu},   {"akf_rho_d", f.akf_rho_d}};
  j["observers"] = c.observers;
  j["train_files"] = c.train_files;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["output"] = c.output;
  return j;
}

harness::ExperimentConfig experiment_config_from_json(const json& j) {
  return guarded([&] {
    check_envelope(j, "kvark.experiment");
    harness::ExperimentConfig c = harness::default_config();
    if (j.contains("arm")) {
      const auto& a = j["arm"];
      maybe(a, "type", c.arm.type);
      maybe(a, "gravity", c.arm.gravity);
      if (a.contains("links")) {
        c.arm.planar.clear();
        c.arm.chain.clear();
        for (const auto& l : a["links"]) {
          if (c.arm.type == "chain") {
            dynamics::DhLink d;
            maybe(l, "a", d.a);
            maybe(l, "alpha", d.alpha);
            maybe(l, "d", d.d);
            maybe(l, "theta_offset", d.theta_offset);
            maybe(l, "mass", d.mass);
            if (l.contains("com")) {
              const Vec com = json_vec(l["com"]);
              if (com.size() != 3) throw SchemaError(kStage, "com must have three entries");
              d.com = com;
            }
            if (l.contains("inertia")) {
              const Mat in = json_mat(l["inertia"]);
              if (in.rows() != 3 || in.cols() != 3)
                throw SchemaError(kStage, "inertia must be 3 x 3");
              d.inertia = in;
            }
            c.arm.chain.push_back(d);
          } else {
            dynamics::PlanarLink p;
            maybe(l, "mass", p.mass);
            maybe(l, "length", p.length);
            maybe(l, "com", p.com);
            maybe(l, "inertia", p.inertia);
            c.arm.planar.push_back(p);
          }
        }
      }
      if (a.contains("limits")) {
        const auto& lim = a["limits"];
        c.arm.limits.q_min = json_vec(lim.at("q_min"));
        c.arm.limits.q_max = json_vec(lim.at("q_max"));
        c.arm.limits.dq_max = json_vec(lim.at("dq_max"));
        c.arm.limits.ddq_max = json_vec(lim.at("ddq_max"));
      } else if (a.contains("links")) {
        c.arm.limits = {};
      }
    }
    if (j.contains("friction")) {
      c.friction.joints.clear();
      for (const auto& f : j["friction"]) c.friction.joints.push_back(json_friction(f));
    }
    if (j.contains("excitation")) {
      const auto& e = j["excitation"];
      auto& s = c.excitation.settings;
      maybe(e, "harmonics", s.harmonics);
      maybe(e, "period", s.period);
      maybe(e, "grid_points", s.grid_points);
      maybe(e, "limit_margin", s.limit_margin);
      maybe(e, "init_amplitude", s.init_amplitude);
      maybe(e, "trajectories", c.excitation.trajectories);
      maybe(e, "duration", c.excitation.duration);
      if (e.contains("ga")) {
        const auto& g = e["ga"];
        auto& ga = c.excitation.ga;
        maybe(g, "population", ga.population);
        maybe(g, "generations", ga.generations);
        maybe(g, "tournament", ga.tournament);
        maybe(g, "crossover_rate", ga.crossover_rate);
        maybe(g, "mutation_std", ga.mutation_std);
        maybe(g, "penalty_weight", ga.penalty_weight);
      }
    }
    if (j.contains("simulation")) {
      const auto& s = j["simulation"];
      maybe(s, "t_s", c.simulation.t_s);
      maybe(s, "substeps", c.simulation.substeps);
      maybe(s, "natural_frequency", c.simulation.natural_frequency);
      maybe(s, "damping_ratio", c.simulation.damping_ratio);
    }
    if (j.contains("disturbance")) {
      const auto& d = j["disturbance"];
      maybe(d, "duration", c.disturbance.duration);
      maybe(d, "segment_min", c.disturbance.segment_min);
      maybe(d, "segment_max", c.disturbance.segment_max);
      maybe(d, "level", c.disturbance.level);
      maybe(d, "lead_in", c.disturbance.lead_in);
    }
    if (j.contains("mixture")) {
      const auto& m = j["mixture"];
      maybe(m, "components", c.mixture.components);
      maybe(m, "support_points", c.mixture.support_points);
      maybe(m, "test_fraction", c.mixture.test_fraction);
    }
    if (j.contains("hyperparams")) {
      c.hyperparams.joints.clear();
      for (const auto& hp : j["hyperparams"]) c.hyperparams.joints.push_back(json_hp(hp));
    }
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      auto& p = c.filter;
      maybe(f, "forgetting", p.forgetting);
      maybe(f, "vb_iterations", p.vb_iterations);
      maybe(f, "iw_per_iteration", p.iw_per_iteration);
      maybe(f, "iw_dof_offset", p.iw_dof_offset);
      maybe(f, "process_prior", p.process_prior);
      maybe(f, "emp_init", p.emp_init);
      maybe(f, "emp_min", p.emp_min);
      maybe(f, "emp_max", p.emp_max);
      maybe(f, "p0", p.p0);
      maybe(f, "akf_rho_nu", p.akf_rho_nu);
      maybe(f, "akf_rho_d", p.akf_rho_d);
    }
    maybe(j, "observers", c.observers);
    maybe(j, "train_files", c.train_files);
    maybe(j, "seed", c.seed);
    maybe(j, "seeds", c.seeds);
    maybe(j, "output", c.output);
    c.validate();
    return c;
  });
}

json to_json(const ModelSet& m) {
  json j = envelope("kvark.models");
  json joints = json::array();
  for (std::size_t i = 0; i < m.kmp.size(); ++i) {
    json entry = {{"kmp", to_json(m.kmp[i])}, {"gp", to_json(m.gp.at(i))}};
    if (i < m.gmms.size()) entry["gmm"] = to_json(m.gmms[i]);
    joints.push_back(entry);
  }
  j["joints"] = joints;
  j["static_residual_variance"] = vec_json(m.static_residual_variance);
  return j;
}

ModelSet model_set_from_json(const json& j) {
  return guarded([&] {
    check_envelope(j, "kvark.models");
    ModelSet m;
    for (const auto& e : j.at("joints")) {
      m.kmp.push_back(kmp_from_json(e.at("kmp")));
      m.gp.push_back(gp_from_json(e.at("gp")));
      if (e.contains("gmm")) m.gmms.push_back(gmm_from_json(e["gmm"]));
    }
    if (m.kmp.empty()) throw SchemaError(kStage, "model set has no joints");
    m.static_residual_variance = json_vec(j.at("static_residual_variance"));
    if (m.static_residual_variance.size() != static_cast<Eigen::Index>(m.kmp.size()))
      throw SchemaError(kStage, "residual variance length does not match the joints");
    return m;
  });
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput(kStage, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(kStage, path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput(kStage, "cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw InvalidInput(kStage, "write failed for " + path);
}

harness::ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(read_json(path));
}

}  // namespace kvark::io
