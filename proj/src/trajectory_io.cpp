#include "kvark/trajectory_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace kvark::dynamics {

namespace {

constexpr const char* kStage = "trajectory_csv";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw InvalidInput(kStage, "line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

std::string expected_header(int n, bool with_ext) {
  std::string h = "t";
  auto block = [&](const char* name) {
    for (int j = 1; j <= n; ++j) h += std::string(",") + name + "_" + std::to_string(j);
  };
  block("q");
  block("dq");
  block("ddq");
  block("tau_m");
  if (with_ext) block("tau_ext");
  return h;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const SampledTrajectory& traj) {
  const int n = traj.dof();
  os << "# ts=" << fmt17(traj.t_s) << "\n";
  os << expected_header(n, traj.tau_ext.has_value()) << "\n";
  for (Eigen::Index k = 0; k < traj.size(); ++k) {
    os << fmt17(traj.t(k));
    auto block = [&](const Mat& m) {
      for (int j = 0; j < n; ++j) os << ',' << fmt17(m(k, j));
    };
    block(traj.q);
    block(traj.dq);
    block(traj.ddq);
    block(traj.tau_m);
    if (traj.tau_ext) block(*traj.tau_ext);
    os << "\n";
  }
}

void save_trajectory_csv(const std::string& path, const SampledTrajectory& traj) {
  std::ofstream os(path);
  if (!os) throw Error(kStage, "cannot open " + path + " for writing");
  write_trajectory_csv(os, traj);
  if (!os) throw Error(kStage, "write failed for " + path);
}

SampledTrajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ts=", 0) != 0)
    throw InvalidInput(kStage, "missing leading '# ts=<value>' line");
  SampledTrajectory traj;
  traj.t_s = parse_double(line.substr(5), 1);

  if (!std::getline(is, line)) throw InvalidInput(kStage, "missing header line");
  const auto header = split(line, ',');
  const std::size_t cols = header.size();
  int n = 0;
  bool with_ext = false;
  if (cols >= 5 && (cols - 1) % 4 == 0 && expected_header(static_cast<int>((cols - 1) / 4), false) == line) {
    n = static_cast<int>((cols - 1) / 4);
  } else if (cols >= 6 && (cols - 1) % 5 == 0 &&
             expected_header(static_cast<int>((cols - 1) / 5), true) == line) {
    n = static_cast<int>((cols - 1) / 5);
    with_ext = true;
  } else {
    throw InvalidInput(kStage, "unrecognized header '" + line + "'");
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != cols)
      throw InvalidInput(kStage, "line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(cols) + " fields");
    std::vector<double> row(cols);
    for (std::size_t c = 0; c < cols; ++c) row[c] = parse_double(fields[c], line_no);
    rows.push_back(std::move(row));
  }

  const auto count = static_cast<Eigen::Index>(rows.size());
  traj.t.resize(count);
  traj.q.resize(count, n);
  traj.dq.resize(count, n);
  traj.ddq.resize(count, n);
  traj.tau_m.resize(count, n);
  if (with_ext) traj.tau_ext = Mat(count, n);
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    traj.t(k) = r[0];
    for (int j = 0; j < n; ++j) {
      traj.q(k, j) = r[1 + j];
      traj.dq(k, j) = r[1 + n + j];
      traj.ddq(k, j) = r[1 + 2 * n + j];
      traj.tau_m(k, j) = r[1 + 3 * n + j];
      if (with_ext) (*traj.tau_ext)(k, j) = r[1 + 4 * n + j];
    }
  }
  traj.validate();
  return traj;
}

SampledTrajectory load_trajectory_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(kStage, "cannot open " + path);
  return read_trajectory_csv(is);
}

}  // namespace kvark::dynamics
