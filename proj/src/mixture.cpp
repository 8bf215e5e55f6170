#include "kvark/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <random>

namespace kvark::mixture {

namespace {

constexpr const char* kStage = "mixture";
constexpr double kLog2Pi = 1.8378770664093454836;

struct Factored {
  Eigen::LLT<Mat> llt;
  double log_norm = 0.0;  // log pi - 0.5 (d log 2pi + log det)
};

std::vector<Factored> factor(const std::vector<GaussianComponent>& comps) {
  std::vector<Factored> out;
  out.reserve(comps.size());
  for (const auto& c : comps) {
    Factored f;
    f.llt.compute(c.cov);
    if (f.llt.info() != Eigen::Success)
      throw NumericalError(kStage, "component covariance is not positive definite");
    const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
    f.log_norm = std::log(c.weight) - 0.5 * (static_cast<double>(c.mean.size()) * kLog2Pi + logdet);
    out.push_back(std::move(f));
  }
  return out;
}

double log_component(const Factored& f, const Vec& mean, const Vec& x) {
  const Vec z = f.llt.matrixL().solve(x - mean);
  return f.log_norm - 0.5 * z.squaredNorm();
}

double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void normalize_row(double* terms, Eigen::Index k, double m, Eigen::Index r, Mat& resp,
                   Vec& row_loglik) {
  double sum = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    terms[c] = std::exp(terms[c] - m);
    sum += terms[c];
  }
  row_loglik(r) = m + std::log(sum);
  for (Eigen::Index c = 0; c < k; ++c) resp(r, c) = terms[c] / sum;
}

// Unrolled kernel for the (velocity, residual) pairs used by the pipeline.
void responsibilities_2d(const Mat& data, Eigen::Index begin, Eigen::Index end, Eigen::Index k,
                         const double* white, const double* mu, const double* log_norm, Mat& resp,
                         Vec& row_loglik) {
  std::vector<double> terms(static_cast<std::size_t>(k));
  for (Eigen::Index r = begin; r < end; ++r) {
    const double x0 = data(r, 0);
    const double x1 = data(r, 1);
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c) {
      const double* w = white + 4 * c;
      const double d0 = x0 - mu[2 * c];
      const double d1 = x1 - mu[2 * c + 1];
      const double z0 = w[0] * d0;
      const double z1 = w[2] * d0 + w[3] * d1;
      const double t = log_norm[c] - 0.5 * (z0 * z0 + z1 * z1);
      terms[static_cast<std::size_t>(c)] = t;
      m = std::max(m, t);
    }
    normalize_row(terms.data(), k, m, r, resp, row_loglik);
  }
}

Mat sample_covariance(const Mat& data) {
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Mat c = data.rowwise() - mean;
  return c.transpose() * c / static_cast<double>(data.rows());
}

}  // namespace

Mat floor_covariance(const Mat& cov, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(cov));
  Vec ev = es.eigenvalues();
  if (ev.minCoeff() >= floor) return symmetrize(cov);
  ev = ev.cwiseMax(floor);
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

double GmmModel::log_density(const Vec& x) const {
  const auto f = factor(components);
  Vec terms(size());
  for (int c = 0; c < size(); ++c)
    terms(c) = log_component(f[static_cast<std::size_t>(c)], components[static_cast<std::size_t>(c)].mean, x);
  return log_sum_exp(terms);
}

double GmmModel::log_likelihood(const Mat& data) const {
  Mat resp;
  Vec rows;
  compute_responsibilities(data, components, resp, rows, Execution::Serial);
  return rows.sum();
}

void compute_responsibilities(const Mat& data, const std::vector<GaussianComponent>& components,
                              Mat& resp, Vec& row_loglik, Execution exec) {
  const auto f = factor(components);
  const Eigen::Index rows = data.rows();
  const auto k = static_cast<Eigen::Index>(components.size());
  resp.resize(rows, k);
  row_loglik.resize(rows);

  // Rows are processed in fixed chunks so serial and parallel runs perform
  // identical floating-point operations.
  constexpr Eigen::Index kChunk = 256;
  const Eigen::Index chunks = (rows + kChunk - 1) / kChunk;
  const Eigen::Index d = data.cols();
  // Row-major lower-triangular whitening factors and means, one block per component.
  std::vector<double> white(static_cast<std::size_t>(k * d * d)), mu(static_cast<std::size_t>(k * d));
  std::vector<double> log_norm(static_cast<std::size_t>(k));
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    const Mat w = f[cc].llt.matrixL().solve(Mat::Identity(d, d));
    for (Eigen::Index i = 0; i < d; ++i) {
      mu[static_cast<std::size_t>(c * d + i)] = components[cc].mean(i);
      for (Eigen::Index j = 0; j < d; ++j) white[static_cast<std::size_t>((c * d + i) * d + j)] = w(i, j);
    }
    log_norm[cc] = f[cc].log_norm;
  }
  auto one_chunk = [&](Eigen::Index ci) {
    const Eigen::Index begin = ci * kChunk;
    const Eigen::Index end = std::min(begin + kChunk, rows);
    if (d == 2) {
      responsibilities_2d(data, begin, end, k, white.data(), mu.data(), log_norm.data(), resp,
                          row_loglik);
      return;
    }
    std::vector<double> x(static_cast<std::size_t>(d)), dx(x.size()), terms(static_cast<std::size_t>(k));
    for (Eigen::Index r = begin; r < end; ++r) {
      for (Eigen::Index i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = data(r, i);
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double* mc = &mu[static_cast<std::size_t>(c * d)];
        const double* wc = &white[static_cast<std::size_t>(c * d * d)];
        for (Eigen::Index i = 0; i < d; ++i) dx[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - mc[i];
        double q = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
          double z = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) z += wc[i * d + j] * dx[static_cast<std::size_t>(j)];
          q += z * z;
        }
        const double t = log_norm[static_cast<std::size_t>(c)] - 0.5 * q;
        terms[static_cast<std::size_t>(c)] = t;
        m = std::max(m, t);
      }
      normalize_row(terms.data(), k, m, r, resp, row_loglik);
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index ci = 0; ci < chunks; ++ci) one_chunk(ci);
  } else {
    for (Eigen::Index ci = 0; ci < chunks; ++ci) one_chunk(ci);
  }
}

GmmModel em_fit(const Mat& data, int n_components, std::uint64_t seed, const EmOptions& options,
                Execution exec) {
  if (n_components < 1) throw InvalidInput(kStage, "need at least one component");
  const Eigen::Index rows = data.rows();
  if (rows < 10 * n_components)
    throw InvalidInput(kStage, "need at least 10 rows per component (" + std::to_string(rows) +
                                   " rows for " + std::to_string(n_components) + " components)");
  require_finite(data, kStage, "training data");

  const double floor = options.covariance_floor;
  const Mat global_cov = floor_covariance(sample_covariance(data), floor);
  std::mt19937_64 rng(seed);

  // k-means++ seeding of the means.
  std::vector<GaussianComponent> comps(static_cast<std::size_t>(n_components));
  {
    std::uniform_int_distribution<Eigen::Index> first(0, rows - 1);
    std::vector<Vec> centers{data.row(first(rng)).transpose()};
    Vec d2 = (data.rowwise() - centers[0].transpose()).rowwise().squaredNorm();
    while (static_cast<int>(centers.size()) < n_components) {
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        for (pick = 0; pick < rows - 1; ++pick) {
          r -= d2(pick);
          if (r <= 0.0) break;
        }
      } else {
        pick = first(rng);
      }
      centers.push_back(data.row(pick).transpose());
      d2 = d2.cwiseMin((data.rowwise() - centers.back().transpose()).rowwise().squaredNorm());
    }
    for (int c = 0; c < n_components; ++c) {
      auto& comp = comps[static_cast<std::size_t>(c)];
      comp.weight = 1.0 / n_components;
      comp.mean = centers[static_cast<std::size_t>(c)];
      comp.cov = global_cov;
    }
  }

  GmmModel model;
  model.info.seed = seed;
  model.info.covariance_floor = floor;

  Mat resp;
  Vec row_ll;
  double prev = -std::numeric_limits<double>::infinity();
  int iter = 0;
  for (;; ++iter) {
    compute_responsibilities(data, comps, resp, row_ll, exec);
    const double ll = row_ll.sum();
    model.info.log_likelihood_history.push_back(ll);
    if (iter > 0 && (ll - prev) <= options.relative_tolerance * std::abs(prev)) {
      prev = ll;
      break;
    }
    prev = ll;
    if (iter >= options.max_iterations) break;

    // M-step; sums are accumulated serially so both execution paths agree bitwise.
    const Vec counts = resp.colwise().sum().transpose();
    for (int c = 0; c < n_components; ++c) {
      auto& comp = comps[static_cast<std::size_t>(c)];
      if (counts(c) < 1.0) {
        Eigen::Index worst = 0;
        row_ll.minCoeff(&worst);
        comp.mean = data.row(worst).transpose();
        comp.cov = global_cov;
        comp.weight = 1.0 / n_components;
        ++model.info.reseeds;
        model.info.reseed_iterations.push_back(iter);
        std::cerr << "[em_fit] component " << c << " collapsed at iteration " << iter
                  << "; re-seeded at row " << worst << "\n";
        continue;
      }
      const Vec w = resp.col(c);
      comp.weight = counts(c) / static_cast<double>(rows);
      comp.mean = data.transpose() * w / counts(c);
      const Mat centered = data.rowwise() - comp.mean.transpose();
      Mat cov = centered.transpose() * w.asDiagonal() * centered / counts(c);
      comp.cov = floor_covariance(cov, floor);
    }
    double wsum = 0.0;
    for (const auto& comp : comps) wsum += comp.weight;
    for (auto& comp : comps) comp.weight /= wsum;
  }

  model.components = std::move(comps);
  model.info.iterations = iter;
  model.info.log_likelihood = prev;
  return model;
}

void ReferenceTrajectory::validate() const {
  const int n = size();
  if (n < 1) throw InvalidInput("reference", "reference trajectory is empty");
  if (static_cast<int>(means.size()) != n || static_cast<int>(covs.size()) != n)
    throw InvalidInput("reference", "inconsistent number of support triples");
  const int o = output_dim();
  for (int i = 0; i < n; ++i) {
    const auto& m = means[static_cast<std::size_t>(i)];
    const auto& c = covs[static_cast<std::size_t>(i)];
    if (m.size() != o || c.rows() != o || c.cols() != o)
      throw InvalidInput("reference", "inconsistent output dimension");
    if (!m.allFinite() || !c.allFinite()) throw InvalidInput("reference", "non-finite support triple");
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()))
      throw InvalidInput("reference", "support covariance is not symmetric");
    Eigen::LLT<Mat> llt(c);
    if (llt.info() != Eigen::Success)
      throw InvalidInput("reference", "support covariance is not positive definite");
  }
  if (input_dim() == 1)
    for (int i = 1; i < n; ++i)
      if (!(inputs(i, 0) > inputs(i - 1, 0)))
        throw InvalidInput("reference", "support inputs must be strictly increasing");
}

ReferenceTrajectory gmr_condition(const GmmModel& gmm, const Mat& support, int input_dim,
                                  double covariance_floor) {
  const int dim = gmm.dim();
  const int d = input_dim;
  const int o = dim - d;
  if (d < 1 || o < 1) throw InvalidInput("gmr", "input and output blocks must be nonempty");
  if (support.cols() != d) throw InvalidInput("gmr", "support points have wrong dimension");

  struct Conditional {
    Eigen::LLT<Mat> ss;
    Mat gain;      // Sigma_os Sigma_ss^-1
    Mat schur;     // Sigma_oo - Sigma_os Sigma_ss^-1 Sigma_so
    double log_norm = 0.0;
  };
  std::vector<Conditional> cond;
  for (const auto& c : gmm.components) {
    Conditional k;
    k.ss.compute(c.cov.topLeftCorner(d, d));
    if (k.ss.info() != Eigen::Success) throw NumericalError("gmr", "input marginal not PD");
    const Mat sos = c.cov.bottomLeftCorner(o, d);
    k.gain = k.ss.solve(sos.transpose()).transpose();
    k.schur = symmetrize(c.cov.bottomRightCorner(o, o) - k.gain * sos.transpose());
    const double logdet = 2.0 * k.ss.matrixLLT().diagonal().array().log().sum();
    k.log_norm = std::log(c.weight) - 0.5 * (d * kLog2Pi + logdet);
    cond.push_back(std::move(k));
  }

  ReferenceTrajectory ref;
  ref.inputs = support;
  const auto k = static_cast<Eigen::Index>(gmm.components.size());
  for (Eigen::Index i = 0; i < support.rows(); ++i) {
    const Vec s = support.row(i).transpose();
    Vec logw(k);
    std::vector<Vec> cm(static_cast<std::size_t>(k));
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto& comp = gmm.components[static_cast<std::size_t>(c)];
      const auto& kc = cond[static_cast<std::size_t>(c)];
      const Vec diff = s - comp.mean.head(d);
      const Vec z = kc.ss.matrixL().solve(diff);
      logw(c) = kc.log_norm - 0.5 * z.squaredNorm();
      cm[static_cast<std::size_t>(c)] = comp.mean.tail(o) + kc.gain * diff;
    }
    const double lse = log_sum_exp(logw);
    const Vec h = (logw.array() - lse).exp();
    Vec mean = Vec::Zero(o);
    for (Eigen::Index c = 0; c < k; ++c) mean += h(c) * cm[static_cast<std::size_t>(c)];
    Mat cov = Mat::Zero(o, o);
    for (Eigen::Index c = 0; c < k; ++c) {
      const Vec dm = cm[static_cast<std::size_t>(c)] - mean;
      cov += h(c) * (cond[static_cast<std::size_t>(c)].schur + dm * dm.transpose());
    }
    ref.means.push_back(mean);
    ref.covs.push_back(floor_covariance(cov, covariance_floor));
  }
  return ref;
}

Vec support_grid(const Vec& values, int count) {
  if (count < 2) throw InvalidInput("support_grid", "need at least two support points");
  if (values.size() == 0) throw InvalidInput("support_grid", "no data");
  const double lo = values.minCoeff(), hi = values.maxCoeff();
  if (!(hi > lo)) throw InvalidInput("support_grid", "degenerate input range (max == min)");
  Vec g(count);
  const double step = (hi - lo) / (count - 1);
  for (int i = 0; i < count; ++i) g(i) = lo + step * i;
  g(count - 1) = hi;
  return g;
}

}  // namespace kvark::mixture
