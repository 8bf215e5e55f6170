#include "kvark/excitation.hpp"
#include "kvark/mixture.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace kvark;

namespace {

Mat friction_cloud(Eigen::Index rows) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat d(rows, 2);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double v = 1.5 * n(rng);
    d(i, 0) = v;
    d(i, 1) = std::tanh(v / 0.01) + 0.6 * v + (0.03 + 0.25 * std::abs(v)) * n(rng);
  }
  return d;
}

std::vector<mixture::GaussianComponent> components(const Mat& data, int k) {
  mixture::EmOptions o;
  o.max_iterations = 5;
  return mixture::em_fit(data, k, 3, o, Execution::Serial).components;
}

void estep(benchmark::State& state, Execution exec) {
  const Mat data = friction_cloud(state.range(0));
  const auto comps = components(data, 20);
  Mat resp;
  Vec ll;
  for (auto _ : state) {
    mixture::compute_responsibilities(data, comps, resp, ll, exec);
    benchmark::DoNotOptimize(ll.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void ga(benchmark::State& state, Execution exec) {
  const auto limits = dynamics::JointLimits::symmetric(2, 1.5, 3.0, 30.0);
  excitation::ExcitationSettings s;
  excitation::GaConfig cfg;
  cfg.population = static_cast<int>(state.range(0));
  cfg.generations = 10;
  for (auto _ : state) {
    auto r = excitation::optimize_excitation(limits, s, cfg, exec);
    benchmark::DoNotOptimize(r.objective);
  }
}

}  // namespace

BENCHMARK_CAPTURE(estep, serial, Execution::Serial)->Arg(12000)->Arg(48000);
BENCHMARK_CAPTURE(estep, parallel, Execution::Parallel)->Arg(12000)->Arg(48000);
BENCHMARK_CAPTURE(ga, serial, Execution::Serial)->Arg(40)->Arg(160);
BENCHMARK_CAPTURE(ga, parallel, Execution::Parallel)->Arg(40)->Arg(160);

BENCHMARK_MAIN();
