#include "ndm/data.hpp"
#include "ndm/dot.hpp"
#include "ndm/objective.hpp"
#include "ndm/ode.hpp"
#include "ndm/sampler.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace ndm;

NdmModel make_model(LossMode mode, bool learnable, std::mt19937_64& rng) {
  ScheduleConfig sc;
  sc.mode = mode == LossMode::Discrete ? TimeMode::Discrete : TimeMode::Continuous;
  sc.steps = 10;
  const NetSpec es = NetSpec::for_data(2, {64, 64, 64}, TimeEmbedding::Sinusoidal, 8);
  NetParams ep = init_params(es, rng);
  Transform tr = Transform::identity(2);
  if (learnable) {
    const NetSpec fs = NetSpec::for_data(2, {64, 64}, TimeEmbedding::Sinusoidal, 8);
    tr = Transform::learnable(fs, init_params(fs, rng));
  }
  return NdmModel{Schedule(sc), std::move(tr), es, std::move(ep)};
}

Mat batch_of(Eigen::Index n, std::mt19937_64& rng) {
  return generate(DatasetKind::Checkerboard2d, n, rng);
}

void BM_NetForward(benchmark::State& state) {
  std::mt19937_64 rng(0);
  const NetSpec spec = NetSpec::for_data(2, {64, 64, 64}, TimeEmbedding::Sinusoidal, 8);
  const NetParams p = init_params(spec, rng);
  const Mat x = batch_of(state.range(0), rng);
  const Vec t = Vec::Constant(x.rows(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(net_forward(spec, p, x, t));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_NetForward)->Arg(256)->Arg(1024);

void BM_NetForwardWithTimeDerivative(benchmark::State& state) {
  std::mt19937_64 rng(0);
  const NetSpec spec = NetSpec::for_data(2, {64, 64}, TimeEmbedding::Sinusoidal, 8);
  const NetParams p = init_params(spec, rng);
  const Mat x = batch_of(state.range(0), rng);
  const Vec t = Vec::Constant(x.rows(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(net_forward_with_time_derivative(spec, p, x, t));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_NetForwardWithTimeDerivative)->Arg(256)->Arg(1024);

void BM_LossAndGradients(benchmark::State& state) {
  const auto mode = static_cast<LossMode>(state.range(0));
  const bool learnable = state.range(1) != 0;
  std::mt19937_64 rng(1);
  const NdmModel m = make_model(mode, learnable, rng);
  const Mat x = batch_of(256, rng);
  for (auto _ : state) {
    const LossNoise noise = draw_loss_noise(m, mode, x.rows(), rng);
    benchmark::DoNotOptimize(evaluate_loss(m, mode, x, noise, true));
  }
}
BENCHMARK(BM_LossAndGradients)
    ->ArgNames({"mode", "learnable"})
    ->Args({static_cast<int>(LossMode::Discrete), 0})
    ->Args({static_cast<int>(LossMode::Discrete), 1})
    ->Args({static_cast<int>(LossMode::Continuous), 0})
    ->Args({static_cast<int>(LossMode::Continuous), 1})
    ->Unit(benchmark::kMillisecond);

void BM_Rk45Decay(benchmark::State& state) {
  const OdeRhs f = [](double, const Vec& y) -> Vec { return -y; };
  Rk45Options o;
  o.atol = o.rtol = 1e-10;
  const Vec y0 = Vec::Ones(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(integrate_rk45(f, 0.0, 5.0, y0, o));
}
BENCHMARK(BM_Rk45Decay)->Arg(2)->Arg(512);

void BM_OdeSample(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const NdmModel m = make_model(LossMode::Continuous, true, rng);
  std::normal_distribution<double> normal;
  Mat z(state.range(0), 2);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  Rk45Options o;
  o.atol = o.rtol = 1e-5;
  for (auto _ : state) benchmark::DoNotOptimize(ode_sample(m, z, o));
  state.SetItemsProcessed(state.iterations() * z.rows());
}
BENCHMARK(BM_OdeSample)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_DotInverse(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const MonotoneMap map = MonotoneMap::init(8, rng);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (auto _ : state) benchmark::DoNotOptimize(ot_h_inverse(map, 0.3, u(rng)));
}
BENCHMARK(BM_DotInverse);

}  // namespace

BENCHMARK_MAIN();
