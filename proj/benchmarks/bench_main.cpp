#include <benchmark/benchmark.h>

#include <algorithm>
#include <map>
#include <random>

#include "sstap/data.hpp"
#include "sstap/eval.hpp"
#include "sstap/model.hpp"
#include "sstap/postprocess.hpp"
#include "sstap/trainer.hpp"

using namespace sstap;

namespace {

HyperShape default_shape() { return TrainConfig{}.hyper_shape(100, 16); }

Matrix<float> random_features(std::size_t T, std::size_t C, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Matrix<float> m(T, C);
  for (auto& v : m.values()) v = n(rng);
  return m;
}

void BM_LabelMaps(benchmark::State& state) {
  const std::size_t T = state.range(0);
  const AnnotationSet ann{{{0.1 * T, 0.3 * T}, {0.5 * T, 0.9 * T}}};
  for (auto _ : state) benchmark::DoNotOptimize(build_label_maps(ann, T, T));
}
BENCHMARK(BM_LabelMaps)->Arg(100)->Arg(200);

void BM_BmSample(benchmark::State& state) {
  const ProposalModel model(default_shape());
  const Matrix<float> x = random_features(model.shape().T, model.shape().H2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.bm_sample(x));
}
BENCHMARK(BM_BmSample);

void BM_Forward(benchmark::State& state) {
  const ProposalModel model(default_shape());
  const auto params = init_params<float>(model.shape(), 1);
  const auto f = random_features(model.shape().T, model.shape().C, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(params, f, Heads::all()));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const ProposalModel model(default_shape());
  const auto params = init_params<float>(model.shape(), 1);
  const auto f = random_features(model.shape().T, model.shape().C, 2);
  Rng rng(3);
  ForwardOptions<float> opts;
  opts.train_mode = true;
  opts.rng = &rng;
  for (auto _ : state) {
    auto fr = model.forward(params, f, Heads::proposal_only(), opts);
    OutputGrads<float> g;
    g.ensure_proposal(fr.out);
    std::fill(g.m_cc.values().begin(), g.m_cc.values().end(), 1.0f);
    benchmark::DoNotOptimize(model.backward(params, fr.tape, g));
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_SoftNms(benchmark::State& state) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 100.0), sc(0.0, 1.0);
  std::vector<Proposal> props;
  while (props.size() < static_cast<std::size_t>(state.range(0))) {
    const double a = u(rng), b = u(rng);
    if (a != b) props.push_back({std::min(a, b), std::max(a, b), sc(rng)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(soft_nms(props));
}
BENCHMARK(BM_SoftNms)->Arg(500)->Arg(2000);

void BM_EvaluateDataset(benchmark::State& state) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 100.0), sc(0.0, 1.0);
  std::map<std::string, std::vector<Proposal>> props;
  std::vector<std::pair<std::string, AnnotationSet>> gts;
  for (int v = 0; v < 50; ++v) {
    const std::string id = "v" + std::to_string(v);
    auto& p = props[id];
    while (p.size() < 100) {
      const double a = u(rng), b = u(rng);
      if (a != b) p.push_back({std::min(a, b), std::max(a, b), sc(rng)});
    }
    std::sort(p.begin(), p.end(), [](auto& l, auto& r) { return l.score > r.score; });
    gts.emplace_back(id, AnnotationSet{{{10, 30}, {50, 80}}});
  }
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_dataset(props, gts, activitynet_thresholds(), an_grid()));
}
BENCHMARK(BM_EvaluateDataset)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
