/*
* Copyright 2026 The flipdml Authors.
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     https://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
* ============================================================================
*/
#include <algorithm>
#include <cmath>

#include <benchmark/benchmark.h>

#include "flipdml/psychometrics.h"
#include "flipdml/random.h"

namespace flipdml::psych {
namespace {

// Likert codes from a one-factor model with loading 0.7.
Eigen::MatrixXd LikertBlock(Eigen::Index n, Eigen::Index q, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::MatrixXd f = StandardNormalMatrix(n, 1, rng);
  const Eigen::MatrixXd e = StandardNormalMatrix(n, q, rng);
  Eigen::MatrixXd out(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) {
      const double z = 0.7 * f(i, 0) + std::sqrt(0.51) * e(i, j);
      out(i, j) = std::clamp(std::round(z * 1.5), -3.0, 3.0);
    }
  }
  return out;
}

void BM_PolychoricPair(benchmark::State& state) {
  const Eigen::MatrixXd block = LikertBlock(state.range(0), 2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(Polychoric(block.col(0), block.col(1)).rho);
}
BENCHMARK(BM_PolychoricPair)->Arg(420)->Arg(10000);

void BM_PolychoricMatrix(benchmark::State& state) {
  const Eigen::MatrixXd block = LikertBlock(420, state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(PolychoricCorrelationMatrix(block).correlation);
}
BENCHMARK(BM_PolychoricMatrix)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_CongenericCfa(benchmark::State& state) {
  const Eigen::MatrixXd block = LikertBlock(420, state.range(0), 3);
  for (auto _ : state) benchmark::DoNotOptimize(FitUnidimensionalCfa(block, CfaModel::kCongeneric).discrepancy);
}
BENCHMARK(BM_CongenericCfa)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ParallelAnalysis(benchmark::State& state) {
  ParallelAnalysisOptions opt;
  opt.replications = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ParallelAnalysisReference(420, 10, opt));
}
BENCHMARK(BM_ParallelAnalysis)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace flipdml::psych
