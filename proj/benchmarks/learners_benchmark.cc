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
#include <cmath>

#include <benchmark/benchmark.h>

#include "flipdml/learners.h"
#include "flipdml/random.h"

namespace flipdml::learners {
namespace {

void BM_RidgePath(benchmark::State& state) {
  Rng rng(1);
  const Eigen::Index n = state.range(0), p = state.range(1);
  const Eigen::MatrixXd x = StandardNormalMatrix(n, p, rng);
  const Eigen::VectorXd y = StandardNormalMatrix(n, 1, rng).col(0);
  const auto grid = DefaultPenaltyGrid(x, {}, 50);
  for (auto _ : state) {
    for (double lambda : grid) benchmark::DoNotOptimize(FitRidge(x, y, lambda).coefficients);
  }
}
BENCHMARK(BM_RidgePath)->Args({200, 20})->Args({2000, 40});

void BM_RidgeCrossValidation(benchmark::State& state) {
  Rng rng(2);
  const Eigen::MatrixXd x = StandardNormalMatrix(state.range(0), 40, rng);
  const Eigen::VectorXd y = x.col(0) + StandardNormalMatrix(state.range(0), 1, rng).col(0);
  const auto grid = DefaultPenaltyGrid(x, {}, 50);
  CvOptions opt;
  opt.seed = 3;
  for (auto _ : state) benchmark::DoNotOptimize(CrossValidate(x, y, grid, opt).selected_penalty);
}
BENCHMARK(BM_RidgeCrossValidation)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_LogisticRidge(benchmark::State& state) {
  Rng rng(4);
  const Eigen::Index n = state.range(0);
  const Eigen::MatrixXd x = StandardNormalMatrix(n, 20, rng);
  Eigen::VectorXd y(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = u(rng) < 1.0 / (1.0 + std::exp(-x(i, 0))) ? 1.0 : 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(FitLogisticRidge(x, y, 1.0).intercept);
}
BENCHMARK(BM_LogisticRidge)->Arg(500)->Arg(5000);

}  // namespace
}  // namespace flipdml::learners
