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
#include <benchmark/benchmark.h>

#include "flipdml/dml.h"
#include "flipdml/simulator.h"

namespace flipdml::dml {
namespace {

void BM_DmlOnDefaultCohort(benchmark::State& state) {
  sim::CohortSpec spec = sim::DefaultCohortSpec();
  spec.seed = 5;
  const sim::SyntheticCohort cohort = sim::GenerateCohort(spec);
  std::vector<std::string> covariates;
  for (const auto& c : cohort.data.schema().covariates) covariates.push_back(c.name);
  DmlConfig config;
  config.repetitions = static_cast<int>(state.range(0));
  config.model = state.range(1) == 0 ? DmlModel::kInteractive : DmlModel::kPartiallyLinear;
  for (auto _ : state) {
    const AteEstimate e = state.range(1) == 0 ? EstimateAteInteractive(cohort.data, covariates, "exam", config)
                                              : EstimateAtePartiallyLinear(cohort.data, covariates, "exam", config);
    benchmark::DoNotOptimize(e.estimate);
  }
}
BENCHMARK(BM_DmlOnDefaultCohort)->Args({1, 0})->Args({1, 1})->Args({10, 0})->Unit(benchmark::kMillisecond);

void BM_GenerateCohort(benchmark::State& state) {
  sim::CohortSpec spec = sim::DefaultCohortSpec();
  spec.n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ++spec.seed;
    benchmark::DoNotOptimize(sim::GenerateCohort(spec).propensity);
  }
}
BENCHMARK(BM_GenerateCohort)->Arg(420)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace flipdml::dml
