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
// Seeded random streams. Every stochastic routine takes an explicit seed and
// derives per-task streams from it, so serial and parallel runs agree.

#ifndef FLIPDML_RANDOM_H_
#define FLIPDML_RANDOM_H_

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace flipdml {

using Rng = std::mt19937_64;

// splitmix64 finalizer over (master, stream); distinct streams give
// statistically independent seeds.
std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream);

Eigen::MatrixXd StandardNormalMatrix(Eigen::Index rows, Eigen::Index cols,
                                     Rng& rng);

// Uniformly random permutation of 0..n-1 (Fisher-Yates on the given stream).
std::vector<Eigen::Index> RandomPermutation(Eigen::Index n, Rng& rng);

}  // namespace flipdml

#endif  // FLIPDML_RANDOM_H_
