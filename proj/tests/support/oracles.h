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
// Simulation helpers and slow reference computations shared by the unit
// tests and the acceptance suite.

#ifndef FLIPDML_TESTS_SUPPORT_ORACLES_H_
#define FLIPDML_TESTS_SUPPORT_ORACLES_H_

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace flipdml::testing {

// Continuous one-factor data: x_j = l_j f + e_j with var(e_j) = psi_j
// (default 1 - l_j^2).
Eigen::MatrixXd FactorData(Eigen::Index n, const std::vector<double>& loadings, std::vector<double> psi,
                           std::uint64_t seed);

// Seven-point Likert codes -3..3 at cuts -2, -1.3, -0.6, 0, 0.6, 1.3.
Eigen::MatrixXd Discretize(const Eigen::MatrixXd& z);

// Phi2(h, k; rho) by adaptive Gauss-Kronrod over the conditional normal.
double BvnQuadrature(double h, double k, double rho);

struct OrdinalPair {
  Eigen::VectorXd x, y;
};

// Five-category codes -2..2 of a standard bivariate normal with correlation rho.
OrdinalPair DiscretizedNormals(Eigen::Index n, double rho, std::uint64_t seed);

// Grid search of the contingency likelihood with quadrature cell
// probabilities and thresholds from the marginal proportions.
double PolychoricGridOracle(const OrdinalPair& p);

}  // namespace flipdml::testing

#endif  // FLIPDML_TESTS_SUPPORT_ORACLES_H_
