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
#include "oracles.h"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "flipdml/random.h"

namespace flipdml::testing {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd FactorData(Index n, const std::vector<double>& loadings, std::vector<double> psi,
                    std::uint64_t seed) {
  if (psi.empty()) {
    for (double l : loadings) psi.push_back(1.0 - l * l);
  }
  Rng rng(seed);
  const VectorXd f = StandardNormalMatrix(n, 1, rng).col(0);
  const MatrixXd e = StandardNormalMatrix(n, static_cast<Index>(loadings.size()), rng);
  MatrixXd x(n, static_cast<Index>(loadings.size()));
  for (std::size_t j = 0; j < loadings.size(); ++j) {
    x.col(static_cast<Index>(j)) = loadings[j] * f + std::sqrt(psi[j]) * e.col(static_cast<Index>(j));
  }
  return x;
}

MatrixXd Discretize(const MatrixXd& z) {
  const double cuts[] = {-2.0, -1.3, -0.6, 0.0, 0.6, 1.3};
  MatrixXd out(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < z.cols(); ++j) {
      int code = -3;
      for (double c : cuts) code += z(i, j) > c;
      out(i, j) = code;
    }
  }
  return out;
}

double BvnQuadrature(double h, double k, double rho) {
  if (h == -INFINITY || k == -INFINITY) return 0.0;
  const double s = std::sqrt(1.0 - rho * rho);
  auto integrand = [&](double x) {
    const double cond = k == INFINITY ? 1.0 : 0.5 * std::erfc(-(k - rho * x) / (s * std::sqrt(2.0)));
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI) * cond;
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -INFINITY, std::min(h, 40.0), 15, 1e-13);
}

OrdinalPair DiscretizedNormals(Index n, double rho, std::uint64_t seed) {
  Rng rng(seed);
  const MatrixXd z = StandardNormalMatrix(n, 2, rng);
  OrdinalPair p{VectorXd(n), VectorXd(n)};
  const double cx[] = {-1.5, -0.5, 0.3, 1.2};
  const double cy[] = {-1.0, 0.0, 0.8, 1.6};
  for (Index i = 0; i < n; ++i) {
    const double a = z(i, 0);
    const double b = rho * a + std::sqrt(1 - rho * rho) * z(i, 1);
    int u = -2, v = -2;
    for (double c : cx) u += a > c;
    for (double c : cy) v += b > c;
    p.x[i] = u;
    p.y[i] = v;
  }
  return p;
}

double PolychoricGridOracle(const OrdinalPair& p) {
  const boost::math::normal normal;
  auto cuts = [&](const VectorXd& v) {
    std::vector<double> out{-INFINITY};
    for (int c = -2; c < 2; ++c) {
      out.push_back(boost::math::quantile(normal, (v.array() <= c).cast<double>().mean()));
    }
    out.push_back(INFINITY);
    return out;
  };
  const auto tx = cuts(p.x), ty = cuts(p.y);
  MatrixXd counts = MatrixXd::Zero(5, 5);
  for (Index i = 0; i < p.x.size(); ++i) counts(Index(p.x[i]) + 2, Index(p.y[i]) + 2) += 1;
  auto loglik = [&](double rho) {
    double ll = 0.0;
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) {
        const double pr = BvnQuadrature(tx[a + 1], ty[b + 1], rho) - BvnQuadrature(tx[a], ty[b + 1], rho) -
                          BvnQuadrature(tx[a + 1], ty[b], rho) + BvnQuadrature(tx[a], ty[b], rho);
        ll += counts(a, b) * std::log(std::max(pr, 1e-300));
      }
    }
    return ll;
  };
  double best = 0.0, best_ll = -INFINITY;
  for (double r = -0.98; r <= 0.98; r += 0.02) {
    const double ll = loglik(r);
    if (ll > best_ll) best_ll = ll, best = r;
  }
  const double centre = best;
  for (double r = centre - 0.02; r <= centre + 0.02; r += 0.001) {
    const double ll = loglik(r);
    if (ll > best_ll) best_ll = ll, best = r;
  }
  return best;
}
}  // namespace flipdml::testing
