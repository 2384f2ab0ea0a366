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
#include "flipdml/bivariate_normal.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/legendre.hpp>

namespace flipdml {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct GaussRule {
  std::vector<double> x;  // positive abscissae on [-1, 1]
  std::vector<double> w;
};

GaussRule MakeRule(unsigned points) {
  GaussRule rule;
  for (double z : boost::math::legendre_p_zeros<double>(static_cast<int>(points))) {
    if (z <= 0.0) continue;
    const double dp = boost::math::legendre_p_prime<double>(static_cast<int>(points), z);
    rule.x.push_back(z);
    rule.w.push_back(2.0 / ((1.0 - z * z) * dp * dp));
  }
  return rule;
}

const GaussRule& RuleFor(double abs_rho) {
  static const std::array<GaussRule, 3> rules{MakeRule(6), MakeRule(12), MakeRule(20)};
  if (abs_rho < 0.3) return rules[0];
  if (abs_rho < 0.75) return rules[1];
  return rules[2];
}

// Upper orthant P(X > h, Y > k).
double UpperOrthant(double h, double k, double r) {
  const GaussRule& rule = RuleFor(std::fabs(r));
  double hk = h * k;
  double bvn = 0.0;
  if (std::fabs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double sn = std::sin(asr * (sign * rule.x[i] + 1.0) / 2.0);
        bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return bvn * asr / (2.0 * kTwoPi) + NormalCdf(-h) * NormalCdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::fabs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * NormalCdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double xs = std::pow(a * (sign * rule.x[i] + 1.0), 2);
        const double rs = std::sqrt(1.0 - xs);
        const double exponent = -(bs / xs + hk) / 2.0;
        if (exponent > -100.0) {
          bvn += a * rule.w[i] * std::exp(exponent) *
                 (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                  (1.0 + c * xs * (1.0 + d * xs)));
        }
      }
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) return bvn + NormalCdf(-std::max(h, k));
  return -bvn + std::max(0.0, NormalCdf(-h) - NormalCdf(-k));
}

}  // namespace

double NormalCdf(double x) { return 0.5 * boost::math::erfc(-x / std::sqrt(2.0)); }

double NormalQuantile(double p) {
  static const boost::math::normal standard;
  return boost::math::quantile(standard, p);
}

double BivariateNormalCdf(double h, double k, double rho) {
  rho = std::clamp(rho, -1.0, 1.0);
  if (std::isinf(h) || std::isinf(k)) {
    if (h == -INFINITY || k == -INFINITY) return 0.0;
    if (h == INFINITY && k == INFINITY) return 1.0;
    return h == INFINITY ? NormalCdf(k) : NormalCdf(h);
  }
  const double p = UpperOrthant(-h, -k, rho);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace flipdml
