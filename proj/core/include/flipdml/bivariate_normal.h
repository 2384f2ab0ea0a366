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
#ifndef FLIPDML_BIVARIATE_NORMAL_H_
#define FLIPDML_BIVARIATE_NORMAL_H_

namespace flipdml {

double NormalCdf(double x);
double NormalQuantile(double p);

// P(X <= h, Y <= k) for standard bivariate normal (X, Y) with correlation
// rho in [-1, 1]; infinite limits are allowed. Genz's adaptation of the
// Drezner-Wesolowsky method, accurate to about 1e-15.
double BivariateNormalCdf(double h, double k, double rho);

}  // namespace flipdml

#endif  // FLIPDML_BIVARIATE_NORMAL_H_
