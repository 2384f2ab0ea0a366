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
// Exception types shared by every flipdml module. The command-line tool maps
// each type onto a distinct exit code.

#ifndef FLIPDML_ERRORS_H_
#define FLIPDML_ERRORS_H_

#include <stdexcept>
#include <string>

namespace flipdml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration (schema, scale definitions, specs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violating a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A fit or estimator could not produce a result.
class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace flipdml

#endif  // FLIPDML_ERRORS_H_
