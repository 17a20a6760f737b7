// Copyright 2026 The emetts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EMETTS_NUMERICS_GRAD_CHECK_HPP_
#define EMETTS_NUMERICS_GRAD_CHECK_HPP_

#include <functional>
#include <string>
#include <vector>

#include "emetts/numerics/params.hpp"
#include "emetts/numerics/tape.hpp"

namespace emetts {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double epsilon = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  /// Set when probing hit a non-finite loss or a backward error.
  std::string failure;
};

/// Scalar-valued computation built on a fresh tape from the registry's
/// current parameter values.
using LossFragment = std::function<Var<double>(Tape<double>&)>;

/// Compares analytic gradients against central differences
/// (f(p+eps) - f(p-eps)) / 2eps for every element of every parameter.
/// relative error = |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(ParameterRegistry<double>& params, const LossFragment& fragment,
                           double epsilon = 1e-6, double tolerance = 1e-4);

}  // namespace emetts

#endif  // EMETTS_NUMERICS_GRAD_CHECK_HPP_
