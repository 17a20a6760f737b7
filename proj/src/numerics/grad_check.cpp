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

#include "emetts/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emetts {
namespace {

double evaluate(const LossFragment& fragment) {
  Tape<double> tape(false);
  return fragment(tape).value()[0];
}

}  // namespace

GradCheckReport grad_check(ParameterRegistry<double>& params, const LossFragment& fragment,
                           double epsilon, double tolerance) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-4)) {
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-6, 1e-4]");
  }
  GradCheckReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;

  params.zero_grad();
  try {
    Tape<double> tape;
    auto loss = fragment(tape);
    tape.backward(loss);
  } catch (const NumericError& e) {
    report.failure = std::string("analytic pass: ") + e.what();
    return report;
  }

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    GradCheckEntry entry;
    entry.name = param.name;
    auto& values = param.value.storage();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus = 0, minus = 0;
      try {
        values[i] = saved + epsilon;
        plus = evaluate(fragment);
        values[i] = saved - epsilon;
        minus = evaluate(fragment);
      } catch (const NumericError& e) {
        values[i] = saved;
        report.failure = param.name + ": " + e.what();
        report.entries.push_back(entry);
        return report;
      }
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        report.failure = param.name + ": non-finite loss while probing";
        report.entries.push_back(entry);
        return report;
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double analytic = param.grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace emetts
