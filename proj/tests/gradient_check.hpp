// Copyright 2026 The mobaxai Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference oracle shared by the unit and acceptance suites.
// It only ever evaluates the scalar function, never the tape's backward pass.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace mobaxai::testing {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Relative error with a floor on the denominator so that gradients which are
/// zero up to round-off compare in absolute terms.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// f is evaluated at x perturbed in place; x is restored afterwards.
inline GradCheckResult check_gradient(const std::function<double()>& f, std::vector<double>& x,
                                      const std::vector<double>& analytic, double h = 1e-5) {
  GradCheckResult r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double e = relative_error(analytic[i], numeric);
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_index = i;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace mobaxai::testing
