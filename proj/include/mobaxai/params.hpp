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

#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "mobaxai/autodiff.hpp"
#include "mobaxai/rng.hpp"

namespace mobaxai {

/// Named trainable tensors, iterated in name order.
using ParameterSet = std::map<std::string, ad::Tensor>;

/// Parameters registered as leaves of one tape.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParameterSet& params, bool requires_grad) {
    for (const auto& [name, t] : params) vars_.emplace(name, tape.leaf(t, requires_grad));
  }

  ad::Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  const std::map<std::string, ad::Var>& vars() const { return vars_; }

 private:
  std::map<std::string, ad::Var> vars_;
};

/// Glorot-uniform matrix.
inline ad::Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  ad::Tensor t({rows, cols});
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

inline std::size_t parameter_count(const ParameterSet& p) {
  std::size_t n = 0;
  for (const auto& [_, t] : p) n += t.size();
  return n;
}

}  // namespace mobaxai
