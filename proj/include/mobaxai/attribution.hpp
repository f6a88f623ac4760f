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

// Integrated Gradients and SmoothGrad against the raw [l, D_in] input, plus
// top-k selection and reports. Path points and noise samples are evaluated
// as batches of `chunk` windows per backward pass.

#pragma once

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobaxai/models.hpp"
#include "mobaxai/rng.hpp"

namespace mobaxai {

enum class Method { ig, sg, random };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::ig: return "ig";
    case Method::sg: return "sg";
    case Method::random: return "random";
  }
  return "ig";
}

inline Method method_from_string(std::string_view s) {
  if (s == "ig") return Method::ig;
  if (s == "sg") return Method::sg;
  if (s == "random") return Method::random;
  throw std::invalid_argument("unknown attribution method '" + std::string(s) + "'");
}

struct IgConfig {
  int steps = 100;
  std::optional<ad::Tensor> baseline;  // all zeros when unset
  std::size_t chunk = 100;
};

struct SgConfig {
  int steps = 100;
  double sigma_ratio = 0.15;
  std::uint64_t seed = 0;
  std::size_t chunk = 100;
};

struct AttributionMap {
  Method method = Method::ig;
  int target = 0;
  int steps = 0;
  double probability = 0.0;           // P(y|X)
  double baseline_probability = 0.0;  // P(y|X'); IG only
  ad::Tensor scores;                  // [l, D_in]
  std::vector<double> time_avg;       // [D_in]

  /// Sum of all scores; approximates P(y|X) - P(y|X') for IG.
  double total() const { return std::accumulate(scores.data().begin(), scores.data().end(), 0.0); }
};

/// dP(y)/dX for a batch of `n` stacked windows, with the probabilities.
using GradientFn = std::function<InputGradient(const ad::Tensor& x, std::size_t n)>;

inline GradientFn gradient_fn(const Model& m, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= m.classes)
    throw std::invalid_argument("target class " + std::to_string(target) + " outside [0, " +
                                std::to_string(m.classes) + ")");
  return [&m, target](const ad::Tensor& x, std::size_t n) {
    return probability_gradient(m, x, std::vector<int>(n, target));
  };
}

/// The model's argmax class on X.
inline int default_target(const Model& m, const ad::Tensor& x) {
  const ad::Tensor p = predict(m, x);
  return argmax(p.data());
}

inline std::vector<double> time_average(const ad::Tensor& scores) {
  std::vector<double> avg(scores.cols(), 0.0);
  for (std::size_t i = 0; i < scores.rows(); ++i)
    for (std::size_t j = 0; j < scores.cols(); ++j) avg[j] += scores.at(i, j);
  for (double& v : avg) v /= static_cast<double>(scores.rows());
  return avg;
}

namespace detail {

/// Accumulates the gradients of `count` generated samples into `sum`.
/// make(s, out) writes sample s into the [l, D] span `out`.
template <class Make>
void accumulate_gradients(const GradientFn& grad, std::size_t l, std::size_t D, int count, std::size_t chunk,
                          Make&& make, ad::Tensor& sum, double* prob_sum = nullptr) {
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t block = l * D;
  for (int start = 0; start < count; start += static_cast<int>(chunk)) {
    const auto n = static_cast<std::size_t>(std::min<int>(static_cast<int>(chunk), count - start));
    ad::Tensor batch({n * l, D});
    for (std::size_t b = 0; b < n; ++b)
      make(start + static_cast<int>(b), batch.data().subspan(b * block, block));
    const InputGradient g = grad(batch, n);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t e = 0; e < block; ++e) sum[e] += g.gradient[b * block + e];
      if (prob_sum) *prob_sum += g.probability[b];
    }
  }
}

}  // namespace detail

/// Right Riemann sum of the straight-line path integral from X' to X.
inline AttributionMap integrated_gradients(const GradientFn& grad, const ad::Tensor& x, const IgConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("integrated_gradients: steps must be >= 1");
  if (x.rank() != 2) throw ad::ShapeError("integrated_gradients: input " + ad::shape_str(x.shape()) + " is not [l, D]");
  const ad::Tensor base = cfg.baseline ? *cfg.baseline : ad::Tensor(x.shape(), 0.0);
  if (base.shape() != x.shape())
    throw ad::ShapeError("integrated_gradients: baseline " + ad::shape_str(base.shape()) + " vs input " +
                         ad::shape_str(x.shape()));
  const std::size_t l = x.rows(), D = x.cols();
  ad::Tensor sum(x.shape(), 0.0);
  const double steps = cfg.steps;
  detail::accumulate_gradients(
      grad, l, D, cfg.steps, cfg.chunk,
      [&](int s, std::span<double> out) {
        const double a = static_cast<double>(s + 1) / steps;
        for (std::size_t e = 0; e < out.size(); ++e) out[e] = base[e] + a * (x[e] - base[e]);
      },
      sum);
  AttributionMap m;
  m.method = Method::ig;
  m.steps = cfg.steps;
  m.scores = ad::Tensor(x.shape());
  for (std::size_t e = 0; e < x.size(); ++e) m.scores[e] = (x[e] - base[e]) * sum[e] / steps;
  m.time_avg = time_average(m.scores);
  ad::Tensor both({2 * l, D});
  std::copy(x.data().begin(), x.data().end(), both.data().begin());
  std::copy(base.data().begin(), base.data().end(), both.data().begin() + static_cast<std::ptrdiff_t>(x.size()));
  const InputGradient ends = grad(both, 2);
  m.probability = ends.probability[0];
  m.baseline_probability = ends.probability[1];
  return m;
}

inline AttributionMap integrated_gradients(const Model& model, const ad::Tensor& x, int target, const IgConfig& cfg) {
  AttributionMap m = integrated_gradients(gradient_fn(model, target), x, cfg);
  m.target = target;
  return m;
}

/// Mean gradient under Gaussian input noise with per-dimension standard
/// deviation sigma_ratio * (max_j - min_j).
inline AttributionMap smoothgrad(const GradientFn& grad, const ad::Tensor& x, const SgConfig& cfg,
                                 const DimensionRange& range) {
  if (cfg.steps < 1) throw std::invalid_argument("smoothgrad: steps must be >= 1");
  if (!(cfg.sigma_ratio >= 0.0)) throw std::invalid_argument("smoothgrad: sigma_ratio must be >= 0");
  if (x.rank() != 2) throw ad::ShapeError("smoothgrad: input " + ad::shape_str(x.shape()) + " is not [l, D]");
  const std::size_t l = x.rows(), D = x.cols();
  if (range.min.size() != D || range.max.size() != D)
    throw ad::ShapeError("smoothgrad: range statistics cover " + std::to_string(range.min.size()) +
                         " dimensions, input has " + std::to_string(D));
  std::vector<double> sigma(D);
  for (std::size_t j = 0; j < D; ++j) sigma[j] = cfg.sigma_ratio * (range.max[j] - range.min[j]);
  Rng rng(cfg.seed);
  ad::Tensor sum(x.shape(), 0.0);
  double prob_sum = 0.0;
  detail::accumulate_gradients(
      grad, l, D, cfg.steps, cfg.chunk,
      [&](int, std::span<double> out) {
        for (std::size_t e = 0; e < out.size(); ++e) {
          const double z = rng.normal();
          out[e] = x[e] + sigma[e % D] * z;
        }
      },
      sum, &prob_sum);
  AttributionMap m;
  m.method = Method::sg;
  m.steps = cfg.steps;
  m.scores = ad::Tensor(x.shape());
  for (std::size_t e = 0; e < x.size(); ++e) m.scores[e] = sum[e] / static_cast<double>(cfg.steps);
  m.time_avg = time_average(m.scores);
  m.probability = grad(x, 1).probability[0];
  m.baseline_probability = prob_sum / static_cast<double>(cfg.steps);
  return m;
}

inline AttributionMap smoothgrad(const Model& model, const ad::Tensor& x, int target, const SgConfig& cfg) {
  AttributionMap m = smoothgrad(gradient_fn(model, target), x, cfg, model.input_range);
  m.target = target;
  return m;
}

/// Uniform noise scores; the no-information control for fidelity.
inline AttributionMap random_attribution(const ad::Tensor& x, std::uint64_t seed) {
  Rng rng(seed);
  AttributionMap m;
  m.method = Method::random;
  m.scores = ad::Tensor(x.shape());
  for (double& v : m.scores.data()) v = rng.uniform();
  m.time_avg = time_average(m.scores);
  return m;
}

struct RankedFeature {
  std::size_t dimension = 0;
  std::string name;
  double score = 0.0;
};

/// Indices of the k largest |v|, descending; ties go to the lower index.
inline std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k) {
  if (k < 1 || k > v.size())
    throw std::invalid_argument("top_k: k = " + std::to_string(k) + " outside [1, " + std::to_string(v.size()) + "]");
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double x = std::abs(v[a]), y = std::abs(v[b]);
                      return x > y || (x == y && a < b);
                    });
  idx.resize(k);
  return idx;
}

inline std::vector<RankedFeature> top_k(const AttributionMap& map, std::size_t k, const FeatureSchema* schema = nullptr) {
  std::vector<RankedFeature> out;
  for (std::size_t j : top_k_indices(map.time_avg, k))
    out.push_back({j, schema ? schema->dimension_name(j) : "dim_" + std::to_string(j), map.time_avg[j]});
  return out;
}

/// Human-readable class label for a task.
inline std::string class_name(std::string_view task, int c) {
  if (task == "win" || task == "tyrant") return std::string(to_string(static_cast<Camp>(c)));
  if (task == "kill" || task == "bekill") return "hero_" + std::to_string(c);
  return "class_" + std::to_string(c);
}

inline nlohmann::ordered_json report_json(const AttributionMap& map, std::size_t k, const FeatureSchema& schema,
                                          std::string_view task) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(map.method));
  j["steps"] = map.steps;
  j["target"] = map.target;
  j["target_name"] = class_name(task, map.target);
  j["probability"] = map.probability;
  if (map.method == Method::ig) {
    j["baseline_probability"] = map.baseline_probability;
    j["attribution_sum"] = map.total();
  }
  auto& rows = j["top_features"] = nlohmann::ordered_json::array();
  int rank = 1;
  for (const RankedFeature& f : top_k(map, k, &schema))
    rows.push_back({{"rank", rank++}, {"dimension", f.dimension}, {"feature", f.name}, {"score", f.score}});
  return j;
}

inline std::string report_text(const AttributionMap& map, std::size_t k, const FeatureSchema& schema,
                               std::string_view task) {
  const auto rows = top_k(map, k, &schema);
  std::size_t width = 7;
  for (const RankedFeature& f : rows) width = std::max(width, f.name.size());
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", map.probability);
  os << "prediction: " << class_name(task, map.target) << " (p = " << buf << ")\n";
  os << "method: " << to_string(map.method) << ", steps = " << map.steps << "\n";
  os << "rank  " << std::string("feature") << std::string(width - 7, ' ') << "  dim     score\n";
  int rank = 1;
  for (const RankedFeature& f : rows) {
    std::snprintf(buf, sizeof buf, "%+.6e", f.score);
    char head[16];
    std::snprintf(head, sizeof head, "%4d  ", rank++);
    char dim[16];
    std::snprintf(dim, sizeof dim, "%5zu", f.dimension);
    os << head << f.name << std::string(width - f.name.size(), ' ') << "  " << dim << "  " << buf << "\n";
  }
  return os.str();
}

}  // namespace mobaxai
