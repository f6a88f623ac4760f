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

// Fidelity of an attribution method: keep each instance's top-k input
// columns, zero the rest, label with the original model's argmax, train a
// fresh same-architecture proxy on the masked training set and report its
// agreement with those labels on the masked test set.

#pragma once

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobaxai/attribution.hpp"
#include "mobaxai/models.hpp"
#include "mobaxai/parallel.hpp"

namespace mobaxai {

/// Zeroes every column of x outside `keep`.
inline ad::Tensor mask_columns(const ad::Tensor& x, std::span<const std::size_t> keep) {
  ad::Tensor out(x.shape(), 0.0);
  for (std::size_t j : keep) {
    if (j >= x.cols()) throw std::out_of_range("mask: column " + std::to_string(j) + " outside input");
    for (std::size_t i = 0; i < x.rows(); ++i) out.at(i, j) = x.at(i, j);
  }
  return out;
}

inline ad::Tensor mask_top_k(const ad::Tensor& x, std::span<const double> time_avg, std::size_t k) {
  return mask_columns(x, top_k_indices(time_avg, k));
}

struct AttributionSpec {
  Method method = Method::ig;
  IgConfig ig;
  SgConfig sg;
  std::uint64_t random_seed = 0;  // Method::random only
};

/// Time-averaged scores for each input, targeting the given class. Failed
/// instances are left empty.
inline std::vector<std::optional<std::vector<double>>> attribute_all(const Model& f,
                                                                     const std::vector<ad::Tensor>& inputs,
                                                                     std::span<const int> targets,
                                                                     const AttributionSpec& spec,
                                                                     std::size_t workers = 1) {
  std::vector<std::optional<std::vector<double>>> out(inputs.size());
  parallel_for(inputs.size(), workers, [&](std::size_t i) {
    try {
      switch (spec.method) {
        case Method::ig: out[i] = integrated_gradients(f, inputs[i], targets[i], spec.ig).time_avg; break;
        case Method::sg: {
          SgConfig sg = spec.sg;
          sg.seed = Rng::mix(spec.sg.seed + i);
          out[i] = smoothgrad(f, inputs[i], targets[i], sg).time_avg;
          break;
        }
        case Method::random: out[i] = random_attribution(inputs[i], Rng::mix(spec.random_seed + i)).time_avg; break;
      }
      for (double v : *out[i])
        if (!std::isfinite(v)) throw std::domain_error("non-finite attribution");
    } catch (const std::exception&) {
      out[i].reset();
    }
  });
  return out;
}

struct MaskedSet {
  LabeledSet data;  // masked inputs labelled with F's prediction
  std::vector<std::size_t> source;  // index of each kept instance in the input list
  std::size_t dropped = 0;
};

inline MaskedSet build_masked_set(const std::vector<ad::Tensor>& inputs, std::span<const int> f_labels,
                                  const std::vector<std::optional<std::vector<double>>>& attributions, std::size_t k) {
  MaskedSet s;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!attributions[i]) {
      ++s.dropped;
      continue;
    }
    s.data.inputs.push_back(mask_top_k(inputs[i], *attributions[i], k));
    s.data.labels.push_back(f_labels[i]);
    s.source.push_back(i);
  }
  return s;
}

struct FidelityReport {
  std::string task;
  std::string model;
  std::string method;
  std::size_t k = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  double fidelity = 0.0;
  double modal_rate = 0.0;  // share of F's most frequent label on W
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t dropped = 0;
  double drop_rate = 0.0;
  bool failed = false;
  std::string error;
  std::vector<EpochMetrics> proxy_history;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json h = nlohmann::ordered_json::array();
    for (const EpochMetrics& e : proxy_history)
      h.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"validation_loss", e.validation_loss},
                   {"validation_accuracy", e.validation_accuracy}});
    nlohmann::ordered_json j;
    j["task"] = task;
    j["model"] = model;
    j["method"] = method;
    j["k"] = k;
    j["steps"] = steps;
    j["seed"] = seed;
    j["fidelity"] = fidelity;
    j["modal_rate"] = modal_rate;
    j["train_size"] = train_size;
    j["test_size"] = test_size;
    j["dropped"] = dropped;
    j["drop_rate"] = drop_rate;
    j["failed"] = failed;
    if (failed) j["error"] = error;
    j["proxy_history"] = std::move(h);
    return j;
  }
};

inline double modal_rate(std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) return 0.0;
  std::vector<std::size_t> count(classes, 0);
  for (int y : labels) ++count[static_cast<std::size_t>(y)];
  return static_cast<double>(*std::max_element(count.begin(), count.end())) / static_cast<double>(labels.size());
}

/// Trains the proxy on V (a tenth held out for early stopping, chosen by
/// `seed`) and scores it on W.
inline FidelityReport run_fidelity(const Model& f, const MaskedSet& v, const MaskedSet& w, const TrainConfig& proxy,
                                   std::uint64_t seed) {
  FidelityReport r;
  r.task = f.task;
  r.model = std::string(to_string(f.architecture));
  r.seed = seed;
  r.train_size = v.data.size();
  r.test_size = w.data.size();
  r.dropped = v.dropped + w.dropped;
  const std::size_t total = r.train_size + r.test_size + r.dropped;
  r.drop_rate = total ? static_cast<double>(r.dropped) / static_cast<double>(total) : 0.0;
  r.modal_rate = modal_rate(w.data.labels, f.classes);
  if (v.data.size() < 2 || w.data.size() == 0) {
    r.failed = true;
    r.error = "too few instances after drops";
    return r;
  }
  std::vector<std::size_t> order(v.data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::mix(seed ^ 0x70726f7879ULL));
  rng.shuffle(order);
  const std::size_t n_val = std::max<std::size_t>(1, order.size() / 10);
  LabeledSet train, val;
  for (std::size_t r_i = 0; r_i < order.size(); ++r_i) {
    LabeledSet& dst = r_i < n_val ? val : train;
    dst.inputs.push_back(v.data.inputs[order[r_i]]);
    dst.labels.push_back(v.data.labels[order[r_i]]);
  }
  Model q = init_model(f.architecture, f.schema, f.window, f.classes, seed, f.lstm, f.transformer);
  q.task = f.task;
  q.horizon = f.horizon;
  TrainConfig cfg = proxy;
  cfg.seed = seed;
  try {
    q = train_model(std::move(q), train, val, cfg);
  } catch (const TrainingError& e) {
    r.failed = true;
    r.error = e.what();
    return r;
  }
  r.proxy_history = q.history;
  const std::vector<int> pred = predict_labels(q, w.data.inputs);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) agree += pred[i] == w.data.labels[i];
  r.fidelity = static_cast<double>(agree) / static_cast<double>(pred.size());
  return r;
}

/// One fidelity cell from scratch: F's labels, attributions, masks, proxy.
struct FidelityJob {
  const Model* f = nullptr;
  const LabeledSet* train = nullptr;
  const LabeledSet* test = nullptr;
  AttributionSpec attribution;
  std::size_t k = 1;
  TrainConfig proxy;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

inline FidelityReport run_fidelity(const FidelityJob& job) {
  if (!job.f || !job.train || !job.test) throw std::invalid_argument("fidelity job is incomplete");
  const Model& f = *job.f;
  if (job.k < 1 || job.k > f.schema.input_width())
    throw std::invalid_argument("fidelity: k = " + std::to_string(job.k) + " outside [1, D_in]");
  const std::vector<int> ytr = predict_labels(f, job.train->inputs), yte = predict_labels(f, job.test->inputs);
  const auto atr = attribute_all(f, job.train->inputs, ytr, job.attribution, job.workers);
  const auto ate = attribute_all(f, job.test->inputs, yte, job.attribution, job.workers);
  FidelityReport r = run_fidelity(f, build_masked_set(job.train->inputs, ytr, atr, job.k),
                                  build_masked_set(job.test->inputs, yte, ate, job.k), job.proxy, job.seed);
  r.method = std::string(to_string(job.attribution.method));
  r.k = job.k;
  r.steps = job.attribution.method == Method::ig   ? job.attribution.ig.steps
            : job.attribution.method == Method::sg ? job.attribution.sg.steps
                                                   : 0;
  return r;
}

}  // namespace mobaxai
