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

// Sequence classifiers over encoded windows. Inputs are batches laid out
// sample-major: rows [b*l, (b+1)*l) of a [B*l, D_in] matrix hold sample b.
// Both architectures share the embedding layer and the pooled head
// mean -> FC -> tanh -> linear -> softmax.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mobaxai/autodiff.hpp"
#include "mobaxai/encoding.hpp"
#include "mobaxai/params.hpp"
#include "mobaxai/rng.hpp"

namespace mobaxai {

enum class Architecture { lstm, transformer };

inline std::string_view to_string(Architecture a) { return a == Architecture::lstm ? "lstm" : "transformer"; }

inline Architecture architecture_from_string(std::string_view s) {
  if (s == "lstm") return Architecture::lstm;
  if (s == "transformer") return Architecture::transformer;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

struct LstmConfig {
  std::size_t layers = 2;
  bool bidirectional = true;
  std::size_t hidden = 32;
  double dropout = 0.2;
  std::size_t head_width = 64;

  static LstmConfig full_scale() { return {2, true, 128, 0.2, 256}; }

  void validate() const {
    if (layers == 0 || hidden == 0 || head_width == 0) throw std::invalid_argument("lstm: widths must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("lstm: dropout must lie in [0, 1)");
  }
  bool operator==(const LstmConfig&) const = default;
};

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.1;
  std::size_t model_width = 64;
  std::size_t ff_width = 128;
  std::size_t head_width = 64;

  static TransformerConfig full_scale() { return {2, 8, 0.1, 256, 512, 256}; }

  void validate() const {
    if (layers == 0 || heads == 0 || model_width == 0 || ff_width == 0 || head_width == 0)
      throw std::invalid_argument("transformer: widths must be positive");
    if (model_width % heads != 0)
      throw std::invalid_argument("transformer: model width " + std::to_string(model_width) +
                                  " not divisible by heads " + std::to_string(heads));
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("transformer: dropout must lie in [0, 1)");
  }
  bool operator==(const TransformerConfig&) const = default;
};

struct TrainConfig {
  int max_epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int patience = 5;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

struct EpochMetrics {
  int epoch = 0;  // 0 is the untrained initialisation
  double train_loss = 0.0;  // mean batch loss; evaluation-mode loss at epoch 0
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

/// A trained (or freshly initialised) classifier with everything needed to
/// reproduce its predictions.
struct Model {
  Architecture architecture = Architecture::lstm;
  LstmConfig lstm;
  TransformerConfig transformer;
  TrainConfig train;
  FeatureSchema schema;
  std::size_t window = 5;
  std::size_t classes = 2;
  std::uint64_t seed = 0;
  std::string task;
  int horizon = 0;
  ParameterSet params;
  DimensionRange input_range;  // per-dimension extremes of the training inputs
  std::vector<EpochMetrics> history;
  int selected_epoch = 0;
  std::vector<std::string> warnings;

  bool operator==(const Model&) const = default;
};

/// Labelled windows, each [l, D_in].
struct LabeledSet {
  std::vector<ad::Tensor> inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }

  static LabeledSet from_windows(const std::vector<SequenceWindow>& windows) {
    LabeledSet s;
    s.inputs.reserve(windows.size());
    s.labels.reserve(windows.size());
    for (const SequenceWindow& w : windows) {
      s.inputs.push_back(w.x);
      s.labels.push_back(w.label);
    }
    return s;
  }
};

/// Stacks windows into one sample-major [B*l, D] matrix.
inline ad::Tensor stack_inputs(const std::vector<ad::Tensor>& inputs, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("stack_inputs: empty batch");
  const ad::Tensor& first = inputs.at(indices.front());
  const std::size_t l = first.rows(), D = first.cols();
  ad::Tensor out({indices.size() * l, D});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const ad::Tensor& x = inputs.at(indices[b]);
    if (x.shape() != first.shape())
      throw ad::ShapeError("stack_inputs: window " + ad::shape_str(x.shape()) + " vs " + ad::shape_str(first.shape()));
    std::copy(x.data().begin(), x.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * l * D));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialisation

namespace detail {

inline std::string lstm_prefix(std::size_t layer, bool backward) {
  return "lstm.l" + std::to_string(layer) + (backward ? ".bwd" : ".fwd");
}
inline std::string tf_prefix(std::size_t layer) { return "transformer.l" + std::to_string(layer); }

inline std::size_t pooled_width(const Model& m) {
  if (m.architecture == Architecture::lstm) return m.lstm.hidden * (m.lstm.bidirectional ? 2 : 1);
  return m.transformer.model_width;
}

}  // namespace detail

inline Model init_model(Architecture arch, const FeatureSchema& schema, std::size_t window, std::size_t classes,
                        std::uint64_t seed, LstmConfig lstm = {}, TransformerConfig transformer = {}) {
  if (window == 0) throw std::invalid_argument("window length must be >= 1");
  if (classes < 2) throw std::invalid_argument("need at least two classes");
  Model m;
  m.architecture = arch;
  m.lstm = lstm;
  m.transformer = transformer;
  m.schema = schema;
  m.window = window;
  m.classes = classes;
  m.seed = seed;
  Rng rng(seed);
  init_embedding(schema, rng, m.params);
  const std::size_t E = schema.embedding_width();
  if (arch == Architecture::lstm) {
    lstm.validate();
    const std::size_t H = lstm.hidden;
    std::size_t in = E;
    for (std::size_t L = 0; L < lstm.layers; ++L) {
      for (int dir = 0; dir < (lstm.bidirectional ? 2 : 1); ++dir) {
        const std::string p = detail::lstm_prefix(L, dir == 1);
        m.params[p + ".w_ih"] = glorot(in, 4 * H, rng);
        m.params[p + ".w_hh"] = glorot(H, 4 * H, rng);
        ad::Tensor b({4 * H}, 0.0);
        for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
        m.params[p + ".bias"] = std::move(b);
      }
      in = H * (lstm.bidirectional ? 2 : 1);
    }
  } else {
    transformer.validate();
    const std::size_t d = transformer.model_width, F = transformer.ff_width;
    m.params["transformer.input.weight"] = glorot(E, d, rng);
    m.params["transformer.input.bias"] = ad::Tensor({d}, 0.0);
    for (std::size_t L = 0; L < transformer.layers; ++L) {
      const std::string p = detail::tf_prefix(L);
      for (const char* n : {".wq", ".wk", ".wv", ".wo"}) m.params[p + n] = glorot(d, d, rng);
      for (const char* n : {".bq", ".bk", ".bv", ".bo", ".ln1.bias", ".ln2.bias"}) m.params[p + n] = ad::Tensor({d}, 0.0);
      m.params[p + ".ln1.gain"] = ad::Tensor({d}, 1.0);
      m.params[p + ".ln2.gain"] = ad::Tensor({d}, 1.0);
      m.params[p + ".ff1.weight"] = glorot(d, F, rng);
      m.params[p + ".ff1.bias"] = ad::Tensor({F}, 0.0);
      m.params[p + ".ff2.weight"] = glorot(F, d, rng);
      m.params[p + ".ff2.bias"] = ad::Tensor({d}, 0.0);
    }
  }
  const std::size_t head = arch == Architecture::lstm ? lstm.head_width : transformer.head_width;
  m.params["head.fc.weight"] = glorot(detail::pooled_width(m), head, rng);
  m.params["head.fc.bias"] = ad::Tensor({head}, 0.0);
  m.params["head.out.weight"] = glorot(head, classes, rng);
  m.params["head.out.bias"] = ad::Tensor({classes}, 0.0);
  return m;
}

/// Closed-form parameter count for a configuration.
inline std::size_t expected_parameter_count(Architecture arch, const FeatureSchema& schema, std::size_t classes,
                                            const LstmConfig& lstm = {}, const TransformerConfig& tf = {}) {
  std::size_t n = 0;
  for (const FeatureGroup& g : schema.groups())
    if (g.kind == FeatureKind::categorical) n += (g.cardinality + 1) * g.embed_width;
  const std::size_t E = schema.embedding_width();
  std::size_t pooled = 0, head = 0;
  if (arch == Architecture::lstm) {
    const std::size_t H = lstm.hidden, dirs = lstm.bidirectional ? 2 : 1;
    for (std::size_t L = 0; L < lstm.layers; ++L) {
      const std::size_t in = L == 0 ? E : dirs * H;
      n += dirs * (in * 4 * H + H * 4 * H + 4 * H);
    }
    pooled = dirs * H;
    head = lstm.head_width;
  } else {
    const std::size_t d = tf.model_width, F = tf.ff_width;
    n += E * d + d;
    n += tf.layers * (4 * (d * d + d) + 4 * d + d * F + F + F * d + d);
    pooled = d;
    head = tf.head_width;
  }
  return n + pooled * head + head + head * classes + classes;
}

// ---------------------------------------------------------------------------
// Forward pass

struct ForwardOptions {
  Rng* dropout = nullptr;                // null selects evaluation mode
  std::vector<ad::Tensor>* attention = nullptr;  // receives one probe per transformer layer
};

namespace detail {

inline ad::Var maybe_dropout(ad::Var x, double p, Rng* rng) {
  if (!rng || p <= 0.0) return x;
  ad::Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - p);
  for (double& v : mask.data()) v = rng->bernoulli(p) ? 0.0 : keep;
  return ad::dropout_with_mask(x, mask);
}

/// One direction of one LSTM layer. `proj` is the input projection
/// [B*l, 4H] (sample-major); returns the hidden states time-major [l*B, H].
inline ad::Var lstm_direction(ad::Tape& tape, ad::Var proj, ad::Var w_hh, std::size_t batch, std::size_t l,
                              std::size_t H, bool backward) {
  ad::Var h = tape.constant(ad::Tensor({batch, H}, 0.0));
  ad::Var c = tape.constant(ad::Tensor({batch, H}, 0.0));
  std::vector<ad::Var> outputs(l, h);
  std::vector<std::size_t> rows(batch);
  for (std::size_t s = 0; s < l; ++s) {
    const std::size_t t = backward ? l - 1 - s : s;
    for (std::size_t b = 0; b < batch; ++b) rows[b] = b * l + t;
    ad::Var gates = ad::gather_rows(proj, rows);
    if (s > 0) gates = ad::add(gates, ad::matmul(h, w_hh));
    ad::Var i = ad::sigmoid(ad::slice(gates, 1, 0, H));
    ad::Var f = ad::sigmoid(ad::slice(gates, 1, H, 2 * H));
    ad::Var g = ad::tanh(ad::slice(gates, 1, 2 * H, 3 * H));
    ad::Var o = ad::sigmoid(ad::slice(gates, 1, 3 * H, 4 * H));
    c = s > 0 ? ad::add(ad::mul(f, c), ad::mul(i, g)) : ad::mul(i, g);
    h = ad::mul(o, ad::tanh(c));
    outputs[t] = h;
  }
  return ad::concat(outputs, 0);
}

/// Row permutation from time-major (t*B + b) to sample-major (b*l + t).
inline std::vector<std::size_t> time_to_sample_major(std::size_t batch, std::size_t l) {
  std::vector<std::size_t> idx(batch * l);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < l; ++t) idx[b * l + t] = t * batch + b;
  return idx;
}

inline ad::Tensor positional_encoding(std::size_t batch, std::size_t l, std::size_t d) {
  ad::Tensor pe({batch * l, d});
  for (std::size_t t = 0; t < l; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      const double rate = std::pow(10000.0, -static_cast<double>(j - j % 2) / static_cast<double>(d));
      const double v = j % 2 == 0 ? std::sin(static_cast<double>(t) * rate) : std::cos(static_cast<double>(t) * rate);
      for (std::size_t b = 0; b < batch; ++b) pe.at(b * l + t, j) = v;
    }
  return pe;
}

inline ad::Var lstm_body(const Model& m, const BoundParams& p, ad::Var x, std::size_t batch, Rng* drop) {
  ad::Tape& tape = *x.tape;
  const std::size_t H = m.lstm.hidden, l = m.window;
  const auto reorder = time_to_sample_major(batch, l);
  for (std::size_t L = 0; L < m.lstm.layers; ++L) {
    if (L > 0) x = maybe_dropout(x, m.lstm.dropout, drop);
    std::vector<ad::Var> dirs;
    for (int dir = 0; dir < (m.lstm.bidirectional ? 2 : 1); ++dir) {
      const std::string pre = lstm_prefix(L, dir == 1);
      ad::Var proj = ad::add(ad::matmul(x, p[pre + ".w_ih"]), p[pre + ".bias"]);
      dirs.push_back(lstm_direction(tape, proj, p[pre + ".w_hh"], batch, l, H, dir == 1));
    }
    ad::Var both = dirs.size() == 1 ? dirs.front() : ad::concat(dirs, 1);
    x = ad::gather_rows(both, reorder);
  }
  return x;
}

inline ad::Var transformer_body(const Model& m, const BoundParams& p, ad::Var x, std::size_t batch, Rng* drop,
                                std::vector<ad::Tensor>* probes) {
  ad::Tape& tape = *x.tape;
  const TransformerConfig& c = m.transformer;
  const std::size_t l = m.window;
  x = ad::add(ad::matmul(x, p["transformer.input.weight"]), p["transformer.input.bias"]);
  x = ad::add(x, tape.constant(positional_encoding(batch, l, c.model_width)));
  for (std::size_t L = 0; L < c.layers; ++L) {
    const std::string pre = tf_prefix(L);
    ad::Var q = ad::add(ad::matmul(x, p[pre + ".wq"]), p[pre + ".bq"]);
    ad::Var k = ad::add(ad::matmul(x, p[pre + ".wk"]), p[pre + ".bk"]);
    ad::Var v = ad::add(ad::matmul(x, p[pre + ".wv"]), p[pre + ".bv"]);
    ad::Tensor probe;
    ad::Var a = ad::attention(q, k, v, l, c.heads, probes ? &probe : nullptr);
    if (probes) probes->push_back(std::move(probe));
    a = ad::add(ad::matmul(a, p[pre + ".wo"]), p[pre + ".bo"]);
    x = ad::layer_norm(ad::add(x, maybe_dropout(a, c.dropout, drop)), p[pre + ".ln1.gain"], p[pre + ".ln1.bias"]);
    ad::Var f = ad::relu(ad::add(ad::matmul(x, p[pre + ".ff1.weight"]), p[pre + ".ff1.bias"]));
    f = ad::add(ad::matmul(f, p[pre + ".ff2.weight"]), p[pre + ".ff2.bias"]);
    x = ad::layer_norm(ad::add(x, maybe_dropout(f, c.dropout, drop)), p[pre + ".ln2.gain"], p[pre + ".ln2.bias"]);
  }
  return x;
}

}  // namespace detail

/// Class scores before softmax, [batch, classes].
inline ad::Var logits(const Model& m, const BoundParams& p, ad::Var x, std::size_t batch, ForwardOptions opt = {}) {
  const ad::Tensor& X = x.value();
  if (X.rank() != 2 || X.cols() != m.schema.input_width() || X.rows() != batch * m.window)
    throw ad::ShapeError("forward: input " + ad::shape_str(X.shape()) + " does not match " + std::to_string(batch) +
                         " windows of [" + std::to_string(m.window) + "," + std::to_string(m.schema.input_width()) + "]");
  ad::Var h = embed(x, m.schema, p);
  ad::Var body = m.architecture == Architecture::lstm ? detail::lstm_body(m, p, h, batch, opt.dropout)
                                                      : detail::transformer_body(m, p, h, batch, opt.dropout, opt.attention);
  ad::Var pooled = ad::segment_mean(body, m.window);
  const double head_drop = m.architecture == Architecture::lstm ? m.lstm.dropout : m.transformer.dropout;
  pooled = detail::maybe_dropout(pooled, head_drop, opt.dropout);
  ad::Var fc = ad::tanh(ad::add(ad::matmul(pooled, p["head.fc.weight"]), p["head.fc.bias"]));
  return ad::add(ad::matmul(fc, p["head.out.weight"]), p["head.out.bias"]);
}

/// P(y|X) for a batch in evaluation mode, [batch, classes].
inline ad::Tensor predict_batch(const Model& m, const ad::Tensor& x, std::size_t batch) {
  ad::Tape tape;
  BoundParams p(tape, m.params, false);
  return ad::softmax(logits(m, p, tape.constant(x), batch)).value();
}

inline ad::Tensor predict(const Model& m, const ad::Tensor& window) { return predict_batch(m, window, 1); }

/// Evaluation-mode probabilities for every input, in chunks.
inline std::vector<std::vector<double>> predict_all(const Model& m, const std::vector<ad::Tensor>& inputs,
                                                    std::size_t chunk = 256) {
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, inputs.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const ad::Tensor P = predict_batch(m, stack_inputs(inputs, idx), n);
    for (std::size_t b = 0; b < n; ++b)
      out.emplace_back(P.data().begin() + static_cast<std::ptrdiff_t>(b * m.classes),
                       P.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * m.classes));
  }
  return out;
}

/// Lowest index among maximal entries.
inline int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<int> predict_labels(const Model& m, const std::vector<ad::Tensor>& inputs) {
  std::vector<int> out;
  for (const auto& p : predict_all(m, inputs)) out.push_back(argmax(p));
  return out;
}

struct InputGradient {
  ad::Tensor gradient;               // [B*l, D]; rows of sample b hold dP(y_b)/dX_b
  std::vector<double> probability;   // P(y_b | X_b)
};

/// Gradients of the target-class probability with respect to each input.
/// Samples do not interact in evaluation mode, so one backward pass of the
/// summed probabilities yields every per-sample gradient.
inline InputGradient probability_gradient(const Model& m, const ad::Tensor& x, std::span<const int> targets) {
  const std::size_t batch = targets.size();
  for (int y : targets)
    if (y < 0 || static_cast<std::size_t>(y) >= m.classes)
      throw std::invalid_argument("target class " + std::to_string(y) + " outside [0, " + std::to_string(m.classes) + ")");
  ad::Tape tape;
  BoundParams p(tape, m.params, false);
  ad::Var xv = tape.leaf(x, true);
  ad::Var prob = ad::softmax(logits(m, p, xv, batch));
  std::vector<std::size_t> cols(targets.begin(), targets.end());
  ad::Var picked = ad::gather_columns(prob, cols);
  auto grads = tape.backward(ad::sum(picked), {xv});
  InputGradient r;
  r.gradient = std::move(grads.at(xv.id));
  r.probability.assign(picked.value().data().begin(), picked.value().data().end());
  return r;
}

// ---------------------------------------------------------------------------
// Training

/// Mean cross-entropy, [1].
inline ad::Var cross_entropy(ad::Var logit, std::span<const int> labels) {
  std::vector<std::size_t> cols(labels.begin(), labels.end());
  return ad::scale(ad::sum(ad::gather_columns(ad::log_softmax(logit), cols)), -1.0 / static_cast<double>(labels.size()));
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline Evaluation evaluate(const Model& m, const LabeledSet& data, std::size_t chunk = 256) {
  Evaluation e;
  if (data.size() == 0) return e;
  const auto probs = predict_all(m, data.inputs, chunk);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto y = static_cast<std::size_t>(data.labels[i]);
    e.loss -= std::log(std::max(probs[i][y], 1e-300));
    correct += static_cast<std::size_t>(argmax(probs[i])) == y;
  }
  e.loss /= static_cast<double>(probs.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(probs.size());
  return e;
}

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(ParameterSet& params, const std::map<std::string, ad::Tensor>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, w] : params) {
      const ad::Tensor& g = grads.at(name);
      auto& [mom, vel] = state_[name];
      if (mom.empty()) {
        mom = ad::Tensor(w.shape(), 0.0);
        vel = ad::Tensor(w.shape(), 0.0);
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        mom[i] = cfg_.beta1 * mom[i] + (1.0 - cfg_.beta1) * g[i];
        vel[i] = cfg_.beta2 * vel[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        w[i] -= cfg_.learning_rate * (mom[i] / c1) / (std::sqrt(vel[i] / c2) + cfg_.epsilon);
      }
    }
  }

 private:
  TrainConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::pair<ad::Tensor, ad::Tensor>> state_;
};

/// Loss and parameter gradients for one batch.
inline std::pair<double, std::map<std::string, ad::Tensor>> loss_and_gradients(const Model& m, const ad::Tensor& x,
                                                                                 std::span<const int> labels,
                                                                                 Rng* dropout) {
  ad::Tape tape;
  BoundParams p(tape, m.params, true);
  ad::Var loss = cross_entropy(logits(m, p, tape.constant(x), labels.size(), {dropout}), labels);
  std::vector<ad::Var> targets;
  for (const auto& [_, v] : p.vars()) targets.push_back(v);
  auto by_id = tape.backward(loss, targets);
  std::map<std::string, ad::Tensor> grads;
  for (const auto& [name, v] : p.vars()) grads.emplace(name, std::move(by_id.at(v.id)));
  return {loss.value()[0], std::move(grads)};
}

/// Mini-batch Adam with early stopping on validation loss. The returned
/// model carries the parameters of the best validation epoch.
inline Model train_model(Model m, const LabeledSet& train, const LabeledSet& validation, const TrainConfig& cfg) {
  if (train.size() == 0) throw std::invalid_argument("train: empty training set");
  if (validation.size() == 0) throw std::invalid_argument("train: empty validation set");
  if (cfg.batch_size == 0 || cfg.max_epochs < 0) throw std::invalid_argument("train: bad batch size or epoch count");
  std::vector<std::size_t> seen(m.classes, 0);
  for (const LabeledSet* s : {&train, &validation})
    for (int y : s->labels)
      if (y < 0 || static_cast<std::size_t>(y) >= m.classes)
        throw std::invalid_argument("train: label " + std::to_string(y) + " outside class range");
  for (int y : train.labels) ++seen[static_cast<std::size_t>(y)];
  m.warnings.clear();
  for (std::size_t c = 0; c < m.classes; ++c)
    if (seen[c] == 0) m.warnings.push_back("class " + std::to_string(c) + " absent from training data");

  m.train = cfg;
  m.history.clear();
  m.input_range = DimensionRange::of(train.inputs);

  const Evaluation initial = evaluate(m, validation);
  m.history.push_back({0, evaluate(m, train).loss, initial.loss, initial.accuracy});
  ParameterSet best = m.params;
  double best_loss = initial.loss;
  m.selected_epoch = 0;

  Adam adam(cfg);
  Rng order_rng(Rng::mix(cfg.seed ^ 0x6f72646572ULL));
  Rng dropout_rng(Rng::mix(cfg.seed ^ 0x64726f70ULL));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;
  int stale = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      labels.clear();
      for (std::size_t i : idx) labels.push_back(train.labels[i]);
      auto [loss, grads] = loss_and_gradients(m, stack_inputs(train.inputs, idx), labels, &dropout_rng);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + " (seed " +
                            std::to_string(cfg.seed) + ")");
      loss_sum += loss * static_cast<double>(n);
      adam.step(m.params, grads);
    }
    const Evaluation ev = evaluate(m, validation);
    m.history.push_back({epoch, loss_sum / static_cast<double>(train.size()), ev.loss, ev.accuracy});
    if (ev.loss < best_loss) {
      best_loss = ev.loss;
      best = m.params;
      m.selected_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  m.params = std::move(best);
  return m;
}

}  // namespace mobaxai
