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

// Checkpoint directory layout:
//   manifest.json  architecture, configs, seed, history, offset table
//   schema.json    the FeatureSchema the model was trained against
//   params.bin     named tensors as little-endian float64, concatenated

#pragma once

#include "json.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobaxai/models.hpp"

namespace mobaxai {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_le64(std::string& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof u);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
}

inline double get_le64(const unsigned char* p) {
  std::uint64_t u = 0;
  for (int b = 7; b >= 0; --b) u = (u << 8) | p[b];
  double v;
  std::memcpy(&v, &u, sizeof v);
  return v;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to " + p.string());
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const LstmConfig& c) {
  return {{"layers", c.layers}, {"bidirectional", c.bidirectional}, {"hidden", c.hidden},
          {"dropout", c.dropout}, {"head_width", c.head_width}};
}

inline nlohmann::ordered_json to_json(const TransformerConfig& c) {
  return {{"layers", c.layers},           {"heads", c.heads},       {"dropout", c.dropout},
          {"model_width", c.model_width}, {"ff_width", c.ff_width}, {"head_width", c.head_width}};
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"optimizer", "adam"},    {"max_epochs", c.max_epochs}, {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"epsilon", c.epsilon},  {"patience", c.patience},     {"seed", c.seed}};
}

inline LstmConfig lstm_config_from_json(const nlohmann::json& j) {
  return {j.at("layers").get<std::size_t>(), j.at("bidirectional").get<bool>(), j.at("hidden").get<std::size_t>(),
          j.at("dropout").get<double>(), j.at("head_width").get<std::size_t>()};
}

inline TransformerConfig transformer_config_from_json(const nlohmann::json& j) {
  return {j.at("layers").get<std::size_t>(),      j.at("heads").get<std::size_t>(),
          j.at("dropout").get<double>(),          j.at("model_width").get<std::size_t>(),
          j.at("ff_width").get<std::size_t>(),    j.at("head_width").get<std::size_t>()};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.max_epochs = j.at("max_epochs").get<int>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void save_checkpoint(const Model& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string blob;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : m.params) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    for (double v : t.data()) detail::put_le64(blob, v);
    offset += t.size();
  }
  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  for (const EpochMetrics& e : m.history)
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"validation_loss", e.validation_loss},
                       {"validation_accuracy", e.validation_accuracy}});
  nlohmann::ordered_json j;
  j["checkpoint_version"] = kCheckpointVersion;
  j["architecture"] = std::string(to_string(m.architecture));
  j["lstm"] = to_json(m.lstm);
  j["transformer"] = to_json(m.transformer);
  j["train"] = to_json(m.train);
  j["task"] = m.task;
  j["horizon"] = m.horizon;
  j["window"] = m.window;
  j["classes"] = m.classes;
  j["seed"] = m.seed;
  j["schema_file"] = "schema.json";
  j["blob_file"] = "params.bin";
  j["blob_bytes"] = blob.size();
  j["parameter_count"] = parameter_count(m.params);
  j["selected_epoch"] = m.selected_epoch;
  j["history"] = std::move(history);
  j["warnings"] = m.warnings;
  j["input_range"] = {{"min", m.input_range.min}, {"max", m.input_range.max}};
  j["tensors"] = std::move(tensors);
  detail::write_file(dir / "schema.json", m.schema.to_json().dump(1) + "\n");
  detail::write_file(dir / "params.bin", blob);
  detail::write_file(dir / "manifest.json", j.dump(1) + "\n");
}

inline Model load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("manifest.json: " + std::string(e.what()));
  }
  Model m;
  try {
    if (j.at("checkpoint_version").get<int>() != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version " + j.at("checkpoint_version").dump());
    m.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    m.lstm = lstm_config_from_json(j.at("lstm"));
    m.transformer = transformer_config_from_json(j.at("transformer"));
    m.train = train_config_from_json(j.at("train"));
    m.task = j.at("task").get<std::string>();
    m.horizon = j.at("horizon").get<int>();
    m.window = j.at("window").get<std::size_t>();
    m.classes = j.at("classes").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.selected_epoch = j.at("selected_epoch").get<int>();
    for (const auto& e : j.at("history"))
      m.history.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                           e.at("validation_loss").get<double>(), e.at("validation_accuracy").get<double>()});
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    m.input_range.min = j.at("input_range").at("min").get<std::vector<double>>();
    m.input_range.max = j.at("input_range").at("max").get<std::vector<double>>();
    m.schema = FeatureSchema::from_json(
        nlohmann::json::parse(detail::read_file(dir / j.at("schema_file").get<std::string>())));

    const std::string blob = detail::read_file(dir / j.at("blob_file").get<std::string>());
    if (blob.size() != j.at("blob_bytes").get<std::size_t>())
      throw CheckpointError("params.bin holds " + std::to_string(blob.size()) + " bytes, manifest expects " +
                            j.at("blob_bytes").dump());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    for (const auto& e : j.at("tensors")) {
      const auto shape = e.at("shape").get<ad::Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (ad::Tensor::count(shape) != count || (offset + count) * 8 > blob.size())
        throw CheckpointError("tensor '" + e.at("name").get<std::string>() + "' does not fit the blob");
      ad::Tensor t(shape);
      for (std::size_t i = 0; i < count; ++i) t[i] = detail::get_le64(bytes + (offset + i) * 8);
      m.params.emplace(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("manifest.json: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }
  const Model fresh = init_model(m.architecture, m.schema, m.window, m.classes, 0, m.lstm, m.transformer);
  for (const auto& [name, t] : fresh.params) {
    auto it = m.params.find(name);
    if (it == m.params.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw CheckpointError("tensor '" + name + "' has shape " + ad::shape_str(it->second.shape()) + ", config implies " +
                            ad::shape_str(t.shape()));
  }
  if (fresh.params.size() != m.params.size()) throw CheckpointError("checkpoint holds unexpected tensors");
  return m;
}

}  // namespace mobaxai
