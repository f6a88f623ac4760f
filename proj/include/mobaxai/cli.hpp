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

// Pipeline commands behind the `mobaxai` executable.
//
// Configuration is layered: built-in defaults, then a JSON file given with
// --config, then MOBAXAI_<KEY> environment variables, then --seed and
// --workers. Every output file carries a digest of the effective
// configuration (the worker count excluded, since it never changes results).

#pragma once

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mobaxai/attribution.hpp"
#include "mobaxai/checkpoint.hpp"
#include "mobaxai/datagen.hpp"
#include "mobaxai/dataset_io.hpp"
#include "mobaxai/encoding.hpp"
#include "mobaxai/fidelity.hpp"
#include "mobaxai/models.hpp"
#include "mobaxai/parallel.hpp"

namespace mobaxai::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kEnvPrefix = "MOBAXAI_";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exit status when the dropped-instance rate exceeds drop_threshold.
inline constexpr int kExitDropRate = 3;

inline json default_config() {
  return {
      {"task", "win"},
      {"architecture", "lstm"},
      {"models", {"lstm", "transformer"}},
      {"methods", {"ig", "sg"}},
      {"model_scale", "mini"},
      {"window", 5},
      {"horizon", 5},
      {"horizons", {5, 10, 15, 20}},
      {"k_grid", {100, 10, 5, 1}},
      {"steps", 100},
      {"steps_grid", {10, 100, 500}},
      {"sweep_k", 10},
      {"sigma_ratio", 0.15},
      {"seed", 0},
      {"fidelity_repeats", 1},
      {"fidelity_train_limit", 0},
      {"fidelity_test_limit", 0},
      {"workers", 1},
      {"games", 100},
      {"signal_strength", 0.9},
      {"min_length", 480},
      {"max_length", 900},
      {"max_epochs", 30},
      {"batch_size", 64},
      {"learning_rate", 1e-3},
      {"patience", 5},
      {"instances", {0}},
      {"top_k", 5},
      {"report_format", "both"},
      {"drop_threshold", 0.05},
      {"data_dir", "data"},
      {"checkpoint_dir", "checkpoints"},
      {"report_dir", "reports"},
  };
}

namespace detail {

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

inline json parse_scalar(const std::string& s) {
  try {
    return json::parse(s);
  } catch (const json::parse_error&) {
    return s;
  }
}

inline std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

/// Overrides keys of `base` from `overlay`, rejecting unknown keys and type
/// changes.
inline void merge_config(json& base, const json& overlay, const std::string& origin) {
  if (!overlay.is_object()) throw ConfigError(origin + ": configuration must be a JSON object");
  for (const auto& [key, value] : overlay.items()) {
    if (!base.contains(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
    if (!detail::same_kind(base[key], value))
      throw ConfigError(origin + ": key '" + key + "' expects " + std::string(base[key].type_name()) + ", got " +
                        value.type_name());
    base[key] = value;
  }
}

using EnvLookup = std::function<const char*(const char*)>;

/// MOBAXAI_<KEY> for every key; list values may be JSON arrays or
/// comma-separated.
inline void apply_env(json& cfg, const EnvLookup& env) {
  json overlay = json::object();
  for (const auto& [key, def] : cfg.items()) {
    const std::string name = kEnvPrefix + detail::upper(key);
    const char* raw = env(name.c_str());
    if (!raw) continue;
    const std::string s = raw;
    if (def.is_array() && (s.empty() || s.front() != '[')) {
      json arr = json::array();
      std::stringstream ss(s);
      for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) arr.push_back(detail::parse_scalar(item));
      overlay[key] = arr;
    } else if (def.is_string()) {
      overlay[key] = s;
    } else {
      overlay[key] = detail::parse_scalar(s);
    }
  }
  merge_config(cfg, overlay, "environment");
}

inline void validate_config(const json& c) {
  task_from_string(c["task"].get<std::string>());
  architecture_from_string(c["architecture"].get<std::string>());
  for (const auto& m : c["models"]) architecture_from_string(m.get<std::string>());
  for (const auto& m : c["methods"]) {
    const Method method = method_from_string(m.get<std::string>());
    if (method == Method::random) throw ConfigError("methods: 'random' is a control, not a selectable method");
  }
  const std::string scale = c["model_scale"];
  if (scale != "mini" && scale != "full") throw ConfigError("model_scale must be 'mini' or 'full'");
  const std::string fmt = c["report_format"];
  if (fmt != "text" && fmt != "json" && fmt != "both") throw ConfigError("report_format must be text, json or both");
  for (const char* key : {"models", "methods", "horizons", "k_grid"})
    if (c[key].empty()) throw ConfigError(std::string(key) + " must not be empty");
  auto positive = [&](const char* key) {
    if (c[key].get<double>() <= 0) throw ConfigError(std::string(key) + " must be positive");
  };
  for (const char* key : {"window", "steps", "sweep_k", "games", "batch_size", "learning_rate", "top_k",
                          "fidelity_repeats", "workers"})
    positive(key);
  for (const auto& k : c["k_grid"])
    if (k.get<long long>() < 1) throw ConfigError("k_grid entries must be >= 1");
  for (const auto& s : c["steps_grid"])
    if (s.get<long long>() < 1) throw ConfigError("steps_grid entries must be >= 1");
  for (const auto& s : c["horizons"]) {
    const int h = s.get<int>();
    if (h != 5 && h != 10 && h != 15 && h != 20) throw ConfigError("horizons must be drawn from {5, 10, 15, 20}");
  }
  const std::set<std::string> dirs{c["data_dir"].get<std::string>(), c["checkpoint_dir"].get<std::string>(),
                                   c["report_dir"].get<std::string>()};
  if (dirs.size() != 3) throw ConfigError("data_dir, checkpoint_dir and report_dir must be distinct");
}

inline json load_config(const std::string& path, const EnvLookup& env) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    merge_config(cfg, file, path);
  }
  apply_env(cfg, env);
  return cfg;
}

/// FNV-1a over the canonical (key-sorted) dump, excluding `workers`.
inline std::string config_digest(const json& cfg) {
  json c = cfg;
  c.erase("workers");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : c.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Shared helpers

struct Context {
  json cfg;
  std::string digest;
  bool force = false;
  std::ostream* log = &std::cerr;

  std::string str(const char* k) const { return cfg.at(k).get<std::string>(); }
  long long num(const char* k) const { return cfg.at(k).get<long long>(); }
  double real(const char* k) const { return cfg.at(k).get<double>(); }
  std::uint64_t seed() const { return cfg.at("seed").get<std::uint64_t>(); }
  std::size_t workers() const { return static_cast<std::size_t>(num("workers")); }
  fs::path data_dir() const { return str("data_dir"); }
  fs::path checkpoint_dir() const { return str("checkpoint_dir"); }
  fs::path report_dir() const { return str("report_dir"); }
  bool want_text() const { return str("report_format") != "json"; }
  bool want_json() const { return str("report_format") != "text"; }
};

inline std::string fixed(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
  if (!out) throw std::runtime_error("short write to " + p.string());
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

inline void write_json(const fs::path& p, nlohmann::ordered_json j, const Context& ctx) {
  nlohmann::ordered_json out;
  out["config_digest"] = ctx.digest;
  for (auto& [k, v] : j.items()) out[k] = std::move(v);
  write_text(p, out.dump(2) + "\n");
}

inline std::string text_header(const Context& ctx) { return "config digest: " + ctx.digest + "\n"; }

/// A CSV table; comment lines begin with '#'.
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render(const Context& ctx) const {
    std::string s = "# config_digest=" + ctx.digest + "\n";
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
      s += "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return s;
  }

  static Csv parse(const std::string& text) {
    Csv c;
    std::stringstream ss(text);
    for (std::string l; std::getline(ss, l);) {
      if (l.empty() || l.front() == '#') continue;
      std::vector<std::string> cells;
      std::stringstream ls(l);
      for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
      if (!l.empty() && l.back() == ',') cells.emplace_back();
      if (c.header.empty()) c.header = std::move(cells);
      else c.rows.push_back(std::move(cells));
    }
    return c;
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("CSV lacks column '" + name + "'");
  }
};

inline GeneratorConfig generator_config(const Context& ctx) {
  GeneratorConfig g;
  g.signal_strength = ctx.real("signal_strength");
  g.min_length = static_cast<int>(ctx.num("min_length"));
  g.max_length = static_cast<int>(ctx.num("max_length"));
  g.validate();
  return g;
}

inline fs::path split_path(const Context& ctx, const std::string& split) { return ctx.data_dir() / (split + ".jsonl"); }

inline std::vector<GameRecord> load_split(const Context& ctx, const std::string& split) {
  const fs::path p = split_path(ctx, split);
  if (!fs::exists(p)) throw std::runtime_error(p.string() + " not found; run `mobaxai gen` first");
  return load_dataset(p.string());
}

inline std::vector<int> horizons_for(const Context& ctx, Task task) {
  if (task == Task::win) return {0};
  return ctx.cfg.at("horizons").get<std::vector<int>>();
}

inline int horizon_for(const Context& ctx, Task task) {
  return task == Task::win ? 0 : static_cast<int>(ctx.num("horizon"));
}

inline std::string model_tag(const std::string& task, const std::string& arch, int horizon) {
  return task + "_" + arch + "_S" + std::to_string(horizon);
}

inline fs::path checkpoint_path(const Context& ctx, const std::string& task, const std::string& arch, int horizon) {
  return ctx.checkpoint_dir() / model_tag(task, arch, horizon);
}

inline TrainConfig train_config(const Context& ctx, std::uint64_t seed) {
  TrainConfig t;
  t.max_epochs = static_cast<int>(ctx.num("max_epochs"));
  t.batch_size = static_cast<std::size_t>(ctx.num("batch_size"));
  t.learning_rate = ctx.real("learning_rate");
  t.patience = static_cast<int>(ctx.num("patience"));
  t.seed = seed;
  return t;
}

/// Windows of the configured task and horizon for one split.
inline std::vector<SequenceWindow> split_windows(const std::vector<GameRecord>& records, const FeatureSchema& schema,
                                                 Task task, int horizon, std::size_t window) {
  return build_windows(records, schema, task, horizon, static_cast<int>(window));
}

/// Deterministic subset of at most `limit` items (0 keeps everything),
/// returned in original order.
inline std::vector<std::size_t> subset(std::size_t n, long long limit, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit <= 0 || static_cast<std::size_t>(limit) >= n) return idx;
  Rng rng(Rng::mix(seed ^ 0x737562736574ULL));
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(limit));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// gen

inline int cmd_gen(const Context& ctx) {
  const GeneratorConfig g = generator_config(ctx);
  const auto n = static_cast<std::size_t>(ctx.num("games"));
  const std::vector<std::string> names{"train", "validation", "test"};
  for (const auto& s : names)
    if (fs::exists(split_path(ctx, s)) && !ctx.force)
      throw std::runtime_error("refusing to overwrite " + split_path(ctx, s).string() + " (pass --force)");
  std::vector<GameRecord> games(n);
  const std::uint64_t base = ctx.seed() * 1000003ULL;
  parallel_for(n, ctx.workers(), [&](std::size_t i) { games[i] = generate_game(base + i, g); });
  const auto parts = split_games(games, ctx.seed());
  fs::create_directories(ctx.data_dir());
  nlohmann::ordered_json summary;
  std::string text = text_header(ctx);
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<GameRecord> split;
    for (std::size_t i : parts[s]) split.push_back(games[i]);
    save_dataset(split, split_path(ctx, names[s]).string(), ctx.digest);
    std::size_t frames = 0;
    for (const GameRecord& r : split) frames += r.frames.size();
    summary[names[s]] = {{"games", split.size()}, {"frames", frames}, {"path", split_path(ctx, names[s]).string()}};
    text += names[s] + ": " + std::to_string(split.size()) + " games, " + std::to_string(frames) + " frames\n";
    *ctx.log << "gen: wrote " << split_path(ctx, names[s]).string() << "\n";
  }
  summary["signal_strength"] = g.signal_strength;
  write_json(ctx.data_dir() / "gen_summary.json", summary, ctx);
  write_text(ctx.data_dir() / "gen_summary.txt", text);
  return 0;
}

// ---------------------------------------------------------------------------
// train

inline int cmd_train(const Context& ctx) {
  const std::string task_name = ctx.str("task"), arch_name = ctx.str("architecture");
  const Task task = task_from_string(task_name);
  const Architecture arch = architecture_from_string(arch_name);
  const auto window = static_cast<std::size_t>(ctx.num("window"));
  const auto train_games = load_split(ctx, "train"), val_games = load_split(ctx, "validation"),
             test_games = load_split(ctx, "test");
  const FeatureSchema schema = fit_normalization(train_games, mini_schema());
  const bool full = ctx.str("model_scale") == "full";
  const LstmConfig lc = full ? LstmConfig::full_scale() : LstmConfig{};
  const TransformerConfig tc = full ? TransformerConfig::full_scale() : TransformerConfig{};

  Csv acc{{"task", "model", "S", "n_train", "n_validation", "n_test", "selected_epoch", "test_accuracy"}, {}};
  Csv curve{{"task", "model", "t", "n", "accuracy"}, {}};
  nlohmann::ordered_json summary;
  summary["task"] = task_name;
  summary["model"] = arch_name;
  auto& runs = summary["runs"] = nlohmann::ordered_json::array();
  std::string text = text_header(ctx) + "accuracy of " + arch_name + " on task " + task_name + "\n";
  for (int S : horizons_for(ctx, task)) {
    const auto tr = split_windows(train_games, schema, task, S, window);
    const auto va = split_windows(val_games, schema, task, S, window);
    const auto te = split_windows(test_games, schema, task, S, window);
    if (tr.empty() || va.empty() || te.empty())
      throw std::runtime_error("task " + task_name + " S=" + std::to_string(S) + " has an empty split");
    Model m = init_model(arch, schema, window, class_count(task), ctx.seed(), lc, tc);
    m.task = task_name;
    m.horizon = S;
    *ctx.log << "train: " << model_tag(task_name, arch_name, S) << " on " << tr.size() << " windows\n";
    m = train_model(std::move(m), LabeledSet::from_windows(tr), LabeledSet::from_windows(va),
                    train_config(ctx, ctx.seed()));
    for (const std::string& w : m.warnings) *ctx.log << "train: warning: " << w << "\n";
    save_checkpoint(m, checkpoint_path(ctx, task_name, arch_name, S));

    const LabeledSet test = LabeledSet::from_windows(te);
    const auto probs = predict_all(m, test.inputs);
    Csv pred{{"index", "game_id", "t", "label", "prediction"}, {}};
    for (std::size_t c = 0; c < m.classes; ++c) pred.header.push_back("p_" + std::to_string(c));
    std::size_t correct = 0;
    std::map<int, std::pair<std::size_t, std::size_t>> buckets;  // t -> (n, correct)
    for (std::size_t i = 0; i < te.size(); ++i) {
      const int p = argmax(probs[i]);
      const bool ok = p == te[i].label;
      correct += ok;
      auto& b = buckets[te[i].t];
      ++b.first;
      b.second += ok;
      std::vector<std::string> row{std::to_string(i), std::to_string(te[i].game_id), std::to_string(te[i].t),
                                   std::to_string(te[i].label), std::to_string(p)};
      for (double v : probs[i]) row.push_back(exact(v));
      pred.rows.push_back(std::move(row));
    }
    write_text(ctx.report_dir() / ("predictions_" + model_tag(task_name, arch_name, S) + ".csv"), pred.render(ctx));
    const double accuracy = static_cast<double>(correct) / static_cast<double>(te.size());
    acc.rows.push_back({task_name, arch_name, std::to_string(S), std::to_string(tr.size()), std::to_string(va.size()),
                        std::to_string(te.size()), std::to_string(m.selected_epoch), exact(accuracy)});
    if (task == Task::win)
      for (const auto& [t, b] : buckets)
        curve.rows.push_back({task_name, arch_name, std::to_string(t), std::to_string(b.first),
                              exact(static_cast<double>(b.second) / static_cast<double>(b.first))});
    runs.push_back({{"S", S},
                    {"checkpoint", checkpoint_path(ctx, task_name, arch_name, S).string()},
                    {"selected_epoch", m.selected_epoch},
                    {"test_accuracy", accuracy},
                    {"warnings", m.warnings}});
    text += "  S=" + std::to_string(S) + "  accuracy " + fixed(accuracy) + "  (" + std::to_string(te.size()) +
            " test windows, epoch " + std::to_string(m.selected_epoch) + ")\n";
  }
  write_text(ctx.report_dir() / ("accuracy_" + task_name + "_" + arch_name + ".csv"), acc.render(ctx));
  if (task == Task::win) {
    write_text(ctx.report_dir() / ("win_curve_" + arch_name + ".csv"), curve.render(ctx));
    text += "win accuracy by game time:\n";
    for (const auto& r : curve.rows) text += "  t=" + r[2] + "  " + fixed(std::stod(r[4])) + "  (n=" + r[3] + ")\n";
  }
  if (ctx.want_json()) write_json(ctx.report_dir() / ("train_" + task_name + "_" + arch_name + ".json"), summary, ctx);
  if (ctx.want_text()) write_text(ctx.report_dir() / ("train_" + task_name + "_" + arch_name + ".txt"), text);
  return 0;
}

// ---------------------------------------------------------------------------
// attribute

inline int cmd_attribute(const Context& ctx) {
  const std::string task_name = ctx.str("task"), arch_name = ctx.str("architecture");
  const Task task = task_from_string(task_name);
  const int S = horizon_for(ctx, task);
  const Model m = load_checkpoint(checkpoint_path(ctx, task_name, arch_name, S));
  const auto te = split_windows(load_split(ctx, "test"), m.schema, task, S, m.window);
  const auto k = static_cast<std::size_t>(std::min<long long>(ctx.num("top_k"), static_cast<long long>(m.schema.input_width())));
  for (const auto& sel : ctx.cfg.at("instances")) {
    const auto idx = sel.get<long long>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= te.size())
      throw std::runtime_error("instance " + std::to_string(idx) + " outside the " + std::to_string(te.size()) +
                               " test windows");
    const SequenceWindow& w = te[static_cast<std::size_t>(idx)];
    const int target = default_target(m, w.x);
    for (const auto& mname : ctx.cfg.at("methods")) {
      const Method method = method_from_string(mname.get<std::string>());
      AttributionMap map;
      if (method == Method::ig) {
        IgConfig ic;
        ic.steps = static_cast<int>(ctx.num("steps"));
        map = integrated_gradients(m, w.x, target, ic);
      } else {
        SgConfig sc;
        sc.steps = static_cast<int>(ctx.num("steps"));
        sc.sigma_ratio = ctx.real("sigma_ratio");
        sc.seed = Rng::mix(ctx.seed() + static_cast<std::uint64_t>(idx));
        map = smoothgrad(m, w.x, target, sc);
      }
      const std::string stem = "attribution_" + model_tag(task_name, arch_name, S) + "_" + mname.get<std::string>() +
                               "_i" + std::to_string(idx);
      if (ctx.want_json()) {
        nlohmann::ordered_json j;
        j["task"] = task_name;
        j["model"] = arch_name;
        j["S"] = S;
        j["instance"] = {{"index", idx}, {"game_id", w.game_id}, {"t", w.t}, {"label", w.label},
                         {"label_name", class_name(task_name, w.label)}};
        const auto body = report_json(map, k, m.schema, task_name);
        for (const auto& [key, v] : body.items()) j[key] = v;
        write_json(ctx.report_dir() / (stem + ".json"), j, ctx);
      }
      if (ctx.want_text()) {
        std::string text = text_header(ctx);
        text += "task " + task_name + ", model " + arch_name + ", S=" + std::to_string(S) + ", game " +
                std::to_string(w.game_id) + ", t=" + std::to_string(w.t) + ", label " + class_name(task_name, w.label) +
                "\n";
        text += report_text(map, k, m.schema, task_name);
        write_text(ctx.report_dir() / (stem + ".txt"), text);
      }
      *ctx.log << "attribute: wrote " << stem << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// fidelity

inline std::vector<std::size_t> clipped_k_grid(const Context& ctx, std::size_t d_in) {
  std::vector<std::size_t> ks;
  for (const auto& k : ctx.cfg.at("k_grid")) {
    const auto v = std::min<std::size_t>(k.get<std::size_t>(), d_in);
    if (std::find(ks.begin(), ks.end(), v) == ks.end()) ks.push_back(v);
  }
  return ks;
}

/// Upserts rows keyed by the first `key_columns` cells; output is sorted.
inline Csv upsert(const fs::path& path, const std::vector<std::string>& header, std::size_t key_columns,
                  const std::vector<std::vector<std::string>>& rows) {
  std::map<std::vector<std::string>, std::vector<std::string>> table;
  if (fs::exists(path)) {
    const Csv old = Csv::parse(read_text(path));
    if (old.header == header)
      for (const auto& r : old.rows) table[{r.begin(), r.begin() + static_cast<std::ptrdiff_t>(key_columns)}] = r;
  }
  for (const auto& r : rows) table[{r.begin(), r.begin() + static_cast<std::ptrdiff_t>(key_columns)}] = r;
  Csv out{header, {}};
  for (auto& [_, r] : table) out.rows.push_back(r);
  return out;
}

inline int cmd_fidelity(const Context& ctx) {
  const std::string task_name = ctx.str("task");
  const Task task = task_from_string(task_name);
  const int S = horizon_for(ctx, task);
  const auto train_games = load_split(ctx, "train"), test_games = load_split(ctx, "test");
  const auto repeats = static_cast<std::uint64_t>(ctx.num("fidelity_repeats"));
  const double threshold = ctx.real("drop_threshold");
  std::vector<FidelityReport> reports;
  std::vector<std::vector<std::string>> steps_rows;
  std::vector<int> steps_grid = ctx.cfg.at("steps_grid").get<std::vector<int>>();
  bool over_threshold = false;

  for (const auto& aname : ctx.cfg.at("models")) {
    const std::string arch_name = aname.get<std::string>();
    const Model f = load_checkpoint(checkpoint_path(ctx, task_name, arch_name, S));
    const auto tr_all = split_windows(train_games, f.schema, task, S, f.window);
    const auto te_all = split_windows(test_games, f.schema, task, S, f.window);
    LabeledSet tr, te;
    for (std::size_t i : subset(tr_all.size(), ctx.num("fidelity_train_limit"), ctx.seed())) {
      tr.inputs.push_back(tr_all[i].x);
      tr.labels.push_back(tr_all[i].label);
    }
    for (std::size_t i : subset(te_all.size(), ctx.num("fidelity_test_limit"), ctx.seed() + 1)) {
      te.inputs.push_back(te_all[i].x);
      te.labels.push_back(te_all[i].label);
    }
    const std::vector<int> ytr = predict_labels(f, tr.inputs), yte = predict_labels(f, te.inputs);
    const auto ks = clipped_k_grid(ctx, f.schema.input_width());
    auto spec_for = [&](Method method, int steps) {
      AttributionSpec spec;
      spec.method = method;
      spec.ig.steps = steps;
      spec.sg.steps = steps;
      spec.sg.sigma_ratio = ctx.real("sigma_ratio");
      spec.sg.seed = ctx.seed();
      return spec;
    };
    using Attributions = std::vector<std::optional<std::vector<double>>>;
    struct Job {
      std::string method;
      int steps;
      std::size_t k;
      std::uint64_t repeat;
      const std::pair<Attributions, Attributions>* attributions;
    };
    std::deque<std::pair<Attributions, Attributions>> store;
    std::map<std::pair<std::string, int>, const std::pair<Attributions, Attributions>*> by_method;
    auto attributions_for = [&](const std::string& mname, int steps) {
      auto it = by_method.find({mname, steps});
      if (it != by_method.end()) return it->second;
      *ctx.log << "fidelity: " << arch_name << " " << mname << " steps " << steps << " attributing "
               << tr.size() + te.size() << " windows\n";
      const AttributionSpec spec = spec_for(method_from_string(mname), steps);
      store.emplace_back(attribute_all(f, tr.inputs, ytr, spec, ctx.workers()),
                         attribute_all(f, te.inputs, yte, spec, ctx.workers()));
      return by_method[{mname, steps}] = &store.back();
    };
    std::vector<Job> jobs;
    const int steps = static_cast<int>(ctx.num("steps"));
    for (const auto& mn : ctx.cfg.at("methods")) {
      const auto* attr = attributions_for(mn.get<std::string>(), steps);
      for (std::size_t k : ks)
        for (std::uint64_t r = 0; r < repeats; ++r) jobs.push_back({mn.get<std::string>(), steps, k, r, attr});
    }
    const std::size_t grid_jobs = jobs.size();
    const bool has_ig = std::any_of(ctx.cfg.at("methods").begin(), ctx.cfg.at("methods").end(),
                                    [](const json& m) { return m == "ig"; });
    const std::size_t sweep_k =
        std::min<std::size_t>(static_cast<std::size_t>(ctx.num("sweep_k")), f.schema.input_width());
    if (has_ig)
      for (int st : steps_grid) {
        const auto* attr = attributions_for("ig", st);
        for (std::uint64_t r = 0; r < repeats; ++r) jobs.push_back({"ig", st, sweep_k, r, attr});
      }

    // Proxy jobs are independent, so they fan out over the worker pool.
    *ctx.log << "fidelity: " << arch_name << " training " << jobs.size() << " proxies\n";
    std::vector<FidelityReport> done(jobs.size());
    parallel_for(jobs.size(), ctx.workers(), [&](std::size_t j) {
      const Job& job = jobs[j];
      const std::uint64_t seed = Rng::mix(ctx.seed() * 7919 + job.repeat);
      FidelityReport rep = run_fidelity(f, build_masked_set(tr.inputs, ytr, job.attributions->first, job.k),
                                        build_masked_set(te.inputs, yte, job.attributions->second, job.k),
                                        train_config(ctx, seed), seed);
      rep.method = job.method;
      rep.k = job.k;
      rep.steps = job.steps;
      done[j] = std::move(rep);
    });
    for (const FidelityReport& rep : done) {
      if (rep.failed) *ctx.log << "fidelity: " << rep.method << " k=" << rep.k << " failed: " << rep.error << "\n";
      if (rep.drop_rate > threshold) over_threshold = true;
    }
    reports.insert(reports.end(), done.begin(), done.begin() + static_cast<std::ptrdiff_t>(grid_jobs));
    if (has_ig && !steps_grid.empty()) {
      std::vector<std::vector<std::string>> rows(repeats);
      for (std::uint64_t r = 0; r < repeats; ++r)
        rows[r] = {task_name, arch_name, std::to_string(sweep_k), std::to_string(r)};
      for (std::size_t j = grid_jobs; j < jobs.size(); ++j) rows[jobs[j].repeat].push_back(exact(done[j].fidelity));
      for (auto& row : rows) steps_rows.push_back(std::move(row));
    }
  }

  // Per-run outputs.
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const FidelityReport& r : reports) arr.push_back(r.to_json());
  std::vector<std::vector<std::string>> csv_rows;
  for (const FidelityReport& r : reports)
    csv_rows.push_back({r.task, r.model, r.method, std::to_string(r.k), std::to_string(r.seed), exact(r.fidelity),
                        std::to_string(r.steps), std::to_string(r.train_size), std::to_string(r.test_size),
                        std::to_string(r.dropped), exact(r.drop_rate), exact(r.modal_rate), r.failed ? "1" : "0"});
  const fs::path results = ctx.report_dir() / "fidelity_results.csv";
  const Csv table = upsert(results,
                           {"task", "model", "method", "k", "seed", "fidelity", "steps", "train_size", "test_size",
                            "dropped", "drop_rate", "modal_rate", "failed"},
                           5, csv_rows);
  write_text(results, table.render(ctx));
  if (ctx.want_json()) write_json(ctx.report_dir() / ("fidelity_" + task_name + ".json"), {{"reports", arr}}, ctx);

  std::string text = text_header(ctx) + "fidelity on task " + task_name + " (mean over " + std::to_string(repeats) +
                     " proxy seeds)\n";
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, std::pair<double, int>>> cells;
  std::vector<std::size_t> kcols;
  for (const FidelityReport& r : reports) {
    auto& c = cells[{r.model, r.method}][r.k];
    c.first += r.fidelity;
    ++c.second;
    if (std::find(kcols.begin(), kcols.end(), r.k) == kcols.end()) kcols.push_back(r.k);
  }
  text += "model        method";
  for (std::size_t k : kcols) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "  k=%-6zu", k);
    text += buf;
  }
  text += "\n";
  for (const auto& [key, row] : cells) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-12s %-6s", key.first.c_str(), key.second.c_str());
    text += buf;
    for (std::size_t k : kcols) {
      auto it = row.find(k);
      text += "  " + (it == row.end() ? std::string("   -   ") : fixed(it->second.first / it->second.second)) + "  ";
    }
    text += "\n";
  }
  if (!steps_rows.empty()) {
    std::vector<std::string> header{"task", "model", "k", "repeat"};
    for (int st : steps_grid) header.push_back("steps_" + std::to_string(st));
    write_text(ctx.report_dir() / ("fidelity_steps_" + task_name + ".csv"), Csv{header, steps_rows}.render(ctx));
    text += "IG fidelity by steps:\n";
    for (const auto& r : steps_rows) {
      text += "  " + r[1] + " k=" + r[2] + " repeat " + r[3] + ":";
      for (std::size_t i = 0; i < steps_grid.size(); ++i)
        text += "  steps=" + std::to_string(steps_grid[i]) + " " + fixed(std::stod(r[4 + i]));
      text += "\n";
    }
  }
  if (ctx.want_text()) write_text(ctx.report_dir() / ("fidelity_" + task_name + ".txt"), text);
  if (over_threshold) {
    *ctx.log << "fidelity: dropped-instance rate exceeds " << threshold << "\n";
    return kExitDropRate;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report

inline int cmd_report(const Context& ctx) {
  const fs::path dir = ctx.report_dir();
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " not found; run train/fidelity first");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  auto acc = nlohmann::ordered_json::array(), fid = acc, steps = acc;
  std::string text = text_header(ctx);
  text += "accuracy (task, model, S):\n";
  for (const fs::path& p : files) {
    const std::string name = p.filename().string();
    if (name.rfind("accuracy_", 0) != 0 || p.extension() != ".csv") continue;
    const Csv c = Csv::parse(read_text(p));
    for (const auto& r : c.rows) {
      acc.push_back({{"task", r[c.column("task")]}, {"model", r[c.column("model")]},
                     {"S", std::stoi(r[c.column("S")])}, {"accuracy", std::stod(r[c.column("test_accuracy")])}});
      text += "  " + r[c.column("task")] + "  " + r[c.column("model")] + "  S=" + r[c.column("S")] + "  " +
              fixed(std::stod(r[c.column("test_accuracy")])) + "\n";
    }
  }
  const fs::path results = dir / "fidelity_results.csv";
  if (fs::exists(results)) {
    const Csv c = Csv::parse(read_text(results));
    std::map<std::tuple<std::string, std::string, std::string, std::size_t>, std::pair<double, int>> mean;
    for (const auto& r : c.rows) {
      auto& m = mean[{r[c.column("task")], r[c.column("model")], r[c.column("method")],
                      static_cast<std::size_t>(std::stoul(r[c.column("k")]))}];
      m.first += std::stod(r[c.column("fidelity")]);
      ++m.second;
    }
    text += "fidelity (task, model, method, k; mean over seeds):\n";
    for (const auto& [key, m] : mean) {
      const auto& [task, model, method, k] = key;
      const double v = m.first / m.second;
      fid.push_back({{"task", task}, {"model", model}, {"method", method}, {"k", k}, {"fidelity", v},
                     {"seeds", m.second}});
      text += "  " + task + "  " + model + "  " + method + "  k=" + std::to_string(k) + "  " + fixed(v) + "\n";
    }
  }
  for (const fs::path& p : files) {
    const std::string name = p.filename().string();
    if (name.rfind("fidelity_steps_", 0) != 0 || p.extension() != ".csv") continue;
    const Csv c = Csv::parse(read_text(p));
    text += "IG fidelity by steps (" + name + "):\n";
    for (const auto& r : c.rows) {
      nlohmann::ordered_json row;
      for (std::size_t i = 0; i < c.header.size(); ++i)
        row[c.header[i]] = i < 4 ? json(r[i]) : json(std::stod(r[i]));
      steps.push_back(row);
      text += " ";
      for (std::size_t i = 0; i < c.header.size(); ++i)
        text += " " + c.header[i] + "=" + (i < 4 ? r[i] : fixed(std::stod(r[i])));
      text += "\n";
    }
  }
  nlohmann::ordered_json j;
  j["accuracy"] = std::move(acc);
  j["fidelity"] = std::move(fid);
  j["fidelity_steps"] = std::move(steps);
  if (ctx.want_json()) write_json(dir / "summary.json", j, ctx);
  if (ctx.want_text()) write_text(dir / "summary.txt", text);
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

/// Parses argv and runs one subcommand; returns the process exit status.
inline int run(int argc, const char* const* argv, const EnvLookup& env = [](const char* n) { return std::getenv(n); },
               std::ostream& err = std::cerr) {
  CLI::App app{"MOBA telemetry prediction, attribution and fidelity toolkit", "mobaxai"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<long long> workers;
  bool force = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "Base random seed");
  app.add_option("--workers", workers, "Worker threads");
  app.add_flag("--force", force, "Overwrite existing dataset files");
  const std::vector<std::pair<const char*, const char*>> commands{
      {"gen", "Generate train/validation/test match files"},
      {"train", "Train a model for each horizon and write accuracy tables"},
      {"attribute", "Write attribution reports for selected test windows"},
      {"fidelity", "Run the fidelity grid over models, methods and k"},
      {"report", "Aggregate accuracy and fidelity tables"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, std::cout, err);
  }
  try {
    Context ctx;
    ctx.cfg = load_config(config_path, env);
    if (seed) ctx.cfg["seed"] = *seed;
    if (workers) ctx.cfg["workers"] = *workers;
    validate_config(ctx.cfg);
    ctx.digest = config_digest(ctx.cfg);
    ctx.force = force;
    ctx.log = &err;
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen") return cmd_gen(ctx);
    if (cmd == "train") return cmd_train(ctx);
    if (cmd == "attribute") return cmd_attribute(ctx);
    if (cmd == "fidelity") return cmd_fidelity(ctx);
    return cmd_report(ctx);
  } catch (const std::exception& e) {
    err << "mobaxai: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mobaxai::cli
