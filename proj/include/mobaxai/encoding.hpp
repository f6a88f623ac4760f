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

// Frame encoding: a FeatureSchema lays out one-hot categorical groups and
// min-max normalised numeric groups in a flat input vector of width D_in.
// The embedding layer maps each categorical group through its own dense
// layer and copies numerics, giving rows of width D_emb.

#pragma once

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mobaxai/autodiff.hpp"
#include "mobaxai/datagen.hpp"
#include "mobaxai/game.hpp"
#include "mobaxai/params.hpp"

namespace mobaxai {

enum class FeatureKind { categorical, numeric };
enum class Category { hero, global, monster, soldier, tower };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::hero: return "hero";
    case Category::global: return "global";
    case Category::monster: return "monster";
    case Category::soldier: return "soldier";
    case Category::tower: return "tower";
  }
  return "hero";
}

inline Category category_from_string(std::string_view s) {
  if (s == "hero") return Category::hero;
  if (s == "global") return Category::global;
  if (s == "monster") return Category::monster;
  if (s == "soldier") return Category::soldier;
  if (s == "tower") return Category::tower;
  throw std::invalid_argument("unknown feature category '" + std::string(s) + "'");
}

class EncodingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reads one field of one entity from a frame. Categorical fields return
/// the class index.
inline double read_field(const Frame& f, Category cat, int entity, std::string_view field) {
  auto bad = [&]() -> double {
    throw EncodingError("frame has no source " + std::string(to_string(cat)) + "[" + std::to_string(entity) + "]." +
                        std::string(field));
  };
  auto pick = [&](const auto& list) -> const auto& {
    if (entity < 0 || static_cast<std::size_t>(entity) >= list.size()) bad();
    return list[static_cast<std::size_t>(entity)];
  };
  switch (cat) {
    case Category::hero: {
      const HeroState& h = pick(f.heroes);
      if (field == "hero_id") return h.hero_id;
      if (field == "camp") return static_cast<double>(h.camp);
      if (field == "level") return h.level;
      if (field == "kill_count") return h.kill_count;
      if (field == "assist_count") return h.assist_count;
      if (field == "death_count") return h.death_count;
      if (field == "hp") return h.hp;
      if (field == "x") return h.x;
      if (field == "y") return h.y;
      if (field == "gold") return h.gold;
      if (field.starts_with("skill_") && field.size() == 7 && field[6] >= '0' && field[6] < '0' + kSkillCount)
        return h.skill_levels[static_cast<std::size_t>(field[6] - '0')];
      if (field == "tyrant_distance") return tyrant_distance(h);
      return bad();
    }
    case Category::global: {
      const GlobalState& g = f.global;
      if (field == "game_time") return g.game_time;
      if (field == "gold_diff") return g.gold_total[0] - g.gold_total[1];
      if (field == "alive_hero_diff") return g.alive_heroes[0] - g.alive_heroes[1];
      if (field == "alive_tower_diff") return g.alive_towers[0] - g.alive_towers[1];
      if (field == "kill_diff") {
        int d = 0;
        for (const HeroState& h : f.heroes) d += h.camp == Camp::red ? h.kill_count : -h.kill_count;
        return d;
      }
      if (field == "red_gold") return g.gold_total[0];
      if (field == "blue_gold") return g.gold_total[1];
      if (field == "red_alive_heroes") return g.alive_heroes[0];
      if (field == "blue_alive_heroes") return g.alive_heroes[1];
      if (field == "red_alive_towers") return g.alive_towers[0];
      if (field == "blue_alive_towers") return g.alive_towers[1];
      return bad();
    }
    case Category::monster: {
      const MonsterState& m = pick(f.monsters);
      if (field == "type") return static_cast<double>(m.type);
      if (field == "hp") return m.hp;
      if (field == "alive") return m.alive ? 1.0 : 0.0;
      if (field == "x") return m.x;
      if (field == "y") return m.y;
      return bad();
    }
    case Category::soldier: {
      const SoldierState& s = pick(f.soldiers);
      if (field == "camp") return static_cast<double>(s.camp);
      if (field == "type") return s.type;
      if (field == "hp") return s.hp;
      if (field == "x") return s.x;
      if (field == "y") return s.y;
      return bad();
    }
    case Category::tower: {
      const TowerState& t = pick(f.towers);
      if (field == "camp") return static_cast<double>(t.camp);
      if (field == "type") return static_cast<double>(t.type);
      if (field == "hp") return t.hp;
      if (field == "alive") return t.alive ? 1.0 : 0.0;
      if (field == "x") return t.x;
      if (field == "y") return t.y;
      return bad();
    }
  }
  return bad();
}

struct FeatureGroup {
  std::string name;  // "<category>_<entity>.<field>", or "global.<field>"
  FeatureKind kind = FeatureKind::numeric;
  std::size_t cardinality = 0;  // categorical only
  double min = 0.0;             // numeric only
  double max = 0.0;
  Category category = Category::hero;
  int entity = 0;
  std::string field;
  std::size_t offset = 0;  // input span
  std::size_t width = 0;
  std::size_t embed_offset = 0;  // output span of the embedding layer
  std::size_t embed_width = 0;

  bool operator==(const FeatureGroup&) const = default;
};

/// ceil(sqrt(cardinality)), at least 2.
inline std::size_t embedding_width_for(std::size_t cardinality) {
  const auto w = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cardinality))));
  return std::max<std::size_t>(2, w);
}

class FeatureSchema {
 public:
  FeatureSchema() = default;

  void add_categorical(Category cat, int entity, std::string field, std::size_t cardinality) {
    if (cardinality == 0) throw std::invalid_argument("categorical group needs cardinality > 0");
    FeatureGroup g;
    g.kind = FeatureKind::categorical;
    g.cardinality = cardinality;
    push(std::move(g), cat, entity, std::move(field));
  }

  void add_numeric(Category cat, int entity, std::string field) {
    push(FeatureGroup{}, cat, entity, std::move(field));
  }

  const std::vector<FeatureGroup>& groups() const { return groups_; }
  std::vector<FeatureGroup>& mutable_groups() { return groups_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t embedding_width() const { return embedding_width_; }

  std::size_t group_index_of(std::size_t dim) const {
    if (dim >= input_width_) throw std::out_of_range("dimension " + std::to_string(dim) + " outside schema");
    auto it = std::upper_bound(groups_.begin(), groups_.end(), dim,
                               [](std::size_t d, const FeatureGroup& g) { return d < g.offset; });
    return static_cast<std::size_t>(it - groups_.begin()) - 1;
  }

  /// Group name for numerics; "<group>=<class>" for one-hot dimensions.
  std::string dimension_name(std::size_t dim) const {
    const FeatureGroup& g = groups_[group_index_of(dim)];
    if (g.kind == FeatureKind::numeric) return g.name;
    return g.name + "=" + std::to_string(dim - g.offset);
  }

  bool operator==(const FeatureSchema&) const = default;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["input_width"] = input_width_;
    j["embedding_width"] = embedding_width_;
    auto& gs = j["groups"] = nlohmann::ordered_json::array();
    for (const FeatureGroup& g : groups_) {
      nlohmann::ordered_json e;
      e["name"] = g.name;
      e["kind"] = g.kind == FeatureKind::categorical ? "categorical" : "numeric";
      e["category"] = std::string(to_string(g.category));
      e["entity"] = g.entity;
      e["field"] = g.field;
      e["offset"] = g.offset;
      e["width"] = g.width;
      e["embed_offset"] = g.embed_offset;
      e["embed_width"] = g.embed_width;
      if (g.kind == FeatureKind::categorical) {
        e["cardinality"] = g.cardinality;
      } else {
        e["min"] = g.min;
        e["max"] = g.max;
      }
      gs.push_back(std::move(e));
    }
    return j;
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    FeatureSchema s;
    try {
      for (const auto& e : j.at("groups")) {
        const Category cat = category_from_string(e.at("category").get<std::string>());
        const int entity = e.at("entity").get<int>();
        std::string field = e.at("field").get<std::string>();
        const std::string kind = e.at("kind").get<std::string>();
        if (kind == "categorical") {
          s.add_categorical(cat, entity, std::move(field), e.at("cardinality").get<std::size_t>());
        } else if (kind == "numeric") {
          s.add_numeric(cat, entity, std::move(field));
          s.groups_.back().min = e.at("min").get<double>();
          s.groups_.back().max = e.at("max").get<double>();
        } else {
          throw std::invalid_argument("unknown group kind '" + kind + "'");
        }
        const FeatureGroup& g = s.groups_.back();
        if (g.offset != e.at("offset").get<std::size_t>() || g.width != e.at("width").get<std::size_t>() ||
            g.embed_offset != e.at("embed_offset").get<std::size_t>() ||
            g.embed_width != e.at("embed_width").get<std::size_t>() || g.name != e.at("name").get<std::string>())
          throw std::invalid_argument("group '" + g.name + "' has inconsistent spans");
      }
      if (s.input_width_ != j.at("input_width").get<std::size_t>() ||
          s.embedding_width_ != j.at("embedding_width").get<std::size_t>())
        throw std::invalid_argument("schema widths do not match its groups");
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("malformed schema: ") + e.what());
    }
    return s;
  }

 private:
  void push(FeatureGroup g, Category cat, int entity, std::string field) {
    g.category = cat;
    g.entity = entity;
    g.name = (cat == Category::global ? std::string("global") : std::string(to_string(cat)) + "_" + std::to_string(entity)) +
             "." + field;
    g.field = std::move(field);
    g.offset = input_width_;
    g.width = g.kind == FeatureKind::categorical ? g.cardinality : 1;
    g.embed_offset = embedding_width_;
    g.embed_width = g.kind == FeatureKind::categorical ? embedding_width_for(g.cardinality) : 1;
    input_width_ += g.width;
    embedding_width_ += g.embed_width;
    groups_.push_back(std::move(g));
  }

  std::vector<FeatureGroup> groups_;
  std::size_t input_width_ = 0;
  std::size_t embedding_width_ = 0;
};

/// Desk-scale schema: ten heroes, four global numerics, the Tyrant and six
/// towers. Numeric ranges are unfitted (see fit_normalization).
inline FeatureSchema mini_schema(int hero_pool = 20, int towers = 6) {
  FeatureSchema s;
  for (int h = 0; h < kHeroCount; ++h) {
    s.add_categorical(Category::hero, h, "hero_id", static_cast<std::size_t>(hero_pool));
    s.add_categorical(Category::hero, h, "camp", 2);
    for (const char* f : {"level", "hp", "gold", "kill_count", "death_count", "x", "y", "skill_0", "skill_1", "skill_2",
                          "skill_3", "tyrant_distance"})
      s.add_numeric(Category::hero, h, f);
  }
  for (const char* f : {"game_time", "gold_diff", "kill_diff", "alive_tower_diff"}) s.add_numeric(Category::global, 0, f);
  for (const char* f : {"hp", "alive", "x", "y"}) s.add_numeric(Category::monster, 0, f);
  for (int t = 0; t < towers; ++t)
    for (const char* f : {"hp", "alive"}) s.add_numeric(Category::tower, t, f);
  return s;
}

/// Sets every numeric group's [min, max] to the extremes observed over all
/// frames of the training records.
inline FeatureSchema fit_normalization(const std::vector<GameRecord>& training, FeatureSchema skeleton) {
  for (FeatureGroup& g : skeleton.mutable_groups()) {
    if (g.kind != FeatureKind::numeric) continue;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const GameRecord& r : training)
      for (const Frame& f : r.frames) {
        const double v = read_field(f, g.category, g.entity, g.field);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    g.min = lo;
    g.max = hi;
  }
  return skeleton;
}

inline double normalize(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

/// Writes one encoded frame into `out` (length D_in).
inline void encode_frame_into(const Frame& frame, const FeatureSchema& schema, std::span<double> out) {
  if (out.size() != schema.input_width())
    throw EncodingError("encode_frame: output width " + std::to_string(out.size()) + " != schema width " +
                        std::to_string(schema.input_width()));
  std::fill(out.begin(), out.end(), 0.0);
  for (const FeatureGroup& g : schema.groups()) {
    const double v = read_field(frame, g.category, g.entity, g.field);
    if (g.kind == FeatureKind::numeric) {
      out[g.offset] = normalize(v, g.min, g.max);
    } else {
      if (v < 0 || v >= static_cast<double>(g.cardinality))
        throw EncodingError("categorical group '" + g.name + "': value " + std::to_string(static_cast<long long>(v)) +
                            " >= cardinality " + std::to_string(g.cardinality));
      out[g.offset + static_cast<std::size_t>(v)] = 1.0;
    }
  }
}

inline std::vector<double> encode_frame(const Frame& frame, const FeatureSchema& schema) {
  std::vector<double> out(schema.input_width());
  encode_frame_into(frame, schema, out);
  return out;
}

struct SequenceWindow {
  ad::Tensor x;  // [l, D_in]
  int t = 0;     // game-time of the last row
  int label = 0;
  Task task = Task::win;
  int horizon = 0;
  std::uint64_t game_id = 0;
};

/// Row r holds the encoded frame at game-time t - l + 1 + r.
inline ad::Tensor build_window_matrix(const GameRecord& record, const FeatureSchema& schema, int t, int l) {
  if (l < 1) throw std::invalid_argument("window length must be >= 1");
  if (t - l + 1 < 1 || t > record.length())
    throw std::out_of_range("window [" + std::to_string(t - l + 1) + ", " + std::to_string(t) + "] outside match of " +
                            std::to_string(record.length()) + " s");
  const std::size_t D = schema.input_width();
  ad::Tensor x({static_cast<std::size_t>(l), D});
  for (int r = 0; r < l; ++r)
    encode_frame_into(record.at_time(t - l + 1 + r), schema, x.data().subspan(static_cast<std::size_t>(r) * D, D));
  return x;
}

inline SequenceWindow build_window(const GameRecord& record, const FeatureSchema& schema, const EventInstance& inst,
                                   int l) {
  return {build_window_matrix(record, schema, inst.t, l), inst.t, inst.label, inst.task, inst.horizon, record.game_id};
}

/// All windows of one task from a set of records.
inline std::vector<SequenceWindow> build_windows(const std::vector<GameRecord>& records, const FeatureSchema& schema,
                                                 Task task, int horizon, int l) {
  std::vector<SequenceWindow> out;
  for (const GameRecord& r : records)
    for (const EventInstance& e : extract_event_instances(r, task, horizon, l)) out.push_back(build_window(r, schema, e, l));
  return out;
}

/// Per-dimension extremes over every row of a window set.
struct DimensionRange {
  std::vector<double> min;
  std::vector<double> max;

  static DimensionRange of(const std::vector<ad::Tensor>& inputs) {
    DimensionRange r;
    if (inputs.empty()) return r;
    const std::size_t D = inputs.front().cols();
    r.min.assign(D, std::numeric_limits<double>::infinity());
    r.max.assign(D, -std::numeric_limits<double>::infinity());
    for (const ad::Tensor& x : inputs)
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < D; ++j) {
          r.min[j] = std::min(r.min[j], x.at(i, j));
          r.max[j] = std::max(r.max[j], x.at(i, j));
        }
    return r;
  }

  bool operator==(const DimensionRange&) const = default;
};

// ---------------------------------------------------------------------------
// Embedding layer

inline std::string embedding_weight_name(const FeatureGroup& g) { return "embed." + g.name + ".weight"; }
inline std::string embedding_bias_name(const FeatureGroup& g) { return "embed." + g.name + ".bias"; }

/// One dense map (weight [cardinality, width], bias [width]) per categorical group.
inline void init_embedding(const FeatureSchema& schema, Rng& rng, ParameterSet& params) {
  for (const FeatureGroup& g : schema.groups()) {
    if (g.kind != FeatureKind::categorical) continue;
    params[embedding_weight_name(g)] = glorot(g.cardinality, g.embed_width, rng);
    params[embedding_bias_name(g)] = ad::Tensor({g.embed_width}, 0.0);
  }
}

/// x: [rows, D_in] -> [rows, D_emb], applied independently to every row.
/// Runs of adjacent numeric groups are copied with a single slice.
inline ad::Var embed(ad::Var x, const FeatureSchema& schema, const BoundParams& params) {
  if (x.value().rank() != 2 || x.value().cols() != schema.input_width())
    throw ad::ShapeError("embed: input " + ad::shape_str(x.shape()) + " does not match schema width " +
                         std::to_string(schema.input_width()));
  std::vector<ad::Var> parts;
  const auto& groups = schema.groups();
  for (std::size_t i = 0; i < groups.size();) {
    const FeatureGroup& g = groups[i];
    if (g.kind == FeatureKind::categorical) {
      ad::Var span = ad::slice(x, 1, g.offset, g.offset + g.width);
      parts.push_back(ad::add(ad::matmul(span, params[embedding_weight_name(g)]), params[embedding_bias_name(g)]));
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < groups.size() && groups[j].kind == FeatureKind::numeric) ++j;
    parts.push_back(ad::slice(x, 1, g.offset, groups[j - 1].offset + 1));
    i = j;
  }
  return parts.size() == 1 ? parts.front() : ad::concat(parts, 1);
}

}  // namespace mobaxai
