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

// JSON Lines dataset files: one GameRecord per line.
//
// Each line groups its data the way the telemetry is organised:
//   schema_version, game_id, seed, winner, length,
//   death_info: [{death_frame, victim, killer, killer_camp}],
//   hero:    {static: [{hero_id, camp}],        <per-frame columns>},
//   global:  {<per-frame columns>},
//   monster: {static: [{type, x, y}],           <per-frame columns>},
//   soldier: {static: [{camp, type}],           <per-frame columns>},
//   tower:   {static: [{camp, type, x, y}],     <per-frame columns>}
// A per-frame column holds one array per frame with one value per entity.

#pragma once

#include "json.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobaxai/game.hpp"
#include "mobaxai/rng.hpp"

namespace mobaxai {

inline constexpr int kDatasetSchemaVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

inline ojson entity_to_json(const EntityRef& e) {
  ojson j{{"kind", std::string(to_string(e.kind))}};
  if (e.kind != EntityKind::environment) j["id"] = e.index;
  return j;
}

template <class Frames, class Get>
ojson column(const Frames& frames, Get&& get) {
  ojson col = ojson::array();
  for (const auto& f : frames) col.push_back(get(f));
  return col;
}

template <class Range, class Get>
ojson per_entity(const Range& r, Get&& get) {
  ojson row = ojson::array();
  for (const auto& e : r) row.push_back(get(e));
  return row;
}

}  // namespace detail

/// Key order is preserved on output so schema_version heads every line.
/// A non-empty `config_digest` is stored next to it; readers ignore it.
inline nlohmann::ordered_json record_to_json(const GameRecord& rec, const std::string& config_digest = {}) {
  using detail::column;
  using detail::per_entity;
  using json = nlohmann::ordered_json;
  json j;
  j["schema_version"] = kDatasetSchemaVersion;
  if (!config_digest.empty()) j["config_digest"] = config_digest;
  j["game_id"] = rec.game_id;
  j["seed"] = rec.seed;
  j["winner"] = std::string(to_string(rec.winner));
  j["length"] = rec.length();

  json deaths = json::array();
  for (const DeathEvent& d : rec.deaths)
    deaths.push_back({{"death_frame", d.death_frame},
                      {"victim", detail::entity_to_json(d.victim)},
                      {"killer", detail::entity_to_json(d.killer)},
                      {"killer_camp", std::string(to_string(d.killer_camp))}});
  j["death_info"] = std::move(deaths);

  const auto& F = rec.frames;
  const Frame empty{};
  const Frame& first = F.empty() ? empty : F.front();

  json hero;
  hero["static"] = per_entity(first.heroes, [](const HeroState& h) {
    return json{{"hero_id", h.hero_id}, {"camp", std::string(to_string(h.camp))}};
  });
  auto hero_col = [&](auto get) {
    return column(F, [&](const Frame& f) { return per_entity(f.heroes, get); });
  };
  hero["level"] = hero_col([](const HeroState& h) { return h.level; });
  hero["kill_count"] = hero_col([](const HeroState& h) { return h.kill_count; });
  hero["assist_count"] = hero_col([](const HeroState& h) { return h.assist_count; });
  hero["death_count"] = hero_col([](const HeroState& h) { return h.death_count; });
  hero["hp"] = hero_col([](const HeroState& h) { return h.hp; });
  hero["x"] = hero_col([](const HeroState& h) { return h.x; });
  hero["y"] = hero_col([](const HeroState& h) { return h.y; });
  hero["skill_levels"] = hero_col([](const HeroState& h) { return h.skill_levels; });
  hero["gold"] = hero_col([](const HeroState& h) { return h.gold; });
  j["hero"] = std::move(hero);

  json global;
  global["game_time"] = column(F, [](const Frame& f) { return f.global.game_time; });
  global["alive_heroes"] = column(F, [](const Frame& f) { return f.global.alive_heroes; });
  global["gold_total"] = column(F, [](const Frame& f) { return f.global.gold_total; });
  global["alive_towers"] = column(F, [](const Frame& f) { return f.global.alive_towers; });
  j["global"] = std::move(global);

  json monster;
  monster["static"] = per_entity(first.monsters, [](const MonsterState& m) {
    return json{{"type", static_cast<int>(m.type)}, {"x", m.x}, {"y", m.y}};
  });
  monster["hp"] = column(F, [](const Frame& f) { return per_entity(f.monsters, [](const MonsterState& m) { return m.hp; }); });
  monster["alive"] =
      column(F, [](const Frame& f) { return per_entity(f.monsters, [](const MonsterState& m) { return m.alive ? 1 : 0; }); });
  j["monster"] = std::move(monster);

  json soldier;
  soldier["static"] = per_entity(first.soldiers, [](const SoldierState& s) {
    return json{{"camp", std::string(to_string(s.camp))}, {"type", s.type}};
  });
  soldier["hp"] = column(F, [](const Frame& f) { return per_entity(f.soldiers, [](const SoldierState& s) { return s.hp; }); });
  soldier["x"] = column(F, [](const Frame& f) { return per_entity(f.soldiers, [](const SoldierState& s) { return s.x; }); });
  soldier["y"] = column(F, [](const Frame& f) { return per_entity(f.soldiers, [](const SoldierState& s) { return s.y; }); });
  j["soldier"] = std::move(soldier);

  json tower;
  tower["static"] = per_entity(first.towers, [](const TowerState& t) {
    return json{{"camp", std::string(to_string(t.camp))}, {"type", static_cast<int>(t.type)}, {"x", t.x}, {"y", t.y}};
  });
  tower["hp"] = column(F, [](const Frame& f) { return per_entity(f.towers, [](const TowerState& t) { return t.hp; }); });
  tower["alive"] =
      column(F, [](const Frame& f) { return per_entity(f.towers, [](const TowerState& t) { return t.alive ? 1 : 0; }); });
  j["tower"] = std::move(tower);
  return j;
}

namespace detail {

// Walks a parsed line and reports the dotted path of whatever is missing or
// mistyped.
class Reader {
 public:
  explicit Reader(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw DatasetError("line " + std::to_string(line_) + ": field '" + field + "': " + what);
  }

  const json& at(const json& j, const std::string& key, const std::string& path) const {
    if (!j.is_object()) fail(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(join(path, key), "missing");
    return *it;
  }

  template <class T>
  T get(const json& j, const std::string& path) const {
    try {
      return j.get<T>();
    } catch (const json::exception& e) {
      fail(path, std::string("invalid value (") + e.what() + ")");
    }
  }

  template <class T>
  T field(const json& j, const std::string& key, const std::string& path) const {
    return get<T>(at(j, key, path), join(path, key));
  }

  /// A per-frame column: frames x entities values.
  const json& column(const json& group, const std::string& key, const std::string& path, std::size_t frames,
                     std::size_t entities) const {
    const json& c = at(group, key, path);
    const std::string p = join(path, key);
    if (!c.is_array() || c.size() != frames)
      fail(p, "expected " + std::to_string(frames) + " per-frame rows");
    for (const json& row : c)
      if (!row.is_array() || row.size() != entities)
        fail(p, "expected " + std::to_string(entities) + " entries per frame");
    return c;
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  std::size_t line_;
};

inline EntityRef entity_from_json(const Reader& r, const json& j, const std::string& path) {
  EntityRef e;
  try {
    e.kind = entity_kind_from_string(r.field<std::string>(j, "kind", path));
  } catch (const std::invalid_argument& ex) {
    r.fail(path + ".kind", ex.what());
  }
  e.index = e.kind == EntityKind::environment ? -1 : r.field<int>(j, "id", path);
  return e;
}

inline Camp camp_field(const Reader& r, const json& j, const std::string& key, const std::string& path) {
  try {
    return camp_from_string(r.field<std::string>(j, key, path));
  } catch (const std::invalid_argument& ex) {
    r.fail(Reader::join(path, key), ex.what());
  }
}

}  // namespace detail

inline GameRecord record_from_json(const nlohmann::json& j, std::size_t line = 1) {
  using detail::json;
  const detail::Reader r(line);
  const int version = r.field<int>(j, "schema_version", "");
  if (version != kDatasetSchemaVersion)
    r.fail("schema_version", "unsupported version " + std::to_string(version));
  GameRecord rec;
  rec.game_id = r.field<std::uint64_t>(j, "game_id", "");
  rec.seed = r.field<std::uint64_t>(j, "seed", "");
  rec.winner = detail::camp_field(r, j, "winner", "");
  const int length = r.field<int>(j, "length", "");
  if (length < 0) r.fail("length", "negative");
  const auto n = static_cast<std::size_t>(length);

  const json& deaths = r.at(j, "death_info", "");
  if (!deaths.is_array()) r.fail("death_info", "expected an array");
  for (std::size_t i = 0; i < deaths.size(); ++i) {
    const std::string p = "death_info[" + std::to_string(i) + "]";
    DeathEvent d;
    d.death_frame = r.field<int>(deaths[i], "death_frame", p);
    d.victim = detail::entity_from_json(r, r.at(deaths[i], "victim", p), p + ".victim");
    d.killer = detail::entity_from_json(r, r.at(deaths[i], "killer", p), p + ".killer");
    d.killer_camp = detail::camp_field(r, deaths[i], "killer_camp", p);
    rec.deaths.push_back(d);
  }

  rec.frames.resize(n);
  for (std::size_t t = 0; t < n; ++t) rec.frames[t].game_time = static_cast<int>(t + 1);

  // hero
  const json& hero = r.at(j, "hero", "");
  const json& hs = r.at(hero, "static", "hero");
  if (!hs.is_array() || hs.size() != static_cast<std::size_t>(kHeroCount))
    r.fail("hero.static", "expected " + std::to_string(kHeroCount) + " heroes");
  const std::size_t H = kHeroCount;
  const json& level = r.column(hero, "level", "hero", n, H);
  const json& kills = r.column(hero, "kill_count", "hero", n, H);
  const json& assists = r.column(hero, "assist_count", "hero", n, H);
  const json& hdeaths = r.column(hero, "death_count", "hero", n, H);
  const json& hp = r.column(hero, "hp", "hero", n, H);
  const json& hx = r.column(hero, "x", "hero", n, H);
  const json& hy = r.column(hero, "y", "hero", n, H);
  const json& skills = r.column(hero, "skill_levels", "hero", n, H);
  const json& gold = r.column(hero, "gold", "hero", n, H);
  for (std::size_t e = 0; e < H; ++e) {
    const std::string p = "hero.static[" + std::to_string(e) + "]";
    const int id = r.field<int>(hs[e], "hero_id", p);
    const Camp camp = detail::camp_field(r, hs[e], "camp", p);
    for (std::size_t t = 0; t < n; ++t) {
      HeroState& h = rec.frames[t].heroes[e];
      h.hero_id = id;
      h.camp = camp;
      h.level = r.get<int>(level[t][e], "hero.level");
      h.kill_count = r.get<int>(kills[t][e], "hero.kill_count");
      h.assist_count = r.get<int>(assists[t][e], "hero.assist_count");
      h.death_count = r.get<int>(hdeaths[t][e], "hero.death_count");
      h.hp = r.get<double>(hp[t][e], "hero.hp");
      h.x = r.get<double>(hx[t][e], "hero.x");
      h.y = r.get<double>(hy[t][e], "hero.y");
      h.skill_levels = r.get<std::array<int, kSkillCount>>(skills[t][e], "hero.skill_levels");
      h.gold = r.get<double>(gold[t][e], "hero.gold");
    }
  }

  // global
  const json& global = r.at(j, "global", "");
  auto pairs = [&](const std::string& key) -> const json& {
    const json& c = r.at(global, key, "global");
    if (!c.is_array() || c.size() != n) r.fail("global." + key, "expected " + std::to_string(n) + " per-frame rows");
    return c;
  };
  const json& gt = pairs("game_time");
  const json& ah = pairs("alive_heroes");
  const json& gtot = pairs("gold_total");
  const json& at = pairs("alive_towers");
  for (std::size_t t = 0; t < n; ++t) {
    GlobalState& g = rec.frames[t].global;
    g.game_time = r.get<int>(gt[t], "global.game_time");
    g.alive_heroes = r.get<std::array<int, 2>>(ah[t], "global.alive_heroes");
    g.gold_total = r.get<std::array<double, 2>>(gtot[t], "global.gold_total");
    g.alive_towers = r.get<std::array<int, 2>>(at[t], "global.alive_towers");
  }

  // monster
  const json& monster = r.at(j, "monster", "");
  const json& ms = r.at(monster, "static", "monster");
  if (!ms.is_array()) r.fail("monster.static", "expected an array");
  const std::size_t M = ms.size();
  const json& mhp = r.column(monster, "hp", "monster", n, M);
  const json& malive = r.column(monster, "alive", "monster", n, M);
  for (std::size_t t = 0; t < n; ++t) rec.frames[t].monsters.resize(M);
  for (std::size_t e = 0; e < M; ++e) {
    const std::string p = "monster.static[" + std::to_string(e) + "]";
    const int type = r.field<int>(ms[e], "type", p);
    if (type < 0 || type >= kMonsterTypeCount) r.fail(p + ".type", "out of range");
    const double x = r.field<double>(ms[e], "x", p), y = r.field<double>(ms[e], "y", p);
    for (std::size_t t = 0; t < n; ++t) {
      MonsterState& m = rec.frames[t].monsters[e];
      m.type = static_cast<MonsterType>(type);
      m.x = x;
      m.y = y;
      m.hp = r.get<double>(mhp[t][e], "monster.hp");
      m.alive = r.get<int>(malive[t][e], "monster.alive") != 0;
    }
  }

  // soldier
  const json& soldier = r.at(j, "soldier", "");
  const json& ss = r.at(soldier, "static", "soldier");
  if (!ss.is_array()) r.fail("soldier.static", "expected an array");
  const std::size_t W = ss.size();
  const json& shp = r.column(soldier, "hp", "soldier", n, W);
  const json& sx = r.column(soldier, "x", "soldier", n, W);
  const json& sy = r.column(soldier, "y", "soldier", n, W);
  for (std::size_t t = 0; t < n; ++t) rec.frames[t].soldiers.resize(W);
  for (std::size_t e = 0; e < W; ++e) {
    const std::string p = "soldier.static[" + std::to_string(e) + "]";
    const Camp camp = detail::camp_field(r, ss[e], "camp", p);
    const int type = r.field<int>(ss[e], "type", p);
    for (std::size_t t = 0; t < n; ++t) {
      SoldierState& s = rec.frames[t].soldiers[e];
      s.camp = camp;
      s.type = type;
      s.hp = r.get<double>(shp[t][e], "soldier.hp");
      s.x = r.get<double>(sx[t][e], "soldier.x");
      s.y = r.get<double>(sy[t][e], "soldier.y");
    }
  }

  // tower
  const json& tower = r.at(j, "tower", "");
  const json& ts = r.at(tower, "static", "tower");
  if (!ts.is_array()) r.fail("tower.static", "expected an array");
  const std::size_t T = ts.size();
  const json& thp = r.column(tower, "hp", "tower", n, T);
  const json& talive = r.column(tower, "alive", "tower", n, T);
  for (std::size_t t = 0; t < n; ++t) rec.frames[t].towers.resize(T);
  for (std::size_t e = 0; e < T; ++e) {
    const std::string p = "tower.static[" + std::to_string(e) + "]";
    const Camp camp = detail::camp_field(r, ts[e], "camp", p);
    const int type = r.field<int>(ts[e], "type", p);
    if (type < 0 || type > 2) r.fail(p + ".type", "out of range");
    const double x = r.field<double>(ts[e], "x", p), y = r.field<double>(ts[e], "y", p);
    for (std::size_t t = 0; t < n; ++t) {
      TowerState& s = rec.frames[t].towers[e];
      s.camp = camp;
      s.type = static_cast<TowerType>(type);
      s.x = x;
      s.y = y;
      s.hp = r.get<double>(thp[t][e], "tower.hp");
      s.alive = r.get<int>(talive[t][e], "tower.alive") != 0;
    }
  }
  return rec;
}

inline std::string record_to_line(const GameRecord& rec, const std::string& config_digest = {}) {
  return record_to_json(rec, config_digest).dump();
}

inline void save_dataset(const std::vector<GameRecord>& records, const std::string& path,
                         const std::string& config_digest = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open '" + path + "' for writing");
  for (const GameRecord& r : records) out << record_to_line(r, config_digest) << '\n';
  if (!out) throw DatasetError("write to '" + path + "' failed");
}

/// Calls `sink` for each record without holding the whole file in memory.
template <class Sink>
void for_each_record(const std::string& path, Sink&& sink) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + path + "' for reading");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError("line " + std::to_string(lineno) + ": field '<record>': malformed JSON (" + e.what() + ")");
    }
    sink(record_from_json(j, lineno));
  }
}

inline std::vector<GameRecord> load_dataset(const std::string& path) {
  std::vector<GameRecord> out;
  for_each_record(path, [&](GameRecord&& r) { out.push_back(std::move(r)); });
  return out;
}

/// Train/validation/test indices, 80/10/10 within each winning camp so the
/// outcome mix matches across splits. Each split is sorted.
inline std::array<std::vector<std::size_t>, 3> split_games(const std::vector<GameRecord>& records,
                                                           std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 3> by_camp;
  for (std::size_t i = 0; i < records.size(); ++i)
    by_camp[std::min<std::size_t>(static_cast<std::size_t>(records[i].winner), 2)].push_back(i);
  std::array<std::vector<std::size_t>, 3> out;
  Rng rng(Rng::mix(seed ^ 0x73706c6974ULL));
  for (auto& group : by_camp) {
    rng.shuffle(group);
    const std::size_t n = group.size(), n_train = (n * 8 + 5) / 10, n_val = (n + 5) / 10;
    for (std::size_t r = 0; r < n; ++r) out[r < n_train ? 0 : (r < n_train + n_val ? 1 : 2)].push_back(group[r]);
  }
  for (auto& s : out) std::sort(s.begin(), s.end());
  return out;
}

}  // namespace mobaxai
