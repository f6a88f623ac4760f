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

// Per-second match telemetry: five feature categories (hero, global,
// monster, soldier, tower) plus the death log that task labels come from.

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mobaxai {

enum class Camp : std::uint8_t { red = 0, blue = 1, none = 2 };

inline constexpr int kHeroesPerCamp = 5;
inline constexpr int kHeroCount = 2 * kHeroesPerCamp;
inline constexpr int kSkillCount = 4;

inline std::string_view to_string(Camp c) {
  switch (c) {
    case Camp::red: return "red";
    case Camp::blue: return "blue";
    case Camp::none: return "none";
  }
  return "none";
}

inline Camp camp_from_string(std::string_view s) {
  if (s == "red") return Camp::red;
  if (s == "blue") return Camp::blue;
  if (s == "none") return Camp::none;
  throw std::invalid_argument("unknown camp '" + std::string(s) + "'");
}

inline Camp enemy_of(Camp c) { return c == Camp::red ? Camp::blue : Camp::red; }

/// Hero slots 0-4 are red, 5-9 blue.
inline Camp camp_of_slot(int slot) { return slot < kHeroesPerCamp ? Camp::red : Camp::blue; }

enum class MonsterType : std::uint8_t { tyrant = 0, overlord = 1, buff = 2 };
inline constexpr int kMonsterTypeCount = 3;

enum class TowerType : std::uint8_t { outer = 0, inner = 1, base = 2 };

struct HeroState {
  int hero_id = 0;
  Camp camp = Camp::red;
  int level = 1;
  int kill_count = 0;
  int assist_count = 0;
  int death_count = 0;
  double hp = 1.0;  // fraction of max hp
  double x = 0.0;
  double y = 0.0;
  std::array<int, kSkillCount> skill_levels{};
  double gold = 0.0;

  bool operator==(const HeroState&) const = default;
};

struct GlobalState {
  int game_time = 0;
  std::array<int, 2> alive_heroes{};
  std::array<double, 2> gold_total{};
  std::array<int, 2> alive_towers{};

  bool operator==(const GlobalState&) const = default;
};

struct MonsterState {
  MonsterType type = MonsterType::tyrant;
  double hp = 1.0;
  bool alive = false;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const MonsterState&) const = default;
};

struct SoldierState {
  Camp camp = Camp::red;
  int type = 0;
  double hp = 1.0;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const SoldierState&) const = default;
};

struct TowerState {
  Camp camp = Camp::red;
  TowerType type = TowerType::outer;
  double hp = 1.0;
  bool alive = true;
  double x = 0.0;
  double y = 0.0;

  bool operator==(const TowerState&) const = default;
};

struct Frame {
  int game_time = 0;
  std::array<HeroState, kHeroCount> heroes{};
  GlobalState global;
  std::vector<MonsterState> monsters;
  std::vector<SoldierState> soldiers;
  std::vector<TowerState> towers;

  bool operator==(const Frame&) const = default;
};

enum class EntityKind : std::uint8_t { hero = 0, monster = 1, tower = 2, environment = 3 };

inline std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::hero: return "hero";
    case EntityKind::monster: return "monster";
    case EntityKind::tower: return "tower";
    case EntityKind::environment: return "environment";
  }
  return "environment";
}

inline EntityKind entity_kind_from_string(std::string_view s) {
  if (s == "hero") return EntityKind::hero;
  if (s == "monster") return EntityKind::monster;
  if (s == "tower") return EntityKind::tower;
  if (s == "environment") return EntityKind::environment;
  throw std::invalid_argument("unknown entity kind '" + std::string(s) + "'");
}

struct EntityRef {
  EntityKind kind = EntityKind::environment;
  int index = -1;  // hero slot, monster index or tower index

  bool operator==(const EntityRef&) const = default;
};

struct DeathEvent {
  int death_frame = 0;
  EntityRef victim;
  EntityRef killer;
  Camp killer_camp = Camp::none;

  bool operator==(const DeathEvent&) const = default;
};

struct GameRecord {
  std::uint64_t game_id = 0;
  std::uint64_t seed = 0;
  std::vector<Frame> frames;  // frames[i].game_time == i + 1
  std::vector<DeathEvent> deaths;
  Camp winner = Camp::red;

  int length() const { return static_cast<int>(frames.size()); }
  const Frame& at_time(int game_time) const { return frames.at(static_cast<std::size_t>(game_time - 1)); }

  bool operator==(const GameRecord&) const = default;
};

/// Index of the first Tyrant in the monster list, or -1.
inline int tyrant_index(const Frame& f) {
  for (std::size_t i = 0; i < f.monsters.size(); ++i)
    if (f.monsters[i].type == MonsterType::tyrant) return static_cast<int>(i);
  return -1;
}

}  // namespace mobaxai
