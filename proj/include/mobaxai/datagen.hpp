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

// Synthetic match generator with planted causal structure, and extraction
// of the four prediction tasks (win, tyrant, kill, bekill) from the death
// log.
//
// Planted rules, each applied with probability `signal_strength`:
//   * the gold-advantaged camp wins the match;
//   * the Tyrant is taken by the camp whose alive heroes are closer to it on
//     average at the kill frame (the gold leader is the one that contests);
//   * a hero death picks the lowest-hp alive hero as victim, and the enemy
//     hero with the highest level + gold as killer.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mobaxai/game.hpp"
#include "mobaxai/rng.hpp"

namespace mobaxai {

struct GeneratorConfig {
  int min_length = 480;
  int max_length = 900;
  int heroes_per_camp = kHeroesPerCamp;
  int hero_pool = 20;
  int monsters = 3;  // monster 0 is the Tyrant
  int soldiers_per_camp = 3;
  int towers_per_camp = 3;
  int tyrant_first_spawn = 90;
  int tyrant_respawn_interval = 150;
  double signal_strength = 0.9;
  double hero_death_rate = 0.04;  // expected hero deaths per second

  void validate() const {
    if (heroes_per_camp != kHeroesPerCamp)
      throw std::invalid_argument("generator config: heroes_per_camp must be " + std::to_string(kHeroesPerCamp) +
                                  ", got " + std::to_string(heroes_per_camp));
    if (min_length <= 0 || max_length <= 0)
      throw std::invalid_argument("generator config: match length must be positive");
    if (min_length < 300 || max_length > 1200 || min_length > max_length)
      throw std::invalid_argument("generator config: match length range [" + std::to_string(min_length) + ", " +
                                  std::to_string(max_length) + "] must lie within [300, 1200]");
    if (hero_pool < kHeroCount) throw std::invalid_argument("generator config: hero_pool must be >= 10");
    if (monsters < 1) throw std::invalid_argument("generator config: at least the Tyrant monster is required");
    if (towers_per_camp < 1) throw std::invalid_argument("generator config: each camp needs a base tower");
    if (soldiers_per_camp < 0) throw std::invalid_argument("generator config: soldiers_per_camp must be >= 0");
    if (tyrant_respawn_interval <= 0) throw std::invalid_argument("generator config: Tyrant respawn interval must be > 0");
    if (tyrant_first_spawn < 1) throw std::invalid_argument("generator config: Tyrant first spawn must be >= 1");
    if (!(signal_strength >= 0.0 && signal_strength <= 1.0))
      throw std::invalid_argument("generator config: signal_strength must lie in [0, 1]");
    if (!(hero_death_rate >= 0.0 && hero_death_rate <= 1.0))
      throw std::invalid_argument("generator config: hero_death_rate must lie in [0, 1]");
  }
};

inline constexpr double kTyrantX = 0.30;
inline constexpr double kTyrantY = 0.70;

inline double tyrant_distance(const HeroState& h) { return std::hypot(h.x - kTyrantX, h.y - kTyrantY); }

/// Mean hero-to-Tyrant distance over the camp's alive heroes (infinity if none).
inline double mean_tyrant_distance(const Frame& f, Camp camp) {
  double s = 0;
  int n = 0;
  for (const HeroState& h : f.heroes)
    if (h.camp == camp && h.hp > 0) {
      s += tyrant_distance(h);
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::infinity();
}

namespace detail {

struct Point {
  double x, y;
};

// Reflection across the anti-diagonal x + y = 1 swaps the two bases and fixes
// the Tyrant pit.
inline Point mirror(Point p) { return {1.0 - p.y, 1.0 - p.x}; }

inline Point base_of(Camp c) { return c == Camp::red ? Point{0.08, 0.08} : mirror({0.08, 0.08}); }

inline Point lane_anchor(int slot) {
  static constexpr std::array<Point, kHeroesPerCamp> red{
      {{0.15, 0.55}, {0.35, 0.35}, {0.55, 0.15}, {0.28, 0.22}, {0.42, 0.48}}};
  const Point p = red[static_cast<std::size_t>(slot % kHeroesPerCamp)];
  return camp_of_slot(slot) == Camp::red ? p : mirror(p);
}

// Rounds to a decimal grid; dividing by the exact integer scale keeps the
// result the nearest double to a short decimal, so JSON stays compact.
inline double quantize(double v, double step) {
  const double scale = std::round(1.0 / step);
  return std::round(v * scale) / scale;
}
inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

class GameSimulator {
 public:
  GameSimulator(std::uint64_t seed, const GeneratorConfig& cfg)
      : cfg_(cfg), rng_(seed), seed_(seed), next_tyrant_spawn_(cfg.tyrant_first_spawn) {}

  GameRecord run() {
    GameRecord rec;
    rec.game_id = seed_;
    rec.seed = seed_;
    length_ = rng_.uniform_int(cfg_.min_length, cfg_.max_length);
    advantaged_ = rng_.bernoulli(0.5) ? Camp::red : Camp::blue;
    winner_ = rng_.bernoulli(cfg_.signal_strength) ? advantaged_ : enemy_of(advantaged_);
    rec.winner = winner_;
    init_entities();
    schedule_towers();
    rec.frames.reserve(static_cast<std::size_t>(length_));
    for (int t = 1; t <= length_; ++t) {
      step(t, rec.deaths);
      rec.frames.push_back(snapshot(t));
    }
    return rec;
  }

 private:
  struct HeroSim {
    HeroState s;
    int respawn_at = 0;  // 0 when alive
    double target_radius = 0;
    double target_angle = 0;
  };

  struct TowerSim {
    TowerState s;
    int destroy_at = 0;  // 0 when it survives the match
  };

  void init_entities() {
    std::vector<int> pool(static_cast<std::size_t>(cfg_.hero_pool));
    for (int i = 0; i < cfg_.hero_pool; ++i) pool[static_cast<std::size_t>(i)] = i;
    rng_.shuffle(pool);
    for (int slot = 0; slot < kHeroCount; ++slot) {
      HeroSim& h = heroes_[static_cast<std::size_t>(slot)];
      h.s.hero_id = pool[static_cast<std::size_t>(slot)];
      h.s.camp = camp_of_slot(slot);
      const Point b = base_of(h.s.camp);
      h.s.x = b.x;
      h.s.y = b.y;
      h.s.hp = 1.0;
      update_level(h.s);
    }
    monsters_.resize(static_cast<std::size_t>(cfg_.monsters));
    for (int i = 0; i < cfg_.monsters; ++i) {
      MonsterState& m = monsters_[static_cast<std::size_t>(i)];
      if (i == 0) {
        m.type = MonsterType::tyrant;
        m.x = kTyrantX;
        m.y = kTyrantY;
      } else {
        m.type = (i == 1) ? MonsterType::overlord : MonsterType::buff;
        const Point p = (i % 2 == 1) ? Point{0.70, 0.30} : Point{0.20 + 0.05 * i, 0.40};
        m.x = quantize(p.x, 1e-4);
        m.y = quantize(p.y, 1e-4);
      }
      m.alive = false;
      m.hp = 0.0;
    }
    soldiers_.clear();
    for (Camp c : {Camp::red, Camp::blue})
      for (int i = 0; i < cfg_.soldiers_per_camp; ++i) {
        SoldierState s;
        s.camp = c;
        s.type = i % 2;
        soldiers_.push_back(s);
      }
    towers_.clear();
    for (Camp c : {Camp::red, Camp::blue})
      for (int i = 0; i < cfg_.towers_per_camp; ++i) {
        TowerSim ts;
        ts.s.camp = c;
        const bool is_base = i == cfg_.towers_per_camp - 1;
        ts.s.type = is_base ? TowerType::base : (i == 0 ? TowerType::outer : TowerType::inner);
        // Outer towers sit furthest from the base along the diagonal.
        const double frac = cfg_.towers_per_camp == 1 ? 0.0 : 1.0 - static_cast<double>(i) / (cfg_.towers_per_camp - 1);
        Point p{0.10 + 0.25 * frac, 0.10 + 0.25 * frac};
        if (c == Camp::blue) p = mirror(p);
        ts.s.x = quantize(p.x, 1e-4);
        ts.s.y = quantize(p.y, 1e-4);
        towers_.push_back(ts);
      }
  }

  void schedule_towers() {
    const Camp loser = enemy_of(winner_);
    const int n = cfg_.towers_per_camp;
    for (TowerSim& ts : towers_) {
      const int i = static_cast<int>(&ts - towers_.data()) % n;
      if (ts.s.camp == loser) {
        ts.destroy_at = (i == n - 1) ? length_
                                      : static_cast<int>(std::lround(length_ * (0.40 + 0.45 * i / std::max(1, n - 1))));
      } else if (i == 0 && n > 1 && rng_.bernoulli(0.5)) {
        ts.destroy_at = static_cast<int>(std::lround(length_ * 0.60));
      }
    }
  }

  static void update_level(HeroState& h) {
    h.level = std::min(15, 1 + static_cast<int>(h.gold / 350.0));
    h.skill_levels = {std::min(6, (h.level + 1) / 2), std::min(6, h.level / 2), std::min(3, h.level / 4), 1};
  }

  bool alive(int slot) const { return heroes_[static_cast<std::size_t>(slot)].s.hp > 0; }

  std::vector<int> alive_slots(Camp c) const {
    std::vector<int> out;
    for (int s = 0; s < kHeroCount; ++s)
      if (camp_of_slot(s) == c && alive(s)) out.push_back(s);
    return out;
  }

  std::vector<int> alive_slots_all() const {
    std::vector<int> out;
    for (int s = 0; s < kHeroCount; ++s)
      if (alive(s)) out.push_back(s);
    return out;
  }

  double camp_gold(Camp c) const {
    double g = 0;
    for (const HeroSim& h : heroes_)
      if (h.s.camp == c) g += h.s.gold;
    return g;
  }

  EntityRef pick_hero_killer(Camp camp) {
    auto cands = alive_slots(camp);
    if (cands.empty()) return {EntityKind::environment, -1};
    return {EntityKind::hero, cands[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(cands.size()) - 1))]};
  }

  void step(int t, std::vector<DeathEvent>& deaths) {
    const double s = cfg_.signal_strength;

    // Income and hp drift for alive heroes; respawns.
    for (int slot = 0; slot < kHeroCount; ++slot) {
      HeroSim& h = heroes_[static_cast<std::size_t>(slot)];
      if (h.s.hp <= 0) {
        if (t >= h.respawn_at) {
          h.s.hp = 1.0;
          h.respawn_at = 0;
        }
        continue;
      }
      const bool adv = h.s.camp == advantaged_;
      double income = 2.0 + 0.5 * rng_.uniform_int(0, 2);
      if (adv) income += t <= 240 ? 5.0 : 1.0;
      h.s.gold += income;
      const double regen = adv ? 0.012 : 0.008;
      h.s.hp = quantize(std::clamp(h.s.hp + regen + rng_.normal(0.0, 0.06), 0.02, 1.0), 1e-3);
      if (h.s.hp <= 0) h.s.hp = 0.02;
      update_level(h.s);
    }

    // Tyrant lifecycle.
    MonsterState& tyrant = monsters_[0];
    if (!tyrant.alive && t == next_tyrant_spawn_) {
      tyrant.alive = true;
      tyrant.hp = 1.0;
      tyrant_spawn_ = t;
      tyrant_kill_at_ = t + rng_.uniform_int(35, 60);
      contender_ = camp_gold(Camp::red) >= camp_gold(Camp::blue) ? Camp::red : Camp::blue;
      for (HeroSim& h : heroes_) {
        const bool near = h.s.camp == contender_;
        h.target_radius = near ? rng_.uniform(0.03, 0.10) : rng_.uniform(0.38, 0.48);
        h.target_angle = rng_.uniform(0.0, 2.0 * 3.141592653589793);
      }
    }
    const bool fight = tyrant.alive;

    move_heroes(fight);

    // Hero deaths: at most two per second, none in the opening seconds.
    if (t >= 10) {
      int n = rng_.bernoulli(cfg_.hero_death_rate) ? 1 : 0;
      if (n && rng_.bernoulli(0.1)) ++n;
      for (int k = 0; k < n; ++k) kill_one_hero(t, deaths);
    }

    if (tyrant.alive) {
      const double span = tyrant_kill_at_ - tyrant_spawn_;
      tyrant.hp = quantize(std::max(0.02, 1.0 - (t - tyrant_spawn_) / span), 1e-3);
      if (t == tyrant_kill_at_) {
        Frame probe;
        for (int i = 0; i < kHeroCount; ++i) probe.heroes[static_cast<std::size_t>(i)] = heroes_[static_cast<std::size_t>(i)].s;
        const double dr = mean_tyrant_distance(probe, Camp::red);
        const double db = mean_tyrant_distance(probe, Camp::blue);
        const Camp closer = dr <= db ? Camp::red : Camp::blue;
        const Camp taker = rng_.bernoulli(s) ? closer : enemy_of(closer);
        EntityRef killer = pick_hero_killer(taker);
        deaths.push_back({t, {EntityKind::monster, 0}, killer, killer.kind == EntityKind::hero ? taker : Camp::none});
        for (HeroSim& h : heroes_)
          if (h.s.camp == taker) h.s.gold += 80.0;
        tyrant.alive = false;
        tyrant.hp = 0.0;
        next_tyrant_spawn_ = t + cfg_.tyrant_respawn_interval;
      }
    }

    // Towers.
    for (std::size_t i = 0; i < towers_.size(); ++i) {
      TowerSim& ts = towers_[i];
      if (!ts.s.alive || ts.destroy_at == 0) continue;
      const int remaining = ts.destroy_at - t;
      if (remaining <= 0) {
        ts.s.alive = false;
        ts.s.hp = 0.0;
        EntityRef killer = pick_hero_killer(enemy_of(ts.s.camp));
        deaths.push_back({t, {EntityKind::tower, static_cast<int>(i)}, killer,
                          killer.kind == EntityKind::hero ? enemy_of(ts.s.camp) : Camp::none});
      } else if (remaining < 25) {
        ts.s.hp = quantize(remaining / 25.0, 1e-3);
      }
    }

    // Jungle monsters cycle: alive for 60 s, down for 30 s.
    for (std::size_t i = 1; i < monsters_.size(); ++i) {
      MonsterState& m = monsters_[i];
      const int start = i == 1 ? 300 : 30 + 10 * static_cast<int>(i);
      if (t < start) continue;
      const int phase = (t - start) % 90;
      if (phase == 0) {
        m.alive = true;
        m.hp = 1.0;
      } else if (m.alive && phase < 60) {
        m.hp = quantize(1.0 - phase / 60.0, 1e-3);
      } else if (m.alive && phase == 60) {
        m.alive = false;
        m.hp = 0.0;
        const Camp c = rng_.bernoulli(0.5) ? Camp::red : Camp::blue;
        EntityRef killer = pick_hero_killer(c);
        deaths.push_back({t, {EntityKind::monster, static_cast<int>(i)}, killer,
                          killer.kind == EntityKind::hero ? c : Camp::none});
      }
    }

    // Soldiers march from their base toward the enemy base in 60 s waves.
    for (std::size_t i = 0; i < soldiers_.size(); ++i) {
      SoldierState& so = soldiers_[i];
      const double phase = ((t + 7 * static_cast<int>(i)) % 60) / 60.0;
      const Point from = base_of(so.camp);
      const Point to = base_of(enemy_of(so.camp));
      so.x = quantize(from.x + (to.x - from.x) * phase, 1e-4);
      so.y = quantize(from.y + (to.y - from.y) * phase, 1e-4);
      so.hp = quantize(std::max(0.05, 1.0 - phase), 1e-3);
    }
  }

  void move_heroes(bool fight) {
    for (int slot = 0; slot < kHeroCount; ++slot) {
      HeroSim& h = heroes_[static_cast<std::size_t>(slot)];
      if (h.s.hp <= 0) {
        const Point b = base_of(h.s.camp);
        h.s.x = b.x;
        h.s.y = b.y;
        continue;
      }
      Point target = lane_anchor(slot);
      if (fight) {
        target = {kTyrantX + h.target_radius * std::cos(h.target_angle),
                  kTyrantY + h.target_radius * std::sin(h.target_angle)};
      }
      const double dx = target.x - h.s.x, dy = target.y - h.s.y;
      const double d = std::hypot(dx, dy);
      const double stride = std::min(d, 0.03);
      double nx = h.s.x + (d > 0 ? dx / d * stride : 0.0) + rng_.normal(0.0, 0.004);
      double ny = h.s.y + (d > 0 ? dy / d * stride : 0.0) + rng_.normal(0.0, 0.004);
      h.s.x = quantize(clamp01(nx), 1e-4);
      h.s.y = quantize(clamp01(ny), 1e-4);
    }
  }

  void kill_one_hero(int t, std::vector<DeathEvent>& deaths) {
    const double s = cfg_.signal_strength;
    auto cands = alive_slots_all();
    if (cands.empty()) return;
    int victim = cands[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(cands.size()) - 1))];
    if (rng_.bernoulli(s)) {
      victim = *std::min_element(cands.begin(), cands.end(), [&](int a, int b) {
        const double ha = heroes_[static_cast<std::size_t>(a)].s.hp, hb = heroes_[static_cast<std::size_t>(b)].s.hp;
        return ha < hb || (ha == hb && a < b);
      });
    }
    HeroSim& v = heroes_[static_cast<std::size_t>(victim)];
    const Camp enemy = enemy_of(v.s.camp);
    EntityRef killer{EntityKind::environment, -1};
    auto enemies = alive_slots(enemy);
    if (!enemies.empty() && !rng_.bernoulli(0.1)) {
      int k = enemies[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(enemies.size()) - 1))];
      if (rng_.bernoulli(s)) {
        k = *std::max_element(enemies.begin(), enemies.end(), [&](int a, int b) {
          const HeroState& ha = heroes_[static_cast<std::size_t>(a)].s;
          const HeroState& hb = heroes_[static_cast<std::size_t>(b)].s;
          const double sa = ha.level + ha.gold, sb = hb.level + hb.gold;
          return sa < sb || (sa == sb && a > b);
        });
      }
      killer = {EntityKind::hero, k};
      HeroState& ks = heroes_[static_cast<std::size_t>(k)].s;
      ks.kill_count += 1;
      ks.gold += 60.0;
      update_level(ks);
      auto allies = alive_slots(enemy);
      allies.erase(std::remove(allies.begin(), allies.end(), k), allies.end());
      if (!allies.empty()) {
        HeroState& as = heroes_[static_cast<std::size_t>(
                                    allies[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(allies.size()) - 1))])]
                            .s;
        as.assist_count += 1;
        as.gold += 30.0;
        update_level(as);
      }
    }
    v.s.hp = 0.0;
    v.s.death_count += 1;
    v.respawn_at = t + 6 + v.s.level / 2;
    const Point b = base_of(v.s.camp);
    v.s.x = b.x;
    v.s.y = b.y;
    deaths.push_back({t, {EntityKind::hero, victim}, killer, killer.kind == EntityKind::hero ? enemy : Camp::none});
  }

  Frame snapshot(int t) const {
    Frame f;
    f.game_time = t;
    for (int i = 0; i < kHeroCount; ++i) f.heroes[static_cast<std::size_t>(i)] = heroes_[static_cast<std::size_t>(i)].s;
    f.monsters = monsters_;
    f.soldiers = soldiers_;
    for (const TowerSim& ts : towers_) f.towers.push_back(ts.s);
    f.global.game_time = t;
    for (const HeroState& h : f.heroes) {
      const auto c = static_cast<std::size_t>(h.camp);
      if (h.hp > 0) f.global.alive_heroes[c] += 1;
      f.global.gold_total[c] += h.gold;
    }
    for (const TowerState& ts : f.towers)
      if (ts.alive) f.global.alive_towers[static_cast<std::size_t>(ts.camp)] += 1;
    return f;
  }

  GeneratorConfig cfg_;
  Rng rng_;
  std::uint64_t seed_;
  int next_tyrant_spawn_;
  int length_ = 0;
  Camp advantaged_ = Camp::red;
  Camp winner_ = Camp::red;
  std::array<HeroSim, kHeroCount> heroes_{};
  std::vector<MonsterState> monsters_;
  std::vector<SoldierState> soldiers_;
  std::vector<TowerSim> towers_;
  int tyrant_spawn_ = 0;
  int tyrant_kill_at_ = 0;
  Camp contender_ = Camp::red;
};

}  // namespace detail

/// Deterministic for a fixed (seed, config); game_id is the seed.
inline GameRecord generate_game(std::uint64_t seed, const GeneratorConfig& config) {
  config.validate();
  return detail::GameSimulator(seed, config).run();
}

// ---------------------------------------------------------------------------
// Task extraction

enum class Task { win, tyrant, kill, bekill };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::win: return "win";
    case Task::tyrant: return "tyrant";
    case Task::kill: return "kill";
    case Task::bekill: return "bekill";
  }
  return "win";
}

inline Task task_from_string(std::string_view s) {
  if (s == "win") return Task::win;
  if (s == "tyrant") return Task::tyrant;
  if (s == "kill") return Task::kill;
  if (s == "bekill") return Task::bekill;
  throw std::invalid_argument("unknown task '" + std::string(s) + "' (expected win, tyrant, kill or bekill)");
}

inline std::size_t class_count(Task t) { return (t == Task::win || t == Task::tyrant) ? 2 : kHeroCount; }

struct EventInstance {
  Task task = Task::win;
  std::uint64_t game_id = 0;
  int t = 0;        // end of the input window (game-time seconds)
  int horizon = 0;  // S; 0 for win
  int label = 0;

  bool operator==(const EventInstance&) const = default;
};

inline constexpr int kWinInterval = 60;

/// Windows that would start before frame 1 are dropped.
inline std::vector<EventInstance> extract_event_instances(const GameRecord& record, Task task, int horizon,
                                                          int window) {
  if (window < 1) throw std::invalid_argument("window length must be >= 1");
  if (task != Task::win && horizon < 1) throw std::invalid_argument("horizon S must be >= 1 for event tasks");
  std::vector<EventInstance> out;
  auto emit = [&](int t, int h, int label) {
    if (t - window + 1 >= 1 && t <= record.length()) out.push_back({task, record.game_id, t, h, label});
  };
  if (task == Task::win) {
    for (int t = kWinInterval; t <= record.length(); t += kWinInterval)
      emit(t, 0, static_cast<int>(record.winner));
    return out;
  }
  for (const DeathEvent& d : record.deaths) {
    switch (task) {
      case Task::tyrant:
        if (d.victim.kind == EntityKind::monster && d.victim.index >= 0 &&
            record.frames.front().monsters.at(static_cast<std::size_t>(d.victim.index)).type == MonsterType::tyrant &&
            d.killer_camp != Camp::none)
          emit(d.death_frame - horizon, horizon, static_cast<int>(d.killer_camp));
        break;
      case Task::kill:
        if (d.victim.kind == EntityKind::hero && d.killer.kind == EntityKind::hero)
          emit(d.death_frame - horizon, horizon, d.killer.index);
        break;
      case Task::bekill:
        if (d.victim.kind == EntityKind::hero) emit(d.death_frame - horizon, horizon, d.victim.index);
        break;
      case Task::win:
        break;
    }
  }
  return out;
}

}  // namespace mobaxai
