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

#include "mobaxai/datagen.hpp"

#include <gtest/gtest.h>

#include <set>

#include "mobaxai/dataset_io.hpp"

namespace mobaxai {
namespace {

GameRecord blank_record(int length) {
  GameRecord r;
  r.game_id = 1;
  r.frames.resize(static_cast<std::size_t>(length));
  for (int t = 1; t <= length; ++t) {
    Frame& f = r.frames[static_cast<std::size_t>(t - 1)];
    f.game_time = t;
    f.monsters.push_back(MonsterState{MonsterType::tyrant, 1.0, true, kTyrantX, kTyrantY});
  }
  return r;
}

TEST(Datagen, SameSeedAndConfigGiveIdenticalRecords) {
  GeneratorConfig cfg;
  const GameRecord a = generate_game(42, cfg);
  const GameRecord b = generate_game(42, cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(record_to_line(a), record_to_line(b));
  EXPECT_NE(record_to_line(a), record_to_line(generate_game(43, cfg)));
}

TEST(Datagen, DegenerateConfigsAreRejected) {
  GeneratorConfig cfg;
  cfg.heroes_per_camp = 0;
  EXPECT_THROW(generate_game(1, cfg), std::invalid_argument);
  cfg = {};
  cfg.min_length = cfg.max_length = 0;
  EXPECT_THROW(generate_game(1, cfg), std::invalid_argument);
  cfg = {};
  cfg.max_length = 1500;
  EXPECT_THROW(generate_game(1, cfg), std::invalid_argument);
  cfg = {};
  cfg.tyrant_respawn_interval = 0;
  EXPECT_THROW(generate_game(1, cfg), std::invalid_argument);
}

TEST(Datagen, FrameInvariantsHold) {
  GeneratorConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GameRecord r = generate_game(seed, cfg);
    ASSERT_GE(r.length(), cfg.min_length);
    ASSERT_LE(r.length(), cfg.max_length);
    for (int i = 0; i < r.length(); ++i) {
      const Frame& f = r.frames[static_cast<std::size_t>(i)];
      ASSERT_EQ(f.game_time, i + 1);
      std::array<int, 2> per_camp{}, alive{};
      for (const HeroState& h : f.heroes) {
        per_camp[static_cast<std::size_t>(h.camp)] += 1;
        ASSERT_GE(h.hp, 0.0);
        ASSERT_LE(h.hp, 1.0);
        if (h.hp > 0) alive[static_cast<std::size_t>(h.camp)] += 1;
      }
      EXPECT_EQ(per_camp, (std::array<int, 2>{5, 5}));
      EXPECT_EQ(f.global.alive_heroes, alive);
    }
    // The winner's base tower survives; the loser's falls on the last frame.
    const Frame& last = r.frames.back();
    for (const TowerState& t : last.towers)
      if (t.type == TowerType::base) EXPECT_EQ(t.alive, t.camp == r.winner);
  }
}

TEST(Datagen, HeroVictimsDieOnTheirDeathFrame) {
  GeneratorConfig cfg;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GameRecord r = generate_game(seed, cfg);
    int prev = 0;
    for (const DeathEvent& d : r.deaths) {
      ASSERT_GE(d.death_frame, prev);
      prev = d.death_frame;
      ASSERT_GE(d.death_frame, 1);
      ASSERT_LE(d.death_frame, r.length());
      if (d.victim.kind != EntityKind::hero) continue;
      const auto slot = static_cast<std::size_t>(d.victim.index);
      EXPECT_EQ(r.at_time(d.death_frame).heroes[slot].hp, 0.0);
      EXPECT_GT(r.at_time(d.death_frame - 1).heroes[slot].hp, 0.0);
      ++checked;
    }
  }
  EXPECT_GT(checked, 50u);
}

TEST(Datagen, FullSignalPlantsTyrantToCloserCamp) {
  GeneratorConfig cfg;
  cfg.signal_strength = 1.0;
  std::size_t kills = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const GameRecord r = generate_game(seed, cfg);
    for (const DeathEvent& d : r.deaths) {
      if (d.victim.kind != EntityKind::monster || d.victim.index != 0) continue;
      const Frame& f = r.at_time(d.death_frame);
      const Camp closer =
          mean_tyrant_distance(f, Camp::red) <= mean_tyrant_distance(f, Camp::blue) ? Camp::red : Camp::blue;
      if (d.killer_camp == Camp::none) continue;
      EXPECT_EQ(d.killer_camp, closer) << "seed " << seed << " frame " << d.death_frame;
      ++kills;
    }
  }
  EXPECT_GT(kills, 60u);
}

TEST(Datagen, PlantedTyrantRuleHoldsAtConfiguredRate) {
  // Monte-Carlo count over 1,000 generated games.
  GeneratorConfig cfg;
  cfg.signal_strength = 0.9;
  std::size_t kills = 0, matches = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const GameRecord r = generate_game(10'000 + seed, cfg);
    for (const DeathEvent& d : r.deaths) {
      if (d.victim.kind != EntityKind::monster || d.victim.index != 0 || d.killer_camp == Camp::none) continue;
      const Frame& f = r.at_time(d.death_frame);
      const Camp closer =
          mean_tyrant_distance(f, Camp::red) <= mean_tyrant_distance(f, Camp::blue) ? Camp::red : Camp::blue;
      ++kills;
      matches += d.killer_camp == closer;
    }
  }
  const double rate = static_cast<double>(matches) / static_cast<double>(kills);
  EXPECT_GE(rate, 0.87);
  EXPECT_LE(rate, 0.93);
  EXPECT_GT(kills, 1000u);
}

TEST(Datagen, FullSignalWinnerLeadsInGold) {
  GeneratorConfig cfg;
  cfg.signal_strength = 1.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const GameRecord r = generate_game(seed, cfg);
    const auto w = static_cast<std::size_t>(r.winner);
    for (int t = 56; t <= r.length(); t += 60) {
      const GlobalState& g = r.at_time(t).global;
      EXPECT_GT(g.gold_total[w], g.gold_total[1 - w]) << "seed " << seed << " t " << t;
    }
  }
}

TEST(Extraction, TyrantInstancesAnchorBeforeEachKill) {
  GameRecord r = blank_record(700);
  r.deaths.push_back({300, {EntityKind::monster, 0}, {EntityKind::hero, 2}, Camp::red});
  r.deaths.push_back({540, {EntityKind::monster, 0}, {EntityKind::hero, 7}, Camp::blue});
  const auto inst = extract_event_instances(r, Task::tyrant, 5, 5);
  ASSERT_EQ(inst.size(), 2u);
  EXPECT_EQ(inst[0].t, 295);
  EXPECT_EQ(inst[1].t, 535);
  EXPECT_EQ(inst[0].label, 0);
  EXPECT_EQ(inst[1].label, 1);
}

TEST(Extraction, NoHeroDeathsMeansNoKillInstances) {
  GameRecord r = blank_record(400);
  r.deaths.push_back({300, {EntityKind::monster, 0}, {EntityKind::hero, 2}, Camp::red});
  EXPECT_TRUE(extract_event_instances(r, Task::kill, 10, 5).empty());
  EXPECT_TRUE(extract_event_instances(r, Task::bekill, 10, 5).empty());
}

TEST(Extraction, WinInstancesEverySixtySeconds) {
  GameRecord r = blank_record(600);
  r.winner = Camp::blue;
  const auto inst = extract_event_instances(r, Task::win, 0, 5);
  ASSERT_EQ(inst.size(), 600u / 60u);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    EXPECT_EQ(inst[i].t, static_cast<int>(60 * (i + 1)));
    EXPECT_EQ(inst[i].label, 1);
    EXPECT_EQ(inst[i].horizon, 0);
  }
}

TEST(Extraction, KillAndBekillLabelsAndEnvironmentKills) {
  GameRecord r = blank_record(400);
  r.deaths.push_back({100, {EntityKind::hero, 3}, {EntityKind::hero, 8}, Camp::blue});
  r.deaths.push_back({100, {EntityKind::hero, 4}, {EntityKind::hero, 6}, Camp::blue});  // same frame
  r.deaths.push_back({200, {EntityKind::hero, 9}, {EntityKind::environment, -1}, Camp::none});
  const auto kill = extract_event_instances(r, Task::kill, 5, 5);
  const auto bekill = extract_event_instances(r, Task::bekill, 5, 5);
  ASSERT_EQ(kill.size(), 2u);
  EXPECT_EQ(kill[0].label, 8);
  EXPECT_EQ(kill[1].label, 6);
  ASSERT_EQ(bekill.size(), 3u);
  EXPECT_EQ(bekill[2].label, 9);
}

TEST(Extraction, WindowsBeforeFirstFrameAreDropped) {
  GameRecord r = blank_record(400);
  r.deaths.push_back({8, {EntityKind::hero, 1}, {EntityKind::hero, 5}, Camp::blue});
  r.deaths.push_back({9, {EntityKind::hero, 1}, {EntityKind::hero, 5}, Camp::blue});
  // t = 3 needs frames -1..3; t = 4 needs frames 0..4; t = 5 fits exactly.
  r.deaths.push_back({10, {EntityKind::hero, 1}, {EntityKind::hero, 5}, Camp::blue});
  const auto inst = extract_event_instances(r, Task::bekill, 5, 5);
  ASSERT_EQ(inst.size(), 1u);
  EXPECT_EQ(inst[0].t, 5);
}

TEST(Extraction, UnknownTaskIsRejected) { EXPECT_THROW(task_from_string("towers"), std::invalid_argument); }

TEST(Extraction, IsPureAndLabelsStayInRange) {
  GeneratorConfig cfg;
  std::set<int> win_labels;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const GameRecord r = generate_game(seed, cfg);
    for (Task task : {Task::win, Task::tyrant, Task::kill, Task::bekill}) {
      const int S = task == Task::win ? 0 : 10;
      const auto a = extract_event_instances(r, task, S, 5);
      EXPECT_EQ(a, extract_event_instances(r, task, S, 5));
      for (const EventInstance& e : a) {
        EXPECT_GE(e.label, 0);
        EXPECT_LT(e.label, static_cast<int>(class_count(task)));
        EXPECT_GE(e.t - 5 + 1, 1);
        if (task == Task::win) win_labels.insert(e.label);
      }
    }
  }
  EXPECT_EQ(win_labels.size(), 2u);
}

}  // namespace
}  // namespace mobaxai
