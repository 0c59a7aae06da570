#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "doctest.h"
#include "pstae/background.hpp"
#include "pstae/errors.hpp"
#include "pstae/experiment.hpp"
#include "pstae/synthetic.hpp"

using namespace pstae;

namespace {

SceneConfig small_scene(std::size_t frames = 60) {
  SceneConfig cfg;
  cfg.frames = frames;
  cfg.seed = 21;
  return cfg;
}

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  const auto cfg = small_scene(20);
  const auto scripts = normal_scripts(cfg, 3);
  const auto a = gen_video(cfg, scripts);
  const auto b = gen_video(cfg, scripts);
  REQUIRE(a.frames.size() == 20);
  for (std::size_t t = 0; t < 20; ++t) CHECK(a.frames[t].points == b.frames[t].points);
  CHECK(std::all_of(a.labels.begin(), a.labels.end(), [](int l) { return l == 0; }));
  CHECK(a.category == "normal");
}

TEST_CASE("labels follow the anomalous script exactly") {
  const auto cfg = small_scene(60);
  BehaviorScript walk{Behavior::kWalk, 0, 0, 39};
  BehaviorScript fall{Behavior::kCollapse, 0, 40, 55};
  const auto v = gen_video(cfg, {walk, fall});
  for (std::size_t t = 0; t < 60; ++t) CHECK(v.labels[t] == (t >= 40 && t <= 55 ? 1 : 0));
  CHECK(v.category == "collapse");
  BehaviorScript clash{Behavior::kRun, 0, 30, 50};
  CHECK_THROWS_AS(gen_video(cfg, {walk, clash}), ConfigError);
  BehaviorScript late{Behavior::kWalk, 0, 50, 70};
  CHECK_THROWS_AS(gen_video(cfg, {late}), ConfigError);
}

TEST_CASE("frames are non-empty and actors stay inside the room") {
  const auto cfg = small_scene(60);
  for (Behavior b : {Behavior::kRun, Behavior::kCrawl, Behavior::kArgue, Behavior::kLeaveObject}) {
    const auto v = gen_video(cfg, anomalous_scripts(cfg, b, 1));
    for (const auto& f : v.frames) {
      CHECK_FALSE(f.empty());
      const bool inside = std::all_of(f.points.begin(), f.points.end(), [&](const Point3& p) {
        return p.x >= -0.05 && p.x <= cfg.room_size.x + 0.05 && p.y >= -0.05 &&
               p.y <= cfg.room_size.y + 0.05 && p.z >= -0.05 && p.z <= cfg.room_size.z + 0.05;
      });
      CHECK(inside);
    }
  }
}

TEST_CASE("background subtraction leaves almost no room points") {
  const auto cfg = small_scene(60);
  const auto empty_room = gen_video(cfg, {});
  const auto split = classify_foreground(empty_room.frames, BgsubConfig{});
  std::size_t bg = 0, fg = 0;
  for (std::size_t t = 0; t < 60; ++t) {
    bg += split.background[t].size();
    fg += split.foreground[t].size();
  }
  CHECK(bg > 0);
  CHECK(static_cast<double>(fg) < 0.01 * static_cast<double>(bg));
}

TEST_CASE("action dataset counts and speed separation") {
  const auto cfg = small_scene();
  const auto clips = gen_action_dataset(cfg, default_action_classes(), 10);
  REQUIRE(clips.size() == 40);
  std::vector<int> counts(4, 0);
  for (const auto& c : clips) {
    ++counts[c.label];
    CHECK(c.frames.size() == 15);
  }
  CHECK(counts == std::vector<int>{10, 10, 10, 10});
  double walk = 0.0, run = 0.0;
  for (const auto& c : clips) {
    if (c.label == 0) walk += mean_displacement(c.frames);
    if (c.label == 1) run += mean_displacement(c.frames);
  }
  CHECK(run >= 2.0 * walk);
  const auto again = gen_action_dataset(cfg, default_action_classes(), 10);
  CHECK(again[7].frames[3].points == clips[7].frames[3].points);
}

TEST_CASE("behavior names") {
  CHECK(parse_behavior("leave-object") == Behavior::kLeaveObject);
  CHECK(to_string(Behavior::kArgue) == "argue");
  CHECK(is_anomalous(Behavior::kCrawl));
  CHECK_FALSE(is_anomalous(Behavior::kWave));
  CHECK_THROWS_AS(parse_behavior("dance"), ConfigError);
}

TEST_CASE("seed derivation is splitmix over fnv-1a") {
  CHECK(splitmix(0) == 0xe220a8397b1dcdafULL);
  CHECK(fnv("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(derive_seed(7, "video", 3) == splitmix(splitmix(splitmix(7) ^ fnv("video")) ^ 3));
  CHECK(derive_seed(7, "video", 3) != derive_seed(7, "video", 4));
}

TEST_CASE("run config defaults and parsing") {
  const RunConfig d;
  CHECK(d.preprocess.background.voxel_size == 0.05);
  CHECK(d.preprocess.background.window_length == 30);
  CHECK(d.preprocess.background.density_threshold == 100.0);
  CHECK(d.preprocess.points_per_frame == 2048);
  CHECK(d.preprocess.clip_length == 15);
  CHECK(d.f == 8);
  CHECK(d.train.epochs == 15);
  CHECK(d.train.batch_size == 8);
  CHECK(d.train.learning_rate == 0.01);
  CHECK(d.train.decay_epoch == 10);
  CHECK(d.smoothing_window == 10);

  const auto c = run_config_from_json(R"({"seed": 4, "background": {"threshold": 50},
      "model": {"f": 16, "layers": {"encoder2": {"neighbors": 5}}}})");
  CHECK(c.seed == 4);
  CHECK(c.preprocess.background.density_threshold == 50.0);
  CHECK(c.f == 16);
  CHECK(c.architecture().encoders[0].max_neighbors == 5);
  CHECK(run_config_from_json(run_config_to_json(c)).architecture().encoders[0].max_neighbors == 5);
  CHECK_THROWS_AS(run_config_from_json(R"({"sed": 1})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"model": {"f": 6}})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{"), ConfigError);
}

TEST_CASE("architecture dump totals the layers") {
  const RunConfig c;
  const auto layers = layer_parameter_counts(c, 8);
  std::size_t total = 0;
  for (const auto& l : layers) total += l.parameters;
  CHECK(layers.size() == 9);
  CHECK(total == Pstae(8, 0).parameter_count() + Extractor(8, 0).op().parameter_count());
  CHECK(arch_dump_json(c, 8).find("\"total_parameters\": " + std::to_string(total)) !=
        std::string::npos);
}
