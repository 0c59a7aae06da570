#pragma once

// Seed-deterministic synthetic point-cloud videos: a static room sampled on
// the background voxel lattice plus blob-humanoid actors following scripted
// behaviors, with per-frame anomaly labels.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pstae/pipeline.hpp"
#include "pstae/pointcloud_io.hpp"

namespace pstae {

enum class Behavior { kWalk, kRun, kCollapse, kCrawl, kLeaveObject, kArgue, kWave };

std::string to_string(Behavior behavior);
Behavior parse_behavior(const std::string& name);
/// run, collapse, crawl, leave-object and argue are anomalous.
bool is_anomalous(Behavior behavior);

struct SceneConfig {
  Point3 room_size{3.0, 3.0, 2.5};  // meters; the room spans [0, size]
  std::size_t clutter_boxes = 3;
  double clutter_min_size = 0.2;
  double clutter_max_size = 0.5;
  std::size_t actor_count = 1;
  std::size_t frames = 60;
  double frame_rate = 10.0;
  double noise_sigma = 0.005;
  /// Background samples per voxel face edge (2 -> 4 samples per face).
  std::size_t background_samples_per_edge = 2;
  double voxel_size = 0.05;
  std::size_t actor_points = 1500;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BehaviorScript {
  Behavior kind = Behavior::kWalk;
  std::size_t actor = 0;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;  // inclusive
  /// Position and heading (radians) used when the actor first appears;
  /// later scripts continue from the actor's current state.
  Point3 start_position{1.5, 1.5, 0.0};
  double heading = 0.0;
  double speed_scale = 1.0;
};

struct SyntheticVideo {
  PointVideo frames;
  std::vector<int> labels;
  std::string category;  // "normal" or the anomalous behavior name
};

SyntheticVideo gen_video(const SceneConfig& config,
                         const std::vector<BehaviorScript>& scripts);

/// Foreground-only action clips for extractor pretraining. Classes are
/// separable by speed, height and limb motion.
std::vector<LabeledClip> gen_action_dataset(const SceneConfig& config,
                                            const std::vector<Behavior>& classes,
                                            std::size_t per_class,
                                            std::size_t clip_length = kDefaultClipLength);

std::vector<Behavior> default_action_classes();

/// Canned video recipes used by the CLI and the benchmarks.
std::vector<BehaviorScript> normal_scripts(const SceneConfig& config,
                                           std::uint64_t variant);
std::vector<BehaviorScript> anomalous_scripts(const SceneConfig& config,
                                              Behavior anomaly,
                                              std::uint64_t variant);

/// Mean centroid displacement between consecutive frames.
double mean_displacement(const std::vector<PointFrame>& frames);

}  // namespace pstae
