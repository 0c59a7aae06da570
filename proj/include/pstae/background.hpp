#pragma once

// Voxel-density background subtraction for fixed-viewpoint point videos and
// the foreground-presence scoring baseline built on it.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pstae/pointcloud_io.hpp"

namespace pstae {

enum class BgWindow {
  kBlock,       // one density grid per non-overlapping block of l frames
  kWholeVideo,  // a single grid over the entire video
};

BgWindow parse_bg_window(const std::string& name);
std::string to_string(BgWindow window);

struct BgsubConfig {
  double voxel_size = 0.05;
  int window_length = 30;
  double density_threshold = 100.0;
  BgWindow window = BgWindow::kBlock;

  void validate() const;
};

struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;
  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) + 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) + 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// Cumulative point count per voxel.
using DensityGrid = std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash>;

/// floor(p / r) per axis; boundary points fall into the higher voxel.
VoxelKey voxel_of(Point3 p, double voxel_size);

DensityGrid build_density_grid(std::span<const PointFrame> frames,
                               double voxel_size);

struct ForegroundSplit {
  PointVideo foreground;
  PointVideo background;
};

/// Points in voxels with D > threshold go to background, the rest to
/// foreground. Relative point order is preserved inside each class.
ForegroundSplit classify_foreground(const PointVideo& video,
                                    const BgsubConfig& config);

/// 1 for frames holding at least one foreground point, else 0.
std::vector<int> bgsub_baseline_score(const PointVideo& foreground);

}  // namespace pstae
