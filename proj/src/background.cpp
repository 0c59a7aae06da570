#include "pstae/background.hpp"

#include <algorithm>
#include <cmath>

#include "pstae/errors.hpp"

namespace pstae {

BgWindow parse_bg_window(const std::string& name) {
  if (name == "block") return BgWindow::kBlock;
  if (name == "whole-video") return BgWindow::kWholeVideo;
  throw ConfigError("unknown background window mode '" + name +
                    "' (expected block or whole-video)");
}

std::string to_string(BgWindow window) {
  return window == BgWindow::kBlock ? "block" : "whole-video";
}

void BgsubConfig::validate() const {
  if (!(voxel_size > 0.0)) throw ConfigError("voxel size must be > 0");
  if (window_length < 1) throw ConfigError("background window must be >= 1 frame");
  if (!(density_threshold >= 0.0))
    throw ConfigError("density threshold must be >= 0");
}

VoxelKey voxel_of(Point3 p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z / voxel_size))};
}

DensityGrid build_density_grid(std::span<const PointFrame> frames,
                               double voxel_size) {
  if (!(voxel_size > 0.0)) throw ConfigError("voxel size must be > 0");
  DensityGrid grid;
  for (const PointFrame& frame : frames)
    for (const Point3& p : frame.points) ++grid[voxel_of(p, voxel_size)];
  return grid;
}

namespace {

void split_block(std::span<const PointFrame> frames, const BgsubConfig& config,
                 ForegroundSplit& out) {
  // Voxel keys are computed once and reused for the classification pass.
  std::vector<std::vector<VoxelKey>> keys(frames.size());
  DensityGrid grid;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    keys[f].reserve(frames[f].size());
    for (const Point3& p : frames[f].points) {
      keys[f].push_back(voxel_of(p, config.voxel_size));
      ++grid[keys[f].back()];
    }
  }
  for (std::size_t f = 0; f < frames.size(); ++f) {
    PointFrame fg, bg;
    for (std::size_t i = 0; i < frames[f].size(); ++i) {
      const double density = static_cast<double>(grid.at(keys[f][i]));
      (density > config.density_threshold ? bg : fg)
          .points.push_back(frames[f].points[i]);
    }
    out.foreground.push_back(std::move(fg));
    out.background.push_back(std::move(bg));
  }
}

}  // namespace

ForegroundSplit classify_foreground(const PointVideo& video,
                                    const BgsubConfig& config) {
  config.validate();
  ForegroundSplit out;
  out.foreground.reserve(video.size());
  out.background.reserve(video.size());
  const std::span<const PointFrame> all(video);
  if (config.window == BgWindow::kWholeVideo) {
    split_block(all, config, out);
    return out;
  }
  const auto block = static_cast<std::size_t>(config.window_length);
  for (std::size_t start = 0; start < video.size(); start += block) {
    split_block(all.subspan(start, std::min(block, video.size() - start)),
                config, out);
  }
  return out;
}

std::vector<int> bgsub_baseline_score(const PointVideo& foreground) {
  std::vector<int> scores;
  scores.reserve(foreground.size());
  for (const PointFrame& frame : foreground) scores.push_back(frame.empty() ? 0 : 1);
  return scores;
}

}  // namespace pstae
