#pragma once

// Sampling and neighborhood kernels that define a point tube: FPS anchors,
// fixed-size ball-query neighborhoods, and temporal anchor/window arithmetic.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pstae/geometry.hpp"

namespace pstae {

enum class FpsSeed {
  kFirstIndex,        // start from index 0 (input order)
  kLexicographicMin,  // start from the lexicographically smallest point
};

std::size_t lexicographic_min_index(std::span<const Point3> points);

/// Greedy farthest point sampling. The first index is `seed_index`; ties in
/// the max-min distance go to the lowest index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> points,
                                                 std::size_t count,
                                                 std::size_t seed_index = 0);

std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> points,
                                                 std::size_t count,
                                                 FpsSeed seed);

struct NeighborTable {
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // anchors() x k, row-major
  std::vector<bool> degenerate;        // no source point within the radius

  std::size_t anchors() const { return degenerate.size(); }
  std::span<const std::size_t> row(std::size_t anchor) const {
    return std::span<const std::size_t>(neighbors).subspan(anchor * k, k);
  }
};

/// Up to k nearest source points within `radius` of each anchor, ascending by
/// distance (ties to the lowest index). Short rows repeat the nearest
/// neighbor; anchors with nothing in range take the globally nearest point.
NeighborTable ball_query(std::span<const Point3> anchors,
                         std::span<const Point3> source, double radius,
                         std::size_t k);

struct TemporalPlan {
  int input_length = 0;
  int radius = 0;
  int stride = 1;
  int pad_begin = 0;
  int pad_end = 0;
  int output_length = 0;
  bool transposed = false;
  /// Forward plan: the central input frame of each output frame.
  /// Transposed plan: the output frame each input frame is centered on.
  std::vector<int> anchor_frames;

  int window_size() const { return 2 * radius + 1; }
  /// Forward plan: input frame for window offset `delta` in [-radius, radius]
  /// of output frame `out`; may fall outside [0, input_length) (padding).
  int window_frame(int out, int delta) const {
    return anchor_frames[static_cast<std::size_t>(out)] + delta;
  }
  /// Transposed plan: (window slot, output frame) pairs that input frame `in`
  /// scatters into, clipped to the output range.
  std::vector<std::pair<int, int>> scatter_targets(int in) const;
};

TemporalPlan temporal_plan(int input_length, int radius, int stride,
                           int pad_begin, int pad_end);

/// Output length (input_length - 1) * stride + 2 * radius + 1 + pads; negative
/// pads trim symmetrically.
TemporalPlan transposed_temporal_plan(int input_length, int radius, int stride,
                                      int pad_begin, int pad_end);

}  // namespace pstae
