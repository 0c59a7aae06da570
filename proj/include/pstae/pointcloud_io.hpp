#pragma once

// Dataset ingestion: depth images to point clouds, per-frame point-count
// normalization, clip segmentation and the on-disk formats.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pstae/geometry.hpp"

namespace pstae {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double depth_scale = 0.001;  // meters per raw unit

  void validate() const;
};

struct PointFrame {
  std::vector<Point3> points;
  std::vector<double> features;  // points.size() x feature_dim, row-major
  std::size_t feature_dim = 0;
  /// Set by resample_frame when the input had no points at all.
  bool empty_marker = false;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void validate() const;
};

using PointVideo = std::vector<PointFrame>;

struct Clip {
  std::vector<PointFrame> frames;
  std::vector<bool> padded;  // true for frames repeated to fill the tail
  std::string source_video_id;
  std::size_t start_frame_index = 0;

  std::size_t real_frames() const;
};

/// Row-major 16-bit depth image; 0 marks an invalid pixel.
struct DepthImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> data;

  std::uint16_t at(std::size_t u, std::size_t v) const { return data[v * width + u]; }
};

/// Back-projects every valid pixel: z = d * scale, x = (u - cx) z / fx,
/// y = (v - cy) z / fy. Points come out in row-major pixel order.
PointFrame depth_to_pointcloud(const DepthImage& depth,
                               const CameraIntrinsics& intrinsics);

/// Exactly `target` points: FPS when there are too many, seeded uniform
/// duplication when there are too few, an empty-marked frame when none.
PointFrame resample_frame(const PointFrame& frame, std::size_t target,
                          std::mt19937_64& rng);

/// Consecutive non-overlapping windows of `length` frames. With `pad_tail`
/// the short remainder repeats its last frame (flagged as padded); otherwise
/// the remainder is dropped.
std::vector<Clip> segment_video(const PointVideo& video, std::size_t length,
                                bool pad_tail, const std::string& video_id = "");

// --- files ----------------------------------------------------------------

inline constexpr char kPointVideoMagic[] = "PCV1";

void write_point_video(const std::string& path, const PointVideo& video);
PointVideo read_point_video(const std::string& path);

void write_labels(const std::string& path, std::span<const int> labels);
std::vector<int> read_labels(const std::string& path);

CameraIntrinsics read_intrinsics(const std::string& path);
void write_intrinsics(const std::string& path, const CameraIntrinsics& intr);

/// 16-bit grayscale PNG (raw units, typically millimeters).
DepthImage read_depth_png(const std::string& path);
void write_depth_png(const std::string& path, const DepthImage& image);

/// ASCII PLY with x y z and a scalar "error" property per vertex.
void write_error_ply(const std::string& path, std::span<const Point3> points,
                     std::span<const double> errors);

}  // namespace pstae
