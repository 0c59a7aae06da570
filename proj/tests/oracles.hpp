#pragma once

// Deliberately naive reference implementations used as test oracles. They
// share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "pstae/geometry.hpp"
#include "pstae/pointcloud_io.hpp"

namespace oracle {

using pstae::Point3;

inline double dist2(const Point3& a, const Point3& b) {
  return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z);
}

/// O(N^2) per pick: recompute every min-distance from scratch.
inline std::vector<std::size_t> fps(const std::vector<Point3>& pts, std::size_t n,
                                    std::size_t seed) {
  std::vector<std::size_t> chosen{seed};
  while (chosen.size() < n) {
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen) d = std::min(d, dist2(pts[i], pts[c]));
      if (d > best) {
        best = d;
        best_i = i;
      }
    }
    chosen.push_back(best_i);
  }
  return chosen;
}

/// Full sort of all sources by (distance, index), then the fill rule.
inline std::vector<std::size_t> ball_row(const Point3& anchor, const std::vector<Point3>& src,
                                         double radius, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < src.size(); ++i) all.push_back({dist2(anchor, src[i]), i});
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> row;
  for (const auto& [d, i] : all)
    if (d <= radius * radius && row.size() < k) row.push_back(i);
  if (row.empty()) row.push_back(all.front().second);
  while (row.size() < k) row.push_back(row.front());
  return row;
}

/// Per-frame block voxel counting with std::map and floor().
inline std::vector<std::vector<bool>> background_mask(const pstae::PointVideo& video,
                                                      double r, int l, double theta,
                                                      bool whole_video) {
  using Key = std::tuple<long long, long long, long long>;
  auto key = [r](const Point3& p) {
    return Key{static_cast<long long>(std::floor(p.x / r)),
               static_cast<long long>(std::floor(p.y / r)),
               static_cast<long long>(std::floor(p.z / r))};
  };
  std::vector<std::vector<bool>> mask(video.size());
  const std::size_t block = whole_video ? std::max<std::size_t>(video.size(), 1)
                                        : static_cast<std::size_t>(l);
  for (std::size_t b = 0; b < video.size(); b += block) {
    const std::size_t e = std::min(video.size(), b + block);
    std::map<Key, double> count;
    for (std::size_t t = b; t < e; ++t)
      for (const auto& p : video[t].points) count[key(p)] += 1.0;
    for (std::size_t t = b; t < e; ++t)
      for (const auto& p : video[t].points) mask[t].push_back(count[key(p)] > theta);
  }
  return mask;
}

/// Pairwise probability that a positive outranks a negative, ties one half.
inline double auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

inline std::vector<Point3> random_points(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(0.0, scale);
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

inline pstae::PointFrame frame_of(std::vector<Point3> pts) {
  pstae::PointFrame f;
  f.points = std::move(pts);
  return f;
}

}  // namespace oracle
