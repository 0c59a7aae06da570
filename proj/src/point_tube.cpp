#include "pstae/point_tube.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <tuple>

#include "pstae/errors.hpp"

namespace pstae {

std::size_t lexicographic_min_index(std::span<const Point3> points) {
  if (points.empty()) throw UsageError("lexicographic_min_index: no points");
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Point3 p = points[i], b = points[best];
    if (std::tie(p.x, p.y, p.z) < std::tie(b.x, b.y, b.z)) best = i;
  }
  return best;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> points,
                                                 std::size_t count,
                                                 std::size_t seed_index) {
  const std::size_t n = points.size();
  if (count < 1 || count > n) {
    throw UsageError("fps: requested " + std::to_string(count) +
                     " samples from " + std::to_string(n) +
                     " points (resample first)");
  }
  if (seed_index >= n) throw UsageError("fps: seed index out of range");

  std::vector<std::size_t> selected;
  selected.reserve(count);
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::size_t current = seed_index;
  selected.push_back(current);
  while (selected.size() < count) {
    const Point3 c = points[current];
    std::size_t best = 0;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(points[i], c);
      if (d < min_dist[i]) min_dist[i] = d;
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    // Already-selected points sit at distance 0; when every remaining point
    // duplicates a selected one, fall back to the lowest unselected index.
    if (best_dist <= 0.0) {
      std::vector<bool> taken(n, false);
      for (std::size_t s : selected) taken[s] = true;
      for (std::size_t i = 0; i < n && selected.size() < count; ++i)
        if (!taken[i] && min_dist[i] <= 0.0) selected.push_back(i);
      break;
    }
    selected.push_back(best);
    current = best;
  }
  return selected;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Point3> points,
                                                 std::size_t count,
                                                 FpsSeed seed) {
  const std::size_t start =
      seed == FpsSeed::kFirstIndex ? 0 : lexicographic_min_index(points);
  return farthest_point_sampling(points, count, start);
}

NeighborTable ball_query(std::span<const Point3> anchors,
                         std::span<const Point3> source, double radius,
                         std::size_t k) {
  if (source.empty()) throw UsageError("ball_query: empty source frame");
  if (!(radius > 0.0)) throw ConfigError("ball_query: radius must be > 0");
  if (k < 1) throw ConfigError("ball_query: k must be >= 1");

  const double r2 = radius * radius;
  NeighborTable table;
  table.k = k;
  table.neighbors.assign(anchors.size() * k, 0);
  table.degenerate.assign(anchors.size(), false);

  std::vector<std::pair<double, std::size_t>> best;
  best.reserve(k);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const Point3 anchor = anchors[a];
    best.clear();
    std::size_t nearest = 0;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < source.size(); ++i) {
      const double d = squared_distance(anchor, source[i]);
      if (d < nearest_d) {
        nearest_d = d;
        nearest = i;
      }
      if (d > r2) continue;
      if (best.size() == k && !(d < best.back().first)) continue;
      // Insert after entries with equal distance so lower indices stay first.
      auto pos = std::upper_bound(
          best.begin(), best.end(), d,
          [](double value, const auto& e) { return value < e.first; });
      if (best.size() == k) best.pop_back();
      best.insert(pos, {d, i});
    }
    std::size_t* row = table.neighbors.data() + a * k;
    if (best.empty()) {
      table.degenerate[a] = true;
      std::fill(row, row + k, nearest);
      continue;
    }
    for (std::size_t j = 0; j < k; ++j)
      row[j] = j < best.size() ? best[j].second : best.front().second;
  }
  return table;
}

std::vector<std::pair<int, int>> TemporalPlan::scatter_targets(int in) const {
  std::vector<std::pair<int, int>> targets;
  for (int slot = 0; slot < window_size(); ++slot) {
    const int out = in * stride + slot + pad_begin;
    if (out >= 0 && out < output_length) targets.emplace_back(slot, out);
  }
  return targets;
}

namespace {

void validate_plan_args(int input_length, int radius, int stride) {
  if (input_length < 1) throw ConfigError("temporal plan: input length < 1");
  if (radius < 0) throw ConfigError("temporal plan: radius < 0");
  if (stride < 1) throw ConfigError("temporal plan: stride < 1");
}

}  // namespace

TemporalPlan temporal_plan(int input_length, int radius, int stride,
                           int pad_begin, int pad_end) {
  validate_plan_args(input_length, radius, stride);
  const int span = input_length + pad_begin + pad_end - (2 * radius + 1);
  if (span < 0) {
    throw ConfigError("temporal plan: window " + std::to_string(2 * radius + 1) +
                      " does not fit padded length " +
                      std::to_string(input_length + pad_begin + pad_end));
  }
  TemporalPlan plan{input_length, radius, stride, pad_begin, pad_end,
                    span / stride + 1, false, {}};
  for (int k = 0; k < plan.output_length; ++k)
    plan.anchor_frames.push_back(radius - pad_begin + k * stride);
  for (int center : plan.anchor_frames) {
    if (center < 0 || center >= input_length)
      throw ConfigError("temporal plan: anchor frame " + std::to_string(center) +
                        " lies in padding");
  }
  return plan;
}

TemporalPlan transposed_temporal_plan(int input_length, int radius, int stride,
                                      int pad_begin, int pad_end) {
  validate_plan_args(input_length, radius, stride);
  const int length =
      (input_length - 1) * stride + 2 * radius + 1 + pad_begin + pad_end;
  if (length < 1)
    throw ConfigError("transposed temporal plan: output length < 1");
  TemporalPlan plan{input_length, radius, stride, pad_begin, pad_end,
                    length, true, {}};
  for (int k = 0; k < input_length; ++k)
    plan.anchor_frames.push_back(k * stride + radius + pad_begin);
  for (int j = 0; j < length; ++j) {
    bool covered = false;
    for (int k = 0; k < input_length && !covered; ++k) {
      const int slot = j - k * stride - pad_begin;
      covered = slot >= 0 && slot <= 2 * radius;
    }
    if (!covered)
      throw ConfigError("transposed temporal plan: output frame " +
                        std::to_string(j) + " receives no input");
  }
  return plan;
}

}  // namespace pstae
