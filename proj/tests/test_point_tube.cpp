#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pstae/errors.hpp"
#include "pstae/point_tube.hpp"

using namespace pstae;

TEST_CASE("fps picks the farthest point") {
  const std::vector<Point3> pts{{0, 0, 0}, {0.1, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const auto idx = farthest_point_sampling(pts, 2, 0);
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()) == std::set<std::size_t>{0, 3});
  CHECK(farthest_point_sampling(pts, 1, 2) == std::vector<std::size_t>{2});
  auto all = farthest_point_sampling(pts, 4, 0);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK_THROWS_AS(farthest_point_sampling(pts, 5, 0), UsageError);
}

TEST_CASE("fps agrees with the brute-force oracle and is translation invariant") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto pts = oracle::random_points(60, rng);
    const auto got = farthest_point_sampling(pts, 20, 0);
    CHECK(got == oracle::fps(pts, 20, 0));
    for (auto& p : pts) p = p + Point3{10, -3, 2};
    CHECK(farthest_point_sampling(pts, 20, 0) == got);
  }
}

TEST_CASE("ball query fill rule and ordering") {
  const std::vector<Point3> anchor{{0, 0, 0}};
  const std::vector<Point3> src{{0.1, 0, 0}, {0.4, 0, 0}, {0.6, 0, 0}};
  const auto t = ball_query(anchor, src, 0.5, 4);
  CHECK(std::vector<std::size_t>(t.row(0).begin(), t.row(0).end()) ==
        std::vector<std::size_t>{0, 1, 0, 0});
  const auto wide = ball_query(anchor, src, 10.0, 2);
  CHECK(std::vector<std::size_t>(wide.row(0).begin(), wide.row(0).end()) ==
        std::vector<std::size_t>{0, 1});

  const std::vector<Point3> lone{{5, 5, 5}, {0, 0, 0}};
  const std::vector<Point3> at{{5, 5, 5}};
  const auto nine = ball_query(at, lone, 0.5, 9);
  CHECK(std::all_of(nine.row(0).begin(), nine.row(0).end(), [](std::size_t i) { return i == 0; }));
  CHECK_FALSE(nine.degenerate[0]);

  CHECK_THROWS(ball_query(anchor, std::vector<Point3>{}, 0.5, 4));
}

TEST_CASE("ball query neighbors stay within the radius") {
  std::mt19937_64 rng(11);
  const auto src = oracle::random_points(128, rng);
  const auto anchors = oracle::random_points(16, rng);
  const auto t = ball_query(anchors, src, 0.2, 9);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (t.degenerate[a]) continue;
    for (std::size_t j : t.row(a)) CHECK(squared_distance(anchors[a], src[j]) <= 0.04);
    const auto expect = oracle::ball_row(anchors[a], src, 0.2, 9);
    CHECK(std::vector<std::size_t>(t.row(a).begin(), t.row(a).end()) == expect);
  }
}

TEST_CASE("temporal plans") {
  const auto p = temporal_plan(15, 1, 2, 0, 0);
  CHECK(p.output_length == 7);
  CHECK(p.anchor_frames == std::vector<int>{1, 3, 5, 7, 9, 11, 13});
  const auto q = temporal_plan(7, 1, 1, 1, 1);
  CHECK(q.anchor_frames == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  CHECK(q.window_frame(0, -1) == -1);
  CHECK(temporal_plan(3, 0, 1, 0, 0).anchor_frames == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(temporal_plan(2, 2, 1, 0, 0), ConfigError);
}

TEST_CASE("transposed temporal plans invert the encoder chain") {
  CHECK(transposed_temporal_plan(3, 1, 1, -1, -1).output_length == 3);
  CHECK(transposed_temporal_plan(3, 1, 2, 0, 0).output_length == 7);
  CHECK(transposed_temporal_plan(7, 1, 2, 0, 0).output_length == 15);
  CHECK_THROWS_AS(transposed_temporal_plan(1, 0, 1, -1, -1), ConfigError);

  // Encoder rows (r_t, s_t, pads) with their decoder pads.
  struct Row { int r, s, pb, pe, dpb, dpe; };
  const std::vector<Row> rows{{1, 2, 0, 0, 0, 0}, {1, 1, 1, 1, -1, -1},
                              {1, 2, 0, 0, 0, 0}, {1, 1, 1, 1, -1, -1}};
  std::vector<int> lengths{15};
  for (const auto& r : rows) lengths.push_back(temporal_plan(lengths.back(), r.r, r.s, r.pb, r.pe).output_length);
  CHECK(lengths == std::vector<int>{15, 7, 7, 3, 3});
  int len = lengths.back();
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    len = transposed_temporal_plan(len, it->r, it->s, it->dpb, it->dpe).output_length;
  CHECK(len == 15);
}

TEST_CASE("transposed scatter targets cover each output window slot once") {
  const auto t = transposed_temporal_plan(3, 1, 2, 0, 0);
  std::vector<int> hits(7, 0);
  for (int in = 0; in < 3; ++in)
    for (const auto& [slot, out] : t.scatter_targets(in)) {
      CHECK(slot >= 0);
      CHECK(slot < 3);
      ++hits[static_cast<std::size_t>(out)];
    }
  CHECK(hits == std::vector<int>{1, 1, 2, 1, 2, 1, 1});
}
