#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pstae/errors.hpp"
#include "pstae/pipeline.hpp"

using namespace pstae;

namespace {

FeaturedClip clip_of(const std::vector<std::vector<double>>& frames, std::size_t rows,
                     std::size_t cols) {
  FeaturedClip c;
  for (const auto& v : frames)
    c.frames.push_back({std::vector<Point3>(rows), Tensor::from({rows, cols}, v)});
  return c;
}

FeaturedClip random_clip(std::size_t frames, std::size_t rows, std::size_t cols,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::vector<std::vector<double>> v(frames, std::vector<double>(rows * cols));
  for (auto& f : v)
    for (double& x : f) x = n(rng);
  return clip_of(v, rows, cols);
}

}  // namespace

TEST_CASE("reconstruction loss values") {
  const auto f = clip_of({{1, 2, 3, 4}}, 2, 2);
  const auto zero = clip_of({{0, 0, 0, 0}}, 2, 2);
  CHECK(reconstruction_loss(f, zero).item() == doctest::Approx(30.0));
  CHECK(reconstruction_loss(f, f).item() == 0.0);

  // Frame norms 30 and 10.
  const auto two = clip_of({{1, 2, 3, 4}, {1, 3, 0, 0}}, 2, 2);
  const auto z2 = clip_of({{0, 0, 0, 0}, {0, 0, 0, 0}}, 2, 2);
  CHECK(reconstruction_loss(two, z2).item() == doctest::Approx(20.0));
  CHECK(per_frame_loss(two, z2) == std::vector<double>{30, 10});
  CHECK_THROWS(per_frame_loss(two, zero));
}

TEST_CASE("per-frame and per-anchor losses are consistent") {
  std::mt19937_64 rng(3);
  const auto a = random_clip(5, 7, 3, rng);
  const auto b = random_clip(5, 7, 3, rng);
  const auto frames = per_frame_loss(a, b);
  const double mean = std::accumulate(frames.begin(), frames.end(), 0.0) / 5.0;
  CHECK(reconstruction_loss(a, b).item() == doctest::Approx(mean).epsilon(1e-14));
  const auto anchors = anchor_errors(a, b);
  for (std::size_t t = 0; t < 5; ++t)
    CHECK(std::accumulate(anchors[t].begin(), anchors[t].end(), 0.0) ==
          doctest::Approx(frames[t]).epsilon(1e-14));

  auto c = a;
  c.frames[2].features = Tensor::from({7, 3}, {a.frames[2].features.values().begin(),
                                               a.frames[2].features.values().end()});
  c.frames[2].features.mutable_values()[4 * 3 + 1] += 0.5;
  const auto local = anchor_errors(a, c);
  for (std::size_t j = 0; j < 7; ++j) CHECK((local[2][j] > 0.0) == (j == 4));
}

TEST_CASE("moving average and normalization") {
  std::vector<double> raw(12, 0.0);
  raw.back() = 10.0;
  const auto sm = moving_average(raw, 10);
  CHECK(sm.size() == 12);
  CHECK(sm.back() == doctest::Approx(1.0));
  CHECK(sm[2] == 0.0);
  const auto norm = min_max_normalize(sm);
  CHECK(*std::max_element(norm.begin(), norm.end()) == 1.0);
  CHECK(*std::min_element(norm.begin(), norm.end()) == 0.0);
  const std::vector<double> flat(5, 3.0);
  CHECK(min_max_normalize(flat) == std::vector<double>(5, 0.0));
  const std::vector<double> ramp{1, 2, 3};
  CHECK(moving_average(ramp, 2) == std::vector<double>{1, 1.5, 2.5});
}

TEST_CASE("auroc values and errors") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(auroc(s, y) == doctest::Approx(0.75));
  CHECK(auroc(std::vector<double>{1, 2}, std::vector<int>{0, 1}) == 1.0);
  CHECK(auroc(std::vector<double>{2, 1}, std::vector<int>{0, 1}) == 0.0);
  CHECK(auroc(std::vector<double>{1, 1}, std::vector<int>{0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), DataError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<double> r(50);
  std::vector<int> l(50);
  for (std::size_t i = 0; i < 50; ++i) {
    r[i] = std::round(u(rng) * 10.0);
    l[i] = i % 3 == 0;
  }
  CHECK(auroc(r, l) == doctest::Approx(oracle::auroc(r, l)).epsilon(1e-12));
  std::vector<double> cubed(r);
  for (double& v : cubed) v = v * v * v + 2.0;
  CHECK(auroc(cubed, l) == auroc(r, l));
}

TEST_CASE("roc curve endpoints") {
  const auto roc = roc_curve(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1});
  CHECK(roc.front().fpr == 0.0);
  CHECK(roc.front().tpr == 0.0);
  CHECK(roc.back().fpr == 1.0);
  CHECK(roc.back().tpr == 1.0);
}

TEST_CASE("score series finalization and csv round trip") {
  const auto s = finalize_scores("v", {2, 2, 2}, {0, 0, 0}, SmoothOrder::kPreNorm);
  CHECK(s.score == std::vector<double>{0, 0, 0});
  auto t = finalize_scores("w", {0, 1, 4, 2}, {0, 0, 1, 1}, SmoothOrder::kPostNorm, 2);
  // Normalized [0, 0.25, 1, 0.5], then a 2-frame trailing mean.
  CHECK(t.score.back() == doctest::Approx(0.75));
  CHECK(t.smoothed.back() == doctest::Approx(3.0));
  const auto path = (std::filesystem::temp_directory_path() / "w.csv").string();
  write_scores_csv(path, t);
  const auto back = read_scores_csv(path);
  CHECK(back.label == t.label);
  CHECK(back.score.size() == 4);
  CHECK(parse_smooth_order("post-norm") == SmoothOrder::kPostNorm);
  CHECK_THROWS_AS(parse_smooth_order("sideways"), ConfigError);
}

TEST_CASE("evaluation pools frames and splits categories") {
  ScoreSeries a = finalize_scores("a", {0, 0, 5, 6}, {0, 0, 1, 1}, SmoothOrder::kPreNorm, 1);
  ScoreSeries b = finalize_scores("b", {1, 1, 1, 1}, {0, 0, 0, 0}, SmoothOrder::kPreNorm, 1);
  const auto r = evaluate({a, b}, {{"a", {0, 0, 1, 1}}, {"b", {0, 0, 0, 0}}},
                          {{"a", "run"}, {"b", "normal"}});
  REQUIRE(r.auroc);
  CHECK(*r.auroc == 1.0);
  CHECK(*r.bgsub_auroc == 1.0);
  CHECK(r.num_frames == 8);
  CHECK(r.per_category.at("run").auroc == 1.0);
  CHECK_FALSE(r.per_category.at("normal").auroc.has_value());
  const auto one_class = evaluate({b}, {}, {});
  CHECK_FALSE(one_class.auroc.has_value());
  CHECK_FALSE(one_class.error.empty());
}

TEST_CASE("empty frames borrow the nearest filled frame") {
  Clip clip;
  for (int i = 0; i < 4; ++i) clip.frames.push_back(oracle::frame_of({{double(i), 0, 0}}));
  const auto filled = fill_empty_frames(clip, {true, false, true, true});
  REQUIRE(filled);
  CHECK((*filled)[0].points[0].x == 1.0);
  CHECK((*filled)[3].points[0].x == 1.0);
  CHECK_FALSE(fill_empty_frames(clip, {true, true, true, true}).has_value());
}

TEST_CASE("training is deterministic and reports the decayed rate") {
  std::mt19937_64 rng(9);
  std::vector<FeaturedClip> desc;
  for (int i = 0; i < 2; ++i) {
    auto c = random_clip(15, 16, 8, rng);
    for (auto& f : c.frames) f.coords = oracle::random_points(16, rng);
    desc.push_back(c);
  }
  TrainOptions opt;
  opt.sgd.epochs = 10;
  opt.sgd.batch_size = 2;
  opt.seed = 5;
  Pstae m1(8, 1), m2(8, 1);
  const auto r1 = train_pstae(m1, desc, opt);
  const auto r2 = train_pstae(m2, desc, opt);
  REQUIRE(r1.epochs.size() == 10);
  CHECK(r1.epochs[9].learning_rate == doctest::Approx(0.001));
  CHECK(r1.epochs[8].learning_rate == doctest::Approx(0.01));
  for (std::size_t e = 0; e < 10; ++e) CHECK(r1.epochs[e].mean_loss == r2.epochs[e].mean_loss);
  CHECK_THROWS_AS(train_pstae(m1, {}, opt), DataError);
}

TEST_CASE("pretraining needs two classes and returns only extractor weights") {
  std::mt19937_64 rng(2);
  std::vector<LabeledClip> clips;
  for (std::size_t i = 0; i < 4; ++i) {
    LabeledClip c;
    for (int t = 0; t < 3; ++t) c.frames.push_back(oracle::frame_of(oracle::random_points(16, rng)));
    c.label = i % 2;
    clips.push_back(c);
  }
  TrainOptions opt;
  opt.sgd.epochs = 1;
  opt.sgd.batch_size = 2;
  Extractor ex(8, 1);
  const auto res = pretrain_extractor(ex, clips, 2, opt, 8);
  CHECK(res.extractor_weights.size() == ex.parameters().size());
  for (const auto& w : res.extractor_weights) CHECK(w.name.rfind("head.", 0) != 0);
  CHECK(ex.frozen());
  Extractor fresh(8, 2);
  for (auto& c : clips) c.label = 0;
  CHECK_THROWS_AS(pretrain_extractor(fresh, clips, 1, opt, 8), DataError);
}

TEST_CASE("an all-background video scores zero") {
  std::mt19937_64 rng(1);
  const auto pts = oracle::random_points(40, rng, 0.02);
  PointVideo v(20, oracle::frame_of(std::vector<Point3>(pts)));
  ScoreConfig cfg;
  cfg.preprocess.points_per_frame = 32;
  const auto s = score_video(v, std::vector<int>(20, 0), Extractor(8, 1), Pstae(8, 2), cfg, "bg");
  CHECK(s.size() == 20);
  CHECK(std::all_of(s.raw_loss.begin(), s.raw_loss.end(), [](double x) { return x == 0.0; }));
  CHECK(std::all_of(s.score.begin(), s.score.end(), [](double x) { return x == 0.0; }));
}
