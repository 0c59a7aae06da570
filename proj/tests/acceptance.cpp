// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "pstae/background.hpp"
#include "pstae/experiment.hpp"
#include "pstae/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pstae;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<PointFrame> random_clip(std::size_t frames, std::size_t points,
                                    std::mt19937_64& rng, double extent = 1.0) {
  std::vector<PointFrame> clip;
  for (std::size_t t = 0; t < frames; ++t)
    clip.push_back(oracle::frame_of(oracle::random_points(points, rng, extent)));
  return clip;
}

FeaturedClip random_featured(std::size_t frames, std::size_t points, std::size_t channels,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  FeaturedClip clip;
  for (auto& f : random_clip(frames, points, rng)) {
    std::vector<double> v(points * channels);
    for (double& x : v) x = n(rng);
    clip.frames.push_back({f.points, Tensor::from({points, channels}, v)});
  }
  return clip;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> n;
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// --- 1 ---------------------------------------------------------------------

Outcome shape_fidelity() {
  std::mt19937_64 rng(1);
  const auto clip = random_clip(15, 2048, rng, 3.0);
  Extractor extractor(8, 2);
  Pstae model(8, 3);
  const FeaturedClip desc = extractor.forward(clip);
  std::vector<StageShape> trace;
  const FeaturedClip recon = model.forward(desc, &trace);

  std::vector<std::size_t> frames{clip.size(), desc.length()}, points{2048, desc.points()};
  for (std::size_t i = 1; i <= 4; ++i) {
    frames.push_back(trace[i].frames);
    points.push_back(trace[i].points);
  }
  std::vector<std::size_t> dec_frames, dec_points;
  for (std::size_t i = 5; i < trace.size(); ++i) {
    dec_frames.push_back(trace[i].frames);
    dec_points.push_back(trace[i].points);
  }
  const bool ok = frames == std::vector<std::size_t>{15, 15, 7, 7, 3, 3} &&
                  points == std::vector<std::size_t>{2048, 1024, 512, 512, 256, 128} &&
                  dec_frames == std::vector<std::size_t>{3, 7, 7, 15} &&
                  dec_points == std::vector<std::size_t>{256, 512, 512, 1024} &&
                  recon.length() == 15 && recon.points() == 1024 && recon.channels() == 8 &&
                  desc.channels() == 8;
  std::ostringstream d;
  d << "temporal";
  for (auto v : frames) d << ' ' << v;
  d << " |";
  for (auto v : dec_frames) d << ' ' << v;
  d << "; spatial";
  for (auto v : points) d << ' ' << v;
  d << " |";
  for (auto v : dec_points) d << ' ' << v;
  d << "; output " << recon.length() << "x" << recon.points() << "x" << recon.channels();
  return {ok, d.str()};
}

// --- 2 ---------------------------------------------------------------------

Architecture mini_architecture() {
  Architecture a;
  a.extractor = {"extractor", 0.6, 2, 4, 0, 1, 4, 0, 0, 3};
  a.encoders = {{"encoder2", 0.8, 2, 6, 1, 1, 8, 1, 1, 3},
                {"encoder3", 0.8, 1, 8, 1, 1, 10, 1, 1, 3},
                {"encoder4", 1.6, 2, 10, 1, 1, 12, 1, 1, 3},
                {"encoder5", 1.6, 1, 12, 1, 1, 14, 1, 1, 3}};
  a.decoders = {{"decoder5", 0.0, 1, 10, 1, 1, 12, -1, -1, 3},
                {"decoder4", 0.0, 1, 8, 1, 1, 10, -1, -1, 3},
                {"decoder3", 0.0, 1, 6, 1, 1, 8, -1, -1, 3},
                {"decoder2", 0.0, 1, 4, 1, 1, 6, -1, -1, 3}};
  return a;
}

Outcome gradient_correctness() {
  const double eps = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  std::string worst_name;
  auto run = [&](const std::string& name, const std::function<Tensor()>& build, Tensor leaf) {
    const auto r = gradient_check(build, leaf, eps);
    checked += r.entries_checked;
    if (worst_name.empty() || r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = name;
    }
  };

  std::mt19937_64 rng(5);
  // (a) primitives, each ending in a scalar reduction.
  Tensor a = random_tensor({4, 3}, rng), b = random_tensor({3, 5}, rng);
  Tensor c = random_tensor({4, 3}, rng), bias = random_tensor({3}, rng);
  Tensor w = random_tensor({4, 3}, rng);
  run("matmul", [&] { return sum(square(matmul(a, b))); }, a);
  run("matmul.rhs", [&] { return sum(square(matmul(a, b))); }, b);
  run("add", [&] { return sum(square(add(a, c))); }, c);
  run("sub", [&] { return sum(square(sub(a, c))); }, a);
  run("mul", [&] { return sum(mul(a, c)); }, a);
  run("scale", [&] { return sum(square(scale(a, -1.7))); }, a);
  run("add_bias", [&] { return sum(square(add_bias(a, bias))); }, bias);
  run("relu", [&] { return sum(mul(relu(a), w)); }, a);
  run("max_over_axis.0", [&] { return sum(square(max_over_axis(a, 0))); }, a);
  run("max_over_axis.1", [&] { return sum(square(max_over_axis(a, 1))); }, a);
  run("mean", [&] { return mean(square(a)); }, a);
  run("squared_difference", [&] { return sum(squared_difference(a, c)); }, c);
  run("mse_loss", [&] { return mse_loss(a, c); }, a);
  run("reshape", [&] { return sum(mul(reshape(a, {3, 4}), reshape(w, {3, 4}))); }, a);
  const std::vector<std::size_t> idx{2, 0, 2, 3, 1};
  run("gather_rows", [&] { return sum(square(gather_rows(a, idx))); }, a);
  const std::vector<double> weights{0.2, 0.8, 0.5, 0.5, 1.0, 0.0};
  const std::vector<std::size_t> widx{0, 1, 2, 3, 1, 1};
  run("weighted_gather_rows",
      [&] { return sum(square(weighted_gather_rows(a, widx, weights, 2))); }, a);
  run("concat_cols", [&] { return sum(square(concat_cols({a, Tensor(), c}, {3, 2, 3}, 4))); }, c);
  run("slice_cols", [&] { return sum(square(slice_cols(a, 1, 2))); }, a);
  run("add_n", [&] { return sum(square(add_n({a, c, a}))); }, a);
  Tensor logits = random_tensor({5}, rng);
  run("cross_entropy", [&] { return cross_entropy(logits, 3); }, logits);

  // (b) one spatio-temporal layer, weights and input features.
  {
    PstLayerConfig cfg{"layer", 0.7, 2, 5, 1, 1, 6, 1, 1, 4};
    std::mt19937_64 init(7);
    PstOp op(cfg, 3, init);
    FeaturedClip in = random_featured(2, 8, 3, rng);
    in.frames[0].features.set_requires_grad(true);
    auto loss = [&] {
      const auto out = op.forward(in);
      Tensor s = sum(square(out.frames[0].features));
      return add(s, sum(square(out.frames[1].features)));
    };
    for (const auto& p : op.parameters()) run("pstop." + p.name, loss, p.tensor);
    run("pstop.input", loss, in.frames[0].features);
  }
  // (c) one transposed layer.
  {
    PstLayerConfig cfg{"layer", 0.0, 1, 4, 1, 2, 5, 0, 0, 3};
    std::mt19937_64 init(8);
    PstTransOp op(cfg, 3, init, false);
    FeaturedClip in = random_featured(2, 4, 3, rng);
    in.frames[1].features.set_requires_grad(true);
    std::vector<std::vector<Point3>> skip;
    for (int t = 0; t < 5; ++t) skip.push_back(oracle::random_points(8, rng));
    auto loss = [&] {
      Tensor total;
      for (const auto& f : op.forward(in, skip).frames) {
        Tensor s = sum(square(f.features));
        total = total.defined() ? add(total, s) : s;
      }
      return total;
    };
    for (const auto& p : op.parameters()) run("psttransop." + p.name, loss, p.tensor);
    run("psttransop.input", loss, in.frames[1].features);
  }
  // (d) miniature autoencoder, 2 frames x 8 points, reconstruction loss.
  {
    const Architecture arch = mini_architecture();
    arch.validate();
    Extractor extractor(arch.extractor, 9);
    extractor.freeze();
    Pstae model(arch, 10);
    // Zero biases over all-zero descriptor rows sit exactly on relu kinks,
    // where central differences disagree with any subgradient.
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    for (auto& p : model.parameters())
      if (p.name.ends_with("bias"))
        for (double& v : p.tensor.mutable_values()) v = jitter(rng);
    const auto clip = random_clip(2, 8, rng);
    const FeaturedClip desc = extractor.forward(clip);
    auto loss = [&] { return reconstruction_loss(desc, model.forward(desc)); };
    for (const auto& p : model.parameters()) run("mini." + p.name, loss, p.tensor);
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " over " +
                            std::to_string(checked) + " entries (worst: " + worst_name + ")"};
}

// --- 3 ---------------------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(13);
  std::size_t fps_bad = 0, ball_bad = 0, bg_bad = 0;
  double auroc_gap = 0.0;
  std::uniform_int_distribution<std::size_t> size(8, 256);
  for (int i = 0; i < 200; ++i) {
    const auto pts = oracle::random_points(size(rng), rng);
    const std::size_t n = std::max<std::size_t>(1, pts.size() / 4);
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    const std::size_t seed = pick(rng);
    const auto got = farthest_point_sampling(pts, n, seed);
    if (got != oracle::fps(pts, n, seed)) ++fps_bad;
    std::vector<Point3> anchors;
    for (auto j : got) anchors.push_back(pts[j]);
    const double radius = std::uniform_real_distribution<double>(0.05, 0.6)(rng);
    const auto table = ball_query(anchors, pts, radius, 9);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const auto row = table.row(a);
      if (std::vector<std::size_t>(row.begin(), row.end()) !=
          oracle::ball_row(anchors[a], pts, radius, 9)) {
        ++ball_bad;
        break;
      }
    }
  }
  for (int s = 0; s < 50; ++s) {
    PointVideo video;
    const std::size_t frames = std::uniform_int_distribution<std::size_t>(10, 70)(rng);
    const auto still = oracle::random_points(40, rng, 0.4);
    for (std::size_t t = 0; t < frames; ++t) {
      auto pts = oracle::random_points(60, rng, 0.4);
      pts.insert(pts.end(), still.begin(), still.end());
      video.push_back(oracle::frame_of(std::move(pts)));
    }
    BgsubConfig cfg;
    cfg.voxel_size = std::uniform_real_distribution<double>(0.03, 0.1)(rng);
    cfg.window_length = static_cast<int>(std::uniform_int_distribution<int>(5, 30)(rng));
    cfg.density_threshold = std::uniform_real_distribution<double>(0.0, 40.0)(rng);
    cfg.window = s % 2 ? BgWindow::kWholeVideo : BgWindow::kBlock;
    const auto split = classify_foreground(video, cfg);
    const auto mask = oracle::background_mask(video, cfg.voxel_size, cfg.window_length,
                                              cfg.density_threshold, s % 2 == 1);
    for (std::size_t t = 0; t < frames; ++t) {
      std::vector<Point3> fg, bg;
      for (std::size_t i = 0; i < video[t].size(); ++i)
        (mask[t][i] ? bg : fg).push_back(video[t].points[i]);
      if (split.foreground[t].points != fg || split.background[t].points != bg) {
        ++bg_bad;
        break;
      }
    }
  }
  for (int v = 0; v < 100; ++v) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 300)(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = v % 2 == 0;  // half the vectors have many ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::uniform_real_distribution<double>()(rng);
      if (coarse) s[i] = std::round(s[i] * 5.0) / 5.0;
      y[i] = std::bernoulli_distribution(0.3)(rng);
    }
    y[0] = 0;
    y[1] = 1;
    auroc_gap = std::max(auroc_gap, std::abs(auroc(s, y) - oracle::auroc(s, y)));
  }
  const bool ok = fps_bad == 0 && ball_bad == 0 && bg_bad == 0 && auroc_gap < 1e-9;
  return {ok, "fps mismatches " + std::to_string(fps_bad) + "/200, ball query " +
                  std::to_string(ball_bad) + "/200, background " + std::to_string(bg_bad) +
                  "/50, max auroc gap " + fmt("%.2g", auroc_gap) + " over 100"};
}

// --- 4 ---------------------------------------------------------------------

Outcome loss_equivalence() {
  std::mt19937_64 rng(17);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t L = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
    const std::size_t A = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    const std::size_t f = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
    const auto x = random_featured(L, A, f, rng);
    const auto y = random_featured(L, A, f, rng);
    double naive = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      double frame = 0.0;
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t c = 0; c < f; ++c) {
          const double d = x.frames[t].features.at(a * f + c) - y.frames[t].features.at(a * f + c);
          frame += d * d;
        }
      naive += frame;
    }
    naive /= static_cast<double>(L);
    const double got = reconstruction_loss(x, y).item();
    worst = std::max(worst, std::abs(got - naive) / std::abs(naive));
  }
  return {worst < 1e-12, "max relative error " + fmt("%.2g", worst) + " over 100 tensors"};
}

// --- 5 ---------------------------------------------------------------------

RunConfig small_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.preprocess.points_per_frame = 256;
  c.scene.frames = 30;
  return c;
}

Outcome overfit() {
  const auto t0 = Clock::now();
  RunConfig c = small_config(21);
  SceneConfig scene = c.scene;
  scene.seed = 21;
  const auto video = gen_video(scene, normal_scripts(scene, 0));
  const auto prepared = prepare_video(video.frames, c.preprocess, "overfit");
  std::vector<std::vector<PointFrame>> clips;
  for (const auto& clip : segment_video(prepared.frames, 15, false)) {
    std::vector<bool> empty(prepared.empty.begin() + clip.start_frame_index,
                            prepared.empty.begin() + clip.start_frame_index + 15);
    if (auto frames = fill_empty_frames(clip, empty)) clips.push_back(*frames);
  }
  clips.resize(std::min<std::size_t>(clips.size(), 2));
  Extractor extractor(8, 22);
  extractor.calibrate(clips);
  extractor.freeze();
  const auto desc = compute_descriptors(extractor, clips);
  Pstae model(8, 23);
  TrainOptions opt;
  opt.sgd = {0.01, 0.1, 1000, 1000, 1};  // constant rate, one clip per step
  opt.max_steps = 200;
  opt.seed = 24;
  const auto report = train_pstae(model, desc, opt);
  double before = 0.0, after = 0.0;
  Pstae fresh(8, 23);
  for (const auto& d : desc) {
    before += reconstruction_loss(d, fresh.forward(d)).item();
    after += reconstruction_loss(d, model.forward(d)).item();
  }
  const double secs = seconds_since(t0);
  return {clips.size() == 2 && report.step_losses.size() == 200 && after < 0.1 * before &&
              secs < 300.0,
          "loss " + fmt("%.4g", before) + " -> " + fmt("%.4g", after) + " (" +
              fmt("%.1f%%", 100.0 * after / before) + ") after " +
              std::to_string(report.step_losses.size()) + " steps, " + fmt("%.0fs", secs)};
}

// --- 6 ---------------------------------------------------------------------

RunConfig benchmark_config() {
  RunConfig c;
  c.seed = 11;
  c.preprocess.points_per_frame = 256;
  c.data.train_videos = 50;
  c.data.test_videos = 20;
  c.data.test_frames = 60;
  c.data.action_clips_per_class = 20;
  return c;
}

Outcome end_to_end(const fs::path& work) {
  const auto t0 = Clock::now();
  const RunConfig c = benchmark_config();
  const fs::path dir = work / "e2e";
  fs::remove_all(dir);
  const Manifest data = gen_data(c, (dir / "data").string());
  const auto pre = run_pretrain(c, data, (dir / "extractor.pstw").string());
  const Extractor extractor = load_extractor(c, (dir / "extractor.pstw").string());
  run_train(c, data, extractor, (dir / "model.pstw").string());
  const Pstae model = load_model(c, (dir / "model.pstw").string());
  const auto scored = run_score(c, data, extractor, model, "test", (dir / "scores").string());
  const EvalReport r = run_eval(read_score_dir((dir / "scores").string()), data.categories());
  const double secs = seconds_since(t0);
  const double acc = pre.result.train_accuracy;
  const double au = r.auroc.value_or(0.0), bg = r.bgsub_auroc.value_or(1.0);
  std::size_t normal = 0;
  for (const auto* v : data.split("train")) normal += v->category == "normal";
  const bool ok = acc >= 0.9 && normal >= 50 && scored.size() >= 20 && au >= 0.80 && au > bg &&
                  secs < 1800.0;
  std::string per;
  for (const auto& [name, cat] : r.per_category)
    if (cat.auroc) per += " " + name + "=" + fmt("%.3f", *cat.auroc);
  return {ok, "pretrain accuracy " + fmt("%.3f", acc) + ", AUROC " + fmt("%.3f", au) +
                  " vs BGsub " + fmt("%.3f", bg) + " on " + std::to_string(r.num_frames) +
                  " frames," + per + ", " + fmt("%.0fs", secs)};
}

// --- 7 ---------------------------------------------------------------------

Outcome translation_invariance() {
  std::mt19937_64 rng(29);
  Extractor extractor(8, 30);
  Pstae model(8, 31);
  std::uniform_real_distribution<double> off(-20.0, 20.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto clip = random_clip(15, 128, rng, 2.0);
    const Point3 shift{off(rng), off(rng), off(rng)};
    const FeaturedClip d0 = extractor.forward(clip);
    const FeaturedClip d1 = extractor.forward(translate(to_featured_clip(clip), shift));
    const auto l0 = per_frame_loss(d0, model.forward(d0));
    const auto l1 = per_frame_loss(d1, model.forward(d1));
    for (std::size_t t = 0; t < l0.size(); ++t)
      worst = std::max(worst, std::abs(l1[t] - l0[t]) / std::max(std::abs(l0[t]), 1e-300));
  }
  return {worst <= 1e-9, "max relative per-frame change " + fmt("%.2g", worst) + " over 20 clips"};
}

// --- 8 ---------------------------------------------------------------------

Outcome parameter_count() {
  const json dump = json::parse(arch_dump_json(RunConfig{}, 8));
  const double total = dump.at("total_parameters").get<double>();
  const double ratio = total / 7.45e6;
  return {ratio >= 0.5 && ratio <= 1.5,
          "arch-dump total " + std::to_string(static_cast<long long>(total)) + " (" +
              fmt("%.3f", ratio) + " of 7.45M; autoencoder alone " +
              std::to_string(dump.at("autoencoder_parameters").get<long long>()) + ")"};
}

// --- 9, 10: through the command-line tool ----------------------------------

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2); }

json reduced_config(std::uint64_t seed) {
  return {{"seed", seed},
          {"preprocess", {{"points_per_frame", 128}}},
          {"train", {{"epochs", 2}}},
          {"pretrain", {{"epochs", 5}, {"decay_epoch", 4}}},
          {"data",
           {{"train_videos", 4},
            {"test_videos", 4},
            {"train_frames", 30},
            {"test_frames", 30},
            {"action_clips_per_class", 4}}}};
}

bool valid_roc(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != "threshold,fpr,tpr") return false;
  double last_fpr = -1, last_tpr = -1, fpr = 0, tpr = 0, thr = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &thr, &fpr, &tpr) != 3) return false;
    if (fpr < last_fpr || tpr < last_tpr || fpr > 1 || tpr > 1) return false;
    last_fpr = fpr;
    last_tpr = tpr;
    ++rows;
  }
  return rows >= 2 && last_fpr == 1.0 && last_tpr == 1.0;
}

Outcome sweep_f(const std::string& cli, const fs::path& work) {
  const auto t0 = Clock::now();
  const fs::path dir = work / "sweep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_json(dir / "config.json", reduced_config(41));
  const std::string cfg = "--config \"" + (dir / "config.json").string() + "\" ";
  if (run_cli(cli, cfg + "gen-data --out \"" + (dir / "data").string() + "\"", dir / "gen.log") != 0)
    return {false, "gen-data failed"};
  if (run_cli(cli, cfg + "sweep-f --data \"" + (dir / "data").string() + "\" --out \"" +
                       (dir / "out").string() + "\"",
              dir / "sweep.log") != 0)
    return {false, "sweep-f exited nonzero (see " + (dir / "sweep.log").string() + ")"};
  std::vector<std::string> found;
  bool ok = true;
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    const auto name = e.path().filename().string();
    if (name.rfind("roc_f", 0) != 0) continue;
    found.push_back(name);
    ok = ok && valid_roc(e.path());
  }
  std::sort(found.begin(), found.end());
  ok = ok && found == std::vector<std::string>{"roc_f16.csv", "roc_f32.csv", "roc_f4.csv",
                                               "roc_f8.csv"};
  std::string list;
  for (const auto& f : found) list += " " + f;
  return {ok, std::to_string(found.size()) + " ROC files:" + list + ", " +
                  fmt("%.0fs", seconds_since(t0))};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  std::vector<std::map<std::string, std::string>> runs;
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = work / ("det" + std::to_string(r));
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_json(dir / "config.json", reduced_config(43));
    const std::string cfg = "--config \"" + (dir / "config.json").string() + "\" ";
    const std::string d = (dir / "data").string();
    const std::vector<std::string> steps{
        "gen-data --out \"" + d + "\"",
        "pretrain --data \"" + d + "\" --out \"" + (dir / "ex.pstw").string() + "\"",
        "train --data \"" + d + "\" --extractor \"" + (dir / "ex.pstw").string() + "\" --out \"" +
            (dir / "ae.pstw").string() + "\"",
        "score --data \"" + d + "\" --extractor \"" + (dir / "ex.pstw").string() +
            "\" --model \"" + (dir / "ae.pstw").string() + "\" --out \"" +
            (dir / "scores").string() + "\""};
    for (const auto& s : steps)
      if (run_cli(cli, cfg + s, dir / "step.log") != 0)
        return {false, "step failed: " + s.substr(0, s.find(' '))};
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir / "scores"))
      files[e.path().filename().string()] = slurp(e.path());
    runs.push_back(std::move(files));
  }
  const bool ok = !runs[0].empty() && runs[0] == runs[1];
  return {ok, std::to_string(runs[0].size()) + " CSV files, " +
                  (runs[0] == runs[1] ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string cli = "pstae";
  std::string work = (fs::temp_directory_path() / "pstae_acceptance").string();
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the pstae executable");
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"shape fidelity", shape_fidelity},
      {"gradient correctness", gradient_correctness},
      {"oracle equivalence", oracle_equivalence},
      {"loss equivalence", loss_equivalence},
      {"overfit sanity", overfit},
      {"end-to-end benchmark", [&] { return end_to_end(work); }},
      {"translation invariance", translation_invariance},
      {"parameter count", parameter_count},
      {"f sweep", [&] { return sweep_f(cli, work); }},
      {"determinism", [&] { return determinism(cli, work); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %2d %-24s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id,
                criteria[i].first.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
