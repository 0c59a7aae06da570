// pstae: command-line driver for the point-cloud video anomaly pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pstae/errors.hpp"
#include "pstae/experiment.hpp"

namespace {

using nlohmann::json;
using namespace pstae;

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  return kind == "usage" || kind == "config" ? 2 : 1;
}

void write_file(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text << "\n";
}

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> f;
  std::optional<double> voxel_size;
  std::optional<int> bg_frames;
  std::optional<double> bg_threshold;
  std::optional<std::string> bg_window;
  std::optional<std::string> smooth_order;
  std::optional<std::size_t> workers;

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) c.seed = *seed;
    if (f) c.f = *f;
    if (voxel_size) {
      c.preprocess.background.voxel_size = *voxel_size;
      c.scene.voxel_size = *voxel_size;
    }
    if (bg_frames) c.preprocess.background.window_length = *bg_frames;
    if (bg_threshold) c.preprocess.background.density_threshold = *bg_threshold;
    if (bg_window) c.preprocess.background.window = parse_bg_window(*bg_window);
    if (smooth_order) c.smooth_order = parse_smooth_order(*smooth_order);
    if (workers) c.workers = *workers;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud video anomaly detection with a point spatio-temporal autoencoder"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Overrides o;
  bool version = false;
  app.add_flag("--version", version, "Print tool and file format versions");
  app.add_option("--config", o.config_path, "Run configuration (JSON)");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--f", o.f, "Local descriptor dimension (4, 8, 16, 32)");
  app.add_option("--voxel-size", o.voxel_size, "Background voxel edge (m)");
  app.add_option("--bg-frames", o.bg_frames, "Frames per background density block");
  app.add_option("--bg-threshold", o.bg_threshold, "Density above which a voxel is background");
  app.add_option("--bg-window", o.bg_window, "block | whole-video");
  app.add_option("--smooth-order", o.smooth_order, "pre-norm | post-norm");
  app.add_option("--workers", o.workers, "Per-video worker threads for gen-data and score");

  std::string data, out, report, extractor_path, model_path, scores, split = "test", video;
  std::size_t clip = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  gen->add_option("--out", out, "Output dataset directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Pretrain the descriptor extractor");
  pre->add_option("--data", data, "Dataset directory")->required();
  pre->add_option("--out", out, "Extractor checkpoint (PSTW)")->required();
  pre->add_option("--report", report, "Report JSON path");

  auto* train = app.add_subcommand("train", "Train the autoencoder on normal videos");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--extractor", extractor_path, "Extractor checkpoint")->required();
  train->add_option("--out", out, "Autoencoder checkpoint (PSTW)")->required();
  train->add_option("--report", report, "Report JSON path");

  auto* score = app.add_subcommand("score", "Write per-frame anomaly scores");
  score->add_option("--data", data, "Dataset directory")->required();
  score->add_option("--extractor", extractor_path, "Extractor checkpoint")->required();
  score->add_option("--model", model_path, "Autoencoder checkpoint")->required();
  score->add_option("--out", out, "Score directory")->required();
  score->add_option("--split", split, "Dataset split to score");

  auto* eval = app.add_subcommand("eval", "Frame-level AUROC with the BGsub baseline");
  eval->add_option("--scores", scores, "Score directory")->required();
  eval->add_option("--data", data, "Dataset directory (for categories)");
  eval->add_option("--out", out, "Evaluation JSON path");

  auto* heat = app.add_subcommand("heatmap", "Export per-anchor reconstruction errors as PLY");
  heat->add_option("--data", data, "Dataset directory")->required();
  heat->add_option("--extractor", extractor_path, "Extractor checkpoint")->required();
  heat->add_option("--model", model_path, "Autoencoder checkpoint")->required();
  heat->add_option("--video", video, "Video id")->required();
  heat->add_option("--clip", clip, "Clip index within the video");
  heat->add_option("--out", out, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep-f", "Run the pipeline for f in {4, 8, 16, 32}");
  sweep->add_option("--data", data, "Dataset directory")->required();
  sweep->add_option("--out", out, "Output directory")->required();

  auto* arch = app.add_subcommand("arch-dump", "Print per-layer parameter counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (version) {
      std::printf("pstae %s\nPCV1 version 1\nPSTW version %u\n", kVersion,
                  static_cast<unsigned>(kWeightFormatVersion));
      return 0;
    }
    if (app.get_subcommands().empty()) throw UsageError("a subcommand is required");
    const RunConfig config = o.resolve();

    if (gen->parsed()) {
      const Manifest m = gen_data(config, out);
      std::cout << json{{"videos", m.videos.size()},
                        {"action_clips", m.action_clips.size()},
                        {"manifest", (std::filesystem::path(out) / "manifest.json").string()}}
                       .dump(2)
                << "\n";
    } else if (pre->parsed()) {
      const auto outcome = run_pretrain(config, read_manifest(data), out);
      write_file(report, outcome.report_json);
      std::cout << outcome.report_json << "\n";
    } else if (train->parsed()) {
      const Extractor ex = load_extractor(config, extractor_path);
      const auto outcome = run_train(config, read_manifest(data), ex, out);
      write_file(report, outcome.report_json);
      std::cout << outcome.report_json << "\n";
    } else if (score->parsed()) {
      const Extractor ex = load_extractor(config, extractor_path);
      const Pstae model = load_model(config, model_path);
      const auto scored = run_score(config, read_manifest(data), ex, model, split, out);
      std::cout << json{{"videos", scored.size()}, {"out", out}}.dump(2) << "\n";
    } else if (eval->parsed()) {
      std::map<std::string, std::string> categories;
      if (!data.empty()) categories = read_manifest(data).categories();
      const std::string text = eval_report_json(run_eval(read_score_dir(scores), categories));
      write_file(out, text);
      std::cout << text << "\n";
    } else if (heat->parsed()) {
      const Extractor ex = load_extractor(config, extractor_path);
      const Pstae model = load_model(config, model_path);
      const auto files = run_heatmap(config, read_manifest(data), ex, model, video, clip, out);
      std::cout << json{{"files", files}}.dump(2) << "\n";
    } else if (sweep->parsed()) {
      json j = json::array();
      for (const auto& e : run_sweep_f(config, read_manifest(data), out))
        j.push_back({{"f", e.f},
                     {"auroc", e.auroc ? json(*e.auroc) : json(nullptr)},
                     {"roc", e.roc_path}});
      std::cout << j.dump(2) << "\n";
    } else if (arch->parsed()) {
      std::cout << arch_dump_json(config, config.f) << "\n";
    }
    return 0;
  } catch (const pstae::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
