#pragma once

// Run configuration and the experiment steps behind the CLI subcommands:
// dataset generation, pretraining, training, scoring, evaluation, heat maps,
// the descriptor-dimension sweep and the architecture dump.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pstae/layers.hpp"
#include "pstae/pipeline.hpp"
#include "pstae/synthetic.hpp"

namespace pstae {

inline constexpr const char* kVersion = "0.1.0";

struct DataConfig {
  std::size_t train_videos = 50;
  std::size_t test_videos = 20;
  std::size_t train_frames = 60;
  std::size_t test_frames = 60;
  std::size_t action_clips_per_class = 20;
  std::vector<Behavior> anomalies{Behavior::kRun, Behavior::kCollapse, Behavior::kCrawl,
                                  Behavior::kLeaveObject, Behavior::kArgue};
};

struct RunConfig {
  std::uint64_t seed = 0;
  int f = 8;
  PreprocessConfig preprocess;
  SgdConfig train;
  SgdConfig pretrain{0.01, 0.1, 50, 60, 8};
  std::size_t pretrain_hidden = 32;
  std::size_t max_train_steps = 0;  // 0: all epochs
  SmoothOrder smooth_order = SmoothOrder::kPreNorm;
  std::size_t smoothing_window = kDefaultSmoothingWindow;
  SceneConfig scene;
  DataConfig data;
  std::size_t workers = 1;
  /// Per-layer overrides keyed by layer name, as a JSON object text.
  std::string layer_overrides = "{}";

  /// Built-in rows for descriptor dimension f with the overrides applied.
  Architecture architecture(int f) const;
  Architecture architecture() const { return architecture(f); }
  void validate() const;
};

RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

/// splitmix64 over (base, tag, index); stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                          std::uint64_t index = 0);

// --- dataset --------------------------------------------------------------

struct VideoEntry {
  std::string id;
  std::string split;     // "train" or "test"
  std::string category;  // "normal" or an anomaly name
  std::string video;     // paths relative to the dataset directory
  std::string labels;
};

struct ActionClipEntry {
  std::string file;
  std::size_t label = 0;
};

struct Manifest {
  std::string root;
  std::vector<VideoEntry> videos;
  std::vector<std::string> action_classes;
  std::vector<ActionClipEntry> action_clips;

  std::vector<const VideoEntry*> split(const std::string& name) const;
  std::map<std::string, std::string> categories() const;
};

Manifest gen_data(const RunConfig& config, const std::string& out_dir);
Manifest read_manifest(const std::string& data_dir);

// --- steps ----------------------------------------------------------------

std::string train_report_json(const TrainReport& report);

struct PretrainOutcome {
  PretrainResult result;
  std::string report_json;
};
PretrainOutcome run_pretrain(const RunConfig& config, const Manifest& data,
                             const std::string& weights_out);

/// Loads extractor weights and freezes them.
Extractor load_extractor(const RunConfig& config, const std::string& path);
Pstae load_model(const RunConfig& config, const std::string& path);

/// Preprocessed, non-padded training clips of every train-split video.
std::vector<std::vector<PointFrame>> training_clips(const RunConfig& config,
                                                    const Manifest& data);

struct TrainOutcome {
  TrainReport report;
  std::string report_json;
};
TrainOutcome run_train(const RunConfig& config, const Manifest& data,
                       const Extractor& extractor, const std::string& weights_out);

struct ScoredVideo {
  ScoreSeries series;
  std::vector<int> bgsub;
};

/// Scores every video of a split. With a non-empty `out_dir`, writes
/// `<id>.csv` and the baseline sidecar `<id>.bgsub.csv`.
std::vector<ScoredVideo> run_score(const RunConfig& config, const Manifest& data,
                                   const Extractor& extractor, const Pstae& model,
                                   const std::string& split, const std::string& out_dir);

void write_bgsub_csv(const std::string& path, const std::vector<int>& scores);
std::vector<int> read_bgsub_csv(const std::string& path);

/// Reads every score CSV (and baseline sidecar) in a directory.
std::vector<ScoredVideo> read_score_dir(const std::string& dir);
EvalReport run_eval(const std::vector<ScoredVideo>& scored,
                    const std::map<std::string, std::string>& categories);

/// Writes one PLY per frame of clip `clip_index`; returns the written paths.
std::vector<std::string> run_heatmap(const RunConfig& config, const Manifest& data,
                                     const Extractor& extractor, const Pstae& model,
                                     const std::string& video_id, std::size_t clip_index,
                                     const std::string& out_dir);

struct SweepEntry {
  int f = 0;
  std::optional<double> auroc;
  std::string roc_path;
  double pretrain_accuracy = 0.0;
};
/// Pretrains, trains and scores once per f in {4, 8, 16, 32}; writes
/// `roc_f<f>.csv` (threshold,fpr,tpr) plus `sweep_summary.json`.
std::vector<SweepEntry> run_sweep_f(const RunConfig& config, const Manifest& data,
                                    const std::string& out_dir);

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc);

struct LayerParameters {
  std::string name;
  std::size_t parameters = 0;
};
std::vector<LayerParameters> layer_parameter_counts(const RunConfig& config, int f);
std::string arch_dump_json(const RunConfig& config, int f);

}  // namespace pstae
