#pragma once

// Training loops, descriptor reconstruction loss, per-frame anomaly scores,
// AUROC evaluation and reconstruction-error heat maps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pstae/background.hpp"
#include "pstae/layers.hpp"
#include "pstae/pointcloud_io.hpp"
#include "pstae/tensor.hpp"

namespace pstae {

inline constexpr std::size_t kDefaultPointsPerFrame = 2048;
inline constexpr std::size_t kDefaultClipLength = 15;
inline constexpr std::size_t kDefaultSmoothingWindow = 10;
inline constexpr std::size_t kMinForegroundPoints = 16;

// --- losses ---------------------------------------------------------------

/// (1/L) * sum_i ||F_i - G_i||_F^2 as a differentiable scalar.
Tensor reconstruction_loss(const FeaturedClip& target, const FeaturedClip& recon);
/// ||F_i - G_i||_F^2 per frame.
std::vector<double> per_frame_loss(const FeaturedClip& target,
                                   const FeaturedClip& recon);
/// Squared error per anchor, per frame. Rows sum to per_frame_loss.
std::vector<std::vector<double>> anchor_errors(const FeaturedClip& target,
                                               const FeaturedClip& recon);

// --- scores ---------------------------------------------------------------

enum class SmoothOrder {
  kPreNorm,   // smooth raw losses, then min-max normalize
  kPostNorm,  // min-max normalize, then smooth
};

SmoothOrder parse_smooth_order(const std::string& name);
std::string to_string(SmoothOrder order);

/// Causal trailing mean over frames max(0, t - window + 1)..t.
std::vector<double> moving_average(std::span<const double> values,
                                   std::size_t window);
/// (v - min) / (max - min); all zeros when max == min.
std::vector<double> min_max_normalize(std::span<const double> values);

/// Probability that a random positive outranks a random negative, ties
/// counted one half. Throws DataError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const int> labels);

struct ScoreSeries {
  std::string video_id;
  std::vector<double> raw_loss;
  std::vector<double> smoothed;
  std::vector<double> score;
  std::vector<int> label;
  std::vector<bool> padded;

  std::size_t size() const { return raw_loss.size(); }
};

/// Builds smoothed and normalized columns from raw losses.
ScoreSeries finalize_scores(std::string video_id, std::vector<double> raw,
                            std::vector<int> labels, SmoothOrder order,
                            std::size_t window = kDefaultSmoothingWindow);

void write_scores_csv(const std::string& path, const ScoreSeries& series);
ScoreSeries read_scores_csv(const std::string& path);

// --- preprocessing --------------------------------------------------------

struct PreprocessConfig {
  BgsubConfig background;
  std::size_t points_per_frame = kDefaultPointsPerFrame;
  std::size_t clip_length = kDefaultClipLength;
  std::size_t min_foreground_points = kMinForegroundPoints;
  std::uint64_t seed = 0;
};

struct PreparedVideo {
  std::string video_id;
  PointVideo frames;        // foreground, resampled; empty frames stay empty
  std::vector<bool> empty;  // foreground below min_foreground_points
};

/// Background subtraction then per-frame resampling.
PreparedVideo prepare_video(const PointVideo& video, const PreprocessConfig& config,
                            const std::string& video_id);

/// Clip input frames: empty frames borrow the nearest non-empty frame of the
/// same clip. Returns nullopt when every frame is empty.
std::optional<std::vector<PointFrame>> fill_empty_frames(
    const Clip& clip, const std::vector<bool>& empty_in_clip);

// --- training -------------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::vector<double> step_losses;
  std::string checkpoint_path;
  double final_accuracy = 0.0;  // pretraining only
};

struct TrainOptions {
  SgdConfig sgd;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0: run all epochs
  /// Autoencoder only: descend on the loss divided by the anchor count
  /// (same minimizer, step size independent of cloud size). Reported
  /// losses are never divided.
  bool per_anchor_objective = true;
  std::function<void(const EpochStats&)> on_epoch;
};

/// Extractor descriptors for a batch of clips, computed once (the extractor
/// is frozen so they never change).
std::vector<FeaturedClip> compute_descriptors(const Extractor& extractor,
                                              const std::vector<std::vector<PointFrame>>& clips);

/// Minimizes the descriptor reconstruction loss with mini-batch SGD.
TrainReport train_pstae(Pstae& model, const std::vector<FeaturedClip>& descriptors,
                        const TrainOptions& options);

struct LabeledClip {
  std::vector<PointFrame> frames;
  std::size_t label = 0;
};

struct PretrainResult {
  TrainReport report;
  std::vector<NamedTensor> extractor_weights;  // head excluded
  double train_accuracy = 0.0;
};

/// Trains extractor + action head with cross-entropy, then freezes the
/// extractor and returns only its weights.
PretrainResult pretrain_extractor(Extractor& extractor,
                                  const std::vector<LabeledClip>& clips,
                                  std::size_t num_classes,
                                  const TrainOptions& options,
                                  std::size_t hidden = 32);

double classification_accuracy(const Extractor& extractor, const ActionHead& head,
                               const std::vector<LabeledClip>& clips);

// --- scoring --------------------------------------------------------------

struct ScoreConfig {
  PreprocessConfig preprocess;
  SmoothOrder smooth_order = SmoothOrder::kPreNorm;
  std::size_t smoothing_window = kDefaultSmoothingWindow;
};

ScoreSeries score_video(const PointVideo& video, const std::vector<int>& labels,
                        const Extractor& extractor, const Pstae& model,
                        const ScoreConfig& config, const std::string& video_id);

struct ClipHeatmap {
  std::vector<std::vector<Point3>> coords;   // per frame anchors
  std::vector<std::vector<double>> errors;   // per frame, per anchor
};

ClipHeatmap heatmap(const std::vector<PointFrame>& clip, const Extractor& extractor,
                    const Pstae& model);

// --- evaluation -----------------------------------------------------------

struct CategoryResult {
  std::optional<double> auroc;
  std::optional<double> bgsub_auroc;
  std::size_t num_frames = 0;
  std::string error;
};

struct EvalReport {
  std::optional<double> auroc;
  std::optional<double> bgsub_auroc;
  std::size_t num_frames = 0;
  std::map<std::string, CategoryResult> per_category;
  std::string error;
};

/// Pools all frames of all series. `bgsub` holds the baseline's per-frame
/// scores per video id (optional); `categories` maps video id -> category.
EvalReport evaluate(const std::vector<ScoreSeries>& series,
                    const std::map<std::string, std::vector<int>>& bgsub,
                    const std::map<std::string, std::string>& categories);

std::string eval_report_json(const EvalReport& report);

}  // namespace pstae
