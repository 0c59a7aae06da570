#include "pstae/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "pstae/errors.hpp"

namespace pstae {

namespace {

void check_aligned(const FeaturedClip& a, const FeaturedClip& b) {
  if (a.length() != b.length())
    throw ConfigError("loss: clips differ in length (" + std::to_string(a.length()) +
                      " vs " + std::to_string(b.length()) + ")");
  for (std::size_t i = 0; i < a.length(); ++i) {
    const Tensor& x = a.frames[i].features;
    const Tensor& y = b.frames[i].features;
    if (!x.defined() || !y.defined() || x.shape() != y.shape())
      throw ConfigError("loss: frame " + std::to_string(i) + " shapes differ");
  }
}

}  // namespace

// --- losses ---------------------------------------------------------------

Tensor reconstruction_loss(const FeaturedClip& target, const FeaturedClip& recon) {
  check_aligned(target, recon);
  std::vector<Tensor> terms;
  terms.reserve(target.length());
  for (std::size_t i = 0; i < target.length(); ++i)
    terms.push_back(sum(squared_difference(recon.frames[i].features,
                                           target.frames[i].features)));
  return scale(add_n(terms), 1.0 / static_cast<double>(target.length()));
}

std::vector<double> per_frame_loss(const FeaturedClip& target,
                                   const FeaturedClip& recon) {
  std::vector<double> out;
  for (const auto& row : anchor_errors(target, recon))
    out.push_back(std::accumulate(row.begin(), row.end(), 0.0));
  return out;
}

std::vector<std::vector<double>> anchor_errors(const FeaturedClip& target,
                                               const FeaturedClip& recon) {
  check_aligned(target, recon);
  std::vector<std::vector<double>> out(target.length());
  for (std::size_t i = 0; i < target.length(); ++i) {
    const auto x = target.frames[i].features.values();
    const auto y = recon.frames[i].features.values();
    const std::size_t anchors = target.frames[i].features.dim(0);
    const std::size_t c = target.frames[i].features.dim(1);
    out[i].assign(anchors, 0.0);
    for (std::size_t a = 0; a < anchors; ++a)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x[a * c + j] - y[a * c + j];
        out[i][a] += d * d;
      }
  }
  return out;
}

// --- scores ---------------------------------------------------------------

SmoothOrder parse_smooth_order(const std::string& name) {
  if (name == "pre-norm") return SmoothOrder::kPreNorm;
  if (name == "post-norm") return SmoothOrder::kPostNorm;
  throw ConfigError("unknown smoothing order '" + name +
                    "' (expected pre-norm or post-norm)");
}

std::string to_string(SmoothOrder order) {
  return order == SmoothOrder::kPreNorm ? "pre-norm" : "post-norm";
}

std::vector<double> moving_average(std::span<const double> values,
                                   std::size_t window) {
  if (window < 1) throw ConfigError("moving average window must be >= 1");
  std::vector<double> out(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
    double total = 0.0;
    for (std::size_t i = first; i <= t; ++i) total += values[i];
    out[t] = total / static_cast<double>(t - first + 1);
  }
  return out;
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = std::clamp((values[i] - *lo) / range, 0.0, 1.0);
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DataError("auroc: score and label counts differ");
  std::size_t positives = 0;
  for (int l : labels) positives += l ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw DataError("auroc: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with mid-ranks for ties.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t r = i; r < j; ++r)
      if (labels[order[r]]) positive_rank_sum += mid_rank;
    i = j;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DataError("roc_curve: score and label counts differ");
  std::size_t positives = 0;
  for (int l : labels) positives += l ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw DataError("roc_curve: labels contain a single class");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({threshold, static_cast<double>(fp) / static_cast<double>(negatives),
                     static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return curve;
}

ScoreSeries finalize_scores(std::string video_id, std::vector<double> raw,
                            std::vector<int> labels, SmoothOrder order,
                            std::size_t window) {
  if (labels.empty()) labels.assign(raw.size(), 0);
  if (labels.size() != raw.size())
    throw DataError("video " + video_id + ": " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(raw.size()) + " frames");
  ScoreSeries s;
  s.video_id = std::move(video_id);
  s.smoothed = moving_average(raw, window);
  if (order == SmoothOrder::kPreNorm) {
    s.score = min_max_normalize(s.smoothed);
  } else {
    s.score = moving_average(min_max_normalize(raw), window);
  }
  s.raw_loss = std::move(raw);
  s.label = std::move(labels);
  s.padded.assign(s.raw_loss.size(), false);
  return s;
}

void write_scores_csv(const std::string& path, const ScoreSeries& series) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "frame,raw_loss,smoothed,score,label\n";
  char buffer[160];
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::snprintf(buffer, sizeof(buffer), "%zu,%.17g,%.17g,%.17g,%d\n", i,
                  series.raw_loss[i], series.smoothed[i], series.score[i],
                  series.label[i]);
    out << buffer;
  }
}

ScoreSeries read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("frame,raw_loss,smoothed,score,label", 0) != 0)
    throw FormatError(path + ": missing scores header");
  ScoreSeries s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw FormatError(path + ": malformed row '" + line + "'");
    try {
      s.raw_loss.push_back(std::stod(cells[1]));
      s.smoothed.push_back(std::stod(cells[2]));
      s.score.push_back(std::stod(cells[3]));
      s.label.push_back(std::stoi(cells[4]) ? 1 : 0);
    } catch (const std::exception&) {
      throw FormatError(path + ": malformed row '" + line + "'");
    }
    s.padded.push_back(false);
  }
  return s;
}

// --- preprocessing --------------------------------------------------------

PreparedVideo prepare_video(const PointVideo& video, const PreprocessConfig& config,
                            const std::string& video_id) {
  PreparedVideo out;
  out.video_id = video_id;
  const ForegroundSplit split = classify_foreground(video, config.background);
  std::mt19937_64 rng(config.seed);
  for (const PointFrame& fg : split.foreground) {
    const bool empty = fg.size() < config.min_foreground_points;
    out.empty.push_back(empty);
    out.frames.push_back(empty ? PointFrame{}
                               : resample_frame(fg, config.points_per_frame, rng));
  }
  return out;
}

std::optional<std::vector<PointFrame>> fill_empty_frames(
    const Clip& clip, const std::vector<bool>& empty_in_clip) {
  const std::size_t n = clip.frames.size();
  std::vector<PointFrame> frames;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<std::size_t> source;
    for (std::size_t gap = 0; gap < n && !source; ++gap) {
      if (i >= gap && !empty_in_clip[i - gap]) source = i - gap;
      else if (i + gap < n && !empty_in_clip[i + gap]) source = i + gap;
    }
    if (!source) return std::nullopt;
    frames.push_back(clip.frames[*source]);
  }
  return frames;
}

// --- training -------------------------------------------------------------

std::vector<FeaturedClip> compute_descriptors(
    const Extractor& extractor, const std::vector<std::vector<PointFrame>>& clips) {
  std::vector<FeaturedClip> out;
  out.reserve(clips.size());
  for (const auto& clip : clips) {
    FeaturedClip d = extractor.forward(clip);
    for (auto& frame : d.frames) frame.features = frame.features.detach();
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

/// `clip_loss(i)` returns {reported loss, gradient weight}.
template <typename StepFn>
TrainReport run_sgd(std::size_t dataset_size, std::vector<Tensor> params,
                    const TrainOptions& options, StepFn&& clip_loss) {
  options.sgd.validate();
  if (dataset_size == 0) throw DataError("training set is empty");
  TrainReport report;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(options.sgd.batch_size);
  std::size_t steps = 0;
  for (int epoch = 1; epoch <= options.sgd.epochs; ++epoch) {
    const auto start = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t first = 0; first < order.size(); first += batch) {
      const std::size_t count = std::min(batch, order.size() - first);
      double batch_loss = 0.0;
      for (std::size_t i = first; i < first + count; ++i) {
        const auto [loss, weight] = clip_loss(order[i]);
        if (!std::isfinite(loss.item()))
          throw NumericError("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch));
        batch_loss += loss.item();
        scale(loss, weight / static_cast<double>(count)).backward();
      }
      sgd_step(params, options.sgd, epoch);
      report.step_losses.push_back(batch_loss / static_cast<double>(count));
      total += batch_loss;
      if (options.max_steps && ++steps >= options.max_steps) break;
    }
    const EpochStats stats{epoch, total / static_cast<double>(order.size()),
                           options.sgd.learning_rate_at(epoch),
                           std::chrono::duration<double>(Clock::now() - start).count()};
    report.epochs.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
    if (options.max_steps && steps >= options.max_steps) break;
  }
  return report;
}

}  // namespace

TrainReport train_pstae(Pstae& model, const std::vector<FeaturedClip>& descriptors,
                        const TrainOptions& options) {
  return run_sgd(descriptors.size(), model.parameter_tensors(), options,
                 [&](std::size_t i) {
                   const FeaturedClip& d = descriptors[i];
                   const double anchors = static_cast<double>(d.points());
                   return std::pair{reconstruction_loss(d, model.forward(d)),
                                    options.per_anchor_objective ? 1.0 / anchors : 1.0};
                 });
}

double classification_accuracy(const Extractor& extractor, const ActionHead& head,
                               const std::vector<LabeledClip>& clips) {
  if (clips.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& clip : clips) {
    const Tensor logits = head.forward(extractor.forward(clip.frames));
    const auto v = logits.values();
    const auto best = static_cast<std::size_t>(
        std::max_element(v.begin(), v.end()) - v.begin());
    correct += best == clip.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(clips.size());
}

PretrainResult pretrain_extractor(Extractor& extractor,
                                  const std::vector<LabeledClip>& clips,
                                  std::size_t num_classes,
                                  const TrainOptions& options, std::size_t hidden) {
  if (num_classes < 2) throw DataError("pretraining needs at least two classes");
  if (clips.empty()) throw DataError("pretraining set is empty");
  for (const auto& c : clips)
    if (c.label >= num_classes) throw DataError("clip label out of range");
  if (extractor.frozen()) throw UsageError("extractor is frozen");

  {
    std::vector<std::vector<PointFrame>> frames;
    for (const auto& clip : clips) frames.push_back(clip.frames);
    extractor.calibrate(frames);
  }
  ActionHead head(static_cast<std::size_t>(extractor.descriptor_dim()), hidden,
                  num_classes, options.seed ^ 0x5bd1e995ULL);
  {
    std::vector<Tensor> pooled;
    for (const auto& clip : clips) pooled.push_back(head.pool(extractor.forward(clip.frames)));
    head.fit_standardization(pooled);
  }
  std::vector<Tensor> params;
  for (auto& p : extractor.parameters()) params.push_back(p.tensor);
  for (auto& p : head.parameters()) params.push_back(p.tensor);

  PretrainResult result;
  result.report = run_sgd(clips.size(), params, options, [&](std::size_t i) {
    return std::pair{
        cross_entropy(head.forward(extractor.forward(clips[i].frames)), clips[i].label),
        1.0};
  });
  result.train_accuracy = classification_accuracy(extractor, head, clips);
  result.report.final_accuracy = result.train_accuracy;
  extractor.freeze();
  result.extractor_weights = extractor.parameters();
  return result;
}

// --- scoring --------------------------------------------------------------

ScoreSeries score_video(const PointVideo& video, const std::vector<int>& labels,
                        const Extractor& extractor, const Pstae& model,
                        const ScoreConfig& config, const std::string& video_id) {
  if (!labels.empty() && labels.size() != video.size())
    throw DataError("video " + video_id + ": " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(video.size()) + " frames");
  const PreparedVideo prepared = prepare_video(video, config.preprocess, video_id);
  const std::size_t length = config.preprocess.clip_length;
  const auto clips = segment_video(prepared.frames, length, true, video_id);

  std::vector<double> raw;
  raw.reserve(clips.size() * length);
  for (const Clip& clip : clips) {
    std::vector<bool> empty(length);
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t source =
          std::min(clip.start_frame_index + i, prepared.frames.size() - 1);
      empty[i] = prepared.empty[source];
    }
    const auto frames = fill_empty_frames(clip, empty);
    if (!frames) {
      raw.insert(raw.end(), length, 0.0);
      continue;
    }
    const FeaturedClip descriptors = extractor.forward(*frames);
    const auto losses = per_frame_loss(descriptors, model.forward(descriptors));
    for (std::size_t i = 0; i < length; ++i) raw.push_back(empty[i] ? 0.0 : losses[i]);
  }
  raw.resize(video.size());  // drop padded tail frames
  return finalize_scores(video_id, std::move(raw), labels, config.smooth_order,
                         config.smoothing_window);
}

ClipHeatmap heatmap(const std::vector<PointFrame>& clip, const Extractor& extractor,
                    const Pstae& model) {
  const FeaturedClip descriptors = extractor.forward(clip);
  const FeaturedClip recon = model.forward(descriptors);
  ClipHeatmap out;
  out.errors = anchor_errors(descriptors, recon);
  for (const auto& frame : descriptors.frames) out.coords.push_back(frame.coords);
  return out;
}

// --- evaluation -----------------------------------------------------------

namespace {

struct Pool {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<double> bgsub;
  bool has_bgsub = true;
};

void fill_result(const Pool& pool, std::optional<double>& auc,
                 std::optional<double>& bg_auc, std::string& error) {
  try {
    auc = auroc(pool.scores, pool.labels);
    if (pool.has_bgsub) bg_auc = auroc(pool.bgsub, pool.labels);
  } catch (const DataError& e) {
    error = e.what();
  }
}

}  // namespace

EvalReport evaluate(const std::vector<ScoreSeries>& series,
                    const std::map<std::string, std::vector<int>>& bgsub,
                    const std::map<std::string, std::string>& categories) {
  Pool all;
  std::map<std::string, Pool> by_category;
  for (const ScoreSeries& s : series) {
    auto bg = bgsub.find(s.video_id);
    const bool has_bg = bg != bgsub.end();
    if (has_bg && bg->second.size() != s.size())
      throw DataError("bgsub scores for " + s.video_id + " have the wrong length");
    auto cat = categories.find(s.video_id);
    Pool* category = cat == categories.end() ? nullptr : &by_category[cat->second];
    for (Pool* p : {&all, category}) {
      if (!p) continue;
      p->has_bgsub = p->has_bgsub && has_bg;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.padded[i]) continue;
        p->scores.push_back(s.score[i]);
        p->labels.push_back(s.label[i]);
        p->bgsub.push_back(has_bg ? bg->second[i] : 0.0);
      }
    }
  }
  EvalReport report;
  report.num_frames = all.scores.size();
  all.has_bgsub = all.has_bgsub && !series.empty();
  fill_result(all, report.auroc, report.bgsub_auroc, report.error);
  for (const auto& [name, pool] : by_category) {
    CategoryResult r;
    r.num_frames = pool.scores.size();
    fill_result(pool, r.auroc, r.bgsub_auroc, r.error);
    report.per_category[name] = r;
  }
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["auroc"] = opt(report.auroc);
  j["bgsub_auroc"] = opt(report.bgsub_auroc);
  j["num_frames"] = report.num_frames;
  if (!report.error.empty()) j["error"] = report.error;
  j["per_category"] = json::object();
  for (const auto& [name, r] : report.per_category) {
    json c{{"auroc", opt(r.auroc)},
           {"bgsub_auroc", opt(r.bgsub_auroc)},
           {"num_frames", r.num_frames}};
    if (!r.error.empty()) c["error"] = r.error;
    j["per_category"][name] = c;
  }
  return j.dump(2);
}

}  // namespace pstae
