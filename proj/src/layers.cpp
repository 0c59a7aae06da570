#include "pstae/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pstae/errors.hpp"

namespace pstae {

void PstLayerConfig::validate(bool transposed) const {
  const std::string where = "layer " + name + ": ";
  if (!transposed) {
    if (!(spatial_radius > 0.0)) throw ConfigError(where + "spatial radius must be > 0");
    if (spatial_stride < 1) throw ConfigError(where + "spatial stride must be >= 1");
  }
  if (spatial_channels < 1 || temporal_channels < 1)
    throw ConfigError(where + "channel counts must be >= 1");
  if (temporal_radius < 0) throw ConfigError(where + "temporal radius must be >= 0");
  if (temporal_stride < 1) throw ConfigError(where + "temporal stride must be >= 1");
  if (max_neighbors < 1) throw ConfigError(where + "max neighbors must be >= 1");
}

std::size_t FeaturedClip::channels() const {
  if (frames.empty() || !frames[0].features.defined()) return 0;
  return frames[0].features.dim(1);
}

FeaturedClip to_featured_clip(const std::vector<PointFrame>& frames) {
  FeaturedClip clip;
  for (const PointFrame& f : frames) {
    FeaturedFrame ff;
    ff.coords = f.points;
    if (f.feature_dim > 0 && !f.points.empty())
      ff.features = Tensor::from({f.size(), f.feature_dim}, f.features);
    clip.frames.push_back(std::move(ff));
  }
  return clip;
}

FeaturedClip translate(const FeaturedClip& clip, Point3 offset) {
  FeaturedClip out = clip;
  for (auto& frame : out.frames)
    for (Point3& p : frame.coords) p = p + offset;
  return out;
}

namespace {

void check_clip(const FeaturedClip& clip, std::size_t channels,
                const std::string& layer) {
  if (clip.frames.empty()) throw ConfigError(layer + ": empty clip");
  for (const auto& frame : clip.frames) {
    if (frame.coords.empty())
      throw DataError(layer + ": empty frame (filter empty foreground first)");
    const std::size_t c = frame.features.defined() ? frame.features.dim(1) : 0;
    if (c != channels)
      throw ConfigError(layer + ": expected " + std::to_string(channels) +
                        " input channels, got " + std::to_string(c));
    if (frame.features.defined() && frame.features.dim(0) != frame.coords.size())
      throw ConfigError(layer + ": feature rows do not match coordinates");
  }
}

}  // namespace

// --- PstOp ----------------------------------------------------------------

PstOp::PstOp(PstLayerConfig config, std::size_t in_channels,
             std::mt19937_64& rng, LayerOptions options)
    : config_(std::move(config)), in_channels_(in_channels), options_(options) {
  config_.validate(false);
  const auto cs = static_cast<std::size_t>(config_.spatial_channels);
  const auto ct = static_cast<std::size_t>(config_.temporal_channels);
  const auto window = static_cast<std::size_t>(2 * config_.temporal_radius + 1);
  // The offset and feature blocks are two halves of one [3 + c_in, c_s] layer.
  w_offset_ = Tensor::xavier_uniform({3, cs}, 3 + in_channels_, cs, rng);
  if (in_channels_ > 0)
    w_feature_ = Tensor::xavier_uniform({in_channels_, cs}, 3 + in_channels_, cs, rng);
  b_spatial_ = Tensor::zeros({cs}, true);
  w_temporal_ = Tensor::xavier_uniform({window * cs, ct}, window * cs, ct, rng);
  b_temporal_ = Tensor::zeros({ct}, true);
}

Tensor PstOp::spatial_features(const FeaturedFrame& frame,
                               const Tensor& projected,
                               const std::vector<Point3>& anchors) const {
  const std::size_t k = config_.max_neighbors;
  const NeighborTable table =
      ball_query(anchors, frame.coords, config_.spatial_radius, k);
  std::vector<double> offsets(anchors.size() * k * 3);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const auto row = table.row(a);
    for (std::size_t j = 0; j < k; ++j) {
      const Point3 d = frame.coords[row[j]] - anchors[a];
      double* o = offsets.data() + (a * k + j) * 3;
      o[0] = d.x;
      o[1] = d.y;
      o[2] = d.z;
    }
  }
  Tensor z = matmul(Tensor::from({anchors.size() * k, 3}, std::move(offsets)),
                    w_offset_);
  if (projected.defined()) z = add(z, gather_rows(projected, table.neighbors));
  z = add_bias(z, b_spatial_);
  const auto cs = static_cast<std::size_t>(config_.spatial_channels);
  // relu(max(.)) == max(relu(.)) and routes gradients identically.
  return relu(max_over_axis(reshape(z, {anchors.size(), k, cs}), 1));
}

FeaturedClip PstOp::forward(const FeaturedClip& input) const {
  check_clip(input, in_channels_, config_.name);
  const TemporalPlan plan = temporal_plan(
      static_cast<int>(input.length()), config_.temporal_radius,
      config_.temporal_stride, config_.pad_begin, config_.pad_end);
  const auto cs = static_cast<std::size_t>(config_.spatial_channels);

  // Feature projections are shared by every window that touches a frame.
  std::vector<Tensor> projected(input.length());
  auto projection = [&](std::size_t t) -> const Tensor& {
    if (in_channels_ > 0 && !projected[t].defined())
      projected[t] = matmul(input.frames[t].features, w_feature_);
    return projected[t];
  };

  FeaturedClip output;
  for (int out = 0; out < plan.output_length; ++out) {
    const auto center = static_cast<std::size_t>(plan.anchor_frames[static_cast<std::size_t>(out)]);
    const auto& source = input.frames[center].coords;
    const std::size_t anchor_count =
        source.size() / static_cast<std::size_t>(config_.spatial_stride);
    if (anchor_count == 0)
      throw DataError(config_.name + ": too few points for spatial stride");
    const auto picks =
        farthest_point_sampling(source, anchor_count, options_.fps_seed);
    std::vector<Point3> anchors;
    anchors.reserve(picks.size());
    for (std::size_t i : picks) anchors.push_back(source[i]);

    std::vector<Tensor> window;
    std::vector<std::size_t> widths;
    for (int delta = -config_.temporal_radius; delta <= config_.temporal_radius;
         ++delta) {
      const int t = plan.window_frame(out, delta);
      widths.push_back(cs);
      if (t < 0 || t >= plan.input_length) {
        window.emplace_back();  // padding frame: zero block
        continue;
      }
      const auto ti = static_cast<std::size_t>(t);
      window.push_back(spatial_features(input.frames[ti], projection(ti), anchors));
    }
    Tensor h = window.size() == 1 && window[0].defined()
                   ? window[0]
                   : concat_cols(window, widths, anchors.size());
    h = relu(add_bias(matmul(h, w_temporal_), b_temporal_));
    output.frames.push_back({std::move(anchors), std::move(h)});
  }
  return output;
}

std::vector<NamedTensor> PstOp::parameters() const {
  std::vector<NamedTensor> out{{config_.name + ".spatial.w_offset", w_offset_}};
  if (w_feature_.defined())
    out.push_back({config_.name + ".spatial.w_feature", w_feature_});
  out.push_back({config_.name + ".spatial.bias", b_spatial_});
  out.push_back({config_.name + ".temporal.weight", w_temporal_});
  out.push_back({config_.name + ".temporal.bias", b_temporal_});
  return out;
}

std::size_t PstOp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

// --- interpolation --------------------------------------------------------

InterpolationTable three_nn_interpolation(const std::vector<Point3>& targets,
                                          const std::vector<Point3>& sources) {
  if (sources.empty()) throw DataError("interpolation: no source anchors");
  InterpolationTable table;
  table.k = std::min<std::size_t>(3, sources.size());
  table.indices.resize(targets.size() * table.k);
  table.weights.resize(targets.size() * table.k);
  std::vector<std::pair<double, std::size_t>> best;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    best.clear();
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const double d = squared_distance(targets[t], sources[s]);
      if (best.size() == table.k && !(d < best.back().first)) continue;
      auto pos = std::upper_bound(
          best.begin(), best.end(), d,
          [](double v, const auto& e) { return v < e.first; });
      if (best.size() == table.k) best.pop_back();
      best.insert(pos, {d, s});
    }
    std::size_t* idx = table.indices.data() + t * table.k;
    double* w = table.weights.data() + t * table.k;
    for (std::size_t j = 0; j < table.k; ++j) idx[j] = best[j].second;
    if (best.front().first == 0.0) {
      std::fill(w, w + table.k, 0.0);
      w[0] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < table.k; ++j) {
      w[j] = 1.0 / best[j].first;
      total += w[j];
    }
    for (std::size_t j = 0; j < table.k; ++j) w[j] /= total;
  }
  return table;
}

// --- PstTransOp -----------------------------------------------------------

PstTransOp::PstTransOp(PstLayerConfig config, std::size_t in_channels,
                       std::mt19937_64& rng, bool final_layer)
    : config_(std::move(config)), in_channels_(in_channels), final_layer_(final_layer) {
  config_.validate(true);
  if (in_channels_ < 1) throw ConfigError(config_.name + ": needs input channels");
  const auto cs = static_cast<std::size_t>(config_.spatial_channels);
  const auto ct = static_cast<std::size_t>(config_.temporal_channels);
  const auto window = static_cast<std::size_t>(2 * config_.temporal_radius + 1);
  w_temporal_ = Tensor::xavier_uniform({in_channels_, window * ct}, in_channels_, ct, rng);
  b_temporal_ = Tensor::zeros({ct}, true);
  w_spatial_ = Tensor::xavier_uniform({ct, cs}, ct, cs, rng);
  b_spatial_ = Tensor::zeros({cs}, true);
}

FeaturedClip PstTransOp::forward(const FeaturedClip& input,
                                 const std::vector<std::vector<Point3>>& skip) const {
  check_clip(input, in_channels_, config_.name);
  const TemporalPlan plan = transposed_temporal_plan(
      static_cast<int>(input.length()), config_.temporal_radius,
      config_.temporal_stride, config_.pad_begin, config_.pad_end);
  if (skip.size() != static_cast<std::size_t>(plan.output_length))
    throw ConfigError(config_.name + ": skip connection has " +
                      std::to_string(skip.size()) + " frames, plan needs " +
                      std::to_string(plan.output_length));
  const std::size_t anchors = input.points();
  for (const auto& frame : input.frames)
    if (frame.coords.size() != anchors)
      throw ConfigError(config_.name + ": input frames differ in anchor count");

  const auto ct = static_cast<std::size_t>(config_.temporal_channels);
  std::vector<std::vector<Tensor>> contributions(static_cast<std::size_t>(plan.output_length));
  for (int k = 0; k < plan.input_length; ++k) {
    const Tensor mapped = matmul(input.frames[static_cast<std::size_t>(k)].features, w_temporal_);
    for (const auto& [slot, out] : plan.scatter_targets(k)) {
      contributions[static_cast<std::size_t>(out)].push_back(
          slice_cols(mapped, static_cast<std::size_t>(slot) * ct, ct));
    }
  }

  FeaturedClip output;
  for (int j = 0; j < plan.output_length; ++j) {
    // Features at output frame j live on the anchors of the input frame whose
    // window is centered closest to j.
    std::size_t nearest = 0;
    int best_gap = std::numeric_limits<int>::max();
    for (int k = 0; k < plan.input_length; ++k) {
      const int gap = std::abs(plan.anchor_frames[static_cast<std::size_t>(k)] - j);
      if (gap < best_gap) {
        best_gap = gap;
        nearest = static_cast<std::size_t>(k);
      }
    }
    const auto ju = static_cast<std::size_t>(j);
    const Tensor hidden = relu(add_bias(add_n(contributions[ju]), b_temporal_));
    const auto& targets = skip[ju];
    if (targets.empty()) throw DataError(config_.name + ": empty skip frame");
    const InterpolationTable table =
        three_nn_interpolation(targets, input.frames[nearest].coords);
    Tensor h = weighted_gather_rows(hidden, table.indices, table.weights, table.k);
    h = add_bias(matmul(h, w_spatial_), b_spatial_);
    if (!final_layer_) h = relu(h);
    output.frames.push_back({targets, std::move(h)});
  }
  return output;
}

std::vector<NamedTensor> PstTransOp::parameters() const {
  return {{config_.name + ".temporal.weight", w_temporal_},
          {config_.name + ".temporal.bias", b_temporal_},
          {config_.name + ".spatial.weight", w_spatial_},
          {config_.name + ".spatial.bias", b_spatial_}};
}

std::size_t PstTransOp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

// --- layer tables ---------------------------------------------------------

bool is_supported_descriptor_dim(int f) {
  return f == 4 || f == 8 || f == 16 || f == 32;
}

void require_descriptor_dim(int f) {
  if (!is_supported_descriptor_dim(f))
    throw ConfigError("descriptor dimension must be one of 4, 8, 16, 32 (got " +
                      std::to_string(f) + ")");
}

PstLayerConfig extractor_config(int f) {
  require_descriptor_dim(f);
  return {"extractor", kBaseRadius, 2, 4, 0, 1, f, 0, 0, kDefaultNeighbors};
}

std::vector<PstLayerConfig> encoder_configs() {
  return {
      {"encoder2", 2 * kBaseRadius, 2, 45, 1, 2, 64, 0, 0, kDefaultNeighbors},
      {"encoder3", 2 * kBaseRadius, 1, 128, 1, 1, 256, 1, 1, kDefaultNeighbors},
      {"encoder4", 4 * kBaseRadius, 2, 384, 1, 2, 512, 0, 0, kDefaultNeighbors},
      {"encoder5", 8 * kBaseRadius, 2, 768, 1, 1, 1024, 1, 1, kDefaultNeighbors},
  };
}

std::vector<PstLayerConfig> decoder_configs(int f) {
  require_descriptor_dim(f);
  return {
      {"decoder5", 0.0, 1, 512, 1, 1, 768, -1, -1, kDefaultNeighbors},
      {"decoder4", 0.0, 1, 256, 1, 2, 384, 0, 0, kDefaultNeighbors},
      {"decoder3", 0.0, 1, 64, 1, 1, 128, -1, -1, kDefaultNeighbors},
      {"decoder2", 0.0, 1, f, 1, 2, 45, 0, 0, kDefaultNeighbors},
  };
}

// --- Extractor ------------------------------------------------------------

Architecture Architecture::defaults(int f) {
  return {extractor_config(f), encoder_configs(), decoder_configs(f)};
}

void Architecture::validate() const {
  require_descriptor_dim(descriptor_dim());
  extractor.validate(false);
  if (extractor.temporal_radius != 0 || extractor.temporal_stride != 1)
    throw ConfigError("extractor: temporal radius must be 0 and stride 1");
  if (encoders.empty() || encoders.size() != decoders.size())
    throw ConfigError("architecture: need one decoder per encoder");
  for (const auto& e : encoders) e.validate(false);
  for (const auto& d : decoders) d.validate(true);
  if (decoders.back().spatial_channels != descriptor_dim())
    throw ConfigError("architecture: last decoder must output " +
                      std::to_string(descriptor_dim()) + " channels");
}

namespace {
PstOp make_extractor_op(const PstLayerConfig& config, std::uint64_t seed,
                        LayerOptions options) {
  require_descriptor_dim(config.temporal_channels);
  std::mt19937_64 rng(seed);
  return PstOp(config, 0, rng, options);
}
}  // namespace

Extractor::Extractor(int f, std::uint64_t seed, LayerOptions options)
    : Extractor(extractor_config(f), seed, options) {}

Extractor::Extractor(const PstLayerConfig& config, std::uint64_t seed,
                     LayerOptions options)
    : f_(config.temporal_channels), op_(make_extractor_op(config, seed, options)) {}

FeaturedClip Extractor::forward(const std::vector<PointFrame>& frames) const {
  return op_.forward(to_featured_clip(frames));
}

std::vector<NamedTensor> Extractor::parameters() const { return op_.parameters(); }

void Extractor::load(const std::vector<NamedTensor>& weights) {
  assign_parameters(parameters(), weights);
}

double Extractor::calibrate(const std::vector<std::vector<PointFrame>>& clips) {
  if (frozen()) throw UsageError("extractor is frozen");
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& clip : clips)
    for (const auto& frame : forward(clip).frames)
      for (double v : frame.features.values()) {
        sum_sq += v * v;
        ++count;
      }
  const double rms = count ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0;
  if (!(rms > 0.0) || !std::isfinite(rms)) return 1.0;
  // Biases start at zero, so the output is linear in the offset weights.
  for (auto& p : op_.parameters())
    if (p.name.ends_with(".w_offset"))
      for (double& w : p.tensor.mutable_values()) w /= rms;
  return 1.0 / rms;
}

void Extractor::freeze() {
  for (auto& p : op_.parameters()) {
    p.tensor.set_frozen(true);
    p.tensor.set_requires_grad(false);
    p.tensor.clear_grad();
  }
}

bool Extractor::frozen() const {
  const auto params = op_.parameters();
  return std::all_of(params.begin(), params.end(),
                     [](const NamedTensor& p) { return p.tensor.frozen(); });
}

// --- Pstae ----------------------------------------------------------------

Pstae::Pstae(int f, std::uint64_t seed, LayerOptions options)
    : Pstae(Architecture::defaults(f), seed, options) {}

Pstae::Pstae(const Architecture& arch, std::uint64_t seed, LayerOptions options)
    : f_(arch.descriptor_dim()) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::size_t channels = static_cast<std::size_t>(f_);
  for (const auto& cfg : arch.encoders) {
    encoders_.emplace_back(cfg, channels, rng, options);
    channels = encoders_.back().out_channels();
  }
  const auto& decoders = arch.decoders;
  for (std::size_t i = 0; i < decoders.size(); ++i) {
    decoders_.emplace_back(decoders[i], channels, rng, i + 1 == decoders.size());
    channels = decoders_.back().out_channels();
  }
}

FeaturedClip Pstae::forward(const FeaturedClip& descriptors,
                            std::vector<StageShape>* trace) const {
  if (descriptors.channels() != static_cast<std::size_t>(f_))
    throw ConfigError("pstae: expected " + std::to_string(f_) +
                      "-dimensional descriptors");
  auto record = [&](const std::string& name, const FeaturedClip& clip) {
    if (trace) trace->push_back({name, clip.length(), clip.points(), clip.channels()});
  };
  record("input", descriptors);

  // Decoder k restores the coordinates that entered encoder k.
  std::vector<std::vector<std::vector<Point3>>> skips;
  FeaturedClip x = descriptors;
  for (const PstOp& enc : encoders_) {
    std::vector<std::vector<Point3>> coords;
    for (const auto& frame : x.frames) coords.push_back(frame.coords);
    skips.push_back(std::move(coords));
    x = enc.forward(x);
    record(enc.config().name, x);
  }
  for (std::size_t i = 0; i < decoders_.size(); ++i) {
    x = decoders_[i].forward(x, skips[skips.size() - 1 - i]);
    record(decoders_[i].config().name, x);
  }
  return x;
}

std::vector<NamedTensor> Pstae::parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& e : encoders_)
    for (auto& p : e.parameters()) out.push_back(std::move(p));
  for (const auto& d : decoders_)
    for (auto& p : d.parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<Tensor> Pstae::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

std::size_t Pstae::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void Pstae::load(const std::vector<NamedTensor>& weights) {
  assign_parameters(parameters(), weights);
}

// --- ActionHead -----------------------------------------------------------

ActionHead::ActionHead(std::size_t in_channels, std::size_t hidden,
                       std::size_t classes, std::uint64_t seed)
    : classes_(classes) {
  if (classes < 1) throw ConfigError("action head needs at least one class");
  std::mt19937_64 rng(seed);
  const std::size_t in = 4 * in_channels;
  shift_ = Tensor::zeros({in});
  scale_ = Tensor::full({in}, 1.0);
  w1_ = Tensor::xavier_uniform({in, hidden}, in, hidden, rng);
  b1_ = Tensor::zeros({hidden}, true);
  w2_ = Tensor::xavier_uniform({hidden, classes}, hidden, classes, rng);
  b2_ = Tensor::zeros({classes}, true);
}

Tensor ActionHead::pool(const FeaturedClip& clip) const {
  const std::size_t c = clip.channels();
  auto row_mean = [](const Tensor& x) {
    const std::size_t n = x.dim(0);
    return matmul(Tensor::full({1, n}, 1.0 / static_cast<double>(n)), x);
  };
  std::vector<Tensor> per_frame;
  for (const auto& frame : clip.frames)
    per_frame.push_back(concat_cols(
        {row_mean(frame.features), reshape(max_over_axis(frame.features, 0), {1, c})},
        {c, c}, 1));
  const std::size_t w = 2 * c;
  Tensor stacked = reshape(
      concat_cols(per_frame, std::vector<std::size_t>(per_frame.size(), w), 1),
      {per_frame.size(), w});
  return concat_cols({row_mean(stacked), reshape(max_over_axis(stacked, 0), {1, w})},
                     {w, w}, 1);
}

Tensor ActionHead::forward(const FeaturedClip& clip) const {
  Tensor x = mul(add_bias(pool(clip), shift_), reshape(scale_, {1, scale_.numel()}));
  Tensor h = relu(add_bias(matmul(x, w1_), b1_));
  return reshape(add_bias(matmul(h, w2_), b2_), {classes_});
}

void ActionHead::fit_standardization(const std::vector<Tensor>& pooled) {
  const std::size_t in = shift_.numel();
  std::vector<double> mean(in, 0.0), var(in, 0.0);
  if (pooled.empty()) return;
  for (const Tensor& p : pooled)
    for (std::size_t j = 0; j < in; ++j) mean[j] += p.at(j);
  for (double& m : mean) m /= static_cast<double>(pooled.size());
  for (const Tensor& p : pooled)
    for (std::size_t j = 0; j < in; ++j) var[j] += (p.at(j) - mean[j]) * (p.at(j) - mean[j]);
  auto shift = shift_.mutable_values();
  auto scale = scale_.mutable_values();
  // Near-constant inputs keep a bounded gain: floor each deviation at a
  // tenth of the average one.
  double mean_sd = 0.0;
  for (double& v : var) {
    v = std::sqrt(v / static_cast<double>(pooled.size()));
    mean_sd += v / static_cast<double>(in);
  }
  const double floor_sd = std::max(0.1 * mean_sd, 1e-12);
  for (std::size_t j = 0; j < in; ++j) {
    shift[j] = -mean[j];
    scale[j] = 1.0 / std::max(var[j], floor_sd);
  }
}

std::vector<NamedTensor> ActionHead::parameters() const {
  return {{"head.fc1.weight", w1_},
          {"head.fc1.bias", b1_},
          {"head.fc2.weight", w2_},
          {"head.fc2.bias", b2_}};
}

void assign_parameters(const std::vector<NamedTensor>& targets,
                       const std::vector<NamedTensor>& source) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : source) by_name[s.name] = &s.tensor;
  for (const auto& t : targets) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing " + t.name);
    if (it->second->shape() != t.tensor.shape())
      throw FormatError("checkpoint shape mismatch for " + t.name + ": " +
                        shape_to_string(it->second->shape()) + " vs " +
                        shape_to_string(t.tensor.shape()));
    Tensor target = t.tensor;
    const auto v = it->second->values();
    std::copy(v.begin(), v.end(), target.mutable_values().begin());
  }
}

}  // namespace pstae
