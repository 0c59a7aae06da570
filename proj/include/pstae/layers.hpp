#pragma once

// Point spatio-temporal convolution (PstOp), its transposed counterpart
// (PstTransOp), the shallow descriptor extractor, the autoencoder stack and
// the action-recognition head used to pretrain the extractor.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pstae/point_tube.hpp"
#include "pstae/pointcloud_io.hpp"
#include "pstae/tensor.hpp"

namespace pstae {

/// Ball-query radius unit; Table-style radii are multiples of it.
inline constexpr double kBaseRadius = 0.5;
inline constexpr std::size_t kDefaultNeighbors = 9;

struct PstLayerConfig {
  std::string name;
  double spatial_radius = kBaseRadius;  // meters; unused by transposed layers
  int spatial_stride = 1;               // anchors = points / stride
  int spatial_channels = 1;
  int temporal_radius = 0;
  int temporal_stride = 1;
  int temporal_channels = 1;
  int pad_begin = 0;
  int pad_end = 0;
  std::size_t max_neighbors = kDefaultNeighbors;

  void validate(bool transposed) const;
};

struct FeaturedFrame {
  std::vector<Point3> coords;
  Tensor features;  // [coords.size(), channels]; undefined when channels == 0
};

struct FeaturedClip {
  std::vector<FeaturedFrame> frames;

  std::size_t length() const { return frames.size(); }
  std::size_t points() const { return frames.empty() ? 0 : frames[0].coords.size(); }
  std::size_t channels() const;
};

/// Wraps raw coordinates as a feature-less clip.
FeaturedClip to_featured_clip(const std::vector<PointFrame>& frames);
FeaturedClip translate(const FeaturedClip& clip, Point3 offset);

struct LayerOptions {
  FpsSeed fps_seed = FpsSeed::kFirstIndex;
};

/// Spatial stage then temporal stage:
///  - anchors come from FPS on the central frame of each temporal window and
///    are reused to ball-query every frame of the window (the point tube);
///  - each neighbor feeds concat(offset, features) through one shared linear
///    layer, ReLU, and a max over the neighbors;
///  - window features (zeros for padding frames) are concatenated and mapped
///    by one linear layer + ReLU to the temporal channels.
class PstOp {
 public:
  PstOp(PstLayerConfig config, std::size_t in_channels, std::mt19937_64& rng,
        LayerOptions options = {});

  FeaturedClip forward(const FeaturedClip& input) const;

  const PstLayerConfig& config() const { return config_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const {
    return static_cast<std::size_t>(config_.temporal_channels);
  }
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  void set_options(LayerOptions options) { options_ = options; }

 private:
  Tensor spatial_features(const FeaturedFrame& frame, const Tensor& projected,
                          const std::vector<Point3>& anchors) const;

  PstLayerConfig config_;
  std::size_t in_channels_;
  LayerOptions options_;
  Tensor w_offset_;    // [3, c_s]
  Tensor w_feature_;   // [c_in, c_s], undefined when c_in == 0
  Tensor b_spatial_;   // [c_s]
  Tensor w_temporal_;  // [(2 r_t + 1) c_s, c_t]
  Tensor b_temporal_;  // [c_t]
};

/// Temporal stage then spatial stage:
///  - every input frame is mapped by a per-offset linear layer and scattered
///    into the transposed window; overlapping contributions are summed, then
///    bias + ReLU;
///  - features are interpolated onto the skip coordinates (inverse squared
///    distance over the 3 nearest anchors) and mapped by one linear layer
///    (ReLU except on the final layer).
class PstTransOp {
 public:
  PstTransOp(PstLayerConfig config, std::size_t in_channels,
             std::mt19937_64& rng, bool final_layer);

  FeaturedClip forward(const FeaturedClip& input,
                       const std::vector<std::vector<Point3>>& skip) const;

  const PstLayerConfig& config() const { return config_; }
  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const {
    return static_cast<std::size_t>(config_.spatial_channels);
  }
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;

 private:
  PstLayerConfig config_;
  std::size_t in_channels_;
  bool final_layer_;
  Tensor w_temporal_;  // [c_in, (2 r_t + 1) c_t], one block per window slot
  Tensor b_temporal_;  // [c_t]
  Tensor w_spatial_;   // [c_t, c_s]
  Tensor b_spatial_;   // [c_s]
};

struct InterpolationTable {
  std::size_t k = 0;
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

/// Inverse squared distance weights over the (up to) 3 nearest sources; a
/// target coinciding with a source takes that source alone.
InterpolationTable three_nn_interpolation(const std::vector<Point3>& targets,
                                          const std::vector<Point3>& sources);

// --- assembled networks ---------------------------------------------------

bool is_supported_descriptor_dim(int f);
void require_descriptor_dim(int f);

PstLayerConfig extractor_config(int f);
std::vector<PstLayerConfig> encoder_configs();
std::vector<PstLayerConfig> decoder_configs(int f);

/// Extractor row plus encoder/decoder rows; defaults follow the built-in
/// table and every row can be replaced.
struct Architecture {
  PstLayerConfig extractor;
  std::vector<PstLayerConfig> encoders;
  std::vector<PstLayerConfig> decoders;

  static Architecture defaults(int f);
  int descriptor_dim() const { return extractor.temporal_channels; }
  /// Checks row validity, encoder/decoder pairing and that the last decoder
  /// restores f channels.
  void validate() const;
};

struct StageShape {
  std::string name;
  std::size_t frames = 0;
  std::size_t points = 0;
  std::size_t channels = 0;
};

/// The frozen-after-pretraining shallow descriptor extractor.
class Extractor {
 public:
  Extractor(int f, std::uint64_t seed, LayerOptions options = {});
  Extractor(const PstLayerConfig& config, std::uint64_t seed, LayerOptions options = {});

  FeaturedClip forward(const std::vector<PointFrame>& frames) const;
  FeaturedClip forward(const FeaturedClip& clip) const { return op_.forward(clip); }

  int descriptor_dim() const { return f_; }
  const PstOp& op() const { return op_; }
  std::vector<NamedTensor> parameters() const;
  void load(const std::vector<NamedTensor>& weights);
  /// Data-dependent initialization: rescales the offset weights so the
  /// descriptors of `clips` have unit RMS. Returns the applied factor.
  double calibrate(const std::vector<std::vector<PointFrame>>& clips);
  void freeze();
  bool frozen() const;
  void set_options(LayerOptions options) { op_.set_options(options); }

 private:
  int f_;
  PstOp op_;
};

/// Encoder2..5 followed by Decoder5..2 with coordinate-only skip links.
class Pstae {
 public:
  Pstae(int f, std::uint64_t seed, LayerOptions options = {});
  Pstae(const Architecture& arch, std::uint64_t seed, LayerOptions options = {});

  /// Reconstructs descriptors at the input coordinates.
  FeaturedClip forward(const FeaturedClip& descriptors,
                       std::vector<StageShape>* trace = nullptr) const;

  int descriptor_dim() const { return f_; }
  std::vector<NamedTensor> parameters() const;
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;
  void load(const std::vector<NamedTensor>& weights);

  const std::vector<PstOp>& encoders() const { return encoders_; }
  const std::vector<PstTransOp>& decoders() const { return decoders_; }

 private:
  int f_;
  std::vector<PstOp> encoders_;
  std::vector<PstTransOp> decoders_;
};

/// Mean and max pooling over anchors, then over frames, then a fixed
/// standardization and a two-layer MLP.
class ActionHead {
 public:
  ActionHead(std::size_t in_channels, std::size_t hidden, std::size_t classes,
             std::uint64_t seed);

  /// Pooled clip summary [1, 4 * in_channels] before standardization.
  Tensor pool(const FeaturedClip& clip) const;
  Tensor forward(const FeaturedClip& clip) const;  // logits [classes]
  /// Sets the fixed per-column shift and scale from pooled training clips
  /// (spreads are floored at a tenth of the average one).
  void fit_standardization(const std::vector<Tensor>& pooled);
  std::size_t classes() const { return classes_; }
  std::vector<NamedTensor> parameters() const;

 private:
  std::size_t classes_;
  Tensor shift_, scale_;  // constants, [4 * in_channels]
  Tensor w1_, b1_, w2_, b2_;
};

/// Copies named values into matching parameters; throws on missing names or
/// shape mismatches.
void assign_parameters(const std::vector<NamedTensor>& targets,
                       const std::vector<NamedTensor>& source);

}  // namespace pstae
