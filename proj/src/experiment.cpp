#include "pstae/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "pstae/errors.hpp"

namespace pstae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- json helpers ---------------------------------------------------------

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(keys.begin(), keys.end(),
                     [&](const char* k) { return key == k; }) == keys.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

void read_sgd(const json& j, SgdConfig& sgd, const std::string& where) {
  read(j, "lr", sgd.learning_rate, where);
  read(j, "decay", sgd.decay_factor, where);
  read(j, "decay_epoch", sgd.decay_epoch, where);
  read(j, "epochs", sgd.epochs, where);
  read(j, "batch", sgd.batch_size, where);
}

json sgd_json(const SgdConfig& sgd) {
  return {{"lr", sgd.learning_rate},
          {"decay", sgd.decay_factor},
          {"decay_epoch", sgd.decay_epoch},
          {"epochs", sgd.epochs},
          {"batch", sgd.batch_size}};
}

void apply_layer_override(PstLayerConfig& layer, const json& j) {
  const std::string where = "model.layers." + layer.name;
  reject_unknown(j,
                 {"spatial_radius", "spatial_stride", "spatial_channels",
                  "temporal_radius", "temporal_stride", "temporal_channels", "padding",
                  "neighbors"},
                 where);
  read(j, "spatial_radius", layer.spatial_radius, where);
  read(j, "spatial_stride", layer.spatial_stride, where);
  read(j, "spatial_channels", layer.spatial_channels, where);
  read(j, "temporal_radius", layer.temporal_radius, where);
  read(j, "temporal_stride", layer.temporal_stride, where);
  read(j, "temporal_channels", layer.temporal_channels, where);
  read(j, "neighbors", layer.max_neighbors, where);
  if (j.contains("padding")) {
    const auto& p = j.at("padding");
    if (!p.is_array() || p.size() != 2) throw ConfigError(where + ".padding: expected [p0, p1]");
    layer.pad_begin = p[0].get<int>();
    layer.pad_end = p[1].get<int>();
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the
/// failure with the lowest index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::mutex mutex;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mutex);
        if (next >= n) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

PreprocessConfig preprocess_for(const RunConfig& config, const std::string& video_id) {
  PreprocessConfig p = config.preprocess;
  p.seed = derive_seed(config.seed, "preprocess", fnv1a(video_id));
  return p;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ fnv1a(tag)) ^ index);
}

// --- RunConfig ------------------------------------------------------------

Architecture RunConfig::architecture(int descriptor_dim) const {
  Architecture arch = Architecture::defaults(descriptor_dim);
  json overrides;
  try {
    overrides = json::parse(layer_overrides);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model.layers: ") + e.what());
  }
  if (!overrides.is_object()) throw ConfigError("model.layers: expected an object");
  std::vector<PstLayerConfig*> rows{&arch.extractor};
  for (auto& e : arch.encoders) rows.push_back(&e);
  for (auto& d : arch.decoders) rows.push_back(&d);
  for (const auto& [name, value] : overrides.items()) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](PstLayerConfig* r) { return r->name == name; });
    if (it == rows.end()) throw ConfigError("model.layers: unknown layer '" + name + "'");
    apply_layer_override(**it, value);
  }
  arch.validate();
  return arch;
}

void RunConfig::validate() const {
  require_descriptor_dim(f);
  preprocess.background.validate();
  if (preprocess.points_per_frame < 1) throw ConfigError("points_per_frame must be >= 1");
  if (preprocess.clip_length < 1) throw ConfigError("clip_length must be >= 1");
  train.validate();
  pretrain.validate();
  if (pretrain_hidden < 1) throw ConfigError("pretrain.hidden must be >= 1");
  if (smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
  scene.validate();
  if (data.anomalies.empty()) throw ConfigError("data.anomalies must not be empty");
  for (Behavior b : data.anomalies)
    if (!is_anomalous(b)) throw ConfigError(to_string(b) + " is not an anomaly");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  (void)architecture();
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  reject_unknown(j,
                 {"seed", "workers", "background", "preprocess", "model", "train",
                  "pretrain", "scoring", "scene", "data"},
                 "config");
  read(j, "seed", c.seed, "config");
  read(j, "workers", c.workers, "config");
  if (j.contains("background")) {
    const json& b = j["background"];
    reject_unknown(b, {"voxel_size", "bg_frames", "threshold", "window"}, "background");
    read(b, "voxel_size", c.preprocess.background.voxel_size, "background");
    read(b, "bg_frames", c.preprocess.background.window_length, "background");
    read(b, "threshold", c.preprocess.background.density_threshold, "background");
    if (b.contains("window"))
      c.preprocess.background.window = parse_bg_window(b["window"].get<std::string>());
  }
  if (j.contains("preprocess")) {
    const json& p = j["preprocess"];
    reject_unknown(p, {"points_per_frame", "clip_length", "min_foreground_points"},
                   "preprocess");
    read(p, "points_per_frame", c.preprocess.points_per_frame, "preprocess");
    read(p, "clip_length", c.preprocess.clip_length, "preprocess");
    read(p, "min_foreground_points", c.preprocess.min_foreground_points, "preprocess");
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, {"f", "layers"}, "model");
    read(m, "f", c.f, "model");
    if (m.contains("layers")) c.layer_overrides = m["layers"].dump();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t, {"lr", "decay", "decay_epoch", "epochs", "batch", "max_steps"},
                   "train");
    read_sgd(t, c.train, "train");
    read(t, "max_steps", c.max_train_steps, "train");
  }
  if (j.contains("pretrain")) {
    const json& t = j["pretrain"];
    reject_unknown(t, {"lr", "decay", "decay_epoch", "epochs", "batch", "hidden"},
                   "pretrain");
    read_sgd(t, c.pretrain, "pretrain");
    read(t, "hidden", c.pretrain_hidden, "pretrain");
  }
  if (j.contains("scoring")) {
    const json& s = j["scoring"];
    reject_unknown(s, {"smooth_order", "smoothing_window"}, "scoring");
    if (s.contains("smooth_order"))
      c.smooth_order = parse_smooth_order(s["smooth_order"].get<std::string>());
    read(s, "smoothing_window", c.smoothing_window, "scoring");
  }
  if (j.contains("scene")) {
    const json& s = j["scene"];
    reject_unknown(s,
                   {"room_size", "clutter_boxes", "clutter_size", "actor_count",
                    "frame_rate", "noise_sigma", "actor_points",
                    "background_samples_per_edge"},
                   "scene");
    if (s.contains("room_size")) {
      const auto r = s["room_size"].get<std::vector<double>>();
      if (r.size() != 3) throw ConfigError("scene.room_size: expected [x, y, z]");
      c.scene.room_size = {r[0], r[1], r[2]};
    }
    if (s.contains("clutter_size")) {
      const auto r = s["clutter_size"].get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("scene.clutter_size: expected [min, max]");
      c.scene.clutter_min_size = r[0];
      c.scene.clutter_max_size = r[1];
    }
    read(s, "clutter_boxes", c.scene.clutter_boxes, "scene");
    read(s, "actor_count", c.scene.actor_count, "scene");
    read(s, "frame_rate", c.scene.frame_rate, "scene");
    read(s, "noise_sigma", c.scene.noise_sigma, "scene");
    read(s, "actor_points", c.scene.actor_points, "scene");
    read(s, "background_samples_per_edge", c.scene.background_samples_per_edge, "scene");
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d,
                   {"train_videos", "test_videos", "train_frames", "test_frames",
                    "action_clips_per_class", "anomalies"},
                   "data");
    read(d, "train_videos", c.data.train_videos, "data");
    read(d, "test_videos", c.data.test_videos, "data");
    read(d, "train_frames", c.data.train_frames, "data");
    read(d, "test_frames", c.data.test_frames, "data");
    read(d, "action_clips_per_class", c.data.action_clips_per_class, "data");
    if (d.contains("anomalies")) {
      c.data.anomalies.clear();
      for (const auto& name : d["anomalies"].get<std::vector<std::string>>())
        c.data.anomalies.push_back(parse_behavior(name));
    }
  }
  c.scene.voxel_size = c.preprocess.background.voxel_size;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(read_text(path));
}

std::string run_config_to_json(const RunConfig& c) {
  json anomalies = json::array();
  for (Behavior b : c.data.anomalies) anomalies.push_back(to_string(b));
  json train = sgd_json(c.train);
  train["max_steps"] = c.max_train_steps;
  json pretrain = sgd_json(c.pretrain);
  pretrain["hidden"] = c.pretrain_hidden;
  json j{
      {"seed", c.seed},
      {"workers", c.workers},
      {"background",
       {{"voxel_size", c.preprocess.background.voxel_size},
        {"bg_frames", c.preprocess.background.window_length},
        {"threshold", c.preprocess.background.density_threshold},
        {"window", to_string(c.preprocess.background.window)}}},
      {"preprocess",
       {{"points_per_frame", c.preprocess.points_per_frame},
        {"clip_length", c.preprocess.clip_length},
        {"min_foreground_points", c.preprocess.min_foreground_points}}},
      {"model", {{"f", c.f}, {"layers", json::parse(c.layer_overrides)}}},
      {"train", train},
      {"pretrain", pretrain},
      {"scoring",
       {{"smooth_order", to_string(c.smooth_order)},
        {"smoothing_window", c.smoothing_window}}},
      {"scene",
       {{"room_size", {c.scene.room_size.x, c.scene.room_size.y, c.scene.room_size.z}},
        {"clutter_boxes", c.scene.clutter_boxes},
        {"clutter_size", {c.scene.clutter_min_size, c.scene.clutter_max_size}},
        {"actor_count", c.scene.actor_count},
        {"frame_rate", c.scene.frame_rate},
        {"noise_sigma", c.scene.noise_sigma},
        {"actor_points", c.scene.actor_points},
        {"background_samples_per_edge", c.scene.background_samples_per_edge}}},
      {"data",
       {{"train_videos", c.data.train_videos},
        {"test_videos", c.data.test_videos},
        {"train_frames", c.data.train_frames},
        {"test_frames", c.data.test_frames},
        {"action_clips_per_class", c.data.action_clips_per_class},
        {"anomalies", anomalies}}},
  };
  return j.dump(2);
}

// --- dataset --------------------------------------------------------------

std::vector<const VideoEntry*> Manifest::split(const std::string& name) const {
  std::vector<const VideoEntry*> out;
  for (const auto& v : videos)
    if (v.split == name) out.push_back(&v);
  return out;
}

std::map<std::string, std::string> Manifest::categories() const {
  std::map<std::string, std::string> out;
  for (const auto& v : videos) out[v.id] = v.category;
  return out;
}

namespace {

void write_manifest(const Manifest& m, const RunConfig& config) {
  json videos = json::array();
  json categories = json::object();
  for (const auto& v : m.videos) {
    videos.push_back({{"id", v.id},
                      {"split", v.split},
                      {"category", v.category},
                      {"video", v.video},
                      {"labels", v.labels}});
    categories[v.id] = v.category;
  }
  json clips = json::array();
  for (const auto& c : m.action_clips) clips.push_back({{"file", c.file}, {"label", c.label}});
  json j{{"format", "PCV1"},
         {"seed", config.seed},
         {"videos", videos},
         {"categories", categories},
         {"action_classes", m.action_classes},
         {"action_clips", clips}};
  write_text((fs::path(m.root) / "manifest.json").string(), j.dump(2) + "\n");
}

}  // namespace

Manifest gen_data(const RunConfig& config, const std::string& out_dir) {
  config.validate();
  ensure_dir((fs::path(out_dir) / "videos").string());
  ensure_dir((fs::path(out_dir) / "actions").string());
  Manifest m;
  m.root = out_dir;

  struct Job {
    VideoEntry entry;
    SceneConfig scene;
    std::vector<BehaviorScript> scripts;
  };
  std::vector<Job> jobs;
  char id[32];
  for (std::size_t i = 0; i < config.data.train_videos; ++i) {
    std::snprintf(id, sizeof id, "train_%03zu", i);
    Job job;
    job.scene = config.scene;
    job.scene.frames = config.data.train_frames;
    job.scene.seed = derive_seed(config.seed, "scene-train", i);
    job.scripts = normal_scripts(job.scene, derive_seed(config.seed, "script-train", i));
    job.entry = {id, "train", "normal", "", ""};
    jobs.push_back(std::move(job));
  }
  const std::size_t kinds = config.data.anomalies.size() + 1;
  for (std::size_t i = 0; i < config.data.test_videos; ++i) {
    std::snprintf(id, sizeof id, "test_%03zu", i);
    Job job;
    job.scene = config.scene;
    job.scene.frames = config.data.test_frames;
    job.scene.seed = derive_seed(config.seed, "scene-test", i);
    const std::uint64_t variant = derive_seed(config.seed, "script-test", i);
    const std::size_t kind = (i + 1) % kinds;  // the first test video is anomalous
    if (kind == 0) {
      job.scripts = normal_scripts(job.scene, variant);
      job.entry = {id, "test", "normal", "", ""};
    } else {
      const Behavior b = config.data.anomalies[kind - 1];
      job.scripts = anomalous_scripts(job.scene, b, variant);
      job.entry = {id, "test", to_string(b), "", ""};
    }
    jobs.push_back(std::move(job));
  }
  for (auto& job : jobs) {
    job.entry.video = "videos/" + job.entry.id + ".pcv";
    job.entry.labels = "videos/" + job.entry.id + ".labels";
  }
  parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const SyntheticVideo video = gen_video(job.scene, job.scripts);
    write_point_video((fs::path(out_dir) / job.entry.video).string(), video.frames);
    write_labels((fs::path(out_dir) / job.entry.labels).string(), video.labels);
  });
  for (auto& job : jobs) m.videos.push_back(job.entry);

  SceneConfig action_scene = config.scene;
  action_scene.seed = derive_seed(config.seed, "actions");
  const auto classes = default_action_classes();
  const auto clips = gen_action_dataset(action_scene, classes,
                                        config.data.action_clips_per_class,
                                        config.preprocess.clip_length);
  for (Behavior b : classes) m.action_classes.push_back(to_string(b));
  for (std::size_t i = 0; i < clips.size(); ++i) {
    std::snprintf(id, sizeof id, "actions/clip_%04zu.pcv", i);
    write_point_video((fs::path(out_dir) / id).string(), clips[i].frames);
    m.action_clips.push_back({id, clips[i].label});
  }
  write_manifest(m, config);
  return m;
}

Manifest read_manifest(const std::string& data_dir) {
  const std::string path = (fs::path(data_dir) / "manifest.json").string();
  json j;
  try {
    j = json::parse(read_text(path));
    Manifest m;
    m.root = data_dir;
    for (const auto& v : j.at("videos"))
      m.videos.push_back({v.at("id").get<std::string>(), v.at("split").get<std::string>(),
                          v.at("category").get<std::string>(),
                          v.at("video").get<std::string>(),
                          v.at("labels").get<std::string>()});
    if (j.contains("action_classes"))
      m.action_classes = j["action_classes"].get<std::vector<std::string>>();
    if (j.contains("action_clips"))
      for (const auto& c : j["action_clips"])
        m.action_clips.push_back({c.at("file").get<std::string>(),
                                  c.at("label").get<std::size_t>()});
    return m;
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// --- steps ----------------------------------------------------------------

std::string train_report_json(const TrainReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {"learning_rate", e.learning_rate},
                      {"seconds", e.seconds}});
  json j{{"epochs", epochs},
         {"steps", report.step_losses.size()},
         {"checkpoint", report.checkpoint_path}};
  if (!report.step_losses.empty()) {
    j["initial_loss"] = report.step_losses.front();
    j["final_loss"] = report.step_losses.back();
  }
  return j.dump(2);
}

PretrainOutcome run_pretrain(const RunConfig& config, const Manifest& data,
                             const std::string& weights_out) {
  if (data.action_clips.empty()) throw DataError("dataset has no action clips");
  std::vector<LabeledClip> clips;
  for (std::size_t i = 0; i < data.action_clips.size(); ++i) {
    const auto& entry = data.action_clips[i];
    LabeledClip clip;
    clip.label = entry.label;
    std::mt19937_64 rng(derive_seed(config.seed, "pretrain-resample", i));
    for (const auto& frame : read_point_video((fs::path(data.root) / entry.file).string()))
      clip.frames.push_back(resample_frame(frame, config.preprocess.points_per_frame, rng));
    clips.push_back(std::move(clip));
  }
  const Architecture arch = config.architecture();
  Extractor extractor(arch.extractor, derive_seed(config.seed, "extractor-init"));
  TrainOptions options;
  options.sgd = config.pretrain;
  options.seed = derive_seed(config.seed, "pretrain-shuffle");
  PretrainOutcome out;
  out.result = pretrain_extractor(extractor, clips, data.action_classes.size(), options,
                                  config.pretrain_hidden);
  if (!weights_out.empty()) {
    save_weights(weights_out, out.result.extractor_weights);
    out.result.report.checkpoint_path = weights_out;
  }
  json j = json::parse(train_report_json(out.result.report));
  j["train_accuracy"] = out.result.train_accuracy;
  j["classes"] = data.action_classes;
  out.report_json = j.dump(2);
  return out;
}

Extractor load_extractor(const RunConfig& config, const std::string& path) {
  Extractor extractor(config.architecture().extractor, 0);
  extractor.load(load_weights(path));
  extractor.freeze();
  return extractor;
}

Pstae load_model(const RunConfig& config, const std::string& path) {
  Pstae model(config.architecture(), 0);
  model.load(load_weights(path));
  return model;
}

std::vector<std::vector<PointFrame>> training_clips(const RunConfig& config,
                                                    const Manifest& data) {
  const auto videos = data.split("train");
  if (videos.empty()) throw DataError("dataset has no train videos");
  std::vector<std::vector<std::vector<PointFrame>>> per_video(videos.size());
  parallel_for(videos.size(), config.workers, [&](std::size_t v) {
    const VideoEntry& entry = *videos[v];
    const PointVideo raw = read_point_video((fs::path(data.root) / entry.video).string());
    const PreparedVideo prepared = prepare_video(raw, preprocess_for(config, entry.id), entry.id);
    const std::size_t length = config.preprocess.clip_length;
    for (const Clip& clip : segment_video(prepared.frames, length, false, entry.id)) {
      std::vector<bool> empty(prepared.empty.begin() + clip.start_frame_index,
                              prepared.empty.begin() + clip.start_frame_index + length);
      if (auto frames = fill_empty_frames(clip, empty)) per_video[v].push_back(*frames);
    }
  });
  std::vector<std::vector<PointFrame>> clips;
  for (auto& v : per_video)
    for (auto& c : v) clips.push_back(std::move(c));
  if (clips.empty()) throw DataError("no training clip has foreground points");
  return clips;
}

TrainOutcome run_train(const RunConfig& config, const Manifest& data,
                       const Extractor& extractor, const std::string& weights_out) {
  const auto clips = training_clips(config, data);
  const auto descriptors = compute_descriptors(extractor, clips);
  Pstae model(config.architecture(), derive_seed(config.seed, "pstae-init"));
  TrainOptions options;
  options.sgd = config.train;
  options.seed = derive_seed(config.seed, "train-shuffle");
  options.max_steps = config.max_train_steps;
  TrainOutcome out;
  out.report = train_pstae(model, descriptors, options);
  if (!weights_out.empty()) {
    save_weights(weights_out, model.parameters());
    out.report.checkpoint_path = weights_out;
  }
  json j = json::parse(train_report_json(out.report));
  j["clips"] = clips.size();
  out.report_json = j.dump(2);
  return out;
}

void write_bgsub_csv(const std::string& path, const std::vector<int>& scores) {
  std::ostringstream out;
  out << "frame,bgsub\n";
  for (std::size_t i = 0; i < scores.size(); ++i) out << i << ',' << scores[i] << '\n';
  write_text(path, out.str());
}

std::vector<int> read_bgsub_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "frame,bgsub")
    throw FormatError(path + ": missing 'frame,bgsub' header");
  std::vector<int> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(path + ": malformed row");
    const int v = std::stoi(line.substr(comma + 1));
    if (v != 0 && v != 1) throw FormatError(path + ": bgsub score must be 0 or 1");
    out.push_back(v);
  }
  return out;
}

std::vector<ScoredVideo> run_score(const RunConfig& config, const Manifest& data,
                                   const Extractor& extractor, const Pstae& model,
                                   const std::string& split, const std::string& out_dir) {
  const auto videos = data.split(split);
  if (!out_dir.empty()) ensure_dir(out_dir);
  std::vector<ScoredVideo> out(videos.size());
  parallel_for(videos.size(), config.workers, [&](std::size_t v) {
    const VideoEntry& entry = *videos[v];
    const PointVideo raw = read_point_video((fs::path(data.root) / entry.video).string());
    const auto labels = read_labels((fs::path(data.root) / entry.labels).string());
    ScoreConfig sc;
    sc.preprocess = preprocess_for(config, entry.id);
    sc.smooth_order = config.smooth_order;
    sc.smoothing_window = config.smoothing_window;
    out[v].series = score_video(raw, labels, extractor, model, sc, entry.id);
    out[v].bgsub =
        bgsub_baseline_score(classify_foreground(raw, config.preprocess.background).foreground);
    if (!out_dir.empty()) {
      write_scores_csv((fs::path(out_dir) / (entry.id + ".csv")).string(), out[v].series);
      write_bgsub_csv((fs::path(out_dir) / (entry.id + ".bgsub.csv")).string(), out[v].bgsub);
    }
  });
  return out;
}

std::vector<ScoredVideo> read_score_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir + " is not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.ends_with(".csv") && !name.ends_with(".bgsub.csv"))
      files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no score CSVs in " + dir);
  std::vector<ScoredVideo> out;
  for (const auto& path : files) {
    ScoredVideo v;
    v.series = read_scores_csv(path);
    v.series.video_id = fs::path(path).stem().string();
    const std::string bg = path.substr(0, path.size() - 4) + ".bgsub.csv";
    if (fs::exists(bg)) v.bgsub = read_bgsub_csv(bg);
    out.push_back(std::move(v));
  }
  return out;
}

EvalReport run_eval(const std::vector<ScoredVideo>& scored,
                    const std::map<std::string, std::string>& categories) {
  std::vector<ScoreSeries> series;
  std::map<std::string, std::vector<int>> bgsub;
  for (const auto& v : scored) {
    series.push_back(v.series);
    if (!v.bgsub.empty()) bgsub[v.series.video_id] = v.bgsub;
  }
  return evaluate(series, bgsub, categories);
}

std::vector<std::string> run_heatmap(const RunConfig& config, const Manifest& data,
                                     const Extractor& extractor, const Pstae& model,
                                     const std::string& video_id, std::size_t clip_index,
                                     const std::string& out_dir) {
  const auto it = std::find_if(data.videos.begin(), data.videos.end(),
                               [&](const VideoEntry& v) { return v.id == video_id; });
  if (it == data.videos.end()) throw DataError("unknown video id '" + video_id + "'");
  const PointVideo raw = read_point_video((fs::path(data.root) / it->video).string());
  const PreparedVideo prepared = prepare_video(raw, preprocess_for(config, video_id), video_id);
  const std::size_t length = config.preprocess.clip_length;
  const auto clips = segment_video(prepared.frames, length, true, video_id);
  if (clip_index >= clips.size())
    throw UsageError("clip index " + std::to_string(clip_index) + " out of range (" +
                     std::to_string(clips.size()) + " clips)");
  const Clip& clip = clips[clip_index];
  std::vector<bool> empty(length);
  for (std::size_t i = 0; i < length; ++i)
    empty[i] = prepared.empty[std::min(clip.start_frame_index + i, prepared.empty.size() - 1)];
  const auto frames = fill_empty_frames(clip, empty);
  if (!frames) throw DataError("clip " + std::to_string(clip_index) + " has no foreground");
  const ClipHeatmap heat = heatmap(*frames, extractor, model);
  ensure_dir(out_dir);
  std::vector<std::string> paths;
  char name[96];
  for (std::size_t i = 0; i < heat.coords.size(); ++i) {
    if (clip.padded[i]) continue;
    std::snprintf(name, sizeof name, "%s_clip%zu_frame%03zu.ply", video_id.c_str(),
                  clip_index, clip.start_frame_index + i);
    const std::string path = (fs::path(out_dir) / name).string();
    write_error_ply(path, heat.coords[i], heat.errors[i]);
    paths.push_back(path);
  }
  return paths;
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  char row[96];
  for (const auto& p : roc) {
    std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
    out << row;
  }
  write_text(path, out.str());
}

std::vector<SweepEntry> run_sweep_f(const RunConfig& config, const Manifest& data,
                                    const std::string& out_dir) {
  ensure_dir(out_dir);
  std::vector<SweepEntry> entries;
  json summary = json::object();
  for (int f : {4, 8, 16, 32}) {
    RunConfig c = config;
    c.f = f;
    const PretrainOutcome pre = run_pretrain(c, data, "");
    Extractor extractor(c.architecture().extractor, 0);
    extractor.load(pre.result.extractor_weights);
    extractor.freeze();
    Pstae model(c.architecture(), derive_seed(c.seed, "pstae-init"));
    {
      const auto clips = training_clips(c, data);
      TrainOptions options;
      options.sgd = c.train;
      options.seed = derive_seed(c.seed, "train-shuffle");
      options.max_steps = c.max_train_steps;
      train_pstae(model, compute_descriptors(extractor, clips), options);
    }
    const auto scored = run_score(c, data, extractor, model, "test", "");
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& v : scored)
      for (std::size_t i = 0; i < v.series.size(); ++i) {
        if (v.series.padded[i]) continue;
        scores.push_back(v.series.score[i]);
        labels.push_back(v.series.label[i]);
      }
    SweepEntry e;
    e.f = f;
    e.pretrain_accuracy = pre.result.train_accuracy;
    e.roc_path = (fs::path(out_dir) / ("roc_f" + std::to_string(f) + ".csv")).string();
    try {
      e.auroc = auroc(scores, labels);
    } catch (const DataError&) {
    }
    write_roc_csv(e.roc_path, roc_curve(scores, labels));
    summary["f" + std::to_string(f)] = {
        {"auroc", e.auroc ? json(*e.auroc) : json(nullptr)},
        {"pretrain_accuracy", e.pretrain_accuracy},
        {"roc", fs::path(e.roc_path).filename().string()}};
    entries.push_back(e);
  }
  write_text((fs::path(out_dir) / "sweep_summary.json").string(), summary.dump(2) + "\n");
  return entries;
}

std::vector<LayerParameters> layer_parameter_counts(const RunConfig& config, int f) {
  const Architecture arch = config.architecture(f);
  std::vector<LayerParameters> out;
  Extractor extractor(arch.extractor, 0);
  out.push_back({arch.extractor.name, extractor.op().parameter_count()});
  Pstae model(arch, 0);
  for (const auto& e : model.encoders()) out.push_back({e.config().name, e.parameter_count()});
  for (const auto& d : model.decoders()) out.push_back({d.config().name, d.parameter_count()});
  return out;
}

std::string arch_dump_json(const RunConfig& config, int f) {
  const Architecture arch = config.architecture(f);
  json layers = json::array();
  std::size_t total = 0, autoencoder = 0;
  std::vector<const PstLayerConfig*> rows{&arch.extractor};
  for (const auto& e : arch.encoders) rows.push_back(&e);
  for (const auto& d : arch.decoders) rows.push_back(&d);
  const auto counts = layer_parameter_counts(config, f);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const PstLayerConfig& r = *rows[i];
    layers.push_back({{"name", counts[i].name},
                      {"spatial_radius", r.spatial_radius},
                      {"spatial_stride", r.spatial_stride},
                      {"spatial_channels", r.spatial_channels},
                      {"temporal_radius", r.temporal_radius},
                      {"temporal_stride", r.temporal_stride},
                      {"temporal_channels", r.temporal_channels},
                      {"padding", {r.pad_begin, r.pad_end}},
                      {"parameters", counts[i].parameters}});
    total += counts[i].parameters;
    if (i > 0) autoencoder += counts[i].parameters;
  }
  json j{{"f", f},
         {"layers", layers},
         {"autoencoder_parameters", autoencoder},
         {"total_parameters", total}};
  return j.dump(2);
}

}  // namespace pstae
