// Python bindings: numpy in, numpy out. Point sets are (N, 3) float64 arrays
// and videos are lists of them.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "pstae/background.hpp"
#include "pstae/errors.hpp"
#include "pstae/experiment.hpp"
#include "pstae/pipeline.hpp"
#include "pstae/point_tube.hpp"
#include "pstae/pointcloud_io.hpp"
#include "pstae/synthetic.hpp"

namespace py = pybind11;
using namespace pstae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Point3> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw UsageError("expected an (N, 3) array");
  const auto r = a.unchecked<2>();
  std::vector<Point3> out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = {r(i, 0), r(i, 1), r(i, 2)};
  return out;
}

Array from_points(const std::vector<Point3>& pts) {
  Array a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    w(i, 0) = pts[i].x;
    w(i, 1) = pts[i].y;
    w(i, 2) = pts[i].z;
  }
  return a;
}

Array from_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  Array a({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

PointVideo to_video(const std::vector<Array>& frames) {
  PointVideo v;
  for (const auto& f : frames) {
    PointFrame frame;
    frame.points = to_points(f);
    v.push_back(std::move(frame));
  }
  return v;
}

py::list from_video(const PointVideo& video) {
  py::list out;
  for (const auto& f : video) out.append(from_points(f.points));
  return out;
}

BgsubConfig bg_config(double voxel_size, int window_length, double threshold,
                      const std::string& window) {
  BgsubConfig c;
  c.voxel_size = voxel_size;
  c.window_length = window_length;
  c.density_threshold = threshold;
  c.window = parse_bg_window(window);
  c.validate();
  return c;
}

py::list descriptors_to_py(const FeaturedClip& clip) {
  py::list out;
  for (const auto& f : clip.frames)
    out.append(py::make_tuple(from_points(f.coords),
                              from_matrix(f.features.values(), f.coords.size(),
                                          clip.channels())));
  return out;
}

FeaturedClip descriptors_from_py(const py::list& frames) {
  FeaturedClip clip;
  for (const auto& item : frames) {
    const auto pair = item.cast<py::tuple>();
    const auto coords = to_points(pair[0].cast<Array>());
    const auto feats = pair[1].cast<Array>();
    if (feats.ndim() != 2 || static_cast<std::size_t>(feats.shape(0)) != coords.size())
      throw UsageError("features must be (N, C) with one row per coordinate");
    std::vector<double> v(feats.data(), feats.data() + feats.size());
    clip.frames.push_back({coords, Tensor::from({coords.size(), static_cast<std::size_t>(
                                                                    feats.shape(1))},
                                                std::move(v))});
  }
  return clip;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Point-cloud video anomaly detection core";
  m.attr("__version__") = kVersion;
  m.attr("PCV1_VERSION") = 1;
  m.attr("PSTW_VERSION") = static_cast<unsigned>(kWeightFormatVersion);

  static py::exception<Error> base(m, "PstaeError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  // --- io -----------------------------------------------------------------
  m.def(
      "depth_to_pointcloud",
      [](py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast> depth, double fx,
         double fy, double cx, double cy, double depth_scale) {
        if (depth.ndim() != 2) throw UsageError("depth must be a 2-D array");
        DepthImage img;
        img.height = static_cast<std::size_t>(depth.shape(0));
        img.width = static_cast<std::size_t>(depth.shape(1));
        img.data.assign(depth.data(), depth.data() + depth.size());
        return from_points(depth_to_pointcloud(img, {fx, fy, cx, cy, depth_scale}).points);
      },
      py::arg("depth"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
      py::arg("depth_scale") = 0.001);
  m.def(
      "resample",
      [](const Array& pts, std::size_t target, std::uint64_t seed) {
        PointFrame f;
        f.points = to_points(pts);
        std::mt19937_64 rng(seed);
        return from_points(resample_frame(f, target, rng).points);
      },
      py::arg("points"), py::arg("target"), py::arg("seed") = 0);
  m.def(
      "write_point_video",
      [](const std::string& path, const std::vector<Array>& frames) {
        write_point_video(path, to_video(frames));
      },
      py::arg("path"), py::arg("frames"));
  m.def(
      "read_point_video", [](const std::string& path) { return from_video(read_point_video(path)); },
      py::arg("path"));

  // --- background ---------------------------------------------------------
  m.def(
      "classify_foreground",
      [](const std::vector<Array>& frames, double voxel_size, int window_length,
         double threshold, const std::string& window) {
        const auto split = classify_foreground(
            to_video(frames), bg_config(voxel_size, window_length, threshold, window));
        return py::make_tuple(from_video(split.foreground), from_video(split.background));
      },
      py::arg("frames"), py::arg("voxel_size") = 0.05, py::arg("window_length") = 30,
      py::arg("threshold") = 100.0, py::arg("window") = "block");
  m.def(
      "bgsub_baseline_score",
      [](const std::vector<Array>& foreground) { return bgsub_baseline_score(to_video(foreground)); },
      py::arg("foreground"));

  // --- point tubes ----------------------------------------------------------
  m.def(
      "farthest_point_sampling",
      [](const Array& pts, std::size_t count, std::size_t seed_index) {
        return farthest_point_sampling(to_points(pts), count, seed_index);
      },
      py::arg("points"), py::arg("count"), py::arg("seed_index") = 0);
  m.def(
      "ball_query",
      [](const Array& anchors, const Array& source, double radius, std::size_t k) {
        const auto t = ball_query(to_points(anchors), to_points(source), radius, k);
        py::array_t<std::int64_t> idx({static_cast<py::ssize_t>(t.anchors()),
                                       static_cast<py::ssize_t>(k)});
        std::copy(t.neighbors.begin(), t.neighbors.end(), idx.mutable_data());
        return idx;
      },
      py::arg("anchors"), py::arg("source"), py::arg("radius"), py::arg("k"));

  // --- models ---------------------------------------------------------------
  py::class_<Extractor>(m, "Extractor")
      .def(py::init<int, std::uint64_t>(), py::arg("f") = 8, py::arg("seed") = 0)
      .def("forward",
           [](const Extractor& ex, const std::vector<Array>& frames) {
             return descriptors_to_py(ex.forward(to_video(frames)));
           })
      .def("parameter_count", [](const Extractor& ex) { return ex.op().parameter_count(); })
      .def_property_readonly("f", &Extractor::descriptor_dim)
      .def_static("load", [](int f, const std::string& path) {
        RunConfig c;
        c.f = f;
        return load_extractor(c, path);
      });
  py::class_<Pstae>(m, "Pstae")
      .def(py::init<int, std::uint64_t>(), py::arg("f") = 8, py::arg("seed") = 0)
      .def("forward",
           [](const Pstae& ae, const py::list& descriptors) {
             return descriptors_to_py(ae.forward(descriptors_from_py(descriptors)));
           })
      .def("parameter_count", &Pstae::parameter_count)
      .def_property_readonly("f", &Pstae::descriptor_dim)
      .def_static("load", [](int f, const std::string& path) {
        RunConfig c;
        c.f = f;
        return load_model(c, path);
      });
  m.def(
      "per_frame_loss",
      [](const py::list& target, const py::list& recon) {
        return per_frame_loss(descriptors_from_py(target), descriptors_from_py(recon));
      },
      py::arg("target"), py::arg("recon"));

  // --- scoring --------------------------------------------------------------
  m.def("moving_average", [](std::vector<double> v, std::size_t w) { return moving_average(v, w); },
        py::arg("values"), py::arg("window") = kDefaultSmoothingWindow);
  m.def("min_max_normalize", [](std::vector<double> v) { return min_max_normalize(v); });
  m.def(
      "auroc", [](std::vector<double> s, std::vector<int> y) { return auroc(s, y); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "score_video",
      [](const std::vector<Array>& frames, std::vector<int> labels, const Extractor& ex,
         const Pstae& ae, std::size_t points_per_frame, const std::string& smooth_order) {
        ScoreConfig cfg;
        cfg.preprocess.points_per_frame = points_per_frame;
        cfg.smooth_order = parse_smooth_order(smooth_order);
        const auto s = score_video(to_video(frames), labels, ex, ae, cfg, "video");
        py::dict d;
        d["raw_loss"] = s.raw_loss;
        d["smoothed"] = s.smoothed;
        d["score"] = s.score;
        d["label"] = s.label;
        return d;
      },
      py::arg("frames"), py::arg("labels"), py::arg("extractor"), py::arg("model"),
      py::arg("points_per_frame") = kDefaultPointsPerFrame, py::arg("smooth_order") = "pre-norm");

  // --- synthetic data and configuration ---------------------------------------
  m.def(
      "gen_video",
      [](const std::string& anomaly, std::size_t frames, std::uint64_t seed,
         std::uint64_t variant) {
        SceneConfig cfg;
        cfg.frames = frames;
        cfg.seed = seed;
        const auto scripts = anomaly == "normal"
                                 ? normal_scripts(cfg, variant)
                                 : anomalous_scripts(cfg, parse_behavior(anomaly), variant);
        const auto v = gen_video(cfg, scripts);
        return py::make_tuple(from_video(v.frames), v.labels, v.category);
      },
      py::arg("anomaly") = "normal", py::arg("frames") = 60, py::arg("seed") = 0,
      py::arg("variant") = 0);
  m.def("default_config_json", [] { return run_config_to_json(RunConfig{}); });
  m.def("arch_dump_json", [](int f) { return arch_dump_json(RunConfig{}, f); },
        py::arg("f") = 8);
}
