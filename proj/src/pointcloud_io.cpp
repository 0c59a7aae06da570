#include "pstae/pointcloud_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "pstae/errors.hpp"
#include "pstae/point_tube.hpp"

namespace pstae {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw ConfigError("intrinsics: focal lengths must be positive");
  if (!(depth_scale > 0.0))
    throw ConfigError("intrinsics: depth_scale must be positive");
}

void PointFrame::validate() const {
  for (const Point3& p : points)
    if (!is_finite(p)) throw DataError("point frame has non-finite coordinates");
  if (feature_dim > 0 && features.size() != points.size() * feature_dim)
    throw DataError("point frame feature rows do not match point count");
}

std::size_t Clip::real_frames() const {
  return static_cast<std::size_t>(std::count(padded.begin(), padded.end(), false));
}

PointFrame depth_to_pointcloud(const DepthImage& depth,
                               const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  if (depth.data.size() != depth.width * depth.height)
    throw FormatError("depth image size does not match its dimensions");
  PointFrame frame;
  for (std::size_t v = 0; v < depth.height; ++v) {
    for (std::size_t u = 0; u < depth.width; ++u) {
      const std::uint16_t raw = depth.at(u, v);
      if (raw == 0) continue;
      const double z = raw * intrinsics.depth_scale;
      frame.points.push_back({(static_cast<double>(u) - intrinsics.cx) * z / intrinsics.fx,
                              (static_cast<double>(v) - intrinsics.cy) * z / intrinsics.fy,
                              z});
    }
  }
  return frame;
}

PointFrame resample_frame(const PointFrame& frame, std::size_t target,
                          std::mt19937_64& rng) {
  if (target < 1) throw ConfigError("resample_frame: target must be >= 1");
  const std::size_t n = frame.size();
  if (n == 0) {
    PointFrame out;
    out.feature_dim = frame.feature_dim;
    out.empty_marker = true;
    return out;
  }
  if (n == target) return frame;

  std::vector<std::size_t> order;
  if (n > target) {
    order = farthest_point_sampling(frame.points, target, std::size_t{0});
  } else {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (order.size() < target) order.push_back(pick(rng));
  }
  PointFrame out;
  out.feature_dim = frame.feature_dim;
  out.points.reserve(target);
  for (std::size_t i : order) {
    out.points.push_back(frame.points[i]);
    if (frame.feature_dim > 0) {
      auto row = frame.features.begin() + static_cast<std::ptrdiff_t>(i * frame.feature_dim);
      out.features.insert(out.features.end(), row,
                          row + static_cast<std::ptrdiff_t>(frame.feature_dim));
    }
  }
  return out;
}

std::vector<Clip> segment_video(const PointVideo& video, std::size_t length,
                                bool pad_tail, const std::string& video_id) {
  if (length < 1) throw ConfigError("segment_video: clip length must be >= 1");
  std::vector<Clip> clips;
  for (std::size_t start = 0; start < video.size(); start += length) {
    const std::size_t available = std::min(length, video.size() - start);
    if (available < length && !pad_tail) break;
    Clip clip;
    clip.source_video_id = video_id;
    clip.start_frame_index = start;
    for (std::size_t i = 0; i < length; ++i) {
      const bool pad = i >= available;
      clip.frames.push_back(video[start + (pad ? available - 1 : i)]);
      clip.padded.push_back(pad);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

// --- binary helpers -------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(std::begin(bytes), std::end(bytes));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError(path + ": truncated file");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(std::begin(bytes), std::end(bytes));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_point_video(const std::string& path, const PointVideo& video) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(kPointVideoMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(video.size()));
  for (const PointFrame& frame : video) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(frame.size()));
    for (const Point3& p : frame.points) {
      put<float>(out, static_cast<float>(p.x));
      put<float>(out, static_cast<float>(p.y));
      put<float>(out, static_cast<float>(p.z));
    }
  }
  if (!out) throw FormatError("write failed: " + path);
}

PointVideo read_point_video(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kPointVideoMagic, 4) != 0)
    throw FormatError(path + ": bad magic (expected PCV1)");
  const auto frames = get<std::uint32_t>(in, path);
  PointVideo video(frames);
  for (PointFrame& frame : video) {
    const auto count = get<std::uint32_t>(in, path);
    frame.points.resize(count);
    for (Point3& p : frame.points) {
      p.x = get<float>(in, path);
      p.y = get<float>(in, path);
      p.z = get<float>(in, path);
      if (!is_finite(p)) throw FormatError(path + ": non-finite coordinate");
    }
  }
  return video;
}

void write_labels(const std::string& path, std::span<const int> labels) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  for (int label : labels) out << (label ? '1' : '0') << '\n';
}

std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line != "0" && line != "1")
      throw FormatError(path + ": label lines must be 0 or 1, got '" + line + "'");
    labels.push_back(line == "1");
  }
  return labels;
}

CameraIntrinsics read_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  CameraIntrinsics intr;
  try {
    const auto j = nlohmann::json::parse(in);
    intr.fx = j.at("fx").get<double>();
    intr.fy = j.at("fy").get<double>();
    intr.cx = j.at("cx").get<double>();
    intr.cy = j.at("cy").get<double>();
    intr.depth_scale = j.at("depth_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  intr.validate();
  return intr;
}

void write_intrinsics(const std::string& path, const CameraIntrinsics& intr) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << nlohmann::json{{"fx", intr.fx},
                        {"fy", intr.fy},
                        {"cx", intr.cx},
                        {"cy", intr.cy},
                        {"depth_scale", intr.depth_scale}}
             .dump(2)
      << '\n';
}

// --- PNG ------------------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

DepthImage read_depth_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw FormatError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng initialization failed");
  }
  DepthImage image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": invalid PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": expected a 16-bit grayscale PNG");
  }
  if constexpr (std::endian::native == std::endian::little) png_set_swap(png);
  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  image.data.resize(image.width * image.height);
  rows.resize(image.height);
  for (std::size_t v = 0; v < image.height; ++v)
    rows[v] = reinterpret_cast<png_bytep>(image.data.data() + v * image.width);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_depth_png(const std::string& path, const DepthImage& image) {
  if (image.data.size() != image.width * image.height || image.width == 0)
    throw FormatError("depth image size does not match its dimensions");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw FormatError("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("libpng initialization failed");
  }
  std::vector<png_bytep> rows(image.height);
  std::vector<std::uint16_t> buffer = image.data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path + ": PNG write failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if constexpr (std::endian::native == std::endian::little) png_set_swap(png);
  for (std::size_t v = 0; v < image.height; ++v)
    rows[v] = reinterpret_cast<png_bytep>(buffer.data() + v * image.width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_error_ply(const std::string& path, std::span<const Point3> points,
                     std::span<const double> errors) {
  if (points.size() != errors.size())
    throw UsageError("write_error_ply: point/error count mismatch");
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << points.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float error\nend_header\n";
  out << std::setprecision(9);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i].x << ' ' << points[i].y << ' ' << points[i].z << ' '
        << errors[i] << '\n';
  }
}

}  // namespace pstae
