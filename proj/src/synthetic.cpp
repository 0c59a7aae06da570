#include "pstae/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>

#include "pstae/errors.hpp"

namespace pstae {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kWalkSpeed = 1.0;  // m/s
constexpr double kMargin = 0.45;    // keeps the body inside the room
constexpr std::size_t kObjectPoints = 50;
constexpr std::size_t kCollapseFrames = 15;
constexpr std::size_t kDepartAfter = 10;

double deg(double d) { return d * kPi / 180.0; }

// --- body model -----------------------------------------------------------

enum class Part { kTorso, kHead, kLeftArm, kRightArm, kLeftLeg, kRightLeg };

struct PartSpec {
  Part part;
  Point3 center;
  Point3 radii;
  Point3 pivot;
  double share;
};

constexpr std::array<PartSpec, 6> kBody{{
    {Part::kTorso, {0.0, 0.0, 1.15}, {0.12, 0.18, 0.30}, {0.0, 0.0, 0.0}, 0.34},
    {Part::kHead, {0.0, 0.0, 1.60}, {0.10, 0.09, 0.11}, {0.0, 0.0, 0.0}, 0.13},
    {Part::kLeftArm, {0.0, 0.25, 1.15}, {0.05, 0.05, 0.28}, {0.0, 0.25, 1.42}, 0.10},
    {Part::kRightArm, {0.0, -0.25, 1.15}, {0.05, 0.05, 0.28}, {0.0, -0.25, 1.42}, 0.10},
    {Part::kLeftLeg, {0.0, 0.09, 0.45}, {0.07, 0.07, 0.45}, {0.0, 0.09, 0.90}, 0.165},
    {Part::kRightLeg, {0.0, -0.09, 0.45}, {0.07, 0.07, 0.45}, {0.0, -0.09, 0.90}, 0.165},
}};

struct BodyPoint {
  Part part;
  Point3 local;
};

std::vector<BodyPoint> sample_body(std::size_t count, double height_scale,
                                   std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<BodyPoint> body;
  for (std::size_t p = 0; p < kBody.size(); ++p) {
    const PartSpec& spec = kBody[p];
    const std::size_t n = p + 1 == kBody.size()
                              ? count - body.size()
                              : static_cast<std::size_t>(std::lround(spec.share * count));
    for (std::size_t i = 0; i < n; ++i) {
      double x = gauss(rng), y = gauss(rng), z = gauss(rng);
      const double norm = std::sqrt(x * x + y * y + z * z) + 1e-12;
      Point3 local{spec.center.x + spec.radii.x * x / norm,
                   spec.center.y + spec.radii.y * y / norm,
                   spec.center.z + spec.radii.z * z / norm};
      local.z *= height_scale;
      body.push_back({spec.part, local});
    }
  }
  return body;
}

struct Pose {
  double left_arm = 0.0, right_arm = 0.0, left_leg = 0.0, right_leg = 0.0;
  double lean = 0.0;        // forward rotation about the feet
  double z_scale = 1.0;     // vertical contraction
  double stretch = 1.0;     // forward elongation
  double sway = 0.0;        // lateral torso rotation
};

Point3 swing(Point3 p, Point3 pivot, double angle) {
  const double dx = p.x - pivot.x, dz = p.z - pivot.z;
  const double c = std::cos(angle), s = std::sin(angle);
  return {pivot.x + dx * c - dz * s, p.y, pivot.z + dx * s + dz * c};
}

Point3 pose_point(const BodyPoint& bp, const Pose& pose, double height_scale) {
  Point3 p = bp.local;
  Point3 pivot{};
  double angle = 0.0;
  for (const PartSpec& spec : kBody) {
    if (spec.part != bp.part) continue;
    pivot = spec.pivot;
    pivot.z *= height_scale;
  }
  switch (bp.part) {
    case Part::kLeftArm: angle = pose.left_arm; break;
    case Part::kRightArm: angle = pose.right_arm; break;
    case Part::kLeftLeg: angle = pose.left_leg; break;
    case Part::kRightLeg: angle = pose.right_leg; break;
    default: break;
  }
  if (angle != 0.0) p = swing(p, pivot, angle);
  if (pose.sway != 0.0) {
    const double c = std::cos(pose.sway), s = std::sin(pose.sway);
    p = {p.x, p.y * c - (p.z - 0.9) * s, 0.9 + p.y * s + (p.z - 0.9) * c};
  }
  if (pose.lean != 0.0) p = swing(p, {0.0, 0.0, 0.0}, pose.lean);
  p.x *= pose.stretch;
  p.z = std::max(0.0, p.z * pose.z_scale);
  return p;
}

Point3 place(Point3 local, Point3 position, double heading) {
  const double c = std::cos(heading), s = std::sin(heading);
  return {position.x + local.x * c - local.y * s,
          position.y + local.x * s + local.y * c, position.z + local.z};
}

// --- behaviors ------------------------------------------------------------

struct Motion {
  double speed = 0.0;  // m/s
  Pose pose;
};

/// `t` counts seconds since the script started, `frame_in_script` frames.
Motion behavior_motion(Behavior kind, double t, std::size_t frame_in_script,
                       double phase0, double speed_scale) {
  Motion m;
  switch (kind) {
    case Behavior::kWalk:
    case Behavior::kLeaveObject: {
      const double phi = 2.0 * kPi * 0.9 * t + phase0;
      m.speed = kWalkSpeed * speed_scale;
      m.pose.left_leg = deg(25) * std::sin(phi);
      m.pose.right_leg = -m.pose.left_leg;
      m.pose.left_arm = -deg(20) * std::sin(phi);
      m.pose.right_arm = -m.pose.left_arm;
      break;
    }
    case Behavior::kRun: {
      const double phi = 2.0 * kPi * 1.5 * t + phase0;
      m.speed = 3.0 * kWalkSpeed * speed_scale;
      m.pose.left_leg = deg(45) * std::sin(phi);
      m.pose.right_leg = -m.pose.left_leg;
      m.pose.left_arm = -deg(45) * std::sin(phi);
      m.pose.right_arm = -m.pose.left_arm;
      m.pose.lean = deg(15);
      break;
    }
    case Behavior::kCrawl: {
      const double phi = 2.0 * kPi * 0.6 * t + phase0;
      m.speed = 0.3 * speed_scale;
      m.pose.z_scale = 0.5;
      m.pose.stretch = 1.6;
      m.pose.left_leg = deg(15) * std::sin(phi);
      m.pose.right_leg = -m.pose.left_leg;
      m.pose.left_arm = deg(70) + deg(15) * std::sin(phi);
      m.pose.right_arm = deg(70) - deg(15) * std::sin(phi);
      break;
    }
    case Behavior::kCollapse: {
      const double s = std::min(1.0, static_cast<double>(frame_in_script) /
                                         static_cast<double>(kCollapseFrames));
      m.pose.z_scale = 1.0 - 0.75 * s;
      m.pose.stretch = 1.0 + 0.8 * s;
      m.pose.lean = deg(20) * s;
      m.pose.left_arm = deg(40) * s;
      m.pose.right_arm = deg(60) * s;
      break;
    }
    case Behavior::kArgue: {
      const double phi = 2.0 * kPi * 2.5 * t + phase0;
      m.pose.left_arm = deg(60) + deg(50) * std::sin(phi);
      m.pose.right_arm = deg(60) + deg(50) * std::sin(phi + 1.7);
      m.pose.sway = deg(8) * std::sin(0.5 * phi);
      break;
    }
    case Behavior::kWave: {
      const double phi = 2.0 * kPi * 1.5 * t + phase0;
      m.pose.right_arm = deg(160) + deg(25) * std::sin(phi);
      break;
    }
  }
  return m;
}

struct ActorState {
  bool initialized = false;
  Point3 position;
  double heading = 0.0;
  double phase0 = 0.0;
  double height_scale = 1.0;
  std::vector<BodyPoint> body;
};

void advance(ActorState& actor, double distance, const SceneConfig& cfg) {
  const double x_hi = cfg.room_size.x - kMargin;
  const double y_hi = cfg.room_size.y - 2.0 * kMargin;  // clutter along the back wall
  Point3 next{actor.position.x + distance * std::cos(actor.heading),
              actor.position.y + distance * std::sin(actor.heading), 0.0};
  if (next.x < kMargin || next.x > x_hi) {
    actor.heading = kPi - actor.heading;
    next.x = std::clamp(next.x, kMargin, x_hi);
  }
  if (next.y < kMargin || next.y > y_hi) {
    actor.heading = -actor.heading;
    next.y = std::clamp(next.y, kMargin, y_hi);
  }
  actor.position = next;
}

Point3 clamp_to_room(Point3 p, const SceneConfig& cfg) {
  return {std::clamp(p.x, kMargin, cfg.room_size.x - kMargin),
          std::clamp(p.y, kMargin, cfg.room_size.y - 2.0 * kMargin), p.z};
}

void emit_body(const ActorState& actor, const Pose& pose, Point3 position,
               double heading, const SceneConfig& cfg, std::vector<Point3>& out) {
  for (const BodyPoint& bp : actor.body) {
    Point3 p = place(pose_point(bp, pose, actor.height_scale), position, heading);
    p.x = std::clamp(p.x, 0.0, cfg.room_size.x);
    p.y = std::clamp(p.y, 0.0, cfg.room_size.y);
    p.z = std::clamp(p.z, 0.0, cfg.room_size.z);
    out.push_back(p);
  }
}

// --- static background ----------------------------------------------------

/// Samples an axis-aligned planar patch on the voxel lattice: the fixed
/// coordinate sits at a voxel center and every in-plane sample stays within
/// the central 20% of its voxel, so per-frame noise rarely crosses a voxel
/// boundary.
void sample_patch(int fixed_axis, double fixed, double a0, double a1, double b0,
                  double b1, const SceneConfig& cfg, std::vector<Point3>& out) {
  const double v = cfg.voxel_size;
  const std::size_t n = cfg.background_samples_per_edge;
  const double spacing = n > 1 ? 0.2 * v / static_cast<double>(n - 1) : 0.0;
  std::vector<double> offsets;
  for (std::size_t i = 0; i < n; ++i)
    offsets.push_back(0.5 * v + (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1)) * spacing);
  for (double a = a0; a + 1e-9 < a1; a += v) {
    for (double b = b0; b + 1e-9 < b1; b += v) {
      for (double da : offsets) {
        for (double db : offsets) {
          switch (fixed_axis) {
            case 0: out.push_back({fixed, a + da, b + db}); break;
            case 1: out.push_back({a + da, fixed, b + db}); break;
            default: out.push_back({a + da, b + db, fixed}); break;
          }
        }
      }
    }
  }
}

std::vector<Point3> sample_background(const SceneConfig& cfg, std::mt19937_64& rng) {
  const double v = cfg.voxel_size;
  const Point3 room = cfg.room_size;
  std::vector<Point3> pts;
  sample_patch(2, 0.5 * v, 0.0, room.x, 0.0, room.y, cfg, pts);           // floor
  sample_patch(1, room.y - 0.5 * v, 0.0, room.x, v, room.z, cfg, pts);     // back wall
  auto snap = [v](double x) { return std::floor(x / v) * v; };
  std::uniform_real_distribution<double> size(cfg.clutter_min_size, cfg.clutter_max_size);
  std::uniform_real_distribution<double> along(0.1, room.x - cfg.clutter_max_size - 0.1);
  for (std::size_t b = 0; b < cfg.clutter_boxes; ++b) {
    const double sx = snap(size(rng)) + v, sy = snap(size(rng)) + v, sz = snap(size(rng)) + v;
    const double x0 = snap(along(rng));
    const double y0 = snap(room.y - v - sy - 0.05);
    const double z0 = v;
    sample_patch(2, z0 + sz - 0.5 * v, x0, x0 + sx, y0, y0 + sy, cfg, pts);  // top
    sample_patch(1, y0 + 0.5 * v, x0, x0 + sx, z0, z0 + sz, cfg, pts);       // front
    sample_patch(0, x0 + 0.5 * v, y0, y0 + sy, z0, z0 + sz, cfg, pts);       // left
    sample_patch(0, x0 + sx - 0.5 * v, y0, y0 + sy, z0, z0 + sz, cfg, pts);  // right
  }
  return pts;
}

std::vector<Point3> sample_object(Point3 center, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.12, 0.12);
  std::uniform_int_distribution<int> face(0, 4);
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < kObjectPoints; ++i) {
    Point3 p{u(rng), u(rng), 0.12 + u(rng)};
    switch (face(rng)) {
      case 0: p.x = -0.12; break;
      case 1: p.x = 0.12; break;
      case 2: p.y = -0.12; break;
      case 3: p.y = 0.12; break;
      default: p.z = 0.24; break;
    }
    pts.push_back(center + p);
  }
  return pts;
}

void add_noise(std::vector<Point3>& pts, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> n(0.0, sigma);
  for (Point3& p : pts) {
    p.x += n(rng);
    p.y += n(rng);
    p.z += n(rng);
  }
}

}  // namespace

std::string to_string(Behavior behavior) {
  switch (behavior) {
    case Behavior::kWalk: return "walk";
    case Behavior::kRun: return "run";
    case Behavior::kCollapse: return "collapse";
    case Behavior::kCrawl: return "crawl";
    case Behavior::kLeaveObject: return "leave-object";
    case Behavior::kArgue: return "argue";
    case Behavior::kWave: return "wave";
  }
  return "walk";
}

Behavior parse_behavior(const std::string& name) {
  for (Behavior b : {Behavior::kWalk, Behavior::kRun, Behavior::kCollapse,
                     Behavior::kCrawl, Behavior::kLeaveObject, Behavior::kArgue,
                     Behavior::kWave})
    if (to_string(b) == name) return b;
  throw ConfigError("unknown behavior '" + name + "'");
}

bool is_anomalous(Behavior behavior) {
  return behavior != Behavior::kWalk && behavior != Behavior::kWave;
}

void SceneConfig::validate() const {
  if (!(room_size.x > 0.0 && room_size.y > 0.0 && room_size.z > 0.0))
    throw ConfigError("scene: room bounds must be positive");
  if (room_size.x < 2.0 * kMargin + 0.1 || room_size.y < 4.0 * kMargin + 0.1)
    throw ConfigError("scene: room too small for an actor");
  if (!(noise_sigma >= 0.0)) throw ConfigError("scene: noise sigma must be >= 0");
  if (frames < 1) throw ConfigError("scene: frames must be >= 1");
  if (!(frame_rate > 0.0)) throw ConfigError("scene: frame rate must be > 0");
  if (!(voxel_size > 0.0) || background_samples_per_edge < 1)
    throw ConfigError("scene: invalid background sampling");
  if (actor_points < kBody.size()) throw ConfigError("scene: too few actor points");
  if (clutter_min_size <= 0.0 || clutter_max_size < clutter_min_size)
    throw ConfigError("scene: invalid clutter size range");
}

SyntheticVideo gen_video(const SceneConfig& cfg,
                         const std::vector<BehaviorScript>& scripts) {
  cfg.validate();
  std::map<std::size_t, std::vector<const BehaviorScript*>> by_actor;
  for (const BehaviorScript& s : scripts) {
    if (s.end_frame < s.start_frame || s.end_frame >= cfg.frames)
      throw ConfigError("script " + to_string(s.kind) + " does not fit in " +
                        std::to_string(cfg.frames) + " frames");
    auto& list = by_actor[s.actor];
    for (const BehaviorScript* other : list)
      if (s.start_frame <= other->end_frame && other->start_frame <= s.end_frame)
        throw ConfigError("overlapping scripts for actor " + std::to_string(s.actor));
    list.push_back(&s);
  }

  std::mt19937_64 rng(cfg.seed);
  const std::vector<Point3> background = sample_background(cfg, rng);
  std::map<std::size_t, ActorState> actors;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& [id, list] : by_actor) {
    ActorState& a = actors[id];
    a.height_scale = 0.9 + 0.2 * unit(rng);
    a.phase0 = 2.0 * kPi * unit(rng);
    a.body = sample_body(cfg.actor_points, a.height_scale, rng);
  }
  // A second body for argue partners and the left-behind objects.
  ActorState partner;
  partner.height_scale = 0.9 + 0.2 * unit(rng);
  partner.phase0 = 2.0 * kPi * unit(rng);
  partner.body = sample_body(cfg.actor_points, partner.height_scale, rng);
  std::vector<std::vector<Point3>> objects;

  SyntheticVideo video;
  video.category = "normal";
  for (const BehaviorScript& s : scripts)
    if (is_anomalous(s.kind)) video.category = to_string(s.kind);

  const double dt = 1.0 / cfg.frame_rate;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    std::vector<Point3> pts = background;
    int label = 0;
    for (auto& [id, list] : by_actor) {
      const BehaviorScript* active = nullptr;
      for (const BehaviorScript* s : list)
        if (t >= s->start_frame && t <= s->end_frame) active = s;
      if (!active) continue;
      ActorState& a = actors[id];
      if (!a.initialized) {
        a.position = clamp_to_room(active->start_position, cfg);
        a.heading = active->heading;
        a.initialized = true;
      }
      const std::size_t k = t - active->start_frame;
      if (is_anomalous(active->kind)) label = 1;
      const Motion m = behavior_motion(active->kind, static_cast<double>(t) * dt, k,
                                       a.phase0, active->speed_scale);
      if (active->kind == Behavior::kLeaveObject && k == 0) {
        const Point3 side{-std::sin(a.heading) * 0.4, std::cos(a.heading) * 0.4, 0.0};
        objects.push_back(sample_object(clamp_to_room(a.position + side, cfg), rng));
      }
      const bool departed = active->kind == Behavior::kLeaveObject && k >= kDepartAfter;
      if (!departed) emit_body(a, m.pose, a.position, a.heading, cfg, pts);
      if (active->kind == Behavior::kArgue) {
        const Point3 facing{std::cos(a.heading) * 0.9, std::sin(a.heading) * 0.9, 0.0};
        const Motion pm = behavior_motion(Behavior::kArgue, static_cast<double>(t) * dt,
                                          k, partner.phase0, 1.0);
        emit_body(partner, pm.pose, clamp_to_room(a.position + facing, cfg),
                  a.heading + kPi, cfg, pts);
      }
      advance(a, m.speed * dt, cfg);
    }
    for (const auto& obj : objects) pts.insert(pts.end(), obj.begin(), obj.end());
    add_noise(pts, cfg.noise_sigma, rng);
    video.frames.push_back(PointFrame{std::move(pts), {}, 0, false});
    video.labels.push_back(label);
  }
  return video;
}

std::vector<Behavior> default_action_classes() {
  return {Behavior::kWalk, Behavior::kRun, Behavior::kCrawl, Behavior::kWave};
}

std::vector<LabeledClip> gen_action_dataset(const SceneConfig& cfg,
                                            const std::vector<Behavior>& classes,
                                            std::size_t per_class,
                                            std::size_t clip_length) {
  cfg.validate();
  if (per_class < 1) throw ConfigError("per_class must be >= 1");
  if (classes.empty()) throw ConfigError("no action classes");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<LabeledClip> clips;
  const double dt = 1.0 / cfg.frame_rate;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      ActorState a;
      a.height_scale = 0.9 + 0.2 * unit(rng);
      a.phase0 = 2.0 * kPi * unit(rng);
      a.body = sample_body(cfg.actor_points, a.height_scale, rng);
      a.position = {kMargin + unit(rng) * (cfg.room_size.x - 2 * kMargin),
                    kMargin + unit(rng) * (cfg.room_size.y - 3 * kMargin), 0.0};
      a.heading = 2.0 * kPi * unit(rng);
      const double speed_scale = 0.85 + 0.3 * unit(rng);
      LabeledClip clip;
      clip.label = c;
      for (std::size_t t = 0; t < clip_length; ++t) {
        const Motion m = behavior_motion(classes[c], static_cast<double>(t) * dt, t,
                                         a.phase0, speed_scale);
        std::vector<Point3> pts;
        emit_body(a, m.pose, a.position, a.heading, cfg, pts);
        add_noise(pts, cfg.noise_sigma, rng);
        clip.frames.push_back(PointFrame{std::move(pts), {}, 0, false});
        advance(a, m.speed * dt, cfg);
      }
      clips.push_back(std::move(clip));
    }
  }
  return clips;
}

std::vector<BehaviorScript> normal_scripts(const SceneConfig& cfg,
                                           std::uint64_t variant) {
  std::mt19937_64 rng(variant * 0x9E3779B97F4A7C15ULL + 17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BehaviorScript walk;
  walk.kind = Behavior::kWalk;
  walk.start_frame = variant % 3 == 0 ? 0 : static_cast<std::size_t>(unit(rng) * 10.0);
  walk.start_frame = std::min(walk.start_frame, cfg.frames - 1);
  walk.end_frame = cfg.frames - 1;
  walk.start_position = {kMargin + unit(rng) * (cfg.room_size.x - 2 * kMargin),
                         kMargin + unit(rng) * (cfg.room_size.y - 3 * kMargin), 0.0};
  walk.heading = 2.0 * kPi * unit(rng);
  walk.speed_scale = 0.8 + 0.4 * unit(rng);
  return {walk};
}

std::vector<BehaviorScript> anomalous_scripts(const SceneConfig& cfg,
                                              Behavior anomaly,
                                              std::uint64_t variant) {
  if (!is_anomalous(anomaly))
    throw ConfigError(to_string(anomaly) + " is not an anomalous behavior");
  if (cfg.frames < 30) throw ConfigError("anomalous recipes need >= 30 frames");
  auto scripts = normal_scripts(cfg, variant);
  std::mt19937_64 rng(variant * 0xC2B2AE3D27D4EB4FULL + 5);
  std::uniform_int_distribution<std::size_t> jitter(0, cfg.frames / 10);
  BehaviorScript& walk = scripts.front();
  walk.start_frame = 5 + jitter(rng) / 2;
  const std::size_t onset = cfg.frames / 2 - cfg.frames / 20 + jitter(rng);
  walk.end_frame = onset - 1;
  BehaviorScript event = walk;
  event.kind = anomaly;
  event.start_frame = onset;
  event.end_frame = cfg.frames - 1;
  event.speed_scale = 1.0;
  scripts.push_back(event);
  return scripts;
}

double mean_displacement(const std::vector<PointFrame>& frames) {
  std::vector<Point3> centroids;
  for (const PointFrame& f : frames) {
    if (f.empty()) continue;
    Point3 c{};
    for (const Point3& p : f.points) c = c + p;
    centroids.push_back(c * (1.0 / static_cast<double>(f.size())));
  }
  if (centroids.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 1; i < centroids.size(); ++i)
    total += std::sqrt(squared_distance(centroids[i], centroids[i - 1]));
  return total / static_cast<double>(centroids.size() - 1);
}

}  // namespace pstae
