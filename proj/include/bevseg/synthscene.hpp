#pragma once

// Deterministic synthetic street scenes: a ground plane with longitudinal
// stripes (sidewalks, lane markings) and axis-aligned boxes resting on it.
// Renders planar depth + labels per camera and the exact top-down labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "bevseg/bevraster.hpp"
#include "bevseg/error.hpp"
#include "bevseg/parallel.hpp"
#include "bevseg/raster.hpp"
#include "bevseg/rig.hpp"
#include "bevseg/unproject.hpp"

namespace bevseg {

// Axis-aligned ground rectangle in vehicle coordinates, half-open on both axes.
struct GroundRegion {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
  ClassId class_id = classes::sidewalks;

  bool contains(double x, double y) const noexcept { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
  bool operator==(const GroundRegion&) const = default;
};

struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  ClassId class_id = classes::vehicles;

  Eigen::Vector3d min_corner() const { return center - size / 2.0; }
  Eigen::Vector3d max_corner() const { return center + size / 2.0; }
  GroundRegion footprint() const {
    const auto lo = min_corner();
    const auto hi = max_corner();
    return {lo.x(), hi.x(), lo.y(), hi.y(), class_id};
  }
  bool operator==(const Box& o) const { return center == o.center && size == o.size && class_id == o.class_id; }
};

struct Scene {
  double extent = 15.0;
  std::uint64_t seed = 0;
  ClassId ground_class = classes::roads;
  std::vector<GroundRegion> regions;  // first match wins
  std::vector<Box> boxes;

  bool operator==(const Scene&) const = default;
};

struct StripeSpec {
  ClassId class_id = classes::sidewalks;
  std::size_t count = 0;
  double min_width = 1.0;
  double max_width = 1.0;
};

struct BoxSpec {
  ClassId class_id = classes::vehicles;
  std::size_t count = 0;
  Eigen::Vector3d min_size = Eigen::Vector3d::Ones();
  Eigen::Vector3d max_size = Eigen::Vector3d::Ones();
};

struct SceneSpec {
  double extent = 15.0;
  // Boxes stay out of the square |x|, |y| < keep_out around the rig.
  double keep_out = 2.0;
  // Minimum clearance between box footprints, and between stripes.
  double min_gap = 0.0;
  std::size_t max_attempts = 1000;
  std::vector<StripeSpec> stripes;
  std::vector<BoxSpec> boxes;
};

// A street-like layout: two sidewalks, two lane markings, parked vehicles,
// pedestrians, poles and a few structures.
inline SceneSpec default_scene_spec() {
  using V = Eigen::Vector3d;
  SceneSpec s;
  s.extent = 15.0;
  s.keep_out = 2.5;
  s.min_gap = 0.3;
  s.stripes = {
      {classes::sidewalks, 2, 1.5, 2.5},
      {classes::road_lines, 2, 0.12, 0.2},
  };
  s.boxes = {
      {classes::vehicles, 2, V(3.5, 1.7, 1.3), V(4.8, 2.0, 1.6)},
      {classes::pedestrians, 3, V(0.4, 0.4, 1.6), V(0.7, 0.7, 1.9)},
      {classes::poles, 2, V(0.2, 0.2, 3.0), V(0.3, 0.3, 5.0)},
      {classes::buildings, 1, V(2.5, 2.5, 4.0), V(4.0, 4.0, 8.0)},
      {classes::fences, 1, V(0.2, 2.0, 1.0), V(0.3, 3.5, 1.5)},
      {classes::walls, 1, V(2.0, 0.25, 1.2), V(3.5, 0.35, 2.0)},
  };
  return s;
}

namespace detail {

// Portable uniform double in [0, 1) from 53 random bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline bool overlaps(const GroundRegion& a, const GroundRegion& b, double gap) {
  return a.x_min < b.x_max + gap && b.x_min < a.x_max + gap && a.y_min < b.y_max + gap && b.y_min < a.y_max + gap;
}

}  // namespace detail

inline void validate(const Scene& scene) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_config, "synthscene", what); };
  if (!(scene.extent > 0.0) || !std::isfinite(scene.extent)) fail("scene extent must be positive");
  for (const auto& b : scene.boxes) {
    if (!b.center.allFinite() || !b.size.allFinite() || (b.size.array() <= 0.0).any())
      fail("box sizes must be positive and finite");
    if (std::abs(b.min_corner().z()) > 1e-12) fail("boxes must rest on the ground (min z = 0)");
  }
  for (std::size_t i = 0; i < scene.boxes.size(); ++i)
    for (std::size_t j = i + 1; j < scene.boxes.size(); ++j)
      if (detail::overlaps(scene.boxes[i].footprint(), scene.boxes[j].footprint(), 0.0))
        fail("box footprints " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
  for (const auto& r : scene.regions)
    if (!(r.x_min < r.x_max && r.y_min < r.y_max)) fail("ground regions must have positive area");
}

inline Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  if (!(spec.extent > 0.0)) throw Error(ErrorKind::invalid_config, "synthscene", "extent must be positive");
  if (spec.keep_out < 0.0 || spec.min_gap < 0.0)
    throw Error(ErrorKind::invalid_config, "synthscene", "keep-out and gap must be non-negative");
  for (const auto& s : spec.stripes)
    if (!(s.min_width > 0.0 && s.max_width >= s.min_width))
      throw Error(ErrorKind::invalid_config, "synthscene", "stripe width range must be positive");
  for (const auto& b : spec.boxes)
    if ((b.min_size.array() <= 0.0).any() || (b.max_size.array() < b.min_size.array()).any())
      throw Error(ErrorKind::invalid_config, "synthscene", "box size ranges must be positive");

  std::mt19937_64 rng(seed);
  Scene scene;
  scene.extent = spec.extent;
  scene.seed = seed;
  const double half = spec.extent / 2.0;

  for (const auto& stripe : spec.stripes) {
    for (std::size_t n = 0; n < stripe.count; ++n) {
      bool placed = false;
      for (std::size_t attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
        const double w = detail::uniform(rng, stripe.min_width, stripe.max_width);
        if (w >= spec.extent) break;
        const double y0 = detail::uniform(rng, -half, half - w);
        const GroundRegion r{-half, half, y0, y0 + w, stripe.class_id};
        const bool clash = std::any_of(scene.regions.begin(), scene.regions.end(),
                                       [&](const GroundRegion& o) { return detail::overlaps(r, o, spec.min_gap); });
        if (!clash) {
          scene.regions.push_back(r);
          placed = true;
        }
      }
      if (!placed)
        throw Error(ErrorKind::generation, "synthscene",
                    "could not place stripe of class " + std::to_string(stripe.class_id) + " without overlap");
    }
  }

  const GroundRegion ego{-spec.keep_out, spec.keep_out, -spec.keep_out, spec.keep_out, 0};
  for (const auto& kind : spec.boxes) {
    for (std::size_t n = 0; n < kind.count; ++n) {
      bool placed = false;
      for (std::size_t attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
        Box b;
        b.class_id = kind.class_id;
        for (int a = 0; a < 3; ++a) b.size[a] = detail::uniform(rng, kind.min_size[a], kind.max_size[a]);
        if (b.size.x() >= spec.extent || b.size.y() >= spec.extent) break;
        b.center.x() = detail::uniform(rng, -half + b.size.x() / 2.0, half - b.size.x() / 2.0);
        b.center.y() = detail::uniform(rng, -half + b.size.y() / 2.0, half - b.size.y() / 2.0);
        b.center.z() = b.size.z() / 2.0;
        const auto fp = b.footprint();
        if (spec.keep_out > 0.0 && detail::overlaps(fp, ego, 0.0)) continue;
        const bool clash = std::any_of(scene.boxes.begin(), scene.boxes.end(),
                                       [&](const Box& o) { return detail::overlaps(fp, o.footprint(), spec.min_gap); });
        if (!clash) {
          scene.boxes.push_back(b);
          placed = true;
        }
      }
      if (!placed)
        throw Error(ErrorKind::generation, "synthscene",
                    "could not place box of class " + std::to_string(kind.class_id) + " within " +
                        std::to_string(spec.max_attempts) + " attempts");
    }
  }
  validate(scene);
  return scene;
}

// ---------------------------------------------------------------------------
// Ray casting

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  ClassId class_id = 0;
  // -1 for the ground plane, otherwise the box index.
  std::ptrdiff_t primitive = -1;
  bool hit() const noexcept { return std::isfinite(t); }
};

// Entry parameter of the ray into an axis-aligned box, if it enters at t > 0.
inline std::optional<double> intersect_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, const Box& box) {
  const Eigen::Vector3d lo = box.min_corner();
  const Eigen::Vector3d hi = box.max_corner();
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t1 = (lo[a] - origin[a]) / dir[a];
    double t2 = (hi[a] - origin[a]) / dir[a];
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
  }
  if (t_exit < t_enter || t_enter <= 0.0) return std::nullopt;
  return t_enter;
}

inline RayHit cast_ray(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  RayHit best;
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    if (auto t = intersect_box(origin, dir, scene.boxes[i]); t && *t < best.t) {
      best.t = *t;
      best.class_id = scene.boxes[i].class_id;
      best.primitive = static_cast<std::ptrdiff_t>(i);
    }
  }
  if (dir.z() < 0.0 && origin.z() > 0.0) {
    const double t = -origin.z() / dir.z();
    if (t < best.t) {
      best.t = t;
      best.primitive = -1;
      const double x = origin.x() + t * dir.x();
      const double y = origin.y() + t * dir.y();
      best.class_id = scene.ground_class;
      for (const auto& r : scene.regions) {
        if (r.contains(x, y)) {
          best.class_id = r.class_id;
          break;
        }
      }
    }
  }
  return best;
}

struct RenderOptions {
  std::size_t view_index = 0;
  bool half_pixel_centers = false;
  double sky_depth = kDefaultMaxRange;
  // Additive Gaussian depth noise in metres; 0 disables it.
  double depth_noise_stddev = 0.0;
  std::uint64_t noise_seed = 0;
  ClassId void_id = kDefaultVoidId;
  std::size_t workers = 1;
};

// Planar depth (camera z of the hit) and hit class per pixel. Rays are
// parameterised with unit camera-z component, so the ray parameter of the hit
// is the planar depth.
inline ViewFrame render_view(const Scene& scene, const CameraIntrinsics& intr, const Extrinsics& ext,
                             const RenderOptions& opts = {}) {
  if (!(ext.translation.z() > 0.0))
    throw Error(ErrorKind::invalid_config, "synthscene", "camera must be mounted above the ground");
  ViewFrame frame;
  frame.view_index = opts.view_index;
  frame.depth = Raster<float>(intr.height, intr.width, static_cast<float>(opts.sky_depth));
  frame.labels = Raster<ClassId>(intr.height, intr.width, opts.void_id);
  const double offset = opts.half_pixel_centers ? 0.5 : 0.0;

  parallel_for(intr.height, opts.workers, [&](const WorkRange& range) {
    for (std::size_t v = range.begin; v < range.end; ++v) {
      std::mt19937_64 noise_rng(opts.noise_seed ^ (0x9E3779B97F4A7C15ull * (opts.view_index + 1)) ^
                                (0xBF58476D1CE4E5B9ull * (v + 1)));
      std::normal_distribution<double> noise(0.0, opts.depth_noise_stddev > 0.0 ? opts.depth_noise_stddev : 1.0);
      for (std::size_t u = 0; u < intr.width; ++u) {
        const Eigen::Vector3d ray_cam((static_cast<double>(u) + offset - intr.c_u) / intr.f_u,
                                      (static_cast<double>(v) + offset - intr.c_v) / intr.f_v, 1.0);
        const Eigen::Vector3d dir = ext.rotation * ray_cam;
        const RayHit hit = cast_ray(scene, ext.translation, dir);
        if (!hit.hit()) continue;
        double depth = hit.t;
        if (opts.depth_noise_stddev > 0.0) depth = std::max(0.0, depth + noise(noise_rng));
        frame.depth(v, u) = static_cast<float>(depth);
        frame.labels(v, u) = hit.class_id;
      }
    }
  });
  return frame;
}

inline std::vector<ViewFrame> render_rig(const Scene& scene, const RigConfig& rig, RenderOptions opts = {}) {
  std::vector<ViewFrame> frames;
  frames.reserve(rig.views.size());
  opts.void_id = rig.void_id;
  for (std::size_t i = 0; i < rig.views.size(); ++i) {
    opts.view_index = i;
    frames.push_back(render_view(scene, rig.views[i].intrinsics, rig.views[i].extrinsics, opts));
  }
  return frames;
}

namespace detail {

// Rows (or columns) whose cell-centre coordinate lies in [lo, hi). Candidates
// come from the affine map, membership is decided by evaluating the centre.
template <typename CenterFn>
std::pair<std::size_t, std::size_t> covered_span(double lo, double hi, const BevGrid& grid, CenterFn center) {
  const double half = grid.extent() / 2.0;
  const double res = grid.resolution();
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
  // Centres decrease with the index: index i covers half - (i + 0.5) * res.
  auto first = static_cast<std::ptrdiff_t>(std::floor((half - hi) / res - 0.5)) - 1;
  auto last = static_cast<std::ptrdiff_t>(std::ceil((half - lo) / res - 0.5)) + 1;
  first = std::clamp<std::ptrdiff_t>(first, 0, n);
  last = std::clamp<std::ptrdiff_t>(last, -1, n - 1);
  std::ptrdiff_t begin = n, end = 0;
  for (auto i = first; i <= last; ++i) {
    const double c = center(static_cast<std::size_t>(i));
    if (c >= lo && c < hi) {
      begin = std::min(begin, i);
      end = std::max(end, i + 1);
    }
  }
  if (begin >= end) return {0, 0};
  return {static_cast<std::size_t>(begin), static_cast<std::size_t>(end)};
}

inline void paint(BevMap& map, const GroundRegion& r, double height) {
  const auto& g = map.grid;
  const auto [r0, r1] = covered_span(r.x_min, r.x_max, g, [&](std::size_t i) { return g.cell_center_x(i); });
  const auto [c0, c1] = covered_span(r.y_min, r.y_max, g, [&](std::size_t i) { return g.cell_center_y(i); });
  for (std::size_t row = r0; row < r1; ++row) {
    for (std::size_t col = c0; col < c1; ++col) {
      map.cells(row, col) = r.class_id;
      map.winner_height(row, col) = height;
    }
  }
}

}  // namespace detail

// Exact top-down labels at cell centres: box footprint, else the first ground
// region containing the centre, else the ground class.
inline BevMap render_bev_gt(const Scene& scene, const BevGrid& grid, ClassId void_id = kDefaultVoidId) {
  BevMap map(grid, void_id);
  std::fill(map.cells.values().begin(), map.cells.values().end(), scene.ground_class);
  std::fill(map.winner_height.values().begin(), map.winner_height.values().end(), 0.0);
  for (auto it = scene.regions.rbegin(); it != scene.regions.rend(); ++it) detail::paint(map, *it, 0.0);
  for (const auto& b : scene.boxes) detail::paint(map, b.footprint(), b.size.z());
  return map;
}

// ---------------------------------------------------------------------------
// Structured-text serialization (same family as the rig file).

inline nlohmann::json scene_to_json(const Scene& s) {
  using nlohmann::json;
  json regions = json::array();
  for (const auto& r : s.regions)
    regions.push_back({{"x_min", r.x_min}, {"x_max", r.x_max}, {"y_min", r.y_min}, {"y_max", r.y_max},
                       {"class_id", r.class_id}});
  json boxes = json::array();
  for (const auto& b : s.boxes)
    boxes.push_back({{"center_m", {b.center.x(), b.center.y(), b.center.z()}},
                     {"size_m", {b.size.x(), b.size.y(), b.size.z()}},
                     {"class_id", b.class_id}});
  return {{"extent_m", s.extent}, {"seed", s.seed}, {"ground_class", s.ground_class}, {"regions", regions},
          {"boxes", boxes}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
  using detail::get_as;
  constexpr const char* M = "synthscene";
  if (!j.is_object()) throw Error(ErrorKind::invalid_config, M, "scene document must be an object");
  auto class_of = [&](const nlohmann::json& o, const char* key) {
    const int v = get_as<int>(o, key, M);
    if (v < 0 || v > 254) throw Error(ErrorKind::invalid_config, M, "class id out of range");
    return static_cast<ClassId>(v);
  };
  auto vec3 = [&](const nlohmann::json& o, const char* key) {
    const auto v = get_as<std::vector<double>>(o, key, M);
    if (v.size() != 3) throw Error(ErrorKind::invalid_config, M, std::string("'") + key + "' needs 3 components");
    return Eigen::Vector3d(v[0], v[1], v[2]);
  };
  Scene s;
  s.extent = get_as<double>(j, "extent_m", M);
  s.seed = get_as<std::uint64_t>(j, "seed", M);
  s.ground_class = class_of(j, "ground_class");
  for (const auto& r : detail::require(j, "regions", M))
    s.regions.push_back({get_as<double>(r, "x_min", M), get_as<double>(r, "x_max", M), get_as<double>(r, "y_min", M),
                         get_as<double>(r, "y_max", M), class_of(r, "class_id")});
  for (const auto& b : detail::require(j, "boxes", M)) {
    Box box;
    box.center = vec3(b, "center_m");
    box.size = vec3(b, "size_m");
    box.class_id = class_of(b, "class_id");
    s.boxes.push_back(box);
  }
  validate(s);
  return s;
}

inline std::string serialize_scene(const Scene& s) { return scene_to_json(s).dump(2) + "\n"; }

inline Scene parse_scene(std::string_view text) {
  return scene_from_json(detail::parse_json(text, "synthscene"));
}

inline void save_scene(const Scene& s, const std::filesystem::path& path) {
  detail::write_text_file(path, serialize_scene(s), "synthscene");
}

inline Scene load_scene(const std::filesystem::path& path) {
  return parse_scene(detail::read_text_file(path, "synthscene"));
}

inline nlohmann::json scene_spec_to_json(const SceneSpec& s) {
  using nlohmann::json;
  json stripes = json::array();
  for (const auto& st : s.stripes)
    stripes.push_back(
        {{"class_id", st.class_id}, {"count", st.count}, {"min_width_m", st.min_width}, {"max_width_m", st.max_width}});
  json boxes = json::array();
  for (const auto& b : s.boxes)
    boxes.push_back({{"class_id", b.class_id},
                     {"count", b.count},
                     {"min_size_m", {b.min_size.x(), b.min_size.y(), b.min_size.z()}},
                     {"max_size_m", {b.max_size.x(), b.max_size.y(), b.max_size.z()}}});
  return {{"extent_m", s.extent}, {"keep_out_m", s.keep_out}, {"min_gap_m", s.min_gap},
          {"max_attempts", s.max_attempts}, {"stripes", stripes}, {"boxes", boxes}};
}

inline SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  using detail::get_as;
  constexpr const char* M = "synthscene";
  if (!j.is_object()) throw Error(ErrorKind::invalid_config, M, "scene spec must be an object");
  SceneSpec s;
  if (j.contains("extent_m")) s.extent = get_as<double>(j, "extent_m", M);
  if (j.contains("keep_out_m")) s.keep_out = get_as<double>(j, "keep_out_m", M);
  if (j.contains("min_gap_m")) s.min_gap = get_as<double>(j, "min_gap_m", M);
  if (j.contains("max_attempts")) s.max_attempts = get_as<std::size_t>(j, "max_attempts", M);
  auto class_of = [&](const nlohmann::json& o) {
    const int v = get_as<int>(o, "class_id", M);
    if (v < 0 || v > 254) throw Error(ErrorKind::invalid_config, M, "class id out of range");
    return static_cast<ClassId>(v);
  };
  auto vec3 = [&](const nlohmann::json& o, const char* key) {
    const auto v = get_as<std::vector<double>>(o, key, M);
    if (v.size() != 3) throw Error(ErrorKind::invalid_config, M, std::string("'") + key + "' needs 3 components");
    return Eigen::Vector3d(v[0], v[1], v[2]);
  };
  if (j.contains("stripes"))
    for (const auto& st : j.at("stripes"))
      s.stripes.push_back({class_of(st), get_as<std::size_t>(st, "count", M), get_as<double>(st, "min_width_m", M),
                           get_as<double>(st, "max_width_m", M)});
  if (j.contains("boxes"))
    for (const auto& b : j.at("boxes"))
      s.boxes.push_back({class_of(b), get_as<std::size_t>(b, "count", M), vec3(b, "min_size_m"), vec3(b, "max_size_m")});
  return s;
}

}  // namespace bevseg
