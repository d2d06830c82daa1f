#pragma once

// Depth + segmentation -> semantic point clouds, camera frame to vehicle frame,
// multi-view fusion.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bevseg/error.hpp"
#include "bevseg/parallel.hpp"
#include "bevseg/raster.hpp"
#include "bevseg/rig.hpp"

namespace bevseg {

// Simulator-style depth ceiling; also the sentinel written for sky pixels.
inline constexpr double kDefaultMaxRange = 1000.0;

struct ViewFrame {
  std::size_t view_index = 0;
  Raster<float> depth;     // metres, planar (camera z)
  Raster<ClassId> labels;  // class ids or void
};

struct UnprojectOptions {
  double max_range = kDefaultMaxRange;
  // When set, pixel (u, v) is taken at (u + 0.5, v + 0.5) instead of at its
  // integer coordinates.
  bool half_pixel_centers = false;
};

inline Eigen::Vector3d unproject_pixel(double u, double v, double depth, const CameraIntrinsics& intr) {
  if (!(depth > 0.0) || !std::isfinite(depth))
    throw Error(ErrorKind::invalid_input, "unproject", "depth must be positive and finite");
  const double z = depth;
  return {(u - intr.c_u) * z / intr.f_u, (v - intr.c_v) * z / intr.f_v, z};
}

inline Eigen::Vector2d project_point(const Eigen::Vector3d& p, const CameraIntrinsics& intr) {
  if (!(p.z() > 0.0)) throw Error(ErrorKind::behind_camera, "unproject", "point is not in front of the camera");
  return {intr.f_u * p.x() / p.z() + intr.c_u, intr.f_v * p.y() / p.z() + intr.c_v};
}

struct CloudFrame {
  enum class Kind : std::uint8_t { camera, vehicle };
  Kind kind = Kind::vehicle;
  std::size_t view_index = 0;  // meaningful for camera frames only

  static CloudFrame camera(std::size_t view) { return {Kind::camera, view}; }
  static CloudFrame vehicle() { return {Kind::vehicle, 0}; }
  bool is_camera() const noexcept { return kind == Kind::camera; }
  bool is_vehicle() const noexcept { return kind == Kind::vehicle; }
  bool operator==(const CloudFrame&) const = default;
};

template <typename T>
struct SemanticPoint {
  T x = 0;
  T y = 0;
  T z = 0;
  ClassId class_id = 0;
  std::uint16_t view = 0;
  std::uint32_t pixel_index = 0;  // v * width + u in the source view

  bool operator==(const SemanticPoint&) const = default;
};

// Flat array of labelled points. The position of a point in `points` is its
// fused-cloud index, which breaks height ties during rasterization.
template <typename T>
struct BasicPointCloud {
  using Scalar = T;
  CloudFrame frame = CloudFrame::vehicle();
  std::vector<SemanticPoint<T>> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool operator==(const BasicPointCloud&) const = default;
};

using SemanticPointCloud = BasicPointCloud<float>;

inline bool is_valid_depth(float depth, double max_range) noexcept {
  return std::isfinite(depth) && depth > 0.0f && static_cast<double>(depth) < max_range;
}

inline void check_frame(const ViewFrame& frame, const RigConfig& rig) {
  if (frame.view_index >= rig.views.size())
    throw Error(ErrorKind::invalid_input, "unproject", "view index out of range for rig");
  const auto& intr = rig.views[frame.view_index].intrinsics;
  if (frame.depth.rows() != intr.height || frame.depth.cols() != intr.width ||
      frame.labels.rows() != intr.height || frame.labels.cols() != intr.width)
    throw Error(ErrorKind::invalid_input, "unproject",
                "frame dimensions do not match intrinsics of view '" + rig.views[frame.view_index].name + "'");
  if (rig.views.size() > std::numeric_limits<std::uint16_t>::max() + 1ull)
    throw Error(ErrorKind::invalid_input, "unproject", "too many views for 16-bit provenance");
}

// One point per pixel with a valid depth and a non-void label, row-major.
template <typename T = float>
BasicPointCloud<T> unproject_view(const ViewFrame& frame, const RigConfig& rig,
                                  const UnprojectOptions& opts = {}) {
  check_frame(frame, rig);
  const auto& intr = rig.views[frame.view_index].intrinsics;
  const double offset = opts.half_pixel_centers ? 0.5 : 0.0;
  const auto view = static_cast<std::uint16_t>(frame.view_index);

  BasicPointCloud<T> cloud;
  cloud.frame = CloudFrame::camera(frame.view_index);
  for (std::size_t v = 0; v < intr.height; ++v) {
    const auto depth_row = frame.depth.row(v);
    const auto label_row = frame.labels.row(v);
    for (std::size_t u = 0; u < intr.width; ++u) {
      const ClassId label = label_row[u];
      if (label == rig.void_id) continue;
      if (!rig.is_semantic(label))
        throw Error(ErrorKind::invalid_input, "unproject", "label " + std::to_string(label) + " not in class table");
      const float d = depth_row[u];
      if (!is_valid_depth(d, opts.max_range)) continue;
      const double z = d;
      const double x = (static_cast<double>(u) + offset - intr.c_u) * z / intr.f_u;
      const double y = (static_cast<double>(v) + offset - intr.c_v) * z / intr.f_v;
      cloud.points.push_back({static_cast<T>(x), static_cast<T>(y), static_cast<T>(z), label, view,
                              static_cast<std::uint32_t>(v * intr.width + u)});
    }
  }
  return cloud;
}

template <typename T>
BasicPointCloud<T> to_vehicle(const BasicPointCloud<T>& cloud, const Extrinsics& ext) {
  if (!cloud.frame.is_camera())
    throw Error(ErrorKind::invalid_state, "unproject", "cloud is already in the vehicle frame");
  BasicPointCloud<T> out;
  out.frame = CloudFrame::vehicle();
  out.points.resize(cloud.points.size());
  const Eigen::Matrix3d& r = ext.rotation;
  const Eigen::Vector3d& t = ext.translation;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    const Eigen::Vector3d q = r * Eigen::Vector3d(p.x, p.y, p.z) + t;
    out.points[i] = {static_cast<T>(q.x()), static_cast<T>(q.y()), static_cast<T>(q.z()), p.class_id, p.view,
                     p.pixel_index};
  }
  return out;
}

// Concatenation in argument order (view order, then row-major pixel order).
template <typename T>
BasicPointCloud<T> fuse(std::span<const BasicPointCloud<T>> clouds) {
  BasicPointCloud<T> out;
  out.frame = CloudFrame::vehicle();
  std::size_t total = 0;
  for (const auto& c : clouds) {
    if (!c.frame.is_vehicle())
      throw Error(ErrorKind::invalid_input, "unproject", "fuse expects vehicle-frame clouds only");
    total += c.points.size();
  }
  out.points.reserve(total);
  for (const auto& c : clouds) out.points.insert(out.points.end(), c.points.begin(), c.points.end());
  return out;
}

template <typename T>
BasicPointCloud<T> fuse(const std::vector<BasicPointCloud<T>>& clouds) {
  return fuse(std::span<const BasicPointCloud<T>>(clouds));
}

// Unprojects, transforms and fuses every frame. Views are processed
// concurrently, the result is assembled in frame order.
template <typename T = float>
BasicPointCloud<T> build_vehicle_cloud(std::span<const ViewFrame> frames, const RigConfig& rig,
                                       const UnprojectOptions& opts = {}, std::size_t workers = 1) {
  std::vector<BasicPointCloud<T>> per_view(frames.size());
  parallel_for(frames.size(), workers, [&](const WorkRange& range) {
    for (std::size_t i = range.begin; i < range.end; ++i) {
      const auto& f = frames[i];
      per_view[i] = to_vehicle(unproject_view<T>(f, rig, opts), rig.views.at(f.view_index).extrinsics);
    }
  });
  return fuse(std::span<const BasicPointCloud<T>>(per_view));
}

}  // namespace bevseg
