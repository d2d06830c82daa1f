#pragma once

// Camera models, frame conventions and the rig/class-table configuration.
//
// Frames:
//   camera  - x right, y down, z forward (pinhole convention)
//   vehicle - x forward, y left, z up (right-handed); z = 0 is the ground plane
//             under the rig. "Height" always means vehicle z.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "bevseg/error.hpp"

namespace bevseg {

using ClassId = std::uint8_t;
inline constexpr ClassId kDefaultVoidId = 255;
inline constexpr double kDefaultMountHeight = 1.8;

struct CameraIntrinsics {
  double f_u = 1.0;
  double f_v = 1.0;
  double c_u = 0.5;
  double c_v = 0.5;
  std::size_t width = 1;
  std::size_t height = 1;

  bool operator==(const CameraIntrinsics&) const = default;
};

inline void validate(const CameraIntrinsics& in) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_config, "rig", what); };
  if (in.width == 0 || in.height == 0) fail("image dimensions must be at least 1x1");
  if (!(in.f_u > 0.0) || !(in.f_v > 0.0) || !std::isfinite(in.f_u) || !std::isfinite(in.f_v))
    fail("focal lengths must be positive and finite");
  if (!(in.c_u > 0.0 && in.c_u < static_cast<double>(in.width)))
    fail("principal point column must lie strictly inside the image");
  if (!(in.c_v > 0.0 && in.c_v < static_cast<double>(in.height)))
    fail("principal point row must lie strictly inside the image");
}

// Square-pixel intrinsics from a horizontal field of view, principal point at
// the image centre.
inline CameraIntrinsics intrinsics_from_fov(std::size_t width, std::size_t height,
                                            double horizontal_fov_deg) {
  if (width == 0 || height == 0)
    throw Error(ErrorKind::invalid_config, "rig", "image dimensions must be at least 1x1");
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0))
    throw Error(ErrorKind::invalid_config, "rig", "horizontal field of view must be in (0, 180) degrees");
  const double half = horizontal_fov_deg * std::numbers::pi / 360.0;
  const double f = static_cast<double>(width) / (2.0 * std::tan(half));
  CameraIntrinsics in;
  in.f_u = f;
  in.f_v = f;
  in.c_u = static_cast<double>(width) / 2.0;
  in.c_v = static_cast<double>(height) / 2.0;
  in.width = width;
  in.height = height;
  return in;
}

inline double horizontal_fov_deg(const CameraIntrinsics& in) {
  return 2.0 * std::atan(static_cast<double>(in.width) / (2.0 * in.f_u)) * 180.0 / std::numbers::pi;
}

// Rigid camera -> vehicle transform: p_vehicle = rotation * p_camera + translation.
struct Extrinsics {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  bool operator==(const Extrinsics& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

inline void validate(const Extrinsics& ex) {
  const Eigen::Matrix3d& r = ex.rotation;
  if (!r.allFinite() || !ex.translation.allFinite())
    throw Error(ErrorKind::invalid_config, "rig", "extrinsics must be finite");
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw Error(ErrorKind::invalid_config, "rig", "rotation is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_config, "rig", "rotation determinant is not +1");
}

// Camera axes expressed in vehicle axes for a forward-facing camera:
// camera +z (forward) -> vehicle +x, camera +x (right) -> vehicle -y,
// camera +y (down) -> vehicle -z.
inline Eigen::Matrix3d camera_to_vehicle_axes() {
  Eigen::Matrix3d m;
  // clang-format off
  m <<  0,  0, 1,
       -1,  0, 0,
        0, -1, 0;
  // clang-format on
  return m;
}

// Rotation about the vehicle up-axis. Positive yaw turns the camera from
// vehicle +x towards vehicle +y, i.e. counter-clockwise seen from above.
inline Eigen::Matrix3d yaw_rotation(double yaw_deg) {
  const double a = yaw_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  Eigen::Matrix3d m;
  // clang-format off
  m << c, -s, 0,
       s,  c, 0,
       0,  0, 1;
  // clang-format on
  return m;
}

inline Extrinsics yaw_extrinsics(double yaw_deg, const Eigen::Vector3d& translation = Eigen::Vector3d::Zero()) {
  Extrinsics ex;
  ex.rotation = yaw_rotation(yaw_deg) * camera_to_vehicle_axes();
  ex.translation = translation;
  return ex;
}

struct ClassInfo {
  ClassId id = 0;
  std::string name;
  std::array<std::uint8_t, 3> color{0, 0, 0};

  bool operator==(const ClassInfo&) const = default;
};

struct ViewConfig {
  std::string name;
  CameraIntrinsics intrinsics;
  Extrinsics extrinsics;

  bool operator==(const ViewConfig&) const = default;
};

struct RigConfig {
  std::vector<ViewConfig> views;
  std::vector<ClassInfo> class_table;
  ClassId void_id = kDefaultVoidId;

  std::size_t num_classes() const noexcept { return class_table.size(); }
  bool is_semantic(ClassId id) const noexcept { return id < class_table.size(); }
  bool is_valid_label(ClassId id) const noexcept { return is_semantic(id) || id == void_id; }

  const ClassInfo& class_info(ClassId id) const {
    for (const auto& c : class_table)
      if (c.id == id) return c;
    throw Error(ErrorKind::invalid_input, "rig", "unknown class id " + std::to_string(id));
  }

  std::optional<ClassId> find_class(std::string_view name) const {
    for (const auto& c : class_table)
      if (c.name == name) return c.id;
    return std::nullopt;
  }

  bool operator==(const RigConfig&) const = default;
};

// Default class table and diagnostic palette.
inline std::vector<ClassInfo> default_class_table() {
  return {
      {0, "Buildings", {70, 70, 70}},   {1, "Fences", {100, 40, 40}},
      {2, "Pedestrians", {220, 20, 60}}, {3, "Poles", {153, 153, 153}},
      {4, "Road Lines", {157, 234, 50}}, {5, "Roads", {128, 64, 128}},
      {6, "Sidewalks", {244, 35, 232}},  {7, "Vehicles", {0, 0, 142}},
      {8, "Walls", {102, 102, 156}},
  };
}

namespace classes {
inline constexpr ClassId buildings = 0;
inline constexpr ClassId fences = 1;
inline constexpr ClassId pedestrians = 2;
inline constexpr ClassId poles = 3;
inline constexpr ClassId road_lines = 4;
inline constexpr ClassId roads = 5;
inline constexpr ClassId sidewalks = 6;
inline constexpr ClassId vehicles = 7;
inline constexpr ClassId walls = 8;
}  // namespace classes

inline void validate(const RigConfig& rig) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_config, "rig", what); };
  std::set<std::string> names;
  for (const auto& v : rig.views) {
    if (v.name.empty()) fail("view names must be non-empty");
    if (!names.insert(v.name).second) fail("duplicate view name '" + v.name + "'");
    validate(v.intrinsics);
    validate(v.extrinsics);
  }
  if (rig.class_table.empty()) fail("class table is empty");
  if (rig.class_table.size() > 255) fail("at most 255 semantic classes are supported");
  std::vector<bool> seen(rig.class_table.size(), false);
  for (const auto& c : rig.class_table) {
    if (c.id >= rig.class_table.size())
      fail("class ids must be contiguous from 0 (got " + std::to_string(c.id) + ")");
    if (seen[c.id]) fail("duplicate class id " + std::to_string(c.id));
    seen[c.id] = true;
  }
  if (rig.void_id < rig.class_table.size())
    fail("void id " + std::to_string(rig.void_id) + " collides with a semantic class id");
}

// Four cameras at one point on the roof, perpendicular to each other.
inline RigConfig default_rig(double mount_height = kDefaultMountHeight) {
  RigConfig rig;
  const auto intr = intrinsics_from_fov(1024, 576, 90.0);
  const std::array<std::pair<const char*, double>, 4> views{
      {{"front", 0.0}, {"left", 90.0}, {"back", 180.0}, {"right", 270.0}}};
  for (const auto& [name, yaw] : views)
    rig.views.push_back({name, intr, yaw_extrinsics(yaw, Eigen::Vector3d(0.0, 0.0, mount_height))});
  rig.class_table = default_class_table();
  rig.void_id = kDefaultVoidId;
  validate(rig);
  return rig;
}

// ---------------------------------------------------------------------------
// Structured-text (JSON) serialization. See docs/config.md for the schema.

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const char* module) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorKind::invalid_config, module, std::string("missing key '") + key + "'");
  return j.at(key);
}

template <typename T>
T get_as(const nlohmann::json& j, const char* key, const char* module) {
  const auto& v = require(j, key, module);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::invalid_config, module, std::string("key '") + key + "' has the wrong type");
  }
}

inline std::string read_text_file(const std::filesystem::path& path, const char* module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, module, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text, const char* module) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::not_found, module, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorKind::not_found, module, "failed writing '" + path.string() + "'");
}

inline nlohmann::json parse_json(std::string_view text, const char* module) {
  auto j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(ErrorKind::invalid_config, module, "malformed structured text");
  return j;
}

}  // namespace detail

inline nlohmann::json rig_to_json(const RigConfig& rig) {
  using nlohmann::json;
  json j;
  j["void_id"] = rig.void_id;
  json classes = json::array();
  for (const auto& c : rig.class_table)
    classes.push_back({{"id", c.id}, {"name", c.name}, {"color", c.color}});
  j["classes"] = classes;
  json views = json::array();
  for (const auto& v : rig.views) {
    const auto& in = v.intrinsics;
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
      rot.push_back({v.extrinsics.rotation(r, 0), v.extrinsics.rotation(r, 1), v.extrinsics.rotation(r, 2)});
    const auto& t = v.extrinsics.translation;
    views.push_back({{"name", v.name},
                     {"intrinsics",
                      {{"width", in.width}, {"height", in.height}, {"f_u", in.f_u}, {"f_v", in.f_v},
                       {"c_u", in.c_u}, {"c_v", in.c_v}}},
                     {"extrinsics", {{"rotation", rot}, {"translation_m", {t.x(), t.y(), t.z()}}}}});
  }
  j["views"] = views;
  return j;
}

inline RigConfig rig_from_json(const nlohmann::json& j) {
  using detail::get_as;
  using detail::require;
  constexpr const char* M = "rig";
  if (!j.is_object()) throw Error(ErrorKind::invalid_config, M, "rig document must be an object");

  RigConfig rig;
  const int void_id = get_as<int>(j, "void_id", M);
  if (void_id < 0 || void_id > 255) throw Error(ErrorKind::invalid_config, M, "void_id must fit in 8 bits");
  rig.void_id = static_cast<ClassId>(void_id);

  const auto& classes = require(j, "classes", M);
  if (!classes.is_array()) throw Error(ErrorKind::invalid_config, M, "'classes' must be a list");
  for (const auto& c : classes) {
    const int id = get_as<int>(c, "id", M);
    if (id < 0 || id > 254) throw Error(ErrorKind::invalid_config, M, "class id out of range");
    ClassInfo info;
    info.id = static_cast<ClassId>(id);
    info.name = get_as<std::string>(c, "name", M);
    if (c.contains("color")) {
      const auto rgb = get_as<std::vector<int>>(c, "color", M);
      if (rgb.size() != 3) throw Error(ErrorKind::invalid_config, M, "class colour needs 3 components");
      for (std::size_t k = 0; k < 3; ++k) {
        if (rgb[k] < 0 || rgb[k] > 255) throw Error(ErrorKind::invalid_config, M, "colour component out of range");
        info.color[k] = static_cast<std::uint8_t>(rgb[k]);
      }
    }
    rig.class_table.push_back(std::move(info));
  }

  const auto& views = require(j, "views", M);
  if (!views.is_array()) throw Error(ErrorKind::invalid_config, M, "'views' must be a list");
  for (const auto& v : views) {
    ViewConfig view;
    view.name = get_as<std::string>(v, "name", M);
    const auto& in = require(v, "intrinsics", M);
    const auto width = get_as<long long>(in, "width", M);
    const auto height = get_as<long long>(in, "height", M);
    if (width < 1 || height < 1 || width > 1 << 16 || height > 1 << 16)
      throw Error(ErrorKind::invalid_config, M, "image dimensions out of range");
    if (in.contains("fov_deg")) {
      view.intrinsics = intrinsics_from_fov(static_cast<std::size_t>(width), static_cast<std::size_t>(height),
                                            get_as<double>(in, "fov_deg", M));
    } else {
      view.intrinsics.width = static_cast<std::size_t>(width);
      view.intrinsics.height = static_cast<std::size_t>(height);
      view.intrinsics.f_u = get_as<double>(in, "f_u", M);
      view.intrinsics.f_v = get_as<double>(in, "f_v", M);
      view.intrinsics.c_u = get_as<double>(in, "c_u", M);
      view.intrinsics.c_v = get_as<double>(in, "c_v", M);
    }
    const auto& ex = require(v, "extrinsics", M);
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    if (ex.contains("translation_m")) {
      const auto tv = get_as<std::vector<double>>(ex, "translation_m", M);
      if (tv.size() != 3) throw Error(ErrorKind::invalid_config, M, "translation needs 3 components");
      t = Eigen::Vector3d(tv[0], tv[1], tv[2]);
    }
    if (ex.contains("yaw_deg")) {
      view.extrinsics = yaw_extrinsics(get_as<double>(ex, "yaw_deg", M), t);
    } else {
      const auto rows = get_as<std::vector<std::vector<double>>>(ex, "rotation", M);
      if (rows.size() != 3) throw Error(ErrorKind::invalid_config, M, "rotation needs 3 rows");
      for (int r = 0; r < 3; ++r) {
        if (rows[r].size() != 3) throw Error(ErrorKind::invalid_config, M, "rotation rows need 3 entries");
        for (int c = 0; c < 3; ++c) view.extrinsics.rotation(r, c) = rows[r][c];
      }
      view.extrinsics.translation = t;
    }
    rig.views.push_back(std::move(view));
  }
  validate(rig);
  return rig;
}

inline RigConfig parse_rig(std::string_view text) { return rig_from_json(detail::parse_json(text, "rig")); }

inline RigConfig load_rig(const std::filesystem::path& path) {
  return parse_rig(detail::read_text_file(path, "rig"));
}

inline void save_rig(const RigConfig& rig, const std::filesystem::path& path) {
  validate(rig);
  detail::write_text_file(path, rig_to_json(rig).dump(2) + "\n", "rig");
}

}  // namespace bevseg
