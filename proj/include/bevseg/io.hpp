#pragma once

// File formats for every stage boundary. Byte layouts are specified in
// docs/formats.md; every reader also has an in-memory decode_* form that never
// touches the filesystem (used for fuzzing).

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bevseg/bevraster.hpp"
#include "bevseg/error.hpp"
#include "bevseg/eval.hpp"
#include "bevseg/png_codec.hpp"
#include "bevseg/raster.hpp"
#include "bevseg/rig.hpp"
#include "bevseg/unproject.hpp"

namespace bevseg::io {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::size_t kDepthHeaderSize = 12;
inline constexpr std::size_t kTensorHeaderSize = 16;
inline constexpr std::size_t kCloudRecordSize = 4 + 4 + 4 + 1 + 2 + 4;

// --------------------------------------------------------------------------
// Byte helpers

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, "io", "cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, ByteView bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::not_found, "io", "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::not_found, "io", "failed writing '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

namespace detail {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void put_f32(Bytes& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (static_cast<std::uint16_t>(p[1]) << 8));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

// Distinguishes "short prefix of the right magic" (truncated) from "wrong
// magic" (malformed).
inline void check_magic(ByteView bytes, std::string_view magic, const char* what) {
  const std::size_t n = std::min(bytes.size(), magic.size());
  if (n == 0 || std::memcmp(bytes.data(), magic.data(), n) != 0)
    throw Error(ErrorKind::malformed_header, "io", std::string(what) + ": bad magic");
  if (bytes.size() < magic.size()) throw Error(ErrorKind::truncated, "io", std::string(what) + ": truncated magic");
}

inline nlohmann::json parse_sidecar(std::string_view text, const char* what) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorKind::malformed_header, "io", std::string(what) + ": sidecar is not a structured-text object");
  return j;
}

template <typename T>
T sidecar_get(const nlohmann::json& j, const char* key, const char* what) {
  if (!j.contains(key))
    throw Error(ErrorKind::malformed_header, "io", std::string(what) + ": sidecar lacks '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::malformed_header, "io", std::string(what) + ": sidecar key '" + key + "' has wrong type");
  }
}

}  // namespace detail

// --------------------------------------------------------------------------
// Depth: "BDEP", u32 width, u32 height, then width*height float32, LE.

inline Bytes encode_depth(const Raster<float>& depth) {
  Bytes out;
  out.reserve(kDepthHeaderSize + depth.size() * 4);
  out.insert(out.end(), {'B', 'D', 'E', 'P'});
  detail::put_u32(out, static_cast<std::uint32_t>(depth.cols()));
  detail::put_u32(out, static_cast<std::uint32_t>(depth.rows()));
  for (float v : depth.values()) detail::put_f32(out, v);
  return out;
}

inline Raster<float> decode_depth(ByteView bytes) {
  detail::check_magic(bytes, "BDEP", "depth file");
  if (bytes.size() < kDepthHeaderSize) throw Error(ErrorKind::truncated, "io", "depth file: truncated header");
  const std::uint64_t width = detail::get_u32(bytes.data() + 4);
  const std::uint64_t height = detail::get_u32(bytes.data() + 8);
  if (width == 0 || height == 0) throw Error(ErrorKind::malformed_header, "io", "depth file: zero dimension");
  const std::uint64_t expected = width * height * 4;
  const std::uint64_t payload = bytes.size() - kDepthHeaderSize;
  if (payload < expected) throw Error(ErrorKind::truncated, "io", "depth file: payload shorter than declared");
  if (payload > expected) throw Error(ErrorKind::malformed_header, "io", "depth file: payload longer than declared");
  Raster<float> depth(height, width);
  const std::uint8_t* p = bytes.data() + kDepthHeaderSize;
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = detail::get_f32(p + 4 * i);
  return depth;
}

inline void write_depth(const std::filesystem::path& path, const Raster<float>& depth) {
  write_file(path, encode_depth(depth));
}

inline Raster<float> read_depth(const std::filesystem::path& path) { return decode_depth(read_file(path)); }

// 16-bit grayscale PNG ingest. The sidecar declares the unit, e.g.
// {"units": "millimeters"} or {"meters_per_unit": 0.001}. Zero means no depth.
inline Raster<float> decode_depth_png(ByteView png_bytes, std::string_view sidecar) {
  const auto meta = detail::parse_sidecar(sidecar, "depth png");
  double scale = 0.0;
  if (meta.contains("meters_per_unit")) {
    scale = detail::sidecar_get<double>(meta, "meters_per_unit", "depth png");
  } else {
    const auto units = detail::sidecar_get<std::string>(meta, "units", "depth png");
    if (units == "millimeters" || units == "mm") {
      scale = 0.001;
    } else if (units == "centimeters" || units == "cm") {
      scale = 0.01;
    } else if (units == "meters" || units == "m") {
      scale = 1.0;
    } else {
      throw Error(ErrorKind::malformed_header, "io", "depth png: unknown units '" + units + "'");
    }
  }
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw Error(ErrorKind::malformed_header, "io", "depth png: unit scale must be positive");
  const auto img = png::decode(png_bytes, "io");
  if (img.bit_depth != 16 || img.color_type != PNG_COLOR_TYPE_GRAY)
    throw Error(ErrorKind::malformed_header, "io", "depth png: expected 16-bit grayscale");
  Raster<float> depth(img.height, img.width);
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = static_cast<float>(img.samples[i] * scale);
  return depth;
}

inline Raster<float> read_depth_png(const std::filesystem::path& path) {
  return decode_depth_png(read_file(path), read_text(sidecar_path(path)));
}

// Depth in millimetres, rounded, clamped to [0, 65535]; non-finite becomes 0.
inline void write_depth_png(const std::filesystem::path& path, const Raster<float>& depth) {
  Raster<std::uint16_t> mm(depth.rows(), depth.cols());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double v = depth[i];
    mm[i] = std::isfinite(v) ? static_cast<std::uint16_t>(std::clamp(std::round(v * 1000.0), 0.0, 65535.0)) : 0;
  }
  write_file(path, png::encode_gray16(mm, "io"));
  write_text(sidecar_path(path), nlohmann::json{{"units", "millimeters"}}.dump(2) + "\n");
}

// --------------------------------------------------------------------------
// Labels: 8-bit grayscale PNG + sidecar {"void_id", "classes": [names]}.

struct LabelMeta {
  std::vector<std::string> class_names;
  ClassId void_id = kDefaultVoidId;

  static LabelMeta from_rig(const RigConfig& rig) {
    LabelMeta m;
    m.void_id = rig.void_id;
    m.class_names.resize(rig.class_table.size());
    for (const auto& c : rig.class_table) m.class_names.at(c.id) = c.name;
    return m;
  }
  bool operator==(const LabelMeta&) const = default;
};

struct LabelImage {
  Raster<ClassId> labels;
  LabelMeta meta;
};

namespace detail {

inline nlohmann::json label_meta_json(const LabelMeta& meta) {
  return {{"void_id", meta.void_id}, {"classes", meta.class_names}};
}

inline LabelMeta parse_label_meta(const nlohmann::json& j, const char* what) {
  LabelMeta meta;
  const int void_id = sidecar_get<int>(j, "void_id", what);
  if (void_id < 0 || void_id > 255) throw Error(ErrorKind::malformed_header, "io", std::string(what) + ": bad void_id");
  meta.void_id = static_cast<ClassId>(void_id);
  meta.class_names = sidecar_get<std::vector<std::string>>(j, "classes", what);
  if (meta.class_names.empty() || meta.class_names.size() > 255 || meta.void_id < meta.class_names.size())
    throw Error(ErrorKind::malformed_header, "io", std::string(what) + ": inconsistent class table");
  return meta;
}

inline void check_labels(const Raster<ClassId>& labels, const LabelMeta& meta, const char* what) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId v = labels[i];
    if (v != meta.void_id && v >= meta.class_names.size())
      throw Error(ErrorKind::invalid_label, "io",
                  std::string(what) + ": value " + std::to_string(v) + " at index " + std::to_string(i) +
                      " is not in the class table");
  }
}

inline Raster<ClassId> decode_gray8(ByteView png_bytes, const char* what) {
  const auto img = png::decode(png_bytes, "io");
  if (img.bit_depth != 8 || img.color_type != PNG_COLOR_TYPE_GRAY)
    throw Error(ErrorKind::malformed_header, "io", std::string(what) + ": expected 8-bit grayscale PNG");
  Raster<ClassId> out(img.height, img.width);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<ClassId>(img.samples[i]);
  return out;
}

}  // namespace detail

inline LabelImage decode_labels(ByteView png_bytes, std::string_view sidecar) {
  LabelImage img;
  img.meta = detail::parse_label_meta(detail::parse_sidecar(sidecar, "label file"), "label file");
  img.labels = detail::decode_gray8(png_bytes, "label file");
  detail::check_labels(img.labels, img.meta, "label file");
  return img;
}

inline LabelImage read_labels(const std::filesystem::path& path) {
  return decode_labels(read_file(path), read_text(sidecar_path(path)));
}

// Also checks that the file's class table is the rig's.
inline Raster<ClassId> read_labels(const std::filesystem::path& path, const RigConfig& rig) {
  auto img = read_labels(path);
  if (!(img.meta == LabelMeta::from_rig(rig)))
    throw Error(ErrorKind::invalid_label, "io", "label file '" + path.string() + "' uses a different class table");
  return std::move(img.labels);
}

inline void write_labels(const std::filesystem::path& path, const Raster<ClassId>& labels, const LabelMeta& meta) {
  detail::check_labels(labels, meta, "label file");
  write_file(path, png::encode_gray8(labels, "io"));
  write_text(sidecar_path(path), detail::label_meta_json(meta).dump(2) + "\n");
}

// --------------------------------------------------------------------------
// BEV map: label PNG whose sidecar also carries the grid.

struct BevMapFile {
  BevMap map;
  LabelMeta meta;
};

inline BevMapFile decode_bev_map(ByteView png_bytes, std::string_view sidecar) {
  const auto j = detail::parse_sidecar(sidecar, "bev map");
  BevMapFile out;
  out.meta = detail::parse_label_meta(j, "bev map");
  const auto size = detail::sidecar_get<std::int64_t>(j, "size_px", "bev map");
  const auto extent = detail::sidecar_get<double>(j, "extent_m", "bev map");
  if (size < 1 || size > static_cast<std::int64_t>(png::kMaxDimension) || !(extent > 0.0) || !std::isfinite(extent))
    throw Error(ErrorKind::malformed_header, "io", "bev map: invalid grid in sidecar");
  const BevGrid grid(static_cast<std::size_t>(size), extent);
  auto cells = detail::decode_gray8(png_bytes, "bev map");
  if (cells.rows() != grid.rows() || cells.cols() != grid.cols())
    throw Error(ErrorKind::malformed_header, "io", "bev map: image size does not match the grid");
  detail::check_labels(cells, out.meta, "bev map");
  out.map = BevMap(grid, out.meta.void_id);
  out.map.cells = std::move(cells);
  return out;
}

inline BevMapFile read_bev_map(const std::filesystem::path& path) {
  return decode_bev_map(read_file(path), read_text(sidecar_path(path)));
}

inline void write_bev_map(const std::filesystem::path& path, const BevMap& map, const LabelMeta& meta) {
  if (meta.void_id != map.void_id) throw Error(ErrorKind::invalid_input, "io", "bev map: void id mismatch");
  detail::check_labels(map.cells, meta, "bev map");
  write_file(path, png::encode_gray8(map.cells, "io"));
  auto j = detail::label_meta_json(meta);
  j["size_px"] = map.grid.size();
  j["extent_m"] = map.grid.extent();
  write_text(sidecar_path(path), j.dump(2) + "\n");
}

// --------------------------------------------------------------------------
// One-hot tensor: "BEVT", u32 rows, u32 cols, u32 channels, then
// rows*cols*channels bytes, channel fastest.

inline Bytes encode_tensor(const BevTensor& t) {
  Bytes out;
  out.reserve(kTensorHeaderSize + t.data.size());
  out.insert(out.end(), {'B', 'E', 'V', 'T'});
  detail::put_u32(out, static_cast<std::uint32_t>(t.rows));
  detail::put_u32(out, static_cast<std::uint32_t>(t.cols));
  detail::put_u32(out, static_cast<std::uint32_t>(t.channels));
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

inline BevTensor decode_tensor(ByteView bytes) {
  detail::check_magic(bytes, "BEVT", "tensor file");
  if (bytes.size() < kTensorHeaderSize) throw Error(ErrorKind::truncated, "io", "tensor file: truncated header");
  BevTensor t;
  t.rows = detail::get_u32(bytes.data() + 4);
  t.cols = detail::get_u32(bytes.data() + 8);
  t.channels = detail::get_u32(bytes.data() + 12);
  if (t.rows == 0 || t.cols == 0 || t.channels < 2 || t.channels > 256)
    throw Error(ErrorKind::malformed_header, "io", "tensor file: invalid dimensions");
  const std::uint64_t expected = static_cast<std::uint64_t>(t.rows) * t.cols * t.channels;
  const std::uint64_t payload = bytes.size() - kTensorHeaderSize;
  if (payload < expected) throw Error(ErrorKind::truncated, "io", "tensor file: payload shorter than declared");
  if (payload > expected) throw Error(ErrorKind::malformed_header, "io", "tensor file: payload longer than declared");
  t.data.assign(bytes.begin() + kTensorHeaderSize, bytes.end());
  for (std::size_t i = 0; i < t.rows * t.cols; ++i) {
    unsigned sum = 0;
    for (std::size_t k = 0; k < t.channels; ++k) {
      const auto v = t.data[i * t.channels + k];
      if (v > 1) throw Error(ErrorKind::invalid_label, "io", "tensor file: entries must be 0 or 1");
      sum += v;
    }
    if (sum != 1) throw Error(ErrorKind::invalid_label, "io", "tensor file: fibre is not one-hot");
  }
  return t;
}

inline void write_tensor(const std::filesystem::path& path, const BevTensor& t) { write_file(path, encode_tensor(t)); }
inline BevTensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

// --------------------------------------------------------------------------
// Point cloud: binary little-endian PLY, fixed property layout.

inline std::string cloud_header(const SemanticPointCloud& cloud) {
  std::string h = "ply\nformat binary_little_endian 1.0\n";
  h += cloud.frame.is_vehicle() ? "comment frame vehicle\n"
                                : "comment frame camera " + std::to_string(cloud.frame.view_index) + "\n";
  h += "element vertex " + std::to_string(cloud.points.size()) + "\n";
  h += "property float x\nproperty float y\nproperty float z\n";
  h += "property uchar class\nproperty ushort view\nproperty uint pixel_index\n";
  h += "end_header\n";
  return h;
}

inline Bytes encode_cloud(const SemanticPointCloud& cloud) {
  const std::string header = cloud_header(cloud);
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + cloud.points.size() * kCloudRecordSize);
  for (const auto& p : cloud.points) {
    detail::put_f32(out, p.x);
    detail::put_f32(out, p.y);
    detail::put_f32(out, p.z);
    out.push_back(p.class_id);
    detail::put_u16(out, p.view);
    detail::put_u32(out, p.pixel_index);
  }
  return out;
}

inline SemanticPointCloud decode_cloud(ByteView bytes) {
  constexpr std::size_t kMaxHeader = 4096;
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), std::min(bytes.size(), kMaxHeader));
  detail::check_magic(bytes, "ply\n", "cloud file");
  const std::string_view end_marker = "end_header\n";
  const auto end = text.find(end_marker);
  if (end == std::string_view::npos) {
    if (bytes.size() < kMaxHeader) throw Error(ErrorKind::truncated, "io", "cloud file: header not terminated");
    throw Error(ErrorKind::malformed_header, "io", "cloud file: header too long");
  }
  const std::size_t header_size = end + end_marker.size();

  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < end;) {
    const auto nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  auto bad = [](const std::string& why) { return Error(ErrorKind::malformed_header, "io", "cloud file: " + why); };
  const std::vector<std::string_view> fixed_tail = {
      "property float x",   "property float y",    "property float z",
      "property uchar class", "property ushort view", "property uint pixel_index"};
  if (lines.size() != 4 + fixed_tail.size()) throw bad("unexpected header layout");
  if (lines[0] != "ply" || lines[1] != "format binary_little_endian 1.0") throw bad("unsupported format line");

  SemanticPointCloud cloud;
  const std::string_view frame_prefix = "comment frame ";
  if (!lines[2].starts_with(frame_prefix)) throw bad("missing frame comment");
  const auto frame = lines[2].substr(frame_prefix.size());
  if (frame == "vehicle") {
    cloud.frame = CloudFrame::vehicle();
  } else if (frame.starts_with("camera ")) {
    const auto num = frame.substr(7);
    std::size_t view = 0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), view);
    if (ec != std::errc() || ptr != num.data() + num.size() || num.empty()) throw bad("bad camera view index");
    cloud.frame = CloudFrame::camera(view);
  } else {
    throw bad("unknown frame");
  }

  const std::string_view vertex_prefix = "element vertex ";
  if (!lines[3].starts_with(vertex_prefix)) throw bad("missing vertex element");
  const auto count_text = lines[3].substr(vertex_prefix.size());
  std::uint64_t count = 0;
  const auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
  if (ec != std::errc() || ptr != count_text.data() + count_text.size() || count_text.empty())
    throw bad("bad vertex count");
  for (std::size_t i = 0; i < fixed_tail.size(); ++i)
    if (lines[4 + i] != fixed_tail[i]) throw bad("unexpected property '" + std::string(lines[4 + i]) + "'");

  const std::uint64_t payload = bytes.size() - header_size;
  if (count > payload / kCloudRecordSize || payload < count * kCloudRecordSize)
    throw Error(ErrorKind::truncated, "io", "cloud file: fewer records than declared");
  if (payload != count * kCloudRecordSize)
    throw Error(ErrorKind::malformed_header, "io", "cloud file: trailing bytes after declared records");

  cloud.points.resize(count);
  const std::uint8_t* p = bytes.data() + header_size;
  for (auto& pt : cloud.points) {
    pt.x = detail::get_f32(p);
    pt.y = detail::get_f32(p + 4);
    pt.z = detail::get_f32(p + 8);
    pt.class_id = p[12];
    pt.view = detail::get_u16(p + 13);
    pt.pixel_index = detail::get_u32(p + 15);
    p += kCloudRecordSize;
  }
  return cloud;
}

inline void write_cloud(const std::filesystem::path& path, const SemanticPointCloud& cloud) {
  write_file(path, encode_cloud(cloud));
}

inline SemanticPointCloud read_cloud(const std::filesystem::path& path) { return decode_cloud(read_file(path)); }

// --------------------------------------------------------------------------
// Diagnostics

inline Bytes colorize(const Raster<ClassId>& labels, const RigConfig& rig) {
  std::array<std::array<std::uint8_t, 3>, 256> palette{};
  for (const auto& c : rig.class_table) palette[c.id] = c.color;
  std::vector<std::uint8_t> rgb(labels.size() * 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& col = palette[labels[i]];
    rgb[3 * i] = col[0];
    rgb[3 * i + 1] = col[1];
    rgb[3 * i + 2] = col[2];
  }
  return png::encode_rgb8(labels.cols(), labels.rows(), rgb, "io");
}

inline void write_color_png(const std::filesystem::path& path, const Raster<ClassId>& labels, const RigConfig& rig) {
  write_file(path, colorize(labels, rig));
}

inline void write_report(const std::filesystem::path& json_path, const std::filesystem::path& text_path,
                         const ConfusionMatrix& cm, const RigConfig& rig, MeanMode mode) {
  write_text(json_path, report_json(cm, rig.class_table, mode).dump(2) + "\n");
  write_text(text_path, report_text(cm, rig.class_table, mode));
}

}  // namespace bevseg::io
