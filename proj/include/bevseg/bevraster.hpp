#pragma once

// Orthographic top-down projection of a fused semantic cloud onto a BEV
// raster, and the one-hot tensor handed to the completion stage.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "bevseg/error.hpp"
#include "bevseg/parallel.hpp"
#include "bevseg/raster.hpp"
#include "bevseg/rig.hpp"
#include "bevseg/unproject.hpp"

namespace bevseg {

// Square, ego-centred metric grid. Row 0 is the front edge (vehicle +x), column
// 0 the left edge (vehicle +y), so the raster reads like a top-down photo with
// the vehicle heading up.
class BevGrid {
 public:
  BevGrid() : BevGrid(256, 15.0) {}
  BevGrid(std::size_t size_px, double extent_m) : size_(size_px), extent_(extent_m), resolution_(extent_m / size_px) {
    if (size_px == 0) throw Error(ErrorKind::invalid_config, "bevraster", "grid size must be at least 1 cell");
    if (!(extent_m > 0.0) || !std::isfinite(extent_m))
      throw Error(ErrorKind::invalid_config, "bevraster", "grid extent must be positive and finite");
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t rows() const noexcept { return size_; }
  std::size_t cols() const noexcept { return size_; }
  std::size_t cell_count() const noexcept { return size_ * size_; }
  double extent() const noexcept { return extent_; }
  double resolution() const noexcept { return resolution_; }

  // Vehicle-frame ground coordinates of a cell centre.
  double cell_center_x(std::size_t row) const noexcept {
    return extent_ / 2.0 - (static_cast<double>(row) + 0.5) * resolution_;
  }
  double cell_center_y(std::size_t col) const noexcept {
    return extent_ / 2.0 - (static_cast<double>(col) + 0.5) * resolution_;
  }

  bool operator==(const BevGrid&) const = default;

 private:
  std::size_t size_;
  double extent_;
  double resolution_;
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const Cell&) const = default;
};

inline std::optional<Cell> world_to_cell(double x, double y, const BevGrid& grid) {
  const double half = grid.extent() / 2.0;
  const double r = std::floor((half - x) / grid.resolution());
  const double c = std::floor((half - y) / grid.resolution());
  const auto n = static_cast<double>(grid.size());
  if (!(r >= 0.0 && r < n && c >= 0.0 && c < n)) return std::nullopt;
  return Cell{static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
}

struct BevMap {
  BevGrid grid;
  ClassId void_id = kDefaultVoidId;
  Raster<ClassId> cells;
  // Height of the winning point per cell, NaN where void. Diagnostic only.
  Raster<double> winner_height;

  BevMap() = default;
  BevMap(const BevGrid& g, ClassId void_label)
      : grid(g),
        void_id(void_label),
        cells(g.rows(), g.cols(), void_label),
        winner_height(g.rows(), g.cols(), std::numeric_limits<double>::quiet_NaN()) {}

  ClassId& operator()(std::size_t r, std::size_t c) { return cells(r, c); }
  ClassId operator()(std::size_t r, std::size_t c) const { return cells(r, c); }

  std::size_t void_count() const {
    std::size_t n = 0;
    for (ClassId v : cells.values()) n += (v == void_id);
    return n;
  }

  // Label equality; winner heights are not compared.
  bool same_labels(const BevMap& o) const { return grid == o.grid && void_id == o.void_id && cells == o.cells; }
};

namespace detail {

struct CellWinner {
  double z = std::numeric_limits<double>::infinity();
  std::uint64_t index = std::numeric_limits<std::uint64_t>::max();
  ClassId class_id = 0;

  bool beats(double oz, std::uint64_t oindex) const noexcept { return z < oz || (z == oz && index < oindex); }
};

}  // namespace detail

// Lowest point wins each cell; equal heights go to the smaller fused-cloud
// index. Points outside the grid are dropped. With several workers each
// scans a contiguous slice of the cloud into its own partial grid and the
// partials are merged under the same total order, so the result does not
// depend on the worker count.
template <typename T>
BevMap rasterize(const BasicPointCloud<T>& cloud, const BevGrid& grid, ClassId void_id = kDefaultVoidId,
                 std::size_t workers = 1) {
  if (!cloud.frame.is_vehicle())
    throw Error(ErrorKind::invalid_state, "bevraster", "rasterize expects a vehicle-frame cloud");

  const std::size_t n_cells = grid.cell_count();
  const auto ranges = partition_range(cloud.points.size(), workers);
  std::vector<std::vector<detail::CellWinner>> partials(ranges.size());

  parallel_for(cloud.points.size(), workers, [&](const WorkRange& range) {
    auto& part = partials[range.worker];
    part.assign(n_cells, detail::CellWinner{});
    for (std::size_t i = range.begin; i < range.end; ++i) {
      const auto& p = cloud.points[i];
      const auto cell = world_to_cell(p.x, p.y, grid);
      if (!cell) continue;
      auto& w = part[cell->row * grid.cols() + cell->col];
      const double z = p.z;
      if (w.beats(z, i)) continue;
      w = {z, i, p.class_id};
    }
  });

  BevMap map(grid, void_id);
  if (partials.empty()) return map;
  // Merge cells in parallel too; every output cell is written once.
  parallel_for(n_cells, workers, [&](const WorkRange& range) {
    for (std::size_t c = range.begin; c < range.end; ++c) {
      detail::CellWinner best;
      for (const auto& part : partials) {
        if (part.empty()) continue;
        const auto& w = part[c];
        if (w.index == std::numeric_limits<std::uint64_t>::max()) continue;
        if (!best.beats(w.z, w.index)) best = w;
      }
      if (best.index != std::numeric_limits<std::uint64_t>::max()) {
        map.cells[c] = best.class_id;
        map.winner_height[c] = best.z;
      }
    }
  });
  return map;
}

// H x W x (C+1) one-hot tensor, channel-fastest. Channel k holds semantic
// class k, channel C holds void.
struct BevTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t& at(std::size_t r, std::size_t c, std::size_t k) { return data[(r * cols + c) * channels + k]; }
  std::uint8_t at(std::size_t r, std::size_t c, std::size_t k) const { return data[(r * cols + c) * channels + k]; }
  bool operator==(const BevTensor&) const = default;
};

inline BevTensor one_hot(const BevMap& map, std::size_t num_classes) {
  if (num_classes == 0 || num_classes > 255)
    throw Error(ErrorKind::invalid_input, "bevraster", "number of classes must be in [1, 255]");
  BevTensor t;
  t.rows = map.cells.rows();
  t.cols = map.cells.cols();
  t.channels = num_classes + 1;
  t.data.assign(t.rows * t.cols * t.channels, 0);
  for (std::size_t i = 0; i < map.cells.size(); ++i) {
    const ClassId v = map.cells[i];
    std::size_t channel = 0;
    if (v == map.void_id) {
      channel = num_classes;
    } else if (v < num_classes) {
      channel = v;
    } else {
      throw Error(ErrorKind::invalid_input, "bevraster",
                  "cell value " + std::to_string(v) + " is neither a class id nor void");
    }
    t.data[i * t.channels + channel] = 1;
  }
  return t;
}

// Inverse of one_hot: the first hot channel per fibre; the void channel maps
// back to void_id.
inline BevMap argmax(const BevTensor& t, const BevGrid& grid, ClassId void_id = kDefaultVoidId) {
  if (t.rows != grid.rows() || t.cols != grid.cols())
    throw Error(ErrorKind::invalid_input, "bevraster", "tensor shape does not match grid");
  if (t.channels < 2 || t.data.size() != t.rows * t.cols * t.channels)
    throw Error(ErrorKind::invalid_input, "bevraster", "tensor payload does not match its shape");
  BevMap map(grid, void_id);
  const std::size_t void_channel = t.channels - 1;
  for (std::size_t i = 0; i < t.rows * t.cols; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < t.channels; ++k)
      if (t.data[i * t.channels + k] > t.data[i * t.channels + best]) best = k;
    map.cells[i] = best == void_channel ? void_id : static_cast<ClassId>(best);
  }
  return map;
}

// Nearest-neighbour resampling between two grids covering the same extent.
inline BevMap resample_nearest(const BevMap& src, const BevGrid& dst_grid) {
  if (src.grid.extent() != dst_grid.extent())
    throw Error(ErrorKind::invalid_input, "bevraster", "resampling requires grids with the same extent");
  BevMap out(dst_grid, src.void_id);
  const double scale = static_cast<double>(src.grid.size()) / static_cast<double>(dst_grid.size());
  for (std::size_t r = 0; r < dst_grid.rows(); ++r) {
    const auto sr = std::min(src.grid.rows() - 1, static_cast<std::size_t>((r + 0.5) * scale));
    for (std::size_t c = 0; c < dst_grid.cols(); ++c) {
      const auto sc = std::min(src.grid.cols() - 1, static_cast<std::size_t>((c + 0.5) * scale));
      out.cells(r, c) = src.cells(sr, sc);
      out.winner_height(r, c) = src.winner_height(sr, sc);
    }
  }
  return out;
}

}  // namespace bevseg
