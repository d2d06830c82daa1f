#pragma once

// Test-side generators and brute-force oracles. The oracles recompute each
// result the slow, obvious way and share no code with the library beyond the
// plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "bevseg/bevseg.hpp"

namespace testsupport {

using bevseg::BevGrid;
using bevseg::BevMap;
using bevseg::ClassId;

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bevseg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t index_below(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Random map over `num_classes` classes with roughly `void_fraction` void.
inline BevMap random_map(std::mt19937_64& rng, std::size_t size, std::size_t num_classes, double void_fraction,
                         ClassId void_id = bevseg::kDefaultVoidId) {
  BevMap m(BevGrid(size, 1.0 * size), void_id);
  for (auto& v : m.cells.values())
    v = uniform(rng, 0, 1) < void_fraction ? void_id : static_cast<ClassId>(index_below(rng, num_classes));
  return m;
}

// Random vehicle cloud with many height ties and cell collisions on a small
// grid. Heights are drawn from a coarse lattice so equal z values are common.
template <typename T = float>
bevseg::BasicPointCloud<T> random_cloud(std::mt19937_64& rng, std::size_t max_points, double extent) {
  bevseg::BasicPointCloud<T> cloud;
  const std::size_t n = index_below(rng, max_points + 1);
  for (std::size_t i = 0; i < n; ++i) {
    bevseg::SemanticPoint<T> p;
    p.x = static_cast<T>(uniform(rng, -0.6 * extent, 0.6 * extent));
    p.y = static_cast<T>(uniform(rng, -0.6 * extent, 0.6 * extent));
    p.z = static_cast<T>(0.25 * static_cast<double>(index_below(rng, 9)) - 0.5);
    p.class_id = static_cast<ClassId>(index_below(rng, 9));
    p.view = static_cast<std::uint16_t>(index_below(rng, 4));
    p.pixel_index = static_cast<std::uint32_t>(i);
    cloud.points.push_back(p);
  }
  return cloud;
}

// Cell index by direct evaluation of the documented affine map.
inline bool oracle_cell(double x, double y, const BevGrid& g, std::size_t& row, std::size_t& col) {
  const double res = g.extent() / static_cast<double>(g.size());
  const double r = std::floor((g.extent() / 2 - x) / res);
  const double c = std::floor((g.extent() / 2 - y) / res);
  if (r < 0 || c < 0 || r >= static_cast<double>(g.size()) || c >= static_cast<double>(g.size())) return false;
  row = static_cast<std::size_t>(r);
  col = static_cast<std::size_t>(c);
  return true;
}

// Per cell: scan every point, keep the lowest z, then the smallest index.
template <typename T>
BevMap brute_rasterize(const bevseg::BasicPointCloud<T>& cloud, const BevGrid& grid,
                       ClassId void_id = bevseg::kDefaultVoidId) {
  BevMap out(grid, void_id);
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      double best_z = std::numeric_limits<double>::infinity();
      std::size_t best_i = cloud.points.size();
      for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        std::size_t pr = 0, pc = 0;
        if (!oracle_cell(cloud.points[i].x, cloud.points[i].y, grid, pr, pc) || pr != r || pc != c) continue;
        const double z = cloud.points[i].z;
        if (best_i == cloud.points.size() || z < best_z) {
          best_z = z;
          best_i = i;
        }
      }
      if (best_i < cloud.points.size()) {
        out.cells(r, c) = cloud.points[best_i].class_id;
        out.winner_height(r, c) = best_z;
      }
    }
  }
  return out;
}

// For every void cell scan all labelled cells; smallest squared distance,
// then smallest class id. Optional radius in cells.
inline BevMap brute_fill(const BevMap& in, ClassId default_class, std::int64_t max_radius = -1) {
  BevMap out = in;
  const auto rows = static_cast<std::int64_t>(in.cells.rows());
  const auto cols = static_cast<std::int64_t>(in.cells.cols());
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      if (in.cells(r, c) != in.void_id) continue;
      std::int64_t best = -1;
      ClassId cls = default_class;
      for (std::int64_t rr = 0; rr < rows; ++rr) {
        for (std::int64_t cc = 0; cc < cols; ++cc) {
          const ClassId v = in.cells(rr, cc);
          if (v == in.void_id) continue;
          const std::int64_t d = (rr - r) * (rr - r) + (cc - c) * (cc - c);
          if (best < 0 || d < best || (d == best && v < cls)) {
            best = d;
            cls = v;
          }
        }
      }
      if (best < 0 || (max_radius >= 0 && best > max_radius * max_radius)) cls = default_class;
      out.cells(r, c) = cls;
    }
  }
  return out;
}

// Histogram recount of every kernel window.
inline BevMap brute_mode(const BevMap& in, std::size_t kernel) {
  BevMap out = in;
  const auto rows = static_cast<std::int64_t>(in.cells.rows());
  const auto cols = static_cast<std::int64_t>(in.cells.cols());
  const auto h = static_cast<std::int64_t>(kernel / 2);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      std::vector<int> hist(256, 0);
      for (std::int64_t rr = r - h; rr <= r + h; ++rr)
        for (std::int64_t cc = c - h; cc <= c + h; ++cc)
          if (rr >= 0 && cc >= 0 && rr < rows && cc < cols) ++hist[in.cells(rr, cc)];
      const int top = *std::max_element(hist.begin(), hist.end());
      const ClassId own = in.cells(r, c);
      if (hist[own] == top) continue;
      for (int k = 0; k < 256; ++k) {
        if (hist[k] == top) {
          out.cells(r, c) = static_cast<ClassId>(k);
          break;
        }
      }
    }
  }
  return out;
}

// Label of every cell centre by scanning each box footprint and ground region.
inline BevMap footprint_oracle(const bevseg::Scene& scene, const BevGrid& grid,
                               ClassId void_id = bevseg::kDefaultVoidId) {
  BevMap out(grid, void_id);
  const double res = grid.extent() / static_cast<double>(grid.size());
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      const double x = grid.extent() / 2 - (static_cast<double>(r) + 0.5) * res;
      const double y = grid.extent() / 2 - (static_cast<double>(c) + 0.5) * res;
      ClassId label = scene.ground_class;
      bool in_box = false;
      for (const auto& b : scene.boxes) {
        const double x0 = b.center.x() - b.size.x() / 2, x1 = b.center.x() + b.size.x() / 2;
        const double y0 = b.center.y() - b.size.y() / 2, y1 = b.center.y() + b.size.y() / 2;
        if (x >= x0 && x < x1 && y >= y0 && y < y1) {
          label = b.class_id;
          in_box = true;
          break;
        }
      }
      if (!in_box) {
        for (const auto& g : scene.regions) {
          if (x >= g.x_min && x < g.x_max && y >= g.y_min && y < g.y_max) {
            label = g.class_id;
            break;
          }
        }
      }
      out.cells(r, c) = label;
    }
  }
  return out;
}

// Cells whose 3x3 neighbourhood in `gt` holds more than one class.
inline std::vector<bool> boundary_mask(const BevMap& gt) {
  const auto rows = static_cast<std::int64_t>(gt.cells.rows());
  const auto cols = static_cast<std::int64_t>(gt.cells.cols());
  std::vector<bool> mask(gt.cells.size(), false);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      for (std::int64_t dr = -1; dr <= 1; ++dr)
        for (std::int64_t dc = -1; dc <= 1; ++dc) {
          const auto rr = r + dr, cc = c + dc;
          if (rr >= 0 && cc >= 0 && rr < rows && cc < cols && gt.cells(rr, cc) != gt.cells(r, c))
            mask[r * cols + c] = true;
        }
  return mask;
}

// Hand-countable confusion: counts[g][p] by direct loop.
inline std::vector<std::vector<std::uint64_t>> brute_confusion(const BevMap& pred, const BevMap& gt, std::size_t c,
                                                               bool ignore_gt_void) {
  std::vector<std::vector<std::uint64_t>> m(c + 1, std::vector<std::uint64_t>(c + 1, 0));
  for (std::size_t i = 0; i < gt.cells.size(); ++i) {
    const std::size_t g = gt.cells[i] == gt.void_id ? c : gt.cells[i];
    const std::size_t p = pred.cells[i] == pred.void_id ? c : pred.cells[i];
    if (ignore_gt_void && g == c) continue;
    ++m[g][p];
  }
  return m;
}

}  // namespace testsupport
