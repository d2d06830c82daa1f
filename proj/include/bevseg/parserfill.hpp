#pragma once

// Classical completion of an incomplete BEV map: nearest-neighbour void fill
// and an optional majority (mode) filter. Sits at the same BevMap -> BevMap
// boundary a learned completion network would.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "bevseg/bevraster.hpp"
#include "bevseg/error.hpp"
#include "bevseg/parallel.hpp"

namespace bevseg {

struct FillStrategy {
  enum class Kind { nearest_neighbor, none };
  Kind kind = Kind::nearest_neighbor;
  // Cells farther than this (in cells, Euclidean) from any labelled cell get
  // default_class. nullopt means unbounded.
  std::optional<std::size_t> max_radius;
  ClassId default_class = classes::roads;
  // Odd majority-filter kernel applied after filling; disabled when empty.
  std::optional<std::size_t> smooth;
};

inline void validate(const FillStrategy& s) {
  if (s.smooth && (*s.smooth == 0 || *s.smooth % 2 == 0))
    throw Error(ErrorKind::invalid_config, "parserfill", "smoothing kernel size must be odd");
}

namespace detail {

inline constexpr std::int64_t kFarAway = std::numeric_limits<std::int64_t>::max() / 4;

// Exact squared Euclidean distance (in cells) from every cell to the nearest
// cell with label `target`: a per-column 1-D scan followed by a per-row lower
// envelope of parabolas.
inline void squared_distance_to_class(const Raster<ClassId>& cells, ClassId target, std::size_t workers,
                                      std::vector<std::int64_t>& out) {
  const std::size_t rows = cells.rows();
  const std::size_t cols = cells.cols();
  std::vector<std::int64_t> column_dist(rows * cols, kFarAway);

  parallel_for(cols, workers, [&](const WorkRange& range) {
    for (std::size_t c = range.begin; c < range.end; ++c) {
      std::int64_t last = -1;
      for (std::size_t r = 0; r < rows; ++r) {
        if (cells(r, c) == target) last = static_cast<std::int64_t>(r);
        if (last >= 0) column_dist[r * cols + c] = static_cast<std::int64_t>(r) - last;
      }
      last = -1;
      for (std::size_t r = rows; r-- > 0;) {
        if (cells(r, c) == target) last = static_cast<std::int64_t>(r);
        if (last >= 0) {
          const std::int64_t d = last - static_cast<std::int64_t>(r);
          auto& slot = column_dist[r * cols + c];
          if (slot == kFarAway || d < slot) slot = d;
        }
      }
    }
  });

  out.assign(rows * cols, kFarAway);
  parallel_for(rows, workers, [&](const WorkRange& range) {
    std::vector<std::int64_t> site(cols);
    std::vector<std::int64_t> height(cols);
    std::vector<double> boundary(cols + 1);
    for (std::size_t r = range.begin; r < range.end; ++r) {
      // Parabola q: (c - q)^2 + g(q)^2 for columns with a finite g.
      std::size_t k = 0;
      for (std::size_t q = 0; q < cols; ++q) {
        const std::int64_t g = column_dist[r * cols + q];
        if (g == kFarAway) continue;
        const std::int64_t fq = g * g;
        const auto qi = static_cast<std::int64_t>(q);
        while (k > 0) {
          const std::int64_t v = site[k - 1];
          const double s = static_cast<double>((fq + qi * qi) - (height[k - 1] + v * v)) /
                           static_cast<double>(2 * (qi - v));
          if (s <= boundary[k - 1]) {
            --k;
          } else {
            boundary[k] = s;
            break;
          }
        }
        if (k == 0) boundary[0] = -std::numeric_limits<double>::infinity();
        site[k] = qi;
        height[k] = fq;
        ++k;
      }
      if (k == 0) continue;
      boundary[k] = std::numeric_limits<double>::infinity();
      std::size_t j = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        const auto ci = static_cast<double>(c);
        while (boundary[j + 1] < ci) ++j;
        const std::int64_t dc = static_cast<std::int64_t>(c) - site[j];
        out[r * cols + c] = dc * dc + height[j];
      }
    }
  });
}

}  // namespace detail

// Every void cell takes the class of its nearest non-void cell (Euclidean
// distance between cell centres, ties to the smaller class id). Non-void
// cells are untouched. Output contains no void under nearest_neighbor.
inline BevMap fill(const BevMap& map, const FillStrategy& strategy, std::size_t workers = 1) {
  validate(strategy);
  if (strategy.kind == FillStrategy::Kind::none) return map;
  if (strategy.default_class == map.void_id)
    throw Error(ErrorKind::invalid_config, "parserfill", "default class must not be void");

  BevMap out = map;
  const std::size_t n = map.cells.size();
  if (map.void_count() == 0) return out;

  std::array<bool, 256> present{};
  for (ClassId v : map.cells.values())
    if (v != map.void_id) present[v] = true;

  std::vector<std::int64_t> best(n, detail::kFarAway);
  std::vector<ClassId> best_class(n, strategy.default_class);
  std::vector<std::int64_t> dist;
  // Ascending class order plus strict '<' keeps the smaller id on ties.
  for (std::size_t k = 0; k < present.size(); ++k) {
    if (!present[k]) continue;
    detail::squared_distance_to_class(map.cells, static_cast<ClassId>(k), workers, dist);
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] < best[i]) {
        best[i] = dist[i];
        best_class[i] = static_cast<ClassId>(k);
      }
    }
  }

  std::int64_t limit = detail::kFarAway;
  if (strategy.max_radius) {
    const auto r = static_cast<std::int64_t>(*strategy.max_radius);
    limit = r * r;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (map.cells[i] != map.void_id) continue;
    out.cells[i] = best[i] <= limit ? best_class[i] : strategy.default_class;
  }
  return out;
}

// Mode filter over a kernel x kernel window, truncated at the borders. Ties
// keep the cell's own class when it is among the modes, else the smallest id.
inline BevMap majority_smooth(const BevMap& map, std::size_t kernel, std::size_t workers = 1) {
  if (kernel == 0 || kernel % 2 == 0)
    throw Error(ErrorKind::invalid_input, "parserfill", "smoothing kernel size must be odd");
  if (map.void_count() != 0)
    throw Error(ErrorKind::invalid_input, "parserfill", "majority smoothing expects a map without void cells");

  BevMap out = map;
  const auto rows = static_cast<std::ptrdiff_t>(map.cells.rows());
  const auto cols = static_cast<std::ptrdiff_t>(map.cells.cols());
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);

  parallel_for(map.cells.rows(), workers, [&](const WorkRange& range) {
    std::array<std::uint32_t, 256> counts{};
    std::vector<ClassId> touched;
    touched.reserve(kernel * kernel);
    for (auto r = static_cast<std::ptrdiff_t>(range.begin); r < static_cast<std::ptrdiff_t>(range.end); ++r) {
      for (std::ptrdiff_t c = 0; c < cols; ++c) {
        std::uint32_t top = 0;
        for (auto rr = std::max<std::ptrdiff_t>(0, r - half); rr <= std::min(rows - 1, r + half); ++rr) {
          for (auto cc = std::max<std::ptrdiff_t>(0, c - half); cc <= std::min(cols - 1, c + half); ++cc) {
            const ClassId v = map.cells(rr, cc);
            if (counts[v]++ == 0) touched.push_back(v);
            top = std::max(top, counts[v]);
          }
        }
        const ClassId own = map.cells(r, c);
        ClassId winner = own;
        if (counts[own] != top) {
          winner = 255;
          for (ClassId v : touched)
            if (counts[v] == top && v < winner) winner = v;
        }
        out.cells(r, c) = winner;
        for (ClassId v : touched) counts[v] = 0;
        touched.clear();
      }
    }
  });
  return out;
}

// Fill, then smooth when the strategy asks for it.
inline BevMap complete(const BevMap& map, const FillStrategy& strategy, std::size_t workers = 1) {
  BevMap out = fill(map, strategy, workers);
  if (strategy.smooth && *strategy.smooth > 1 && out.void_count() == 0)
    out = majority_smooth(out, *strategy.smooth, workers);
  return out;
}

}  // namespace bevseg
