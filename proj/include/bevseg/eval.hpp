#pragma once

// Confusion matrices, per-class IoU and mIoU over BEV maps.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bevseg/bevraster.hpp"
#include "bevseg/error.hpp"
#include "bevseg/parallel.hpp"
#include "bevseg/rig.hpp"

namespace bevseg {

// (C+1) x (C+1) counts, rows = ground truth, columns = prediction. Index C is
// void.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : num_classes_(num_classes), counts_((num_classes + 1) * (num_classes + 1), 0) {}

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t dim() const noexcept { return num_classes_ + 1; }

  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * dim() + pred]; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * dim() + pred]; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.num_classes_ != num_classes_)
      throw Error(ErrorKind::invalid_input, "eval", "cannot add confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t num_classes_;
  std::vector<std::uint64_t> counts_;
};

namespace detail {

inline std::size_t confusion_index(ClassId v, ClassId void_id, std::size_t num_classes, const char* which) {
  if (v == void_id) return num_classes;
  if (v < num_classes) return v;
  throw Error(ErrorKind::invalid_input, "eval",
              std::string(which) + " contains value " + std::to_string(v) + " outside the class table");
}

}  // namespace detail

inline ConfusionMatrix confuse(const BevMap& pred, const BevMap& gt, std::size_t num_classes,
                               bool ignore_gt_void = true, std::size_t workers = 1) {
  if (pred.cells.rows() != gt.cells.rows() || pred.cells.cols() != gt.cells.cols())
    throw Error(ErrorKind::invalid_input, "eval", "prediction and ground truth have different dimensions");
  const std::size_t rows = gt.cells.rows();
  const auto ranges = partition_range(rows, workers);
  std::vector<ConfusionMatrix> partials(ranges.size(), ConfusionMatrix(num_classes));
  parallel_for(rows, workers, [&](const WorkRange& range) {
    auto& cm = partials[range.worker];
    for (std::size_t r = range.begin; r < range.end; ++r) {
      for (std::size_t c = 0; c < gt.cells.cols(); ++c) {
        const ClassId g = gt.cells(r, c);
        if (ignore_gt_void && g == gt.void_id) continue;
        ++cm.at(detail::confusion_index(g, gt.void_id, num_classes, "ground truth"),
                detail::confusion_index(pred.cells(r, c), pred.void_id, num_classes, "prediction"));
      }
    }
  });
  ConfusionMatrix total(num_classes);
  for (const auto& p : partials) total += p;
  return total;
}

struct ClassScore {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::optional<double> iou;  // empty when tp + fp + fn == 0
};

inline ClassScore class_score(const ConfusionMatrix& cm, std::size_t k) {
  if (k >= cm.num_classes())
    throw Error(ErrorKind::invalid_input, "eval", "class " + std::to_string(k) + " out of range");
  ClassScore s;
  s.tp = cm.at(k, k);
  for (std::size_t i = 0; i < cm.dim(); ++i) {
    if (i == k) continue;
    s.fp += cm.at(i, k);
    s.fn += cm.at(k, i);
  }
  const std::uint64_t denom = s.tp + s.fp + s.fn;
  if (denom > 0) s.iou = static_cast<double>(s.tp) / static_cast<double>(denom);
  return s;
}

inline std::optional<double> class_iou(const ConfusionMatrix& cm, std::size_t k) { return class_score(cm, k).iou; }

enum class MeanMode {
  present,  // average over classes with a defined IoU
  strict,   // average over all C classes, undefined counted as 0
};

inline double mean_iou(const ConfusionMatrix& cm, MeanMode mode = MeanMode::present) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    if (auto iou = class_iou(cm, k)) {
      sum += *iou;
      ++defined;
    }
  }
  if (defined == 0) throw Error(ErrorKind::undefined_metric, "eval", "no class has a defined IoU");
  const std::size_t denom = mode == MeanMode::strict ? cm.num_classes() : defined;
  return sum / static_cast<double>(denom);
}

// Machine-readable report; the schema is documented in docs/formats.md.
inline nlohmann::json report_json(const ConfusionMatrix& cm, const std::vector<ClassInfo>& class_table,
                                  MeanMode mode) {
  using nlohmann::json;
  json j;
  j["num_classes"] = cm.num_classes();
  j["averaging"] = mode == MeanMode::strict ? "strict" : "present";
  j["cells_compared"] = cm.total();
  json per_class = json::array();
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const auto s = class_score(cm, k);
    const auto it = std::find_if(class_table.begin(), class_table.end(), [k](const ClassInfo& c) { return c.id == k; });
    const std::string name = it != class_table.end() ? it->name : std::to_string(k);
    per_class.push_back({{"id", k},
                         {"name", name},
                         {"iou", s.iou ? json(*s.iou) : json(nullptr)},
                         {"tp", s.tp},
                         {"fp", s.fp},
                         {"fn", s.fn}});
  }
  j["classes"] = per_class;
  try {
    j["miou"] = mean_iou(cm, mode);
  } catch (const Error&) {
    j["miou"] = nullptr;
  }
  json rows = json::array();
  for (std::size_t g = 0; g < cm.dim(); ++g) {
    json row = json::array();
    for (std::size_t p = 0; p < cm.dim(); ++p) row.push_back(cm.at(g, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

inline std::string report_text(const ConfusionMatrix& cm, const std::vector<ClassInfo>& class_table, MeanMode mode) {
  const auto j = report_json(cm, class_table, mode);
  std::ostringstream os;
  os << std::left << std::setw(14) << "class" << std::right << std::setw(10) << "IoU" << std::setw(12) << "TP"
     << std::setw(12) << "FP" << std::setw(12) << "FN" << "\n";
  for (const auto& c : j["classes"]) {
    os << std::left << std::setw(14) << c["name"].get<std::string>() << std::right << std::setw(10);
    if (c["iou"].is_null()) {
      os << "-";
    } else {
      std::ostringstream v;
      v << std::fixed << std::setprecision(2) << 100.0 * c["iou"].get<double>() << "%";
      os << v.str();
    }
    os << std::setw(12) << c["tp"].get<std::uint64_t>() << std::setw(12) << c["fp"].get<std::uint64_t>()
       << std::setw(12) << c["fn"].get<std::uint64_t>() << "\n";
  }
  os << "mIoU (" << j["averaging"].get<std::string>() << "): ";
  if (j["miou"].is_null()) {
    os << "undefined";
  } else {
    os << std::fixed << std::setprecision(2) << 100.0 * j["miou"].get<double>() << "%";
  }
  os << "  over " << cm.total() << " cells\n";
  return os.str();
}

}  // namespace bevseg
