#pragma once

// End-to-end composition: scene (generated or ingested) -> views -> fused
// cloud -> incomplete BEV -> completed BEV -> metrics, writing every
// intermediate to an output directory.

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bevseg/bevraster.hpp"
#include "bevseg/eval.hpp"
#include "bevseg/io.hpp"
#include "bevseg/parserfill.hpp"
#include "bevseg/rig.hpp"
#include "bevseg/synthscene.hpp"
#include "bevseg/unproject.hpp"

namespace bevseg {

struct PipelineConfig {
  std::optional<std::filesystem::path> rig_path;  // default rig when empty
  std::optional<std::filesystem::path> scene_spec_path;
  // Ingest rendered views (and optionally bev_gt.png) from here instead of
  // generating a scene.
  std::optional<std::filesystem::path> input_dir;
  std::filesystem::path out_dir = "bevseg_out";
  std::uint64_t seed = 1;
  std::size_t grid_size = 512;
  std::size_t gt_grid_size = 256;
  double extent = 15.0;
  double max_range = kDefaultMaxRange;
  FillStrategy fill;
  MeanMode mean_mode = MeanMode::present;
  bool write_tensor = true;
  std::size_t workers = 1;
};

inline void validate(const PipelineConfig& cfg) {
  if (cfg.workers < 1) throw Error(ErrorKind::invalid_config, "cli", "worker count must be at least 1");
  if (cfg.grid_size < 1 || cfg.gt_grid_size < 1) throw Error(ErrorKind::invalid_config, "cli", "grid sizes must be >= 1");
  if (!(cfg.extent > 0.0)) throw Error(ErrorKind::invalid_config, "cli", "extent must be positive");
  if (!(cfg.max_range > 0.0)) throw Error(ErrorKind::invalid_config, "cli", "max range must be positive");
  validate(cfg.fill);
  if (cfg.input_dir && !std::filesystem::is_directory(*cfg.input_dir))
    throw Error(ErrorKind::not_found, "cli", "input directory '" + cfg.input_dir->string() + "' does not exist");
}

// Config file keys mirror the CLI flags (see docs/config.md).
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_as;
  constexpr const char* M = "cli";
  if (!j.is_object()) throw Error(ErrorKind::invalid_config, M, "pipeline config must be an object");
  PipelineConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  if (j.contains("rig")) c.rig_path = resolve(get_as<std::string>(j, "rig", M));
  if (j.contains("scene_spec")) c.scene_spec_path = resolve(get_as<std::string>(j, "scene_spec", M));
  if (j.contains("input")) c.input_dir = resolve(get_as<std::string>(j, "input", M));
  if (j.contains("out")) c.out_dir = resolve(get_as<std::string>(j, "out", M));
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed", M);
  if (j.contains("grid_size")) c.grid_size = get_as<std::size_t>(j, "grid_size", M);
  if (j.contains("gt_grid_size")) c.gt_grid_size = get_as<std::size_t>(j, "gt_grid_size", M);
  if (j.contains("extent")) c.extent = get_as<double>(j, "extent", M);
  if (j.contains("max_range")) c.max_range = get_as<double>(j, "max_range", M);
  if (j.contains("workers")) c.workers = get_as<std::size_t>(j, "workers", M);
  if (j.contains("strict_mean")) c.mean_mode = get_as<bool>(j, "strict_mean", M) ? MeanMode::strict : MeanMode::present;
  if (j.contains("fill")) {
    const auto kind = get_as<std::string>(j, "fill", M);
    if (kind == "nearest") {
      c.fill.kind = FillStrategy::Kind::nearest_neighbor;
    } else if (kind == "none") {
      c.fill.kind = FillStrategy::Kind::none;
    } else {
      throw Error(ErrorKind::invalid_config, M, "unknown fill strategy '" + kind + "'");
    }
  }
  if (j.contains("max_radius")) c.fill.max_radius = get_as<std::size_t>(j, "max_radius", M);
  if (j.contains("smooth")) c.fill.smooth = get_as<std::size_t>(j, "smooth", M);
  if (j.contains("write_tensor")) c.write_tensor = get_as<bool>(j, "write_tensor", M);
  return c;
}

inline std::string view_depth_name(const ViewConfig& v) { return "view_" + v.name + "_depth.bin"; }
inline std::string view_labels_name(const ViewConfig& v) { return "view_" + v.name + "_labels.png"; }

struct PipelineResult {
  std::size_t cloud_points = 0;
  std::size_t void_cells = 0;
  std::optional<ConfusionMatrix> confusion;
  std::optional<double> miou;
};

// Files written to out_dir (all deterministic for a fixed config):
//   scene.json, view_<name>_depth.bin, view_<name>_labels.png(.json),
//   cloud.ply, bev_incomplete.png(.json), bev_tensor.bin, bev_filled.png(.json),
//   bev_pred_gt_grid.png(.json), bev_gt.png(.json), *_color.png,
//   report.json, report.txt
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  validate(cfg);
  const RigConfig rig = cfg.rig_path ? load_rig(*cfg.rig_path) : default_rig();
  const io::LabelMeta meta = io::LabelMeta::from_rig(rig);
  fs::create_directories(cfg.out_dir);
  const fs::path& out = cfg.out_dir;

  const BevGrid grid(cfg.grid_size, cfg.extent);
  const BevGrid gt_grid(cfg.gt_grid_size, cfg.extent);

  std::vector<ViewFrame> frames;
  std::optional<BevMap> gt;
  if (cfg.input_dir) {
    for (std::size_t i = 0; i < rig.views.size(); ++i) {
      ViewFrame f;
      f.view_index = i;
      f.depth = io::read_depth(*cfg.input_dir / view_depth_name(rig.views[i]));
      f.labels = io::read_labels(*cfg.input_dir / view_labels_name(rig.views[i]), rig);
      frames.push_back(std::move(f));
    }
    if (fs::exists(*cfg.input_dir / "bev_gt.png")) {
      auto file = io::read_bev_map(*cfg.input_dir / "bev_gt.png");
      gt = resample_nearest(file.map, gt_grid);
    }
  } else {
    const SceneSpec spec = cfg.scene_spec_path
                               ? scene_spec_from_json(detail::parse_json(
                                     detail::read_text_file(*cfg.scene_spec_path, "synthscene"), "synthscene"))
                               : default_scene_spec();
    const Scene scene = generate_scene(cfg.seed, spec);
    save_scene(scene, out / "scene.json");
    RenderOptions ropts;
    ropts.workers = cfg.workers;
    frames = render_rig(scene, rig, ropts);
    gt = render_bev_gt(scene, gt_grid, rig.void_id);
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& v = rig.views[i];
    io::write_depth(out / view_depth_name(v), frames[i].depth);
    io::write_labels(out / view_labels_name(v), frames[i].labels, meta);
    io::write_color_png(out / ("view_" + v.name + "_labels_color.png"), frames[i].labels, rig);
  }

  UnprojectOptions uopts;
  uopts.max_range = cfg.max_range;
  const auto cloud = build_vehicle_cloud<float>(frames, rig, uopts, cfg.workers);
  io::write_cloud(out / "cloud.ply", cloud);

  const BevMap incomplete = rasterize(cloud, grid, rig.void_id, cfg.workers);
  io::write_bev_map(out / "bev_incomplete.png", incomplete, meta);
  io::write_color_png(out / "bev_incomplete_color.png", incomplete.cells, rig);
  if (cfg.write_tensor) io::write_tensor(out / "bev_tensor.bin", one_hot(incomplete, rig.num_classes()));

  const BevMap filled = complete(incomplete, cfg.fill, cfg.workers);
  io::write_bev_map(out / "bev_filled.png", filled, meta);
  io::write_color_png(out / "bev_filled_color.png", filled.cells, rig);

  PipelineResult result;
  result.cloud_points = cloud.size();
  result.void_cells = incomplete.void_count();

  if (gt) {
    const BevMap pred = grid == gt_grid ? filled : resample_nearest(filled, gt_grid);
    io::write_bev_map(out / "bev_pred_gt_grid.png", pred, meta);
    io::write_bev_map(out / "bev_gt.png", *gt, meta);
    io::write_color_png(out / "bev_gt_color.png", gt->cells, rig);
    const auto cm = confuse(pred, *gt, rig.num_classes(), /*ignore_gt_void=*/true, cfg.workers);
    io::write_report(out / "report.json", out / "report.txt", cm, rig, cfg.mean_mode);
    result.confusion = cm;
    try {
      result.miou = mean_iou(cm, cfg.mean_mode);
    } catch (const Error&) {
    }
  }
  return result;
}

}  // namespace bevseg
