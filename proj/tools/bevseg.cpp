// bevseg: command-line frontend for the BEV segmentation geometry pipeline.
//
//   bevseg gen        generate a synthetic scene, render all views + BEV ground truth
//   bevseg project    per-view depth/labels -> fused vehicle-frame cloud (PLY)
//   bevseg rasterize  cloud -> incomplete BEV map (+ optional one-hot tensor)
//   bevseg fill       void completion (+ optional majority smoothing)
//   bevseg resample   nearest-neighbour resampling between BEV grids
//   bevseg eval       per-class IoU / mIoU report
//   bevseg run        the whole chain in one command
//
// Failures print one line to stderr:
//   bevseg: error module=<module> kind=<kind> message="<text>"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "bevseg/bevseg.hpp"

namespace fs = std::filesystem;
using namespace bevseg;

namespace {

constexpr int kExitError = 2;
constexpr int kExitInternal = 3;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("bevseg");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("BEVSEG_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

void print_error(std::string_view module, std::string_view kind, std::string_view message) {
  std::string escaped;
  for (char c : message) {
    if (c == '"' || c == '\\') escaped += '\\';
    escaped += (c == '\n') ? ' ' : c;
  }
  std::cerr << "bevseg: error module=" << module << " kind=" << kind << " message=\"" << escaped << "\"\n";
}

RigConfig rig_or_default(const std::string& path) { return path.empty() ? default_rig() : load_rig(path); }

struct GridFlags {
  std::size_t size = 512;
  double extent = 15.0;
};

void add_grid_flags(CLI::App* cmd, GridFlags& g, std::size_t default_size) {
  g.size = default_size;
  cmd->add_option("--grid-size", g.size, "BEV raster size in cells per side")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--extent", g.extent, "BEV side length in metres")->capture_default_str()->check(CLI::PositiveNumber);
}

struct FillFlags {
  std::string kind = "nearest";
  std::optional<std::size_t> max_radius;
  std::optional<std::size_t> smooth;
  std::string default_class = "Roads";
};

void add_fill_flags(CLI::App* cmd, FillFlags& f) {
  cmd->add_option("--fill", f.kind, "void completion strategy")
      ->capture_default_str()
      ->check(CLI::IsMember({"nearest", "none"}));
  cmd->add_option("--max-radius", f.max_radius, "cells beyond this distance get the default class");
  cmd->add_option("--smooth", f.smooth, "odd majority-filter kernel size applied after filling");
  cmd->add_option("--default-class", f.default_class, "class name for cells beyond --max-radius")->capture_default_str();
}

FillStrategy to_strategy(const FillFlags& f, const RigConfig& rig) {
  FillStrategy s;
  s.kind = f.kind == "none" ? FillStrategy::Kind::none : FillStrategy::Kind::nearest_neighbor;
  s.max_radius = f.max_radius;
  s.smooth = f.smooth;
  const auto id = rig.find_class(f.default_class);
  if (!id) throw Error(ErrorKind::invalid_config, "cli", "unknown default class '" + f.default_class + "'");
  s.default_class = *id;
  validate(s);
  return s;
}

void log_throughput(const char* what, std::size_t items, std::chrono::steady_clock::duration elapsed) {
  const double secs = std::chrono::duration<double>(elapsed).count();
  spdlog::info("{}: {} items in {:.3f} s ({:.3g} items/s)", what, items, secs, secs > 0 ? items / secs : 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Bird's-eye-view semantic segmentation from depth + segmentation views"};
  app.set_version_flag("--version", std::string("bevseg ") + kVersion);
  app.require_subcommand(1);

  std::string rig_path;
  std::size_t workers = 1;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--rig", rig_path, "rig configuration file (default: built-in 4-camera rig)");
    cmd->add_option("--workers", workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic scene and render views + BEV ground truth");
  std::uint64_t seed = 1;
  std::string spec_path;
  std::string gen_out = "scene_out";
  GridFlags gen_grid;
  add_common(gen);
  add_grid_flags(gen, gen_grid, 256);
  gen->add_option("--seed", seed, "scene seed")->capture_default_str();
  gen->add_option("--spec", spec_path, "scene spec file (default: built-in street layout)");
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();

  // project
  auto* project = app.add_subcommand("project", "fuse per-view depth + labels into a vehicle-frame cloud");
  std::string views_dir;
  std::string project_out = "cloud.ply";
  double max_range = kDefaultMaxRange;
  bool half_pixel = false;
  add_common(project);
  project->add_option("views", views_dir, "directory with view_<name>_depth.bin and view_<name>_labels.png")
      ->required()
      ->check(CLI::ExistingDirectory);
  project->add_option("--max-range", max_range, "depths at or beyond this are dropped (m)")->capture_default_str();
  project->add_flag("--half-pixel", half_pixel, "sample pixels at (u + 0.5, v + 0.5)");
  project->add_option("--out", project_out, "output PLY")->capture_default_str();

  // rasterize
  auto* raster = app.add_subcommand("rasterize", "project a cloud onto an incomplete BEV map");
  std::string cloud_path;
  std::string raster_out = "bev_incomplete.png";
  std::string tensor_out;
  GridFlags raster_grid;
  add_common(raster);
  add_grid_flags(raster, raster_grid, 512);
  raster->add_option("cloud", cloud_path, "vehicle-frame PLY cloud")->required();
  raster->add_option("--out", raster_out, "output BEV map PNG")->capture_default_str();
  raster->add_option("--tensor", tensor_out, "also write the one-hot tensor here");

  // fill
  auto* fill_cmd = app.add_subcommand("fill", "complete void cells of a BEV map");
  std::string fill_in;
  std::string fill_out = "bev_filled.png";
  FillFlags fill_flags;
  add_common(fill_cmd);
  add_fill_flags(fill_cmd, fill_flags);
  fill_cmd->add_option("bev", fill_in, "incomplete BEV map PNG")->required();
  fill_cmd->add_option("--out", fill_out, "output BEV map PNG")->capture_default_str();

  // resample
  auto* resample_cmd = app.add_subcommand("resample", "nearest-neighbour resample a BEV map to another grid size");
  std::string resample_in;
  std::string resample_out = "bev_resampled.png";
  std::size_t resample_size = 256;
  resample_cmd->add_option("bev", resample_in, "BEV map PNG")->required();
  resample_cmd->add_option("--grid-size", resample_size, "target cells per side")->capture_default_str()->check(CLI::PositiveNumber);
  resample_cmd->add_option("--out", resample_out, "output BEV map PNG")->capture_default_str();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "per-class IoU and mIoU of a prediction against ground truth");
  std::string pred_path, gt_path;
  std::string report_out = "report.json";
  bool strict_mean = false;
  bool resample_pred = false;
  add_common(eval_cmd);
  eval_cmd->add_option("pred", pred_path, "predicted BEV map PNG")->required();
  eval_cmd->add_option("gt", gt_path, "ground-truth BEV map PNG")->required();
  eval_cmd->add_flag("--strict-mean", strict_mean, "average over all classes, absent ones counting as 0");
  eval_cmd->add_flag("--resample", resample_pred, "nearest-neighbour resample the prediction to the GT grid");
  eval_cmd->add_option("--out", report_out, "report file (a .txt table is written alongside)")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "generate/ingest -> project -> rasterize -> fill -> eval");
  std::string config_path;
  std::string run_input;
  std::string run_out;
  GridFlags run_grid;
  std::size_t gt_size = 256;
  FillFlags run_fill;
  bool run_strict = false;
  add_common(run);
  add_grid_flags(run, run_grid, 512);
  add_fill_flags(run, run_fill);
  run->add_option("--config", config_path, "pipeline config file; flags override its values")->check(CLI::ExistingFile);
  run->add_option("--input", run_input, "ingest rendered views from this directory instead of generating");
  run->add_option("--seed", seed, "scene seed")->capture_default_str();
  run->add_option("--spec", spec_path, "scene spec file");
  run->add_option("--gt-grid-size", gt_size, "ground-truth grid size used for evaluation")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--max-range", max_range, "depths at or beyond this are dropped (m)")->capture_default_str();
  run->add_flag("--strict-mean", run_strict, "average over all classes, absent ones counting as 0");
  run->add_option("--out", run_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const RigConfig rig = rig_or_default(rig_path);
      const SceneSpec spec = spec_path.empty()
                                 ? default_scene_spec()
                                 : scene_spec_from_json(detail::parse_json(io::read_text(spec_path), "synthscene"));
      fs::create_directories(gen_out);
      const Scene scene = generate_scene(seed, spec);
      save_scene(scene, fs::path(gen_out) / "scene.json");
      RenderOptions ropts;
      ropts.workers = workers;
      const auto t0 = std::chrono::steady_clock::now();
      const auto frames = render_rig(scene, rig, ropts);
      log_throughput("render", frames.size() * rig.views.front().intrinsics.width * rig.views.front().intrinsics.height,
                     std::chrono::steady_clock::now() - t0);
      const auto meta = io::LabelMeta::from_rig(rig);
      for (std::size_t i = 0; i < frames.size(); ++i) {
        io::write_depth(fs::path(gen_out) / view_depth_name(rig.views[i]), frames[i].depth);
        io::write_labels(fs::path(gen_out) / view_labels_name(rig.views[i]), frames[i].labels, meta);
      }
      const BevMap gt = render_bev_gt(scene, BevGrid(gen_grid.size, gen_grid.extent), rig.void_id);
      io::write_bev_map(fs::path(gen_out) / "bev_gt.png", gt, meta);
      io::write_color_png(fs::path(gen_out) / "bev_gt_color.png", gt.cells, rig);
      std::cout << "scene " << seed << ": " << scene.boxes.size() << " boxes, " << scene.regions.size()
                << " ground regions -> " << gen_out << "\n";
    } else if (*project) {
      const RigConfig rig = rig_or_default(rig_path);
      std::vector<ViewFrame> frames;
      for (std::size_t i = 0; i < rig.views.size(); ++i) {
        ViewFrame f;
        f.view_index = i;
        f.depth = io::read_depth(fs::path(views_dir) / view_depth_name(rig.views[i]));
        f.labels = io::read_labels(fs::path(views_dir) / view_labels_name(rig.views[i]), rig);
        frames.push_back(std::move(f));
      }
      UnprojectOptions opts;
      opts.max_range = max_range;
      opts.half_pixel_centers = half_pixel;
      const auto cloud = build_vehicle_cloud<float>(frames, rig, opts, workers);
      io::write_cloud(project_out, cloud);
      std::cout << cloud.size() << " points -> " << project_out << "\n";
    } else if (*raster) {
      const RigConfig rig = rig_or_default(rig_path);
      const auto cloud = io::read_cloud(cloud_path);
      const auto t0 = std::chrono::steady_clock::now();
      const BevMap map = rasterize(cloud, BevGrid(raster_grid.size, raster_grid.extent), rig.void_id, workers);
      log_throughput("rasterize", cloud.size(), std::chrono::steady_clock::now() - t0);
      io::write_bev_map(raster_out, map, io::LabelMeta::from_rig(rig));
      if (!tensor_out.empty()) io::write_tensor(tensor_out, one_hot(map, rig.num_classes()));
      std::cout << map.void_count() << " of " << map.cells.size() << " cells void -> " << raster_out << "\n";
    } else if (*fill_cmd) {
      const RigConfig rig = rig_or_default(rig_path);
      const auto in = io::read_bev_map(fill_in);
      if (!(in.meta == io::LabelMeta::from_rig(rig)))
        throw Error(ErrorKind::invalid_label, "cli", "BEV map class table differs from the rig's");
      const BevMap out = complete(in.map, to_strategy(fill_flags, rig), workers);
      io::write_bev_map(fill_out, out, in.meta);
      std::cout << out.void_count() << " void cells remain -> " << fill_out << "\n";
    } else if (*resample_cmd) {
      const auto in = io::read_bev_map(resample_in);
      const BevMap out = resample_nearest(in.map, BevGrid(resample_size, in.map.grid.extent()));
      io::write_bev_map(resample_out, out, in.meta);
    } else if (*eval_cmd) {
      const RigConfig rig = rig_or_default(rig_path);
      auto pred = io::read_bev_map(pred_path);
      const auto gt = io::read_bev_map(gt_path);
      if (resample_pred) pred.map = resample_nearest(pred.map, gt.map.grid);
      const auto cm = confuse(pred.map, gt.map, rig.num_classes(), true, workers);
      const MeanMode mode = strict_mean ? MeanMode::strict : MeanMode::present;
      fs::path txt = fs::path(report_out).replace_extension(".txt");
      io::write_report(report_out, txt, cm, rig, mode);
      std::cout << report_text(cm, rig.class_table, mode);
    } else if (*run) {
      PipelineConfig cfg;
      if (!config_path.empty())
        cfg = pipeline_config_from_json(detail::parse_json(io::read_text(config_path), "cli"),
                                        fs::path(config_path).parent_path());
      if (!rig_path.empty()) cfg.rig_path = rig_path;
      if (!spec_path.empty()) cfg.scene_spec_path = spec_path;
      if (!run_input.empty()) cfg.input_dir = run_input;
      if (!run_out.empty()) cfg.out_dir = run_out;
      if (run->count("--seed")) cfg.seed = seed;
      if (run->count("--grid-size")) cfg.grid_size = run_grid.size;
      if (run->count("--extent")) cfg.extent = run_grid.extent;
      if (run->count("--gt-grid-size")) cfg.gt_grid_size = gt_size;
      if (run->count("--max-range")) cfg.max_range = max_range;
      if (run->count("--workers")) cfg.workers = workers;
      if (run_strict) cfg.mean_mode = MeanMode::strict;
      const RigConfig rig = cfg.rig_path ? load_rig(*cfg.rig_path) : default_rig();
      if (run->count("--fill")) cfg.fill.kind = to_strategy(run_fill, rig).kind;
      if (run->count("--max-radius")) cfg.fill.max_radius = run_fill.max_radius;
      if (run->count("--smooth")) cfg.fill.smooth = run_fill.smooth;
      if (run->count("--default-class")) cfg.fill.default_class = to_strategy(run_fill, rig).default_class;

      const auto t0 = std::chrono::steady_clock::now();
      const auto result = run_pipeline(cfg);
      log_throughput("run (points)", result.cloud_points, std::chrono::steady_clock::now() - t0);
      std::cout << result.cloud_points << " points, " << result.void_cells << " void cells before fill";
      if (result.miou) std::cout << ", mIoU " << *result.miou;
      std::cout << " -> " << cfg.out_dir.string() << "\n";
    }
  } catch (const Error& e) {
    print_error(e.module(), to_string(e.kind()), e.detail());
    return kExitError;
  } catch (const fs::filesystem_error& e) {
    print_error("io", "not-found", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    print_error("cli", "internal", e.what());
    return kExitInternal;
  }
  return 0;
}
