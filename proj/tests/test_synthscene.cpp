#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bevseg/synthscene.hpp"
#include "support.hpp"

using namespace bevseg;

namespace {

SceneSpec only_boxes(ClassId c, std::size_t count, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  SceneSpec s;
  s.boxes = {{c, count, lo, hi}};
  return s;
}

// Distance from p to the surface of an axis-aligned box.
double surface_distance(const Eigen::Vector3d& p, const Box& b) {
  const Eigen::Vector3d lo = b.min_corner(), hi = b.max_corner();
  const Eigen::Vector3d outside = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
  if (outside.norm() > 0) return outside.norm();
  double inside = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) inside = std::min({inside, p[a] - lo[a], hi[a] - p[a]});
  return inside;
}

}  // namespace

TEST(GenerateScene, SeedDeterminism) {
  const auto a = serialize_scene(generate_scene(1, default_scene_spec()));
  const auto b = serialize_scene(generate_scene(1, default_scene_spec()));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, serialize_scene(generate_scene(2, default_scene_spec())));
}

TEST(GenerateScene, NoBoxesIsGroundOnly) {
  const auto s = generate_scene(7, SceneSpec{});
  EXPECT_TRUE(s.boxes.empty());
  EXPECT_TRUE(s.regions.empty());
  const auto gt = render_bev_gt(s, BevGrid(64, 15.0));
  for (auto v : gt.cells.values()) EXPECT_EQ(v, classes::roads);
}

TEST(GenerateScene, FiveVehiclesDoNotOverlap) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = generate_scene(seed, only_boxes(classes::vehicles, 5, {3.5, 1.7, 1.3}, {4.8, 2.0, 1.6}));
    ASSERT_EQ(s.boxes.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto a = s.boxes[i].footprint();
      EXPECT_DOUBLE_EQ(s.boxes[i].min_corner().z(), 0.0);
      EXPECT_GE(a.x_min, -7.5);
      EXPECT_LE(a.x_max, 7.5);
      for (std::size_t j = i + 1; j < 5; ++j) {
        const auto b = s.boxes[j].footprint();
        const bool disjoint = a.x_max <= b.x_min || b.x_max <= a.x_min || a.y_max <= b.y_min || b.y_max <= a.y_min;
        EXPECT_TRUE(disjoint) << "seed " << seed << " boxes " << i << "," << j;
      }
    }
  }
}

TEST(GenerateScene, KeepOutRespected) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = default_scene_spec();
    for (const auto& b : generate_scene(seed, spec).boxes) {
      const auto f = b.footprint();
      const bool clear = f.x_max <= -spec.keep_out || f.x_min >= spec.keep_out || f.y_max <= -spec.keep_out ||
                         f.y_min >= spec.keep_out;
      EXPECT_TRUE(clear);
    }
  }
}

TEST(GenerateScene, InfeasibleSpecIsGenerationError) {
  try {
    generate_scene(1, only_boxes(classes::buildings, 30, {5, 5, 5}, {5, 5, 5}));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::generation);
    EXPECT_EQ(e.module(), "synthscene");
  }
  EXPECT_THROW(generate_scene(1, only_boxes(classes::buildings, 1, {20, 1, 1}, {20, 1, 1})), Error);
  EXPECT_THROW(generate_scene(1, only_boxes(classes::buildings, 1, {-1, 1, 1}, {1, 1, 1})), Error);
}

TEST(Validate, RejectsFloatingAndOverlappingBoxes) {
  Scene s;
  s.boxes = {{Eigen::Vector3d(4, 4, 1.0), Eigen::Vector3d(1, 1, 1), classes::vehicles}};
  EXPECT_THROW(validate(s), Error);
  s.boxes = {{Eigen::Vector3d(4, 4, 0.5), Eigen::Vector3d(1, 1, 1), classes::vehicles},
             {Eigen::Vector3d(4.9, 4, 0.5), Eigen::Vector3d(1, 1, 1), classes::poles}};
  EXPECT_THROW(validate(s), Error);
  s.boxes[1].center.x() = 5.0;  // touching, half-open footprints
  EXPECT_NO_THROW(validate(s));
}

TEST(RenderView, BareGroundUnprojectsToPlane) {
  Scene s;
  const auto rig = default_rig();
  for (std::size_t v = 0; v < rig.views.size(); ++v) {
    RenderOptions o;
    o.view_index = v;
    const auto frame = render_view(s, rig.views[v].intrinsics, rig.views[v].extrinsics, o);
    const auto cloud = to_vehicle(unproject_view<double>(frame, rig), rig.views[v].extrinsics);
    ASSERT_GT(cloud.size(), 100000u);
    for (const auto& p : cloud.points) ASSERT_NEAR(p.z, 0.0, 1e-6);
  }
}

TEST(RenderView, UnitBoxOnAxis) {
  Scene s;
  s.boxes = {{Eigen::Vector3d(5, 0, 0.5), Eigen::Vector3d(1, 1, 1), classes::vehicles}};
  const auto in = intrinsics_from_fov(1024, 576, 90.0);
  const auto frame = render_view(s, in, yaw_extrinsics(0.0, Eigen::Vector3d(0, 0, 0.5)));
  EXPECT_EQ(frame.depth(288, 512), 4.5f);
  EXPECT_EQ(frame.labels(288, 512), classes::vehicles);
}

TEST(RenderView, SkyIsVoidWithSentinel) {
  Scene s;
  const auto rig = default_rig();
  const auto frame = render_view(s, rig.views[0].intrinsics, rig.views[0].extrinsics);
  // Row 0 looks up, the horizon row is parallel to the ground.
  for (std::size_t v : {0u, 100u, 288u}) {
    EXPECT_EQ(frame.labels(v, 10), kDefaultVoidId);
    EXPECT_EQ(frame.depth(v, 10), static_cast<float>(kDefaultMaxRange));
  }
  ViewFrame sky_only = frame;
  for (std::size_t v = 289; v < 576; ++v)
    for (std::size_t u = 0; u < 1024; ++u) sky_only.labels(v, u) = kDefaultVoidId;
  EXPECT_TRUE(unproject_view(sky_only, rig).empty());
  EXPECT_EQ(frame.labels(575, 10), classes::roads);
}

TEST(RenderView, CameraBelowGroundRejected) {
  Scene s;
  const auto in = intrinsics_from_fov(8, 8, 90.0);
  EXPECT_THROW(render_view(s, in, yaw_extrinsics(0.0)), Error);
}

TEST(RenderView, RayHitResidualProperty) {
  const auto rig = default_rig();
  for (std::uint64_t seed : {3u, 11u}) {
    const auto scene = generate_scene(seed, default_scene_spec());
    const auto cloud = build_vehicle_cloud<double>(render_rig(scene, rig), rig);
    std::size_t box_points = 0;
    for (const auto& p : cloud.points) {
      const Eigen::Vector3d q(p.x, p.y, p.z);
      double best = std::numeric_limits<double>::infinity();
      bool is_box = false;
      for (const auto& b : scene.boxes) {
        if (b.class_id != p.class_id) continue;
        best = std::min(best, surface_distance(q, b));
        is_box = true;
      }
      if (!is_box) best = std::abs(q.z());
      box_points += is_box;
      ASSERT_LE(best, 1e-5) << "class " << int(p.class_id) << " at " << q.transpose();
    }
    EXPECT_GT(box_points, 1000u);
  }
}

TEST(RenderView, GroundRegionsAgreeWithGroundTruth) {
  // Ground points land on cells whose analytic label is the point's class,
  // except within a cell of a boundary.
  const auto rig = default_rig();
  const auto scene = generate_scene(4, default_scene_spec());
  const BevGrid g(256, 15.0);
  const auto gt = render_bev_gt(scene, g);
  const auto boundary = testsupport::boundary_mask(gt);
  const auto cloud = build_vehicle_cloud<double>(render_rig(scene, rig), rig);
  std::size_t checked = 0;
  for (const auto& p : cloud.points) {
    const auto cell = world_to_cell(p.x, p.y, g);
    if (!cell || std::abs(p.z) > 1e-6 || boundary[cell->row * 256 + cell->col]) continue;
    ASSERT_EQ(gt(cell->row, cell->col), p.class_id);
    ++checked;
  }
  EXPECT_GT(checked, 100000u);
}

TEST(RenderView, WorkerAndRunDeterminism) {
  const auto rig = default_rig();
  const auto scene = generate_scene(9, default_scene_spec());
  RenderOptions o;
  o.depth_noise_stddev = 0.05;
  o.noise_seed = 77;
  const auto ref = render_view(scene, rig.views[1].intrinsics, rig.views[1].extrinsics, o);
  for (std::size_t w : {2u, 4u, 8u}) {
    o.workers = w;
    const auto f = render_view(scene, rig.views[1].intrinsics, rig.views[1].extrinsics, o);
    EXPECT_EQ(f.depth, ref.depth);
    EXPECT_EQ(f.labels, ref.labels);
  }
  o.depth_noise_stddev = 0.0;
  const auto clean = render_view(scene, rig.views[1].intrinsics, rig.views[1].extrinsics, o);
  EXPECT_NE(clean.depth, ref.depth);
  EXPECT_EQ(clean.labels, ref.labels);
}

TEST(BevGroundTruth, UnitBoxBlock) {
  Scene s;
  s.boxes = {{Eigen::Vector3d(0, 0, 0.5), Eigen::Vector3d(1, 1, 1), classes::vehicles}};
  const auto gt = render_bev_gt(s, BevGrid(256, 15.0));
  std::size_t r0 = 256, r1 = 0, c0 = 256, c1 = 0, n = 0;
  for (std::size_t r = 0; r < 256; ++r)
    for (std::size_t c = 0; c < 256; ++c)
      if (gt(r, c) == classes::vehicles) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
        ++n;
      }
  // 1 m / (15/256 m) = 17.07 cells.
  const auto h = r1 - r0 + 1, w = c1 - c0 + 1;
  EXPECT_GE(h, 16u);
  EXPECT_LE(h, 18u);
  EXPECT_GE(w, 16u);
  EXPECT_LE(w, 18u);
  EXPECT_EQ(n, h * w);
  EXPECT_LE(std::abs(static_cast<double>(r0 + r1) / 2.0 - 127.5), 1.0);
  EXPECT_LE(std::abs(static_cast<double>(c0 + c1) / 2.0 - 127.5), 1.0);
  EXPECT_EQ(gt.void_count(), 0u);
}

TEST(BevGroundTruth, MatchesFootprintOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = generate_scene(seed, default_scene_spec());
    for (std::size_t n : {37u, 256u, 512u}) {
      const BevGrid g(n, 15.0);
      ASSERT_EQ(render_bev_gt(scene, g).cells, testsupport::footprint_oracle(scene, g).cells)
          << "seed " << seed << " grid " << n;
    }
  }
}

TEST(BevGroundTruth, IndependentOfRig) {
  const auto scene = generate_scene(2, default_scene_spec());
  const BevGrid g(128, 15.0);
  EXPECT_TRUE(render_bev_gt(scene, g).same_labels(render_bev_gt(scene, g)));
}

TEST(SceneFile, RoundTrip) {
  const auto dir = testsupport::temp_dir("scene_roundtrip");
  const auto s = generate_scene(12, default_scene_spec());
  save_scene(s, dir / "scene.json");
  EXPECT_EQ(load_scene(dir / "scene.json"), s);
  EXPECT_EQ(serialize_scene(load_scene(dir / "scene.json")), serialize_scene(s));
}

TEST(SceneFile, SpecRoundTripAndErrors) {
  const auto spec = default_scene_spec();
  const auto back = scene_spec_from_json(scene_spec_to_json(spec));
  EXPECT_EQ(serialize_scene(generate_scene(5, back)), serialize_scene(generate_scene(5, spec)));
  EXPECT_THROW(parse_scene("{}"), Error);
  EXPECT_THROW(parse_scene("nope"), Error);
  auto j = scene_to_json(generate_scene(5, spec));
  j["boxes"][0]["center_m"][2] = 7.0;
  EXPECT_THROW(scene_from_json(j), Error);
}

TEST(SceneFile, BundledDemoSpecGenerates) {
  const auto spec = scene_spec_from_json(
      detail::parse_json(io::read_text(std::filesystem::path(BEVSEG_DATA_DIR) / "demo_scene_spec.json"), "test"));
  EXPECT_NO_THROW(generate_scene(1, spec));
}
