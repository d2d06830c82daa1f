#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "bevseg/synthscene.hpp"
#include "bevseg/unproject.hpp"
#include "support.hpp"

using namespace bevseg;

namespace {

CameraIntrinsics wide_cam() { return intrinsics_from_fov(1024, 576, 90.0); }

// One 2x2 view, f = 1, principal point (1, 1), identity-yaw extrinsics.
RigConfig tiny_rig() {
  RigConfig rig;
  CameraIntrinsics in;
  in.f_u = in.f_v = 1.0;
  in.c_u = in.c_v = 1.0;
  in.width = in.height = 2;
  rig.views.push_back({"cam", in, yaw_extrinsics(0.0)});
  rig.class_table = default_class_table();
  return rig;
}

ViewFrame uniform_frame(const RigConfig& rig, std::size_t view, float depth, ClassId label) {
  const auto& in = rig.views[view].intrinsics;
  ViewFrame f;
  f.view_index = view;
  f.depth = Raster<float>(in.height, in.width, depth);
  f.labels = Raster<ClassId>(in.height, in.width, label);
  return f;
}

template <typename T>
double dist(const SemanticPoint<T>& a, const SemanticPoint<T>& b) {
  const double dx = double(a.x) - double(b.x), dy = double(a.y) - double(b.y), dz = double(a.z) - double(b.z);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

TEST(UnprojectPixel, PrincipalRayIsOpticalAxis) {
  EXPECT_EQ(unproject_pixel(512, 288, 7.5, wide_cam()), Eigen::Vector3d(0, 0, 7.5));
}

TEST(UnprojectPixel, HandEvaluatedExamples) {
  // f is 512 up to the rounding of tan(45 deg).
  EXPECT_LT((unproject_pixel(768, 288, 10, wide_cam()) - Eigen::Vector3d(5, 0, 10)).norm(), 1e-12);
  // Positive y is downward.
  EXPECT_LT((unproject_pixel(512, 416, 4, wide_cam()) - Eigen::Vector3d(0, 1, 4)).norm(), 1e-12);
}

TEST(UnprojectPixel, RejectsInvalidDepth) {
  for (double d : {0.0, -1.0, std::numeric_limits<double>::infinity(), std::nan("")}) {
    try {
      unproject_pixel(1, 1, d, wide_cam());
      ADD_FAILURE() << d;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
      EXPECT_EQ(e.module(), "unproject");
    }
  }
}

TEST(ProjectPoint, Examples) {
  EXPECT_EQ(project_point({5, 0, 10}, wide_cam()), Eigen::Vector2d(768, 288));
  for (double z : {0.01, 1.0, 123.0}) EXPECT_EQ(project_point({0, 0, z}, wide_cam()), Eigen::Vector2d(512, 288));
}

TEST(ProjectPoint, BehindCamera) {
  for (double z : {0.0, -3.0}) {
    try {
      project_point({1, 1, z}, wide_cam());
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::behind_camera);
    }
  }
}

TEST(ProjectPoint, RoundTripProperty) {
  std::mt19937_64 rng(21);
  const auto in = wide_cam();
  for (int i = 0; i < 10000; ++i) {
    const double u = testsupport::uniform(rng, 0, 1024), v = testsupport::uniform(rng, 0, 576);
    const double d = testsupport::uniform(rng, 0.1, 500);
    const auto p = unproject_pixel(u, v, d, in);
    const auto uv = project_point(p, in);
    ASSERT_LE(std::abs(uv.x() - u), 1e-4);
    ASSERT_LE(std::abs(uv.y() - v), 1e-4);
    ASSERT_LE(std::abs(p.z() - d), 1e-9 * d);
  }
}

TEST(UnprojectView, TwoByTwoFrame) {
  const auto rig = tiny_rig();
  const auto cloud = unproject_view<double>(uniform_frame(rig, 0, 1.0f, classes::roads), rig);
  ASSERT_EQ(cloud.size(), 4u);
  EXPECT_TRUE(cloud.frame.is_camera());
  const double expected[4][3] = {{-1, -1, 1}, {0, -1, 1}, {-1, 0, 1}, {0, 0, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(cloud.points[i].x, expected[i][0]);
    EXPECT_EQ(cloud.points[i].y, expected[i][1]);
    EXPECT_EQ(cloud.points[i].z, expected[i][2]);
    EXPECT_EQ(cloud.points[i].class_id, classes::roads);
    EXPECT_EQ(cloud.points[i].pixel_index, i);
    EXPECT_EQ(cloud.points[i].view, 0);
  }
}

TEST(UnprojectView, HalfPixelCentres) {
  const auto rig = tiny_rig();
  UnprojectOptions opts;
  opts.half_pixel_centers = true;
  const auto cloud = unproject_view<double>(uniform_frame(rig, 0, 2.0f, classes::roads), rig, opts);
  ASSERT_EQ(cloud.size(), 4u);
  EXPECT_EQ(cloud.points[0].x, -1.0);
  EXPECT_EQ(cloud.points[3].x, 1.0);
  EXPECT_EQ(cloud.points[3].y, 1.0);
}

TEST(UnprojectView, AllVoidIsEmpty) {
  const auto rig = tiny_rig();
  EXPECT_TRUE(unproject_view(uniform_frame(rig, 0, 1.0f, rig.void_id), rig).empty());
}

TEST(UnprojectView, InvalidDepthsEmitNothing) {
  const auto rig = tiny_rig();
  auto f = uniform_frame(rig, 0, 3.0f, classes::vehicles);
  f.depth(0, 1) = 0.0f;
  EXPECT_EQ(unproject_view(f, rig).size(), 3u);
  f.depth(1, 0) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(unproject_view(f, rig).size(), 2u);
  f.depth(1, 1) = 1000.0f;  // at max_range
  EXPECT_EQ(unproject_view(f, rig).size(), 1u);
  f.depth(0, 0) = -2.0f;
  EXPECT_EQ(unproject_view(f, rig).size(), 0u);

  auto g = uniform_frame(rig, 0, 50.0f, classes::vehicles);
  UnprojectOptions opts;
  opts.max_range = 50.0;
  EXPECT_EQ(unproject_view(g, rig, opts).size(), 0u);
  opts.max_range = 50.001;
  EXPECT_EQ(unproject_view(g, rig, opts).size(), 4u);
}

TEST(UnprojectView, Errors) {
  const auto rig = tiny_rig();
  auto f = uniform_frame(rig, 0, 1.0f, classes::roads);
  f.depth = Raster<float>(3, 2, 1.0f);
  try {
    unproject_view(f, rig);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
  f = uniform_frame(rig, 0, 1.0f, 9);
  EXPECT_THROW(unproject_view(f, rig), Error);
  f = uniform_frame(rig, 0, 1.0f, classes::roads);
  f.view_index = 1;
  EXPECT_THROW(unproject_view(f, rig), Error);
}

TEST(ToVehicle, ConventionChecks) {
  BasicPointCloud<double> cam;
  cam.frame = CloudFrame::camera(0);
  cam.points.push_back({0, -1, 0, classes::poles, 0, 7});
  cam.points.push_back({0, 0, 5, classes::walls, 0, 8});
  const auto veh = to_vehicle(cam, yaw_extrinsics(0.0));
  EXPECT_TRUE(veh.frame.is_vehicle());
  EXPECT_NEAR(veh.points[0].x, 0, 1e-15);
  EXPECT_NEAR(veh.points[0].y, 0, 1e-15);
  EXPECT_NEAR(veh.points[0].z, 1, 1e-15);
  EXPECT_EQ(veh.points[0].class_id, classes::poles);
  EXPECT_EQ(veh.points[0].pixel_index, 7u);

  const auto back = to_vehicle(cam, yaw_extrinsics(180.0));
  EXPECT_NEAR(back.points[1].x, -5, 1e-12);
  EXPECT_NEAR(back.points[1].y, 0, 1e-12);
  EXPECT_NEAR(back.points[1].z, 0, 1e-12);
}

TEST(ToVehicle, AppliesTranslation) {
  BasicPointCloud<double> cam;
  cam.frame = CloudFrame::camera(0);
  cam.points.push_back({0, 0, 5, classes::roads, 0, 0});
  const auto veh = to_vehicle(cam, yaw_extrinsics(0.0, Eigen::Vector3d(0.5, -0.25, 1.8)));
  EXPECT_NEAR(veh.points[0].x, 5.5, 1e-12);
  EXPECT_NEAR(veh.points[0].y, -0.25, 1e-12);
  EXPECT_NEAR(veh.points[0].z, 1.8, 1e-12);
}

TEST(ToVehicle, RejectsVehicleFrameInput) {
  BasicPointCloud<float> veh;
  try {
    to_vehicle(veh, yaw_extrinsics(0));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_state);
  }
}

TEST(ToVehicle, RigidMotionProperty) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    BasicPointCloud<double> cam;
    cam.frame = CloudFrame::camera(0);
    for (int i = 0; i < 40; ++i)
      cam.points.push_back({testsupport::uniform(rng, -50, 50), testsupport::uniform(rng, -50, 50),
                            testsupport::uniform(rng, 0.1, 100), static_cast<ClassId>(i % 9), 0,
                            static_cast<std::uint32_t>(i)});
    const auto ext = yaw_extrinsics(testsupport::uniform(rng, -360, 360),
                                    Eigen::Vector3d(testsupport::uniform(rng, -2, 2), testsupport::uniform(rng, -2, 2),
                                                    testsupport::uniform(rng, 0, 3)));
    const auto veh = to_vehicle(cam, ext);
    for (std::size_t i = 0; i < cam.size(); ++i) {
      for (std::size_t j = i + 1; j < cam.size(); ++j) {
        const double before = dist(cam.points[i], cam.points[j]);
        ASSERT_LE(std::abs(dist(veh.points[i], veh.points[j]) - before), 1e-9 * before);
      }
    }
  }
}

TEST(Fuse, EmptyAndCounts) {
  EXPECT_TRUE(fuse(std::vector<SemanticPointCloud>{}).empty());
  SemanticPointCloud a, b;
  a.points.resize(10);
  b.points.resize(7);
  for (std::size_t i = 0; i < 7; ++i) b.points[i].pixel_index = 100 + static_cast<std::uint32_t>(i);
  const auto f = fuse(std::vector<SemanticPointCloud>{a, b});
  EXPECT_EQ(f.size(), 17u);
  EXPECT_TRUE(f.frame.is_vehicle());
  EXPECT_EQ(f.points[10].pixel_index, 100u);
}

TEST(Fuse, MixedFramesRejected) {
  SemanticPointCloud a, b;
  b.frame = CloudFrame::camera(1);
  try {
    fuse(std::vector<SemanticPointCloud>{a, b});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
}

TEST(Fuse, CountAdditivityAndClassPreservationProperty) {
  std::mt19937_64 rng(23);
  RigConfig rig = default_rig();
  for (auto& v : rig.views) v.intrinsics = intrinsics_from_fov(32, 18, 90.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ViewFrame> frames;
    std::size_t expected = 0;
    std::map<ClassId, std::size_t> hist;
    for (std::size_t v = 0; v < rig.views.size(); ++v) {
      ViewFrame f = uniform_frame(rig, v, 1.0f, 0);
      for (std::size_t i = 0; i < f.depth.size(); ++i) {
        const double roll = testsupport::uniform(rng, 0, 1);
        f.depth[i] = roll < 0.1 ? 0.0f : roll < 0.2 ? 2000.0f : static_cast<float>(testsupport::uniform(rng, 0.5, 80));
        f.labels[i] = testsupport::uniform(rng, 0, 1) < 0.15 ? rig.void_id
                                                               : static_cast<ClassId>(testsupport::index_below(rng, 9));
        if (is_valid_depth(f.depth[i], kDefaultMaxRange) && f.labels[i] != rig.void_id) {
          ++expected;
          ++hist[f.labels[i]];
        }
      }
      frames.push_back(std::move(f));
    }
    const auto cloud = build_vehicle_cloud<float>(frames, rig, {}, 1 + trial % 4);
    ASSERT_EQ(cloud.size(), expected);
    std::map<ClassId, std::size_t> got;
    for (const auto& p : cloud.points) ++got[p.class_id];
    EXPECT_EQ(got, hist);
    // View order, then row-major pixel order.
    for (std::size_t i = 1; i < cloud.size(); ++i) {
      const auto& a = cloud.points[i - 1];
      const auto& b = cloud.points[i];
      ASSERT_TRUE(a.view < b.view || (a.view == b.view && a.pixel_index < b.pixel_index));
    }
  }
}

TEST(Fuse, WorkerCountDoesNotChangeCloud) {
  const auto rig = default_rig();
  const auto scene = generate_scene(5, default_scene_spec());
  const auto frames = render_rig(scene, rig);
  const auto one = build_vehicle_cloud<float>(frames, rig, {}, 1);
  for (std::size_t w : {2u, 3u, 4u, 8u}) EXPECT_EQ(build_vehicle_cloud<float>(frames, rig, {}, w), one) << w;

  // Shuffling and re-sorting by provenance reproduces the array.
  auto shuffled = one.points;
  std::mt19937_64 rng(24);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::sort(shuffled.begin(), shuffled.end(), [](const auto& a, const auto& b) {
    return a.view != b.view ? a.view < b.view : a.pixel_index < b.pixel_index;
  });
  EXPECT_EQ(shuffled, one.points);
}

TEST(Fuse, FourWallsFourClusters) {
  Scene scene;
  const double d = 6.0;
  scene.boxes = {
      {Eigen::Vector3d(d, 0, 1.5), Eigen::Vector3d(0.3, 4, 3), classes::walls},
      {Eigen::Vector3d(0, d, 1.5), Eigen::Vector3d(4, 0.3, 3), classes::walls},
      {Eigen::Vector3d(-d, 0, 1.5), Eigen::Vector3d(0.3, 4, 3), classes::walls},
      {Eigen::Vector3d(0, -d, 1.5), Eigen::Vector3d(4, 0.3, 3), classes::walls},
  };
  validate(scene);
  const auto rig = default_rig();
  const auto cloud = build_vehicle_cloud<double>(render_rig(scene, rig), rig);

  // Each view sees exactly one wall, at its own bearing.
  std::vector<std::vector<SemanticPoint<double>>> per_view(4);
  for (const auto& p : cloud.points)
    if (p.class_id == classes::walls) per_view[p.view].push_back(p);
  for (std::size_t v = 0; v < 4; ++v) {
    ASSERT_FALSE(per_view[v].empty()) << v;
    double sx = 0, sy = 0;
    for (const auto& p : per_view[v]) {
      sx += p.x;
      sy += p.y;
      // Every wall point lies on the near face of that view's wall.
      const double along = std::abs(v % 2 == 0 ? p.x : p.y);
      EXPECT_NEAR(along, d - 0.15, 1e-5);
    }
    const double bearing = std::atan2(sy, sx) * 180.0 / std::numbers::pi;
    const double expected = 90.0 * static_cast<double>(v);
    EXPECT_NEAR(std::remainder(bearing - expected, 360.0), 0.0, 1.0) << "view " << v;
  }
  // Clusters are disjoint: at least the wall gap apart.
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b)
      for (std::size_t i = 0; i < per_view[a].size(); i += 97)
        for (std::size_t j = 0; j < per_view[b].size(); j += 97) EXPECT_GT(dist(per_view[a][i], per_view[b][j]), 4.0);
}
