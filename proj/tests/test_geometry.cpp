#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "evac3d/errors.hpp"
#include "evac3d/geometry.hpp"
#include "test_util.hpp"

using namespace evac3d;
using evac3d::testing::angle_between;

namespace {

Trajectory two_poses(const Pose& a, const Pose& b) { return Trajectory({{0.0, a}, {1.0, b}}); }

Quat about_z(double deg) { return Quat(Eigen::AngleAxisd(deg * M_PI / 180.0, Vec3::UnitZ())); }

bool same_rotation(const Quat& a, const Quat& b, double tol) {
  return std::abs(std::abs(a.dot(b)) - 1.0) < tol;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("backproject principal point and unit offset") {
  CameraIntrinsics intr{250.0, 260.0, 100.5, 80.25, 300, 200};
  const Vec3 d = backproject(Vec2(intr.cx, intr.cy), intr);
  CHECK((d - Vec3::UnitZ()).norm() < 1e-15);

  CameraIntrinsics sq{200.0, 200.0, 100.0, 90.0, 400, 300};
  const Vec3 e = backproject(Vec2(sq.cx + sq.fx, sq.cy), sq);
  CHECK((e - Vec3(1, 0, 1) / std::sqrt(2.0)).norm() < 1e-15);
}

TEST_CASE("backproject hand example") {
  CameraIntrinsics intr{200.0, 200.0, 128.0, 96.0, 256, 192};
  const Vec3 d = backproject(Vec2(100, 80), intr);
  CHECK((d - Vec3(-0.14, -0.08, 1.0).normalized()).norm() < 1e-15);
}

TEST_CASE("backproject rejects pixels off the sensor") {
  CameraIntrinsics intr;
  CHECK_THROWS_AS(backproject(Vec2(-0.6, 10), intr), std::domain_error);
  CHECK_THROWS_AS(backproject(Vec2(10, intr.height), intr), std::domain_error);
}

TEST_CASE("project inverts backproject") {
  CameraIntrinsics intr;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(0.0, intr.width - 1.0), uy(0.0, intr.height - 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 px(ux(rng), uy(rng));
    const Vec3 d = backproject(px, intr);
    CHECK(std::abs(d.norm() - 1.0) < 1e-12);
    CHECK((project(3.7 * d, intr) - px).norm() < 1e-9);
  }
}

TEST_CASE("upsampled intrinsics keep the viewing rays of pixel areas") {
  CameraIntrinsics intr{400.0, 410.0, 319.5, 240.0, 640, 480};
  for (int s : {1, 2, 3}) {
    const CameraIntrinsics up = intr.upsampled(s);
    CHECK(up.width == intr.width * s);
    CHECK(up.height == intr.height * s);
    // Pixel (x, y) covers the block of s*s fine pixels; its center maps to the block center.
    for (const Vec2& px : {Vec2(0, 0), Vec2(17, 250), Vec2(639, 479)}) {
      const Vec2 fine = s * (px + Vec2(0.5, 0.5)) - Vec2(0.5, 0.5);
      CHECK((backproject(fine, up) - backproject(px, intr)).norm() < 1e-12);
    }
  }
  CHECK_THROWS(intr.upsampled(0));
}

TEST_CASE("interpolate_pose is exact at samples") {
  std::mt19937_64 rng(7);
  std::vector<TimedPose> samples;
  for (int i = 0; i < 20; ++i) {
    Quat q(Eigen::AngleAxisd(0.1 * i, evac3d::testing::random_unit(rng)));
    samples.push_back({0.05 * i + 0.3, Pose(q, Vec3(0.1 * i, -0.2 * i, 1.0 + i))});
  }
  const Trajectory traj(samples);
  for (const auto& s : samples) {
    const Pose p = interpolate_pose(traj, s.t);
    CHECK(p.translation == s.pose.translation);
    CHECK(same_rotation(p.rotation, s.pose.rotation, 1e-15));
  }
}

TEST_CASE("interpolate_pose midpoints") {
  const Trajectory lin = two_poses(Pose(Quat::Identity(), Vec3::Zero()), Pose(Quat::Identity(), Vec3(2, 0, 0)));
  CHECK((interpolate_pose(lin, 0.5).translation - Vec3(1, 0, 0)).norm() < 1e-15);

  const Quat q0 = Quat::Identity(), q1 = about_z(90.0);
  const Trajectory rot = two_poses(Pose(q0, Vec3::Zero()), Pose(q1, Vec3::Zero()));
  const Quat mid = interpolate_pose(rot, 0.5).rotation;
  CHECK(same_rotation(mid, about_z(45.0), 1e-12));
  // slerp identity q0 (q0^-1 q1)^(1/2)
  const Eigen::AngleAxisd rel(q0.conjugate() * q1);
  const Quat oracle = q0 * Quat(Eigen::AngleAxisd(0.5 * rel.angle(), rel.axis()));
  CHECK(same_rotation(mid, oracle, 1e-12));
}

TEST_CASE("interpolate_pose takes the short arc and stays unit") {
  const Quat q0 = about_z(10.0);
  const Quat q1 = Quat(-about_z(350.0).coeffs());  // same rotation as -10 deg, opposite hemisphere
  const Trajectory traj = two_poses(Pose(q0, Vec3::Zero()), Pose(q1, Vec3::Zero()));
  CHECK(same_rotation(interpolate_pose(traj, 0.5).rotation, Quat::Identity(), 1e-12));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    CHECK(std::abs(interpolate_pose(traj, u(rng)).rotation.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("interpolate_pose refuses to extrapolate") {
  const Trajectory traj = two_poses(Pose(), Pose());
  CHECK_THROWS_AS(interpolate_pose(traj, -1e-9), ExtrapolationError);
  CHECK_THROWS_AS(interpolate_pose(traj, 1.0 + 1e-9), ExtrapolationError);
  CHECK_NOTHROW(interpolate_pose(traj, 1.0));
}

TEST_CASE("trajectory timestamps must increase") {
  CHECK_THROWS_AS(Trajectory({{0.0, Pose()}, {0.0, Pose()}}), ValidationError);
  CHECK_THROWS_AS(Trajectory({{1.0, Pose()}, {0.5, Pose()}}), ValidationError);
}

TEST_CASE("event_ray for static cameras") {
  CameraIntrinsics intr;
  Event e;
  e.x = static_cast<int>(intr.cx);
  e.y = static_cast<int>(intr.cy);
  e.t = 0.5;
  const Ray r0 = event_ray(e, two_poses(Pose(), Pose()), intr);
  CHECK(r0.origin.norm() == 0.0);
  CHECK((r0.direction - Vec3::UnitZ()).norm() < 1e-15);

  const Pose back(Quat::Identity(), Vec3(0, 0, -2));
  const Ray r1 = event_ray(e, two_poses(back, back), intr);
  CHECK((r1.origin - Vec3(0, 0, -2)).norm() < 1e-15);
  CHECK((r1.direction - Vec3::UnitZ()).norm() < 1e-15);
}

TEST_CASE("event_ray on a coarse orbit matches a dense orbit") {
  // Tilted orbit so the interpolation is not a pure rotation about one axis.
  auto orbit_pose = [](double deg) {
    const double a = deg * M_PI / 180.0;
    const Vec3 eye(3.0 * std::cos(a), 3.0 * std::sin(a), 1.2 * std::sin(2.0 * a));
    return Pose::look_at(eye, Vec3::Zero(), Vec3::UnitZ());
  };
  std::vector<TimedPose> coarse, dense;
  for (int k = 0; k <= 360; ++k) coarse.push_back({k * 0.01, orbit_pose(k)});
  for (int k = 0; k <= 36000; ++k) dense.push_back({k * 1e-4, orbit_pose(k * 0.01)});
  const Trajectory tc(coarse), td(dense);

  CameraIntrinsics intr;
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ux(0, intr.width - 1), uy(0, intr.height - 1);
  std::uniform_real_distribution<double> ut(0.0, 3.6);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    Event e;
    e.x = ux(rng);
    e.y = uy(rng);
    e.t = ut(rng);
    const Ray a = event_ray(e, tc, intr), b = event_ray(e, td, intr);
    CHECK(std::abs(a.direction.norm() - 1.0) < 1e-9);
    worst = std::max(worst, angle_between(a.direction, b.direction));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("look_at points the optical axis at the target") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 eye = 4.0 * evac3d::testing::random_unit(rng);
    const Vec3 target(0.1, -0.2, 0.3);
    const Pose p = Pose::look_at(eye, target, Vec3::UnitZ());
    CHECK(angle_between(p.optical_axis(), target - eye) < 1e-9);
    CHECK(p.translation == eye);
  }
}

TEST_CASE("TUM round trip and parse errors") {
  evac3d::testing::TempDir dir("geometry_tum");
  std::mt19937_64 rng(9);
  std::vector<TimedPose> samples;
  for (int i = 0; i < 50; ++i) {
    Quat q(Eigen::AngleAxisd(0.3 * i, evac3d::testing::random_unit(rng)));
    samples.push_back({0.01 * i, Pose(q, evac3d::testing::random_unit(rng))});
  }
  const Trajectory traj(samples);
  write_tum(traj, dir / "t.txt");
  const Trajectory back = read_tum(dir / "t.txt");
  REQUIRE(back.size() == traj.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back.samples()[i].t == traj.samples()[i].t);
    CHECK(back.samples()[i].pose.translation == traj.samples()[i].pose.translation);
    CHECK(same_rotation(back.samples()[i].pose.rotation, traj.samples()[i].pose.rotation, 1e-15));
  }

  {
    std::ofstream out(dir / "bad.txt");
    out << "# comment\n0 0 0 0 0 0 0 1\n0.1 0 0 zero 0 0 0 1\n";
  }
  try {
    read_tum(dir / "bad.txt");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

}  // TEST_SUITE
