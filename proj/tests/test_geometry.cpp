#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "defsurf/geometry.hpp"
#include "oracles.hpp"

using namespace defsurf;

namespace {

CameraIntrinsics test_camera(Index rows, Index cols, double f = 525.0) {
  CameraIntrinsics K;
  K.fx = K.fy = f;
  K.cx = (cols - 1) / 2.0;
  K.cy = (rows - 1) / 2.0;
  K.width = cols;
  K.height = rows;
  return K;
}

MaskGrid checkerboard(Index rows, Index cols) {
  MaskGrid m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = ((r + c) % 2 == 0) ? 1 : 0;
  return m;
}

double max_angle_deg(const NormalGridd& normals, const MaskGrid& mask,
                     const std::function<Eigen::Vector3d(Index, Index)>& ref) {
  double worst = 0;
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) {
        const double d =
            std::clamp(normals.at(r, c).dot(ref(r, c)), -1.0, 1.0);
        worst = std::max(worst, std::acos(d) * 180.0 / M_PI);
      }
  return worst;
}

}  // namespace

TEST_CASE("apply_mask: all-ones mask leaves the image unchanged") {
  Rgbf img(5, 7);
  img.r.setRandom();
  img.g.setRandom();
  img.b.setRandom();
  const auto out = apply_mask(img, full_mask(5, 7));
  CHECK((out.r == img.r).all());
  CHECK((out.g == img.g).all());
  CHECK((out.b == img.b).all());
}

TEST_CASE("apply_mask: single-pixel mask keeps exactly one pixel") {
  Rgbf img(4, 4);
  img.r.setConstant(0.25f);
  img.g.setConstant(0.5f);
  img.b.setConstant(0.75f);
  MaskGrid m = MaskGrid::Zero(4, 4);
  m(2, 1) = 1;
  const auto out = apply_mask(img, m);
  int nonzero = 0;
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 4; ++c)
      if (out.r(r, c) != 0 || out.g(r, c) != 0 || out.b(r, c) != 0) ++nonzero;
  CHECK(nonzero == 1);
  CHECK(out.g(2, 1) == 0.5f);
}

TEST_CASE("apply_mask: checkerboard mask, pixelwise oracle") {
  Rgbf img(6, 6);
  img.r.setConstant(0.3f);
  img.g.setConstant(0.6f);
  img.b.setConstant(0.9f);
  const MaskGrid m = checkerboard(6, 6);
  const auto out = apply_mask(img, m);
  for (Index r = 0; r < 6; ++r)
    for (Index c = 0; c < 6; ++c) {
      CHECK(out.r(r, c) == (m(r, c) ? 0.3f : 0.0f));
      CHECK(out.g(r, c) == (m(r, c) ? 0.6f : 0.0f));
      CHECK(out.b(r, c) == (m(r, c) ? 0.9f : 0.0f));
    }
}

TEST_CASE("apply_mask: size mismatch is rejected") {
  Rgbf img(4, 4);
  CHECK_THROWS_AS(apply_mask(img, full_mask(4, 5)), std::invalid_argument);
}

TEST_CASE("gaussian_smooth: constant field is preserved") {
  const Gridd depth = Gridd::Constant(20, 20, 1000.0);
  const auto out = gaussian_smooth(depth, full_mask(20, 20), 9, 3.0);
  CHECK((out - 1000.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("gaussian_smooth: kernel 1 is the identity") {
  Gridd depth(8, 8);
  depth.setRandom();
  depth += 2.0;
  const auto out = gaussian_smooth(depth, full_mask(8, 8), 1, 2.5);
  CHECK((out - depth).abs().maxCoeff() < 1e-12);
}

TEST_CASE("gaussian_smooth: spike attenuation equals the oracle's central weight") {
  Gridd depth = Gridd::Constant(31, 31, 1000.0);
  depth(15, 15) += 10.0;
  const MaskGrid mask = full_mask(31, 31);
  const auto out = gaussian_smooth(depth, mask, 9, 3.0);

  const auto k2d = oracle::gaussian_kernel_2d(9, 3.0);
  const Gridd expected = oracle::masked_convolve_2d(depth, mask, k2d);
  CHECK((out - expected).abs().maxCoeff() < 1e-9);
  // Peak attenuation factor is the central kernel weight.
  CHECK(out(15, 15) - 1000.0 == doctest::Approx(10.0 * k2d(4, 4)).epsilon(1e-9));
}

TEST_CASE("gaussian_smooth: background never bleeds into the foreground") {
  const Index n = 24;
  Gridd depth = Gridd::Constant(n, n, 900.0);
  MaskGrid mask = MaskGrid::Zero(n, n);
  for (Index r = 4; r < 14; ++r)
    for (Index c = 4; c < 14; ++c) mask(r, c) = 1;

  Gridd poisoned = depth;
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      if (!mask(r, c)) poisoned(r, c) = 1e9;

  const auto a = gaussian_smooth(depth, mask, 9, 3.0);
  const auto b = gaussian_smooth(poisoned, mask, 9, 3.0);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      if (mask(r, c)) CHECK(a(r, c) == b(r, c));

  const auto expected =
      oracle::masked_convolve_2d(depth, mask, oracle::gaussian_kernel_2d(9, 3.0));
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      if (mask(r, c)) CHECK(a(r, c) == doctest::Approx(expected(r, c)).epsilon(1e-9));
}

TEST_CASE("gaussian_smooth: even kernel is rejected") {
  const Gridd depth = Gridd::Constant(8, 8, 1.0);
  CHECK_THROWS_AS(gaussian_smooth(depth, full_mask(8, 8), 4, 2.0),
                  std::invalid_argument);
}

TEST_CASE("depth_to_pointcloud: principal point backprojects onto the axis") {
  const auto K = test_camera(9, 9, 300.0);
  Gridd depth = Gridd::Constant(9, 9, 1000.0);
  MaskGrid m = MaskGrid::Zero(9, 9);
  m(4, 4) = 1;  // (cx, cy) = (4, 4)
  const auto cloud = depth_to_pointcloud(depth, m, K);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.points.col(0).isApprox(Eigen::Vector3d(0, 0, 1000), 1e-12));
}

TEST_CASE("depth_to_pointcloud: one focal length off-axis gives unit tangent") {
  CameraIntrinsics K;
  K.fx = K.fy = 4.0;
  K.cx = 1.0;
  K.cy = 2.0;
  K.width = 8;
  K.height = 8;
  Gridd depth = Gridd::Constant(8, 8, 500.0);
  MaskGrid m = MaskGrid::Zero(8, 8);
  m(2, 5) = 1;  // u = cx + fx, v = cy
  const auto cloud = depth_to_pointcloud(depth, m, K);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.points.col(0).isApprox(Eigen::Vector3d(500, 0, 500), 1e-12));
}

TEST_CASE("depth_to_pointcloud: random grid matches the per-pixel oracle") {
  const Index n = 16;
  const auto K = test_camera(n, n);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(500.0, 2000.0);
  Gridd depth(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) depth(r, c) = dist(rng);
  const MaskGrid mask = full_mask(n, n);

  const auto cloud = depth_to_pointcloud(depth, mask, K);
  REQUIRE(cloud.size() == n * n);
  for (Index i = 0; i < cloud.size(); ++i) {
    const Index r = cloud.pixel[i] / n, c = cloud.pixel[i] % n;
    const Eigen::Vector3d expect = oracle::backproject_pixel(
        static_cast<double>(c), static_cast<double>(r), depth(r, c), K);
    CHECK((cloud.points.col(i) - expect).norm() <= 1e-9 * expect.norm());
  }
}

TEST_CASE("depth_to_pointcloud: exactly invertible through the intrinsics") {
  const Index n = 12;
  const auto K = test_camera(n, n);
  Gridd depth(n, n);
  depth.setRandom();
  depth = depth * 100.0 + 1200.0;
  const auto cloud = depth_to_pointcloud(depth, full_mask(n, n), K);
  for (Index i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.points.col(i);
    const double u = p(0) / p(2) * K.fx + K.cx;
    const double v = p(1) / p(2) * K.fy + K.cy;
    const Index r = cloud.pixel[i] / n, c = cloud.pixel[i] % n;
    CHECK(std::abs(u - c) < 1e-9 * n);
    CHECK(std::abs(v - r) < 1e-9 * n);
    CHECK(std::abs(p(2) - depth(r, c)) < 1e-9 * depth(r, c));
  }
}

TEST_CASE("depth_to_pointcloud: nonpositive masked depth rejected") {
  Gridd depth = Gridd::Constant(4, 4, 100.0);
  depth(1, 2) = 0.0;
  CHECK_THROWS_AS(depth_to_pointcloud(depth, full_mask(4, 4), test_camera(4, 4)),
                  std::invalid_argument);
}

TEST_CASE("depth_to_normals: frontoparallel plane gives (0, 0, -1)") {
  const Index n = 16;
  const auto K = test_camera(n, n);
  const Gridd depth = Gridd::Constant(n, n, 800.0);
  const auto res = depth_to_normals(depth, full_mask(n, n), K);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      REQUIRE(res.valid(r, c) == 1);
      CHECK((res.normals.at(r, c) - Eigen::Vector3d(0, 0, -1)).norm() < 1e-9);
    }
}

TEST_CASE("depth_to_normals: plane tilted about the vertical axis") {
  const Index n = 32;
  const auto K = test_camera(n, n, 600.0);
  const double theta = 25.0 * M_PI / 180.0;
  const double z0 = 900.0;
  // Plane z = z0 + x tan(theta) in camera coordinates.
  Gridd depth(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      depth(r, c) = z0 / (1.0 - (c - K.cx) * std::tan(theta) / K.fx);
  const Eigen::Vector3d expect(std::sin(theta), 0, -std::cos(theta));

  MaskGrid interior = MaskGrid::Zero(n, n);
  for (Index r = 1; r < n - 1; ++r)
    for (Index c = 1; c < n - 1; ++c) interior(r, c) = 1;

  const auto res = depth_to_normals(depth, full_mask(n, n), K);
  CHECK(max_angle_deg(res.normals, interior,
                      [&](Index, Index) { return expect; }) < 0.5);
}

TEST_CASE("depth_to_normals: sinusoidal height field matches analytic gradient") {
  const Index n = 64;
  const double z0 = 4000.0, amplitude = 5.0, wavelength = 40.0;
  const auto K = test_camera(n, n, z0);  // ~1 unit per pixel at depth z0
  Gridd depth(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      depth(r, c) = z0 + amplitude * std::sin(2 * M_PI * c / wavelength);

  MaskGrid interior = MaskGrid::Zero(n, n);
  for (Index r = 1; r < n - 1; ++r)
    for (Index c = 1; c < n - 1; ++c) interior(r, c) = 1;

  const auto res = depth_to_normals(depth, full_mask(n, n), K);
  const double worst = max_angle_deg(res.normals, interior, [&](Index, Index c) {
    const double slope = amplitude * 2 * M_PI / wavelength *
                         std::cos(2 * M_PI * c / wavelength);
    return Eigen::Vector3d(slope, 0, -1).normalized().eval();
  });
  CHECK(worst < 1.0);
}

TEST_CASE("depth_to_normals: isolated masked pixel is dropped") {
  const Index n = 8;
  Gridd depth = Gridd::Constant(n, n, 700.0);
  MaskGrid m = MaskGrid::Zero(n, n);
  m(4, 4) = 1;          // isolated
  m(1, 1) = m(1, 2) = 1;  // pair: has a horizontal neighbor but no vertical
  const auto res = depth_to_normals(depth, m, test_camera(n, n));
  CHECK(res.valid(4, 4) == 0);
  CHECK(res.valid(1, 1) == 0);
  CHECK(mask_count(res.valid) == 0);
}

TEST_CASE("depth_to_normals: one-sided differences keep mask-edge pixels") {
  const Index n = 10;
  const Gridd depth = Gridd::Constant(n, n, 700.0);
  MaskGrid m = MaskGrid::Zero(n, n);
  for (Index r = 3; r < 7; ++r)
    for (Index c = 3; c < 7; ++c) m(r, c) = 1;
  const auto res = depth_to_normals(depth, m, test_camera(n, n));
  CHECK(mask_count(res.valid) == 16);  // every masked pixel survives
  CHECK((res.normals.at(3, 3) - Eigen::Vector3d(0, 0, -1)).norm() < 1e-9);
}

TEST_CASE("integrate_normals: zero gradient field gives a constant map") {
  const Index n = 24;
  NormalGridd normals(n, n);
  normals.z.setConstant(-1.0);
  const auto res = integrate_normals(normals, full_mask(n, n), 1000.0);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      CHECK(res.depth(r, c) == doctest::Approx(1000.0).epsilon(1e-9));
  CHECK(mask_count(res.clamped) == 0);
}

TEST_CASE("integrate_normals: analytic tilted plane recovered to < 0.1 mm") {
  const Index n = 64;
  const double theta = 20.0 * M_PI / 180.0;
  NormalGridd normals(n, n);
  normals.x.setConstant(std::sin(theta));
  normals.z.setConstant(-std::cos(theta));
  const auto res = integrate_normals(normals, full_mask(n, n), 1500.0);

  // Expected plane z = c tan(theta), compared up to a constant offset.
  Gridd expect(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) expect(r, c) = c * std::tan(theta);
  const double offset = (res.depth - expect).mean();
  CHECK((res.depth - expect - offset).abs().maxCoeff() < 0.1);
}

TEST_CASE("integrate_normals: Gaussian bump field recovered, RMSE < 1 mm") {
  const Index n = 128;
  oracle::BumpField field{1500.0,
                          {{25.0, 40.0, 44.0, 14.0},
                           {-18.0, 80.0, 90.0, 12.0},
                           {12.0, 96.0, 30.0, 16.0}}};
  const Gridd truth = field.render(n, n);
  NormalGridd normals(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      normals.set(r, c, field.normal(static_cast<double>(r), static_cast<double>(c)));

  const auto res = integrate_normals(normals, full_mask(n, n), 1500.0);
  const Gridd diff = res.depth - truth;
  const Gridd centered = diff - diff.mean();
  const double rmse = std::sqrt(centered.square().mean());
  CHECK(rmse < 1.0);
}

TEST_CASE("integrate_normals: near-grazing normals are clamped and flagged") {
  const Index n = 8;
  NormalGridd normals(n, n);
  normals.z.setConstant(-1.0);
  normals.x(3, 3) = 1.0;
  normals.z(3, 3) = -1e-5;  // |n_z| < 1e-3
  const auto res = integrate_normals(normals, full_mask(n, n), 100.0);
  CHECK(res.clamped(3, 3) == 1);
  CHECK(mask_count(res.clamped) == 1);
  CHECK(res.depth.isFinite().all());
}

TEST_CASE("integrate_normals: disconnected components share the gauge") {
  const Index n = 16;
  MaskGrid mask = MaskGrid::Zero(n, n);
  for (Index r = 2; r < 6; ++r)
    for (Index c = 2; c < 6; ++c) mask(r, c) = 1;
  for (Index r = 10; r < 14; ++r)
    for (Index c = 10; c < 14; ++c) mask(r, c) = 1;

  NormalGridd normals(n, n);
  const double theta = 15.0 * M_PI / 180.0;
  normals.x.setConstant(std::sin(theta));
  normals.z.setConstant(-std::cos(theta));
  const auto res = integrate_normals(normals, mask, 1234.0);

  for (const auto& box : {std::pair<Index, Index>{2, 2}, {10, 10}}) {
    double sum = 0;
    for (Index r = box.first; r < box.first + 4; ++r)
      for (Index c = box.second; c < box.second + 4; ++c)
        sum += res.depth(r, c);
    CHECK(sum / 16.0 == doctest::Approx(1234.0).epsilon(1e-9));
  }
}

TEST_CASE("integrate_normals: invariant to mask-exterior normal values") {
  const Index n = 20;
  MaskGrid mask = MaskGrid::Zero(n, n);
  for (Index r = 4; r < 16; ++r)
    for (Index c = 4; c < 16; ++c) mask(r, c) = 1;
  NormalGridd normals(n, n);
  normals.x.setConstant(0.2);
  normals.y.setConstant(-0.1);
  normals.z.setConstant(-0.97);

  NormalGridd poisoned = normals;
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      if (!mask(r, c)) {
        poisoned.x(r, c) = 123.0;
        poisoned.y(r, c) = -55.0;
        poisoned.z(r, c) = 0.5;
      }

  const auto a = integrate_normals(normals, mask, 1000.0);
  const auto b = integrate_normals(poisoned, mask, 1000.0);
  CHECK((a.depth == b.depth).all());
}

TEST_CASE("integrate_normals: empty mask rejected") {
  NormalGridd normals(4, 4);
  normals.z.setConstant(-1.0);
  CHECK_THROWS_AS(integrate_normals(normals, MaskGrid::Zero(4, 4), 1.0),
                  std::invalid_argument);
}

namespace {

PointCloud<double> random_cloud(Index n, unsigned seed, double spread = 100.0) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist(0.0, spread);
  PointCloud<double> cloud;
  cloud.points.resize(3, n);
  for (Index i = 0; i < n; ++i) {
    cloud.points.col(i) = Eigen::Vector3d(dist(rng), dist(rng), dist(rng));
    cloud.pixel.push_back(i);
  }
  return cloud;
}

}  // namespace

TEST_CASE("procrustes_align: identical clouds give the identity transform") {
  const auto gt = random_cloud(200, 11);
  const auto res = procrustes_align(gt, gt);
  CHECK(res.transform.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((res.transform.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-9);
  CHECK(res.transform.translation.norm() < 1e-9);
  CHECK((res.aligned.points - gt.points).norm() < 1e-9);
}

TEST_CASE("procrustes_align: known similarity transform is undone") {
  const auto gt = random_cloud(1000, 5);
  const double scale = 1.7;
  const Eigen::Matrix3d R =
      Eigen::AngleAxisd(0.8, Eigen::Vector3d(1, 2, -1).normalized())
          .toRotationMatrix();
  const Eigen::Vector3d t(10, -5, 30);

  PointCloud<double> pred = gt;
  pred.points = (scale * (R * gt.points)).colwise() + t;

  const auto res = procrustes_align(pred, gt);
  const double scene_scale =
      (gt.points.colwise() - gt.points.rowwise().mean()).colwise().norm().maxCoeff();
  const double max_residual =
      (res.aligned.points - gt.points).colwise().norm().maxCoeff();
  CHECK(max_residual < 1e-6 * scene_scale);
}

TEST_CASE("procrustes_align: noisy identity matches the closed-form oracle") {
  const auto gt = random_cloud(500, 23);
  std::mt19937 rng(99);
  std::normal_distribution<double> noise(0.0, 1.0);
  PointCloud<double> pred = gt;
  for (Index i = 0; i < pred.size(); ++i)
    pred.points.col(i) += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));

  const auto res = procrustes_align(pred, gt);
  const auto fit = oracle::fit_similarity(pred.points, gt.points);

  CHECK(res.transform.scale == doctest::Approx(fit.scale).epsilon(1e-9));
  CHECK((res.transform.rotation - fit.rotation).norm() < 1e-9);
  CHECK((res.transform.translation - fit.translation).norm() < 1e-6);

  // Transform stays near the identity and the residual stays at noise level.
  CHECK(std::abs(res.transform.scale - 1.0) < 0.05);
  CHECK((res.transform.rotation - Eigen::Matrix3d::Identity()).norm() < 0.05);
  const double mean_residual =
      (res.aligned.points - gt.points).colwise().norm().mean();
  CHECK(mean_residual <= 1.0 * std::sqrt(8.0 / M_PI) * 1.05);
}

TEST_CASE("procrustes_align: degenerate inputs rejected") {
  auto tiny = random_cloud(2, 3);
  CHECK_THROWS_AS(procrustes_align(tiny, tiny), std::invalid_argument);

  PointCloud<double> line;
  line.points.resize(3, 5);
  for (Index i = 0; i < 5; ++i) {
    line.points.col(i) = Eigen::Vector3d(static_cast<double>(i), 0, 0);
    line.pixel.push_back(i);
  }
  CHECK_THROWS_AS(procrustes_align(line, line), std::invalid_argument);

  auto a = random_cloud(5, 1);
  auto b = random_cloud(5, 2);
  b.pixel[3] = 77;  // break pixelwise correspondence
  CHECK_THROWS_AS(procrustes_align(a, b), std::invalid_argument);
}

TEST_CASE("procrustes_align: idempotent on an already-aligned cloud") {
  const auto gt = random_cloud(300, 31);
  PointCloud<double> pred = gt;
  pred.points = (1.3 * pred.points).colwise() + Eigen::Vector3d(5, 5, -2);
  const auto once = procrustes_align(pred, gt);
  const auto twice = procrustes_align(once.aligned, gt);
  const double rel = (twice.aligned.points - once.aligned.points).norm() /
                     once.aligned.points.norm();
  CHECK(rel < 1e-9);
}

TEST_CASE("procrustes_align: residual invariant to pre-similarity of pred") {
  const auto gt = random_cloud(400, 41);
  std::mt19937 rng(7);
  std::normal_distribution<double> noise(0.0, 2.0);
  PointCloud<double> pred = gt;
  for (Index i = 0; i < pred.size(); ++i)
    pred.points.col(i) += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));

  const double base =
      (procrustes_align(pred, gt).aligned.points - gt.points).colwise().norm().mean();

  const Eigen::Matrix3d R =
      Eigen::AngleAxisd(1.1, Eigen::Vector3d(0, 1, 3).normalized()).toRotationMatrix();
  PointCloud<double> warped = pred;
  warped.points = (0.6 * (R * pred.points)).colwise() + Eigen::Vector3d(40, 8, -12);
  const double after =
      (procrustes_align(warped, gt).aligned.points - gt.points).colwise().norm().mean();

  CHECK(std::abs(after - base) <= 1e-6 * base);
}

TEST_CASE("round trip: depth -> normals -> integration recovers the field") {
  // Quasi-orthographic camera so one pixel covers ~1 mm at the base depth.
  const Index n = 96;
  const double z0 = 10000.0;
  CameraIntrinsics K;
  K.fx = K.fy = z0;
  K.cx = (n - 1) / 2.0;
  K.cy = (n - 1) / 2.0;
  K.width = K.height = n;

  oracle::BumpField field{z0, {{20.0, 30.0, 36.0, 12.0}, {-15.0, 64.0, 60.0, 14.0}}};
  const Gridd depth = field.render(n, n);
  const MaskGrid mask = full_mask(n, n);

  const auto nr = depth_to_normals(depth, mask, K);
  REQUIRE(mask_count(nr.valid) == n * n);
  const auto res = integrate_normals(nr.normals, nr.valid, z0);

  const Gridd diff = res.depth - depth;
  const Gridd centered = diff - diff.mean();
  CHECK(std::sqrt(centered.square().mean()) < 1.0);
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
  const Index n = 40;
  oracle::BumpField field{1200.0, {{15.0, 14.0, 20.0, 8.0}}};
  const Gridd depth = field.render(n, n);
  MaskGrid mask = MaskGrid::Zero(n, n);
  for (Index r = 2; r < n - 2; ++r)
    for (Index c = 2; c < n - 2; ++c) mask(r, c) = 1;
  const auto K = test_camera(n, n);

  const auto s1 = gaussian_smooth(depth, mask, 9, 3.0);
  const auto s2 = gaussian_smooth(depth, mask, 9, 3.0);
  CHECK((s1 == s2).all());

  const auto n1 = depth_to_normals(depth, mask, K);
  const auto n2 = depth_to_normals(depth, mask, K);
  CHECK((n1.normals.x == n2.normals.x).all());
  CHECK((n1.normals.y == n2.normals.y).all());
  CHECK((n1.normals.z == n2.normals.z).all());

  const auto i1 = integrate_normals(n1.normals, n1.valid, 1200.0);
  const auto i2 = integrate_normals(n2.normals, n2.valid, 1200.0);
  CHECK((i1.depth == i2.depth).all());
}
