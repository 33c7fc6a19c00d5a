#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "defsurf/metrics.hpp"
#include "oracles.hpp"

using namespace defsurf;

namespace {

CameraIntrinsics test_camera(Index rows, Index cols, double f = 500.0) {
  CameraIntrinsics K;
  K.fx = K.fy = f;
  K.cx = (cols - 1) / 2.0;
  K.cy = (rows - 1) / 2.0;
  K.width = cols;
  K.height = rows;
  return K;
}

MeshVertices<double> random_mesh(Index v, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist(0.0, 50.0);
  Points3<double> pts(3, v);
  for (Index i = 0; i < v; ++i)
    pts.col(i) = Eigen::Vector3d(dist(rng), dist(rng), dist(rng) + 1000.0);
  return MeshVertices<double>(pts);
}

// Normals perpendicular to the camera x-axis, so a rotation about x moves
// every one of them by exactly the rotation angle.
NormalGridd normals_in_yz_plane(Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> phi(-0.6, 0.6);
  NormalGridd g(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      const double a = phi(rng);
      g.set(r, c, {0.0, std::sin(a), -std::cos(a)});
    }
  return g;
}

}  // namespace

TEST_CASE("metric_vertices: exact prediction scores zero") {
  const auto mesh = random_mesh(81, 3);
  CHECK(metric_vertices(mesh, mesh) == 0.0);
}

TEST_CASE("metric_vertices: uniform 3 mm offset scores 3 mm") {
  const auto gt = random_mesh(81, 4);
  MeshVertices<double> pred = gt;
  pred.coords.row(0).array() += 3.0;
  CHECK(metric_vertices(gt, pred) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("metric_vertices: random perturbation matches the loop oracle") {
  const auto gt = random_mesh(64, 5);
  auto pred = gt;
  std::mt19937 rng(6);
  std::normal_distribution<double> noise(0.0, 2.0);
  for (Index i = 0; i < pred.count(); ++i)
    pred.coords.col(i) += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));

  double expect = 0;
  for (Index i = 0; i < gt.count(); ++i)
    expect += (gt.coords.col(i) - pred.coords.col(i)).norm();
  expect /= static_cast<double>(gt.count());

  const double got = metric_vertices(gt, pred);
  CHECK(std::abs(got - expect) <= 1e-12 * expect);
}

TEST_CASE("metric_vertices: vertex count mismatch rejected") {
  CHECK_THROWS_AS(metric_vertices(random_mesh(10, 1), random_mesh(11, 1)),
                  std::invalid_argument);
}

TEST_CASE("metric_depth: exact prediction scores zero") {
  const Index n = 12;
  Gridd depth(n, n);
  depth.setRandom();
  depth = depth * 50.0 + 1000.0;
  CHECK(metric_depth(depth, depth, full_mask(n, n), test_camera(n, n)) <
        1e-12 * 1000.0);
}

TEST_CASE("metric_depth: uniform depth scaling vanishes after alignment") {
  const Index n = 16;
  oracle::BumpField field{1000.0, {{20.0, 5.0, 6.0, 4.0}}};
  const Gridd gt = field.render(n, n);
  const Gridd pred = 2.0 * gt;
  const double err = metric_depth(gt, pred, full_mask(n, n), test_camera(n, n));
  CHECK(err < 1e-6 * 1000.0);
}

TEST_CASE("metric_depth: single displaced pixel matches the end-to-end oracle") {
  const Index n = 8;
  const auto K = test_camera(n, n);
  const Gridd gt = Gridd::Constant(n, n, 1000.0);
  Gridd pred = gt;
  pred(3, 4) += 10.0;

  // Oracle: explicit backprojection, closed-form similarity fit, averaging.
  Eigen::Matrix3Xd gt_pts(3, n * n), pred_pts(3, n * n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      gt_pts.col(r * n + c) = oracle::backproject_pixel(
          static_cast<double>(c), static_cast<double>(r), gt(r, c), K);
      pred_pts.col(r * n + c) = oracle::backproject_pixel(
          static_cast<double>(c), static_cast<double>(r), pred(r, c), K);
    }
  const auto fit = oracle::fit_similarity(pred_pts, gt_pts);
  double expect = 0;
  for (Index i = 0; i < n * n; ++i)
    expect += (fit.scale * fit.rotation * pred_pts.col(i) + fit.translation -
               gt_pts.col(i))
                  .norm();
  expect /= static_cast<double>(n * n);

  const double got = metric_depth(gt, pred, full_mask(n, n), K);
  CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  CHECK(got > 0.0);
}

TEST_CASE("metric_depth: empty mask rejected") {
  const Gridd depth = Gridd::Constant(4, 4, 100.0);
  CHECK_THROWS_AS(metric_depth(depth, depth, MaskGrid::Zero(4, 4), test_camera(4, 4)),
                  std::invalid_argument);
}

TEST_CASE("aligned_point_error: invariant to similarity pre-transforms") {
  std::mt19937 rng(17);
  std::normal_distribution<double> dist(0.0, 40.0), noise(0.0, 1.5);
  PointCloud<double> gt, pred;
  gt.points.resize(3, 600);
  for (Index i = 0; i < 600; ++i) {
    gt.points.col(i) = Eigen::Vector3d(dist(rng), dist(rng), dist(rng) + 800);
    gt.pixel.push_back(i);
  }
  pred = gt;
  for (Index i = 0; i < 600; ++i)
    pred.points.col(i) += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));

  const double base = aligned_point_error(gt, pred);

  const Eigen::Matrix3d R =
      Eigen::AngleAxisd(0.5, Eigen::Vector3d(1, -1, 2).normalized()).toRotationMatrix();
  PointCloud<double> warped = pred;
  warped.points = (1.8 * (R * pred.points)).colwise() + Eigen::Vector3d(7, -3, 11);
  const double after = aligned_point_error(gt, warped);
  CHECK(std::abs(after - base) <= 1e-6 * base);
}

TEST_CASE("angular_error_stats: exact prediction") {
  const auto gt = normals_in_yz_plane(12, 2);
  const auto s = angular_error_stats(gt, gt, full_mask(12, 12));
  CHECK(s.mae_deg == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(s.dae_deg == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(s.frac10 == 100.0);
  CHECK(s.frac20 == 100.0);
  CHECK(s.frac30 == 100.0);
}

TEST_CASE("angular_error_stats: 15 degree rotation about the camera x-axis") {
  const Index n = 24;
  const auto gt = normals_in_yz_plane(n, 9);
  const Eigen::Matrix3d R =
      Eigen::AngleAxisd(15.0 * M_PI / 180.0, Eigen::Vector3d::UnitX())
          .toRotationMatrix();
  NormalGridd pred(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) pred.set(r, c, R * gt.at(r, c));

  const auto s = angular_error_stats(gt, pred, full_mask(n, n));
  CHECK(s.mae_deg == doctest::Approx(15.0).epsilon(0.01 / 15.0));
  CHECK(s.dae_deg == doctest::Approx(15.0).epsilon(0.01 / 15.0));
  CHECK(s.frac10 == 0.0);
  CHECK(s.frac20 == 100.0);
  CHECK(s.frac30 == 100.0);
}

TEST_CASE("angular_error_stats: analytic 30 degree single pixel") {
  NormalGridd gt(1, 1), pred(1, 1);
  gt.set(0, 0, {0, 0, -1});
  pred.set(0, 0, {0, std::sin(M_PI / 6), -std::cos(M_PI / 6)});
  const auto s = angular_error_stats(gt, pred, full_mask(1, 1));
  CHECK(s.mae_deg == doctest::Approx(30.0).epsilon(1e-9));
}

TEST_CASE("angular_error_stats: zero-length prediction scores 90 degrees") {
  NormalGridd gt(2, 2), pred(2, 2);
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 2; ++c) gt.set(r, c, {0, 0, -1});
  pred = gt;
  pred.set(0, 1, {0, 0, 0});
  const auto s = angular_error_stats(gt, pred, full_mask(2, 2));
  CHECK(s.zero_pred_count == 1);
  CHECK(s.mae_deg == doctest::Approx(90.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("angular_error_stats: invariant to positive per-pixel rescaling") {
  const Index n = 10;
  const auto gt = normals_in_yz_plane(n, 13);
  NormalGridd pred = normals_in_yz_plane(n, 14);
  NormalGridd scaled = pred;
  std::mt19937 rng(15);
  std::uniform_real_distribution<double> s(0.1, 8.0);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      const double k = s(rng);
      scaled.set(r, c, k * pred.at(r, c));
    }
  const auto a = angular_error_stats(gt, pred, full_mask(n, n));
  const auto b = angular_error_stats(gt, scaled, full_mask(n, n));
  CHECK(a.mae_deg == doctest::Approx(b.mae_deg).epsilon(1e-12));
  CHECK(a.dae_deg == doctest::Approx(b.dae_deg).epsilon(1e-12));
  CHECK(a.frac10 == b.frac10);
  CHECK(a.frac20 == b.frac20);
  CHECK(a.frac30 == b.frac30);
}

TEST_CASE("angular_error_stats: fractions monotone, errors bounded by the max") {
  const Index n = 16;
  const auto gt = normals_in_yz_plane(n, 21);
  NormalGridd pred = normals_in_yz_plane(n, 22);
  const auto s = angular_error_stats(gt, pred, full_mask(n, n));
  CHECK(s.frac10 <= s.frac20);
  CHECK(s.frac20 <= s.frac30);
  CHECK(s.frac30 <= 100.0);

  double max_angle = 0;
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      const double d = std::clamp(
          gt.at(r, c).normalized().dot(pred.at(r, c).normalized()), -1.0, 1.0);
      max_angle = std::max(max_angle, std::acos(d) * 180.0 / M_PI);
    }
  CHECK(s.mae_deg <= max_angle + 1e-12);
  CHECK(s.dae_deg <= max_angle + 1e-12);
}

TEST_CASE("batch_stats matches the naive two-pass oracle") {
  std::mt19937 rng(33);
  std::uniform_real_distribution<double> dist(0.0, 40.0);
  std::vector<double> values(100);
  for (auto& v : values) v = dist(rng);
  const auto s = batch_stats(values);
  const auto [mean, stddev] = oracle::naive_mean_std(values);
  CHECK(std::abs(s.mean - mean) <= 1e-12 * std::abs(mean));
  CHECK(std::abs(s.stddev - stddev) <= 1e-12 * std::max(1.0, stddev));
}

TEST_CASE("MetricsReport: CSV schema and key-value record") {
  MetricsReport rep;
  rep.experiment = "cloth-cloth";
  rep.method = "N+D/N";
  rep.mae_deg = Stats{17.37, 12.51};
  rep.dae_deg = 14.44;
  rep.frac10 = 30.6;
  rep.frac20 = 68.85;
  rep.frac30 = 87.29;
  rep.m_d_mm = Stats{17.53, 5.50};
  rep.sample_count = 100;
  rep.validate();

  CHECK(MetricsReport::csv_header() ==
        "experiment,method,mAE_mean,mAE_std,dAE,frac10,frac20,frac30,mD_mean,mD_std");
  const std::string row = rep.csv_row();
  CHECK(row.substr(0, 18) == "cloth-cloth,N+D/N,");
  CHECK(row.find("17.370000,12.510000,14.440000,30.600000,68.850000,87.290000,"
                 "17.530000,5.500000") != std::string::npos);

  const std::string kv = rep.to_kv_text();
  CHECK(kv.find("mAE_mean = 17.370000") != std::string::npos);
  CHECK(kv.find("sample_count = 100") != std::string::npos);

  MetricsReport bad = rep;
  bad.frac10 = 99.0;  // above frac20
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
