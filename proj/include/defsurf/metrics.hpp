// metrics.hpp
// Evaluation measures: mean vertex distance (m_C), Procrustes-aligned point
// error (m_D), angular-error statistics (mAE, dAE, <10/20/30 deg fractions)
// and their batch aggregation as mean +/- standard deviation over samples.
// Aggregation uses compensated summation so the order of accumulation does
// not change results beyond rounding.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "defsurf/geometry.hpp"
#include "defsurf/types.hpp"

namespace defsurf {

// ---------------------------------------------------------------------------
// Compensated accumulation

class KahanSum {
 public:
  void add(double x) {
    const double y = x - compensation_;
    const double t = sum_ + y;
    compensation_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0, compensation_ = 0;
};

struct Stats {
  double mean = 0;
  double stddev = 0;  // population standard deviation
};

// Two-pass compensated mean / population std over per-sample values.
inline Stats batch_stats(const std::vector<double>& values) {
  Stats s;
  if (values.empty()) return s;
  KahanSum sum;
  for (double v : values) sum.add(v);
  s.mean = sum.value() / static_cast<double>(values.size());
  KahanSum sq;
  for (double v : values) sq.add((v - s.mean) * (v - s.mean));
  s.stddev = std::sqrt(sq.value() / static_cast<double>(values.size()));
  return s;
}

// ---------------------------------------------------------------------------
// Per-sample metrics

// Mean vertex-wise Euclidean distance (distances are not squared).
template <typename S>
double metric_vertices(const MeshVertices<S>& gt, const MeshVertices<S>& pred) {
  require(gt.count() == pred.count(), "metric_vertices: vertex count mismatch");
  require(gt.count() > 0, "metric_vertices: empty meshes");
  KahanSum sum;
  for (Index i = 0; i < gt.count(); ++i)
    sum.add((gt.coords.col(i).template cast<double>() -
             pred.coords.col(i).template cast<double>())
                .norm());
  return sum.value() / static_cast<double>(gt.count());
}

// Mask-averaged distance between corresponding points after similarity
// alignment of pred onto gt.
inline double aligned_point_error(const PointCloud<double>& gt,
                                  const PointCloud<double>& pred) {
  const auto res = procrustes_align(pred, gt);
  KahanSum sum;
  for (Index i = 0; i < gt.size(); ++i)
    sum.add((res.aligned.points.col(i) - gt.points.col(i)).norm());
  return sum.value() / static_cast<double>(gt.size());
}

// m_D: backproject both depth maps over the shared mask, similarity-align the
// prediction, average per-pixel point distances.
template <typename S>
double metric_depth(const Grid<S>& gt, const Grid<S>& pred,
                    const MaskGrid& mask, const CameraIntrinsics& K) {
  require(mask_count(mask) > 0, "metric_depth: empty mask");
  const Gridd gtd = gt.template cast<double>();
  const Gridd prd = pred.template cast<double>();
  const auto gt_cloud = depth_to_pointcloud(gtd, mask, K);
  const auto pred_cloud = depth_to_pointcloud(prd, mask, K);
  return aligned_point_error(gt_cloud, pred_cloud);
}

struct AngularErrorStats {
  double mae_deg = 0;     // mean angular error
  double dae_deg = 0;     // median angular error
  double frac10 = 0;      // % of masked pixels with error < 10 deg
  double frac20 = 0;
  double frac30 = 0;
  Index pixel_count = 0;
  Index zero_pred_count = 0;  // zero-length predictions, scored as 90 deg
};

// Per-pixel angle between gt and pred directions in degrees, pooled over the
// masked pixels of one sample. Predictions are normalized internally;
// zero-length predictions score 90 degrees and are counted, not dropped.
template <typename S>
AngularErrorStats angular_error_stats(const NormalGrid<S>& gt,
                                      const NormalGrid<S>& pred,
                                      const MaskGrid& mask) {
  require(gt.rows() == mask.rows() && gt.cols() == mask.cols() &&
              pred.rows() == mask.rows() && pred.cols() == mask.cols(),
          "angular_error_stats: size mismatch");
  require(mask_count(mask) > 0, "angular_error_stats: empty mask");

  std::vector<double> angles;
  angles.reserve(static_cast<std::size_t>(mask_count(mask)));
  AngularErrorStats out;
  for (Index r = 0; r < mask.rows(); ++r) {
    for (Index c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      const Eigen::Vector3d g = gt.at(r, c).template cast<double>().normalized();
      Eigen::Vector3d p = pred.at(r, c).template cast<double>();
      const double norm = p.norm();
      double angle_deg;
      if (norm > 0) {
        const double d = std::clamp(g.dot(p / norm), -1.0, 1.0);
        angle_deg = std::acos(d) * 180.0 / M_PI;
      } else {
        angle_deg = 90.0;
        ++out.zero_pred_count;
      }
      angles.push_back(angle_deg);
    }
  }

  out.pixel_count = static_cast<Index>(angles.size());
  KahanSum sum;
  Index n10 = 0, n20 = 0, n30 = 0;
  for (double a : angles) {
    sum.add(a);
    if (a < 10.0) ++n10;
    if (a < 20.0) ++n20;
    if (a < 30.0) ++n30;
  }
  const double n = static_cast<double>(angles.size());
  out.mae_deg = sum.value() / n;
  out.frac10 = 100.0 * n10 / n;
  out.frac20 = 100.0 * n20 / n;
  out.frac30 = 100.0 * n30 / n;

  std::sort(angles.begin(), angles.end());
  const std::size_t m = angles.size();
  out.dae_deg = (m % 2 == 1) ? angles[m / 2]
                             : 0.5 * (angles[m / 2 - 1] + angles[m / 2]);
  return out;
}

// ---------------------------------------------------------------------------
// Aggregate report

// Batch report: per-sample statistics are computed over that sample's mask,
// then averaged across samples (dAE is the mean of per-sample medians).
struct MetricsReport {
  std::string experiment;
  std::string method;
  std::optional<Stats> mae_deg;   // absent for depth-only evaluations
  std::optional<double> dae_deg;
  std::optional<double> frac10, frac20, frac30;
  std::optional<Stats> m_d_mm;
  std::optional<Stats> m_c_mm;
  int sample_count = 0;

  static std::string csv_header() {
    return "experiment,method,mAE_mean,mAE_std,dAE,frac10,frac20,frac30,"
           "mD_mean,mD_std";
  }

  std::string csv_row() const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    out << experiment << ',' << method << ',';
    if (mae_deg) out << mae_deg->mean << ',' << mae_deg->stddev;
    else out << ',';
    out << ',';
    if (dae_deg) out << *dae_deg;
    out << ',';
    if (frac10) out << *frac10;
    out << ',';
    if (frac20) out << *frac20;
    out << ',';
    if (frac30) out << *frac30;
    out << ',';
    if (m_d_mm) out << m_d_mm->mean << ',' << m_d_mm->stddev;
    else out << ',';
    return out.str();
  }

  // Flat key = value record.
  std::string to_kv_text() const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    out << "experiment = " << experiment << "\n";
    out << "method = " << method << "\n";
    if (mae_deg) {
      out << "mAE_mean = " << mae_deg->mean << "\n";
      out << "mAE_std = " << mae_deg->stddev << "\n";
    }
    if (dae_deg) out << "dAE = " << *dae_deg << "\n";
    if (frac10) out << "frac10 = " << *frac10 << "\n";
    if (frac20) out << "frac20 = " << *frac20 << "\n";
    if (frac30) out << "frac30 = " << *frac30 << "\n";
    if (m_d_mm) {
      out << "mD_mean = " << m_d_mm->mean << "\n";
      out << "mD_std = " << m_d_mm->stddev << "\n";
    }
    if (m_c_mm) {
      out << "mC_mean = " << m_c_mm->mean << "\n";
      out << "mC_std = " << m_c_mm->stddev << "\n";
    }
    out << "sample_count = " << sample_count << "\n";
    return out.str();
  }

  void validate() const {
    auto in_range = [](double v, double lo, double hi) {
      return v >= lo && v <= hi;
    };
    if (frac10 && frac20 && frac30)
      require(*frac10 <= *frac20 && *frac20 <= *frac30 &&
                  in_range(*frac10, 0, 100) && in_range(*frac30, 0, 100),
              "MetricsReport: threshold fractions not monotone in [0, 100]");
    if (mae_deg)
      require(mae_deg->mean >= 0 && mae_deg->mean <= 180,
              "MetricsReport: mAE out of range");
    if (dae_deg)
      require(*dae_deg >= 0 && *dae_deg <= 180,
              "MetricsReport: dAE out of range");
    if (m_d_mm) require(m_d_mm->mean >= 0, "MetricsReport: negative m_D");
    if (m_c_mm) require(m_c_mm->mean >= 0, "MetricsReport: negative m_C");
  }
};

}  // namespace defsurf
