// geometry.hpp
// Pure numerical operations on depth maps, normal maps, point clouds and
// meshes: masking, mask-aware smoothing, backprojection, finite-difference
// normals, gradient-field integration and similarity (Procrustes) alignment.
// All functions are deterministic and free of shared mutable state.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <cmath>
#include <limits>
#include <vector>

#include "defsurf/types.hpp"

namespace defsurf {

// ---------------------------------------------------------------------------
// Masking

template <typename S>
Rgb<S> apply_mask(const Rgb<S>& image, const MaskGrid& mask) {
  require(image.rows() == mask.rows() && image.cols() == mask.cols(),
          "apply_mask: image and mask sizes differ");
  Rgb<S> out(image.rows(), image.cols());
  const auto keep = mask.template cast<S>();
  out.r = image.r * keep;
  out.g = image.g * keep;
  out.b = image.b * keep;
  return out;
}

// ---------------------------------------------------------------------------
// Mask-normalized Gaussian smoothing

template <typename S>
Eigen::Array<S, Eigen::Dynamic, 1> gaussian_kernel(int size, S sigma) {
  require(size >= 1 && size % 2 == 1, "gaussian kernel size must be odd");
  require(sigma > S(0), "gaussian sigma must be positive");
  Eigen::Array<S, Eigen::Dynamic, 1> k(size);
  const int half = size / 2;
  for (int i = 0; i < size; ++i) {
    const S d = static_cast<S>(i - half);
    k(i) = std::exp(-d * d / (S(2) * sigma * sigma));
  }
  return k / k.sum();
}

namespace detail {

// Separable 1D pass along rows (axis = 0) or columns (axis = 1).
template <typename S>
Grid<S> convolve_axis(const Grid<S>& in,
                      const Eigen::Array<S, Eigen::Dynamic, 1>& kernel,
                      int axis) {
  const Index rows = in.rows(), cols = in.cols();
  const int half = static_cast<int>(kernel.size()) / 2;
  Grid<S> out = Grid<S>::Zero(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) {
      S acc = S(0);
      for (int t = -half; t <= half; ++t) {
        const Index rr = axis == 0 ? r + t : r;
        const Index cc = axis == 0 ? c : c + t;
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
        acc += kernel(t + half) * in(rr, cc);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace detail

// Smooths the masked region only; background values never bleed in because
// both numerator and denominator are weighted by the mask. Background pixels
// of the output are zero.
template <typename S>
Grid<S> gaussian_smooth(const Grid<S>& depth, const MaskGrid& mask,
                        int kernel_size, S sigma) {
  require(depth.rows() == mask.rows() && depth.cols() == mask.cols(),
          "gaussian_smooth: depth and mask sizes differ");
  const auto kernel = gaussian_kernel<S>(kernel_size, sigma);
  const Grid<S> m = mask.template cast<S>();
  const Grid<S> weighted = depth * m;
  const Grid<S> num = detail::convolve_axis(
      detail::convolve_axis(weighted, kernel, 0), kernel, 1);
  const Grid<S> den =
      detail::convolve_axis(detail::convolve_axis(m, kernel, 0), kernel, 1);
  Grid<S> out = Grid<S>::Zero(depth.rows(), depth.cols());
  for (Index c = 0; c < depth.cols(); ++c)
    for (Index r = 0; r < depth.rows(); ++r)
      if (mask(r, c)) out(r, c) = num(r, c) / den(r, c);
  return out;
}

// ---------------------------------------------------------------------------
// Backprojection

template <typename S>
PointCloud<S> depth_to_pointcloud(const Grid<S>& depth, const MaskGrid& mask,
                                  const CameraIntrinsics& K) {
  require(depth.rows() == mask.rows() && depth.cols() == mask.cols(),
          "depth_to_pointcloud: depth and mask sizes differ");
  K.require_valid();
  const Index n = mask_count(mask);
  PointCloud<S> cloud;
  cloud.points.resize(3, n);
  cloud.pixel.reserve(static_cast<std::size_t>(n));
  Index i = 0;
  for (Index r = 0; r < depth.rows(); ++r) {
    for (Index c = 0; c < depth.cols(); ++c) {
      if (!mask(r, c)) continue;
      const S d = depth(r, c);
      require(std::isfinite(static_cast<double>(d)) && d > S(0),
              "depth_to_pointcloud: nonpositive masked depth");
      cloud.points(0, i) = static_cast<S>((c - K.cx) / K.fx) * d;
      cloud.points(1, i) = static_cast<S>((r - K.cy) / K.fy) * d;
      cloud.points(2, i) = d;
      cloud.pixel.push_back(r * depth.cols() + c);
      ++i;
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Finite-difference normals

template <typename S>
struct NormalsResult {
  NormalGrid<S> normals;
  // Masked pixels whose normal is defined. Isolated pixels (no masked
  // neighbor along one of the axes) are dropped here.
  MaskGrid valid;
};

// Normal = normalized cross product of the backprojected surface tangents.
// Central differences where the stencil stays inside the mask, one-sided at
// the mask boundary. Output normals are camera-facing (z < 0).
template <typename S>
NormalsResult<S> depth_to_normals(const Grid<S>& depth, const MaskGrid& mask,
                                  const CameraIntrinsics& K) {
  require(depth.rows() == mask.rows() && depth.cols() == mask.cols(),
          "depth_to_normals: depth and mask sizes differ");
  K.require_valid();
  const Index rows = depth.rows(), cols = depth.cols();

  auto point = [&](Index r, Index c) -> Eigen::Matrix<S, 3, 1> {
    const S d = depth(r, c);
    return {static_cast<S>((c - K.cx) / K.fx) * d,
            static_cast<S>((r - K.cy) / K.fy) * d, d};
  };

  NormalsResult<S> out;
  out.normals = NormalGrid<S>(rows, cols);
  out.valid = MaskGrid::Zero(rows, cols);

  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      const bool left = c > 0 && mask(r, c - 1);
      const bool right = c + 1 < cols && mask(r, c + 1);
      const bool up = r > 0 && mask(r - 1, c);
      const bool down = r + 1 < rows && mask(r + 1, c);
      if (!(left || right) || !(up || down)) continue;  // isolated along an axis

      Eigen::Matrix<S, 3, 1> tu, tv;
      if (left && right)
        tu = point(r, c + 1) - point(r, c - 1);
      else if (right)
        tu = point(r, c + 1) - point(r, c);
      else
        tu = point(r, c) - point(r, c - 1);
      if (up && down)
        tv = point(r + 1, c) - point(r - 1, c);
      else if (down)
        tv = point(r + 1, c) - point(r, c);
      else
        tv = point(r, c) - point(r - 1, c);

      Eigen::Matrix<S, 3, 1> n = tu.cross(tv);
      const S norm = n.norm();
      if (!(norm > S(0))) continue;
      n /= norm;
      if (n(2) > S(0)) n = -n;
      if (n(2) == S(0)) continue;  // cannot orient a grazing normal
      out.normals.set(r, c, n);
      out.valid(r, c) = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Connected components of a mask (4-connectivity)

inline Grid<Index> mask_components(const MaskGrid& mask, Index* count = nullptr) {
  const Index rows = mask.rows(), cols = mask.cols();
  Grid<Index> label = Grid<Index>::Constant(rows, cols, -1);
  Index next = 0;
  std::vector<Index> stack;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!mask(r, c) || label(r, c) >= 0) continue;
      stack.push_back(r * cols + c);
      label(r, c) = next;
      while (!stack.empty()) {
        const Index p = stack.back();
        stack.pop_back();
        const Index pr = p / cols, pc = p % cols;
        const Index nbr[4][2] = {
            {pr - 1, pc}, {pr + 1, pc}, {pr, pc - 1}, {pr, pc + 1}};
        for (const auto& nb : nbr) {
          const Index nr = nb[0], nc = nb[1];
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          if (!mask(nr, nc) || label(nr, nc) >= 0) continue;
          label(nr, nc) = next;
          stack.push_back(nr * cols + nc);
        }
      }
      ++next;
    }
  }
  if (count) *count = next;
  return label;
}

// ---------------------------------------------------------------------------
// Normal integration (masked least-squares Poisson system)

template <typename S>
struct IntegrationResult {
  Grid<S> depth;
  // Pixels whose gradient was clamped because |n_z| < 1e-3.
  MaskGrid clamped;
  int iterations = 0;
  double relative_residual = 0;
};

// Solves the masked least-squares system grad z = g with
// g = (-n_x / n_z, -n_y / n_z), Neumann boundary on the mask edge. Each
// connected mask component is gauge-fixed so its mean depth equals
// mean_depth. Gradients are expressed per pixel step; callers wanting
// metric depth choose intrinsics so that the pixel pitch matches (the
// subsequent similarity alignment absorbs any global scale).
template <typename S>
IntegrationResult<S> integrate_normals(const NormalGrid<S>& normals,
                                       const MaskGrid& mask, S mean_depth) {
  require(normals.rows() == mask.rows() && normals.cols() == mask.cols(),
          "integrate_normals: normals and mask sizes differ");
  require(mask_count(mask) > 0, "integrate_normals: empty mask");
  const Index rows = mask.rows(), cols = mask.cols();

  constexpr double kGrazing = 1e-3;
  constexpr double kClamp = 1e3;

  IntegrationResult<S> out;
  out.clamped = MaskGrid::Zero(rows, cols);

  // Per-pixel gradient field, clamped at near-grazing normals.
  Gridd gx = Gridd::Zero(rows, cols), gy = Gridd::Zero(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      double nx = normals.x(r, c), ny = normals.y(r, c), nz = normals.z(r, c);
      if (std::abs(nz) < kGrazing) {
        out.clamped(r, c) = 1;
        nz = nz < 0 ? -kGrazing : kGrazing;
      }
      gx(r, c) = std::clamp(-nx / nz, -kClamp, kClamp);
      gy(r, c) = std::clamp(-ny / nz, -kClamp, kClamp);
    }
  }

  // Index the masked pixels.
  Grid<Index> id = Grid<Index>::Constant(rows, cols, -1);
  std::vector<Index> pix;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      if (mask(r, c)) {
        id(r, c) = static_cast<Index>(pix.size());
        pix.push_back(r * cols + c);
      }
  const Index n = static_cast<Index>(pix.size());

  // Graph Laplacian over mask-interior edges; right-hand side from the
  // target gradients at edge midpoints.
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  auto add_edge = [&](Index i, Index j, double g) {
    trip.emplace_back(i, i, 1.0);
    trip.emplace_back(j, j, 1.0);
    trip.emplace_back(i, j, -1.0);
    trip.emplace_back(j, i, -1.0);
    b(i) -= g;
    b(j) += g;
  };
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      if (c + 1 < cols && mask(r, c + 1))
        add_edge(id(r, c), id(r, c + 1), 0.5 * (gx(r, c) + gx(r, c + 1)));
      if (r + 1 < rows && mask(r + 1, c))
        add_edge(id(r, c), id(r + 1, c), 0.5 * (gy(r, c) + gy(r + 1, c)));
    }
  }

  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  if (b.norm() > 0) {
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                             Eigen::Lower | Eigen::Upper>
        cg;
    cg.setTolerance(1e-8);
    cg.setMaxIterations(20 * n + 100);
    cg.compute(L);
    z = cg.solve(b);
    out.iterations = static_cast<int>(cg.iterations());
    out.relative_residual = cg.error();
  }

  // Shared gauge: every connected component's mean depth equals mean_depth.
  Index ncomp = 0;
  const Grid<Index> comp = mask_components(mask, &ncomp);
  Eigen::VectorXd comp_sum = Eigen::VectorXd::Zero(ncomp);
  Eigen::VectorXd comp_cnt = Eigen::VectorXd::Zero(ncomp);
  for (Index i = 0; i < n; ++i) {
    const Index r = pix[static_cast<std::size_t>(i)] / cols;
    const Index c = pix[static_cast<std::size_t>(i)] % cols;
    comp_sum(comp(r, c)) += z(i);
    comp_cnt(comp(r, c)) += 1.0;
  }

  out.depth = Grid<S>::Zero(rows, cols);
  for (Index i = 0; i < n; ++i) {
    const Index r = pix[static_cast<std::size_t>(i)] / cols;
    const Index c = pix[static_cast<std::size_t>(i)] % cols;
    const double shift =
        static_cast<double>(mean_depth) - comp_sum(comp(r, c)) / comp_cnt(comp(r, c));
    out.depth(r, c) = static_cast<S>(z(i) + shift);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Similarity Procrustes alignment

// Closed-form similarity transform p -> scale * rotation * p + translation.
struct SimilarityTransform {
  double scale = 1;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
};

template <typename S>
struct AlignmentResult {
  PointCloud<S> aligned;
  SimilarityTransform transform;
};

// Similarity Procrustes (includes scale): minimizes the sum of squared
// correspondence distances over s > 0, proper rotation R and translation t.
// Requires pixelwise correspondence (identical pixel-index sets) and at
// least 3 non-collinear source points.
template <typename S>
AlignmentResult<S> procrustes_align(const PointCloud<S>& pred,
                                    const PointCloud<S>& gt) {
  require(pred.size() == gt.size(),
          "procrustes_align: clouds differ in size");
  require(pred.pixel == gt.pixel,
          "procrustes_align: clouds are not in pixelwise correspondence");
  const Index n = pred.size();
  require(n >= 3, "procrustes_align: need at least 3 points");

  const Eigen::Matrix3Xd src = pred.points.template cast<double>();
  const Eigen::Matrix3Xd dst = gt.points.template cast<double>();

  // Collinear (or coincident) sources leave the rotation undefined.
  const Eigen::Matrix3Xd centered =
      src.colwise() - src.rowwise().mean();
  Eigen::JacobiSVD<Eigen::Matrix3Xd> spread(centered);
  const auto& sv = spread.singularValues();
  require(sv(1) > 1e-12 * sv(0), "procrustes_align: points are collinear");

  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, /*with_scaling=*/true);
  SimilarityTransform sim;
  const Eigen::Matrix3d linear = T.topLeftCorner<3, 3>();
  sim.scale = std::cbrt(linear.determinant());
  require(sim.scale > 0, "procrustes_align: degenerate (nonpositive) scale");
  sim.rotation = linear / sim.scale;
  sim.translation = T.topRightCorner<3, 1>();

  AlignmentResult<S> out;
  out.transform = sim;
  out.aligned.pixel = pred.pixel;
  out.aligned.points =
      ((linear * src).colwise() + sim.translation).template cast<S>();
  return out;
}

}  // namespace defsurf
