// losses.hpp
// Differentiable training objectives: vertex MSE, masked mean-absolute
// depth, masked angular + unit-length normal loss, and weighted joint
// combinations. Every loss returns its scalar value together with the
// gradient with respect to the prediction. Per-pixel math runs in double
// regardless of the storage scalar.

#pragma once

#include <cmath>
#include <vector>

#include "defsurf/types.hpp"

namespace defsurf {

struct LossConfig {
  double kappa = 10.0;    // weight of the angular term
  double epsilon = 1e-8;  // stabilizer inside the cosine ratio
  double alpha = 1.0, beta = 1.0, gamma = 1.0;  // joint mixing weights

  void validate() const {
    require(kappa > 0, "LossConfig: kappa must be positive");
    require(epsilon > 0 && epsilon <= 1e-6,
            "LossConfig: epsilon must be in (0, 1e-6]");
    require(alpha >= 0 && beta >= 0 && gamma >= 0,
            "LossConfig: mixing weights must be nonnegative");
    require(alpha + beta + gamma > 0,
            "LossConfig: mixing weights must not all be zero");
  }
};

// ---------------------------------------------------------------------------
// Vertex MSE

template <typename S>
struct VertexLossResult {
  double value = 0;
  std::vector<Points3<S>> grad;  // d value / d pred, per sample
};

// (1/N) sum_n (1/V) sum_i ||v_i - v^_i||^2
template <typename S>
VertexLossResult<S> loss_vertices(const std::vector<MeshVertices<S>>& gt,
                                  const std::vector<MeshVertices<S>>& pred) {
  require(!gt.empty() && gt.size() == pred.size(),
          "loss_vertices: batch size mismatch");
  const double n = static_cast<double>(gt.size());
  VertexLossResult<S> out;
  out.grad.reserve(gt.size());
  for (std::size_t s = 0; s < gt.size(); ++s) {
    require(gt[s].count() == pred[s].count() && gt[s].count() > 0,
            "loss_vertices: vertex count mismatch");
    const double v = static_cast<double>(gt[s].count());
    const Eigen::Matrix3Xd diff = pred[s].coords.template cast<double>() -
                                  gt[s].coords.template cast<double>();
    out.value += diff.squaredNorm() / v / n;
    out.grad.push_back((2.0 / (n * v) * diff).template cast<S>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masked mean-absolute depth

template <typename S>
struct DepthLossResult {
  double value = 0;
  std::vector<Grid<S>> grad;
};

// (1/N) sum_n [ sum_i |D_i - D^_i| B_i / sum_i B_i ]; subgradient 0 at ties.
// Background prediction values never enter the value or the gradient.
template <typename S>
DepthLossResult<S> loss_depth(const std::vector<Grid<S>>& gt,
                              const std::vector<Grid<S>>& pred,
                              const std::vector<MaskGrid>& masks) {
  require(!gt.empty() && gt.size() == pred.size() && gt.size() == masks.size(),
          "loss_depth: batch size mismatch");
  const double n = static_cast<double>(gt.size());
  DepthLossResult<S> out;
  out.grad.reserve(gt.size());
  for (std::size_t s = 0; s < gt.size(); ++s) {
    const auto& mask = masks[s];
    require(gt[s].rows() == mask.rows() && gt[s].cols() == mask.cols() &&
                pred[s].rows() == mask.rows() && pred[s].cols() == mask.cols(),
            "loss_depth: size mismatch");
    const Index area = mask_count(mask);
    require(area > 0, "loss_depth: empty mask in batch");
    Grid<S> g = Grid<S>::Zero(mask.rows(), mask.cols());
    double acc = 0;
    for (Index c = 0; c < mask.cols(); ++c)
      for (Index r = 0; r < mask.rows(); ++r) {
        if (!mask(r, c)) continue;
        const double d = static_cast<double>(pred[s](r, c)) -
                         static_cast<double>(gt[s](r, c));
        acc += std::abs(d);
        const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        g(r, c) = static_cast<S>(sign / (static_cast<double>(area) * n));
      }
    out.value += acc / static_cast<double>(area) / n;
    out.grad.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masked angular + length normal loss

template <typename S>
struct NormalLossResult {
  double value = 0;
  std::vector<NormalGrid<S>> grad;
  double angular_value = 0;  // kappa-weighted angular part, for diagnostics
  double length_value = 0;
};

// Per masked pixel, with N the ground-truth and P the predicted normal:
//   L_a = arccos( N.P / (|N||P| + eps) ) / pi
//   L_l = (|P| - 1)^2
// summed as kappa L_a + L_l, mask-normalized per sample, averaged over the
// batch. Predictions are deliberately not renormalized: the eps-stabilized
// ratio handles |P| = 0 with a finite value, and L_l owns the length
// gradient pathway.
template <typename S>
NormalLossResult<S> loss_normals(const std::vector<NormalGrid<S>>& gt,
                                 const std::vector<NormalGrid<S>>& pred,
                                 const std::vector<MaskGrid>& masks,
                                 const LossConfig& config) {
  config.validate();
  require(!gt.empty() && gt.size() == pred.size() && gt.size() == masks.size(),
          "loss_normals: batch size mismatch");
  const double n = static_cast<double>(gt.size());
  const double eps = config.epsilon;
  const double kappa = config.kappa;

  NormalLossResult<S> out;
  out.grad.reserve(gt.size());
  for (std::size_t s = 0; s < gt.size(); ++s) {
    const auto& mask = masks[s];
    require(gt[s].rows() == mask.rows() && gt[s].cols() == mask.cols() &&
                pred[s].rows() == mask.rows() && pred[s].cols() == mask.cols(),
            "loss_normals: size mismatch");
    const Index area = mask_count(mask);
    require(area > 0, "loss_normals: empty mask in batch");
    const double norm = 1.0 / (static_cast<double>(area) * n);

    NormalGrid<S> g(mask.rows(), mask.cols());
    for (Index c = 0; c < mask.cols(); ++c) {
      for (Index r = 0; r < mask.rows(); ++r) {
        if (!mask(r, c)) continue;
        const Eigen::Vector3d N = gt[s].at(r, c).template cast<double>();
        const Eigen::Vector3d P = pred[s].at(r, c).template cast<double>();
        const double a = N.norm();
        const double b = P.norm();
        const double denom = a * b + eps;
        const double u = N.dot(P);
        const double q = std::clamp(u / denom, -1.0, 1.0);

        out.angular_value += kappa * std::acos(q) / M_PI * norm;
        out.length_value += (b - 1.0) * (b - 1.0) * norm;

        // d(arccos(q))/dq = -1 / sqrt(1 - q^2); eps keeps q strictly inside
        // +-1 whenever the prediction is nonzero.
        const double root = std::sqrt(std::max(1.0 - q * q, 1e-300));
        Eigen::Vector3d dq;
        if (b > 1e-150) {
          dq = N / denom - (u * a / b) * P / (denom * denom);
        } else {
          dq = N / denom;  // limit of the expression as |P| -> 0
        }
        Eigen::Vector3d grad = (-kappa / (M_PI * root)) * dq;
        if (b > 1e-150) grad += 2.0 * (b - 1.0) * P / b;  // subgradient 0 at P = 0
        g.set(r, c, (grad * norm).template cast<S>());
      }
    }
    out.grad.push_back(std::move(g));
  }
  out.value = out.angular_value + out.length_value;
  return out;
}

// ---------------------------------------------------------------------------
// Weighted joint combination

// Weighted sum of already-evaluated loss components; the gradient of the
// joint loss with respect to each head's prediction is the component
// gradient scaled by its weight.
inline double joint_loss_value(const std::vector<double>& components,
                               const std::vector<double>& weights) {
  require(components.size() >= 2, "joint loss needs at least 2 components");
  require(components.size() == weights.size(),
          "joint loss: weight count mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < components.size(); ++i)
    acc += weights[i] * components[i];
  return acc;
}

}  // namespace defsurf
