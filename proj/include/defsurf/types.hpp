// types.hpp
// Dense grid types shared by every module: depth maps, normal maps,
// foreground masks, RGB images, point clouds and mesh vertices.
// Grids are H x W Eigen arrays indexed (row, col); 3D points live in the
// camera frame with x right, y down, z away from the camera, in mm.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace defsurf {

using Index = Eigen::Index;

template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Gridf = Grid<float>;
using Gridd = Grid<double>;

// 1 = foreground, 0 = background.
using MaskGrid = Grid<std::uint8_t>;

template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

inline Index mask_count(const MaskGrid& mask) {
  Index n = 0;
  for (Index c = 0; c < mask.cols(); ++c)
    for (Index r = 0; r < mask.rows(); ++r)
      if (mask(r, c)) ++n;
  return n;
}

inline MaskGrid full_mask(Index rows, Index cols) {
  return MaskGrid::Constant(rows, cols, std::uint8_t{1});
}

// Per-pixel unit (or near-unit) normal vectors stored as three planes.
template <typename Scalar>
struct NormalGrid {
  Grid<Scalar> x, y, z;

  NormalGrid() = default;
  NormalGrid(Index rows, Index cols)
      : x(Grid<Scalar>::Zero(rows, cols)),
        y(Grid<Scalar>::Zero(rows, cols)),
        z(Grid<Scalar>::Zero(rows, cols)) {}

  Index rows() const { return x.rows(); }
  Index cols() const { return x.cols(); }

  Eigen::Matrix<Scalar, 3, 1> at(Index r, Index c) const {
    return {x(r, c), y(r, c), z(r, c)};
  }
  void set(Index r, Index c, const Eigen::Matrix<Scalar, 3, 1>& n) {
    x(r, c) = n(0);
    y(r, c) = n(1);
    z(r, c) = n(2);
  }

  template <typename Other>
  NormalGrid<Other> cast() const {
    NormalGrid<Other> out;
    out.x = x.template cast<Other>();
    out.y = y.template cast<Other>();
    out.z = z.template cast<Other>();
    return out;
  }
};

using NormalGridf = NormalGrid<float>;
using NormalGridd = NormalGrid<double>;

// Planar RGB image, channels in [0, 1].
template <typename Scalar>
struct Rgb {
  Grid<Scalar> r, g, b;

  Rgb() = default;
  Rgb(Index rows, Index cols)
      : r(Grid<Scalar>::Zero(rows, cols)),
        g(Grid<Scalar>::Zero(rows, cols)),
        b(Grid<Scalar>::Zero(rows, cols)) {}

  Index rows() const { return r.rows(); }
  Index cols() const { return r.cols(); }

  template <typename Other>
  Rgb<Other> cast() const {
    Rgb<Other> out;
    out.r = r.template cast<Other>();
    out.g = g.template cast<Other>();
    out.b = b.template cast<Other>();
    return out;
  }
};

using Rgbf = Rgb<float>;

// Pinhole camera. Pixel (u, v) = (col, row) with depth d backprojects to
// ((u - cx) d / fx, (v - cy) d / fy, d).
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Index width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 &&
           cx < static_cast<double>(width) && cy >= 0 &&
           cy < static_cast<double>(height);
  }
  void require_valid() const {
    if (!valid()) throw std::invalid_argument("invalid camera intrinsics");
  }
};

// One 3D point per masked pixel; `pixel[i]` is the flat index r * W + c of
// the pixel that produced column i of `points`.
template <typename Scalar>
struct PointCloud {
  Points3<Scalar> points;
  std::vector<Index> pixel;

  Index size() const { return points.cols(); }

  template <typename Other>
  PointCloud<Other> cast() const {
    PointCloud<Other> out;
    out.points = points.template cast<Other>();
    out.pixel = pixel;
    return out;
  }
};

// Mesh vertex coordinates, one column per vertex, camera frame, mm.
template <typename Scalar>
struct MeshVertices {
  Points3<Scalar> coords;

  MeshVertices() = default;
  explicit MeshVertices(Points3<Scalar> c) : coords(std::move(c)) {}

  Index count() const { return coords.cols(); }

  template <typename Other>
  MeshVertices<Other> cast() const {
    return MeshVertices<Other>(coords.template cast<Other>());
  }
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace defsurf
