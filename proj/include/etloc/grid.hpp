#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <string>

#include "etloc/error.hpp"
#include "etloc/ingest.hpp"
#include "etloc/types.hpp"

namespace etloc {

inline constexpr int kDefaultGridSize = 32;
inline constexpr double kDefaultEtThreshold = 0.15;

// Bucket of pixel coordinate `p` along an axis of length `extent` split into
// `n` cells: floor(p * n / extent).
constexpr Eigen::Index bucket_of(Eigen::Index p, Eigen::Index n, Eigen::Index extent) {
  return p * n / extent;
}

// Max over each cell's pixel bucket. Throws GridLargerThanImage.
template <typename Derived>
Map2<typename Derived::Scalar> maxpool_to_grid(const Eigen::ArrayBase<Derived>& map,
                                               Eigen::Index n);

// value > threshold, strictly.
template <typename Derived>
BinaryMask binarize(const Eigen::ArrayBase<Derived>& map, double threshold) {
  return (map.derived() > threshold).eval();
}

// Nearest-neighbor upscale of an n x n grid to width x height; pixel (x, y)
// takes cell (bucket_of(y), bucket_of(x)).
template <typename Derived>
Map2<typename Derived::Scalar> upscale_nearest(const Eigen::ArrayBase<Derived>& grid,
                                               Eigen::Index width, Eigen::Index height);

// Pixel (x, y) sits at coordinate (x, y), as in heatmap rendering; a pixel
// is inside when its coordinate is. Throws EmptyRaster when none is.
BinaryMask rasterize_ellipse(const EllipseAnnotation& ellipse, int width, int height);

// OR of the ellipses carrying `label`; an empty mask when there are none.
BinaryMask label_mask(std::span<const EllipseAnnotation> ellipses, LabelId label, int width,
                      int height);

// ------------------------------------------------------------------------

template <typename Derived>
Map2<typename Derived::Scalar> maxpool_to_grid(const Eigen::ArrayBase<Derived>& map,
                                               Eigen::Index n) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index rows = map.rows(), cols = map.cols();
  if (n <= 0 || rows < n || cols < n)
    throw GridLargerThanImage("grid of " + std::to_string(n) + " cells does not fit a " +
                              std::to_string(cols) + "x" + std::to_string(rows) + " map");
  Map2<Scalar> grid(n, n);
  grid.setConstant(std::numeric_limits<Scalar>::lowest());
  for (Eigen::Index y = 0; y < rows; ++y) {
    const Eigen::Index gy = bucket_of(y, n, rows);
    for (Eigen::Index x = 0; x < cols; ++x) {
      Scalar& cell = grid(gy, bucket_of(x, n, cols));
      cell = std::max(cell, map(y, x));
    }
  }
  return grid;
}

template <typename Derived>
Map2<typename Derived::Scalar> upscale_nearest(const Eigen::ArrayBase<Derived>& grid,
                                               Eigen::Index width, Eigen::Index height) {
  const Eigen::Index n = grid.rows();
  if (grid.cols() != n) throw DimensionMismatch("grid must be square");
  if (width < n || height < n) throw GridLargerThanImage("output smaller than grid");
  Map2<typename Derived::Scalar> out(height, width);
  for (Eigen::Index y = 0; y < height; ++y) {
    const Eigen::Index gy = bucket_of(y, n, height);
    for (Eigen::Index x = 0; x < width; ++x) out(y, x) = grid(gy, bucket_of(x, n, width));
  }
  return out;
}

}  // namespace etloc
