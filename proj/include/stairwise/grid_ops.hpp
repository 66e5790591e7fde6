#pragma once

#include "stairwise/types.hpp"

#include <utility>

namespace stairwise {

/// Pads `grid` by one cell on every side, replicating the border values.
template <typename Derived>
GridT<typename Derived::Scalar> replicate_pad(const Eigen::ArrayBase<Derived>& grid) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index rows = grid.rows();
  const Eigen::Index cols = grid.cols();
  GridT<Scalar> padded(rows + 2, cols + 2);
  padded.block(1, 1, rows, cols) = grid;
  padded.block(0, 1, 1, cols) = grid.row(0);
  padded.block(rows + 1, 1, 1, cols) = grid.row(rows - 1);
  padded.col(0) = padded.col(1);
  padded.col(cols + 1) = padded.col(cols);
  return padded;
}

/// 3x3 Sobel derivatives of a height grid.
///
/// Returns (d/drow, d/dcol). The [1 2 1] smoothing is normalised to unit sum
/// and the [-1 0 1] difference is divided by the cell size, so a step of
/// height h reads h / resolution next to the step line and a plane of slope k
/// reads 2k. Borders use edge replication. NaN cells poison the 3x3
/// neighbourhoods that touch them.
template <typename Derived>
std::pair<GridT<typename Derived::Scalar>, GridT<typename Derived::Scalar>> sobel(
    const Eigen::ArrayBase<Derived>& grid, typename Derived::Scalar resolution) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index rows = grid.rows();
  const Eigen::Index cols = grid.cols();
  if (rows < 3 || cols < 3) {
    throw ValidationError("sobel requires a grid of at least 3x3 cells");
  }
  const GridT<Scalar> p = replicate_pad(grid);
  const Scalar norm = Scalar(4) * resolution;

  auto at = [&](Eigen::Index dr, Eigen::Index dc) {
    return p.block(1 + dr, 1 + dc, rows, cols);
  };

  GridT<Scalar> d_row =
      ((at(1, -1) + Scalar(2) * at(1, 0) + at(1, 1)) -
       (at(-1, -1) + Scalar(2) * at(-1, 0) + at(-1, 1))) / norm;
  GridT<Scalar> d_col =
      ((at(-1, 1) + Scalar(2) * at(0, 1) + at(1, 1)) -
       (at(-1, -1) + Scalar(2) * at(0, -1) + at(1, -1))) / norm;
  return {std::move(d_row), std::move(d_col)};
}

/// L2 magnitude of the Sobel gradient.
template <typename Derived>
GridT<typename Derived::Scalar> sobel_magnitude(const Eigen::ArrayBase<Derived>& grid,
                                                typename Derived::Scalar resolution) {
  const auto [d_row, d_col] = sobel(grid, resolution);
  return (d_row.square() + d_col.square()).sqrt();
}

}  // namespace stairwise
