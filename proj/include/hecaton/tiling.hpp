#pragma once

// 2D tiling of dense matrices across a die grid.
//
// A TileMap assigns each die one rectangular block of a matrix.  Two
// orientations occur in practice:
//   Normal:     die (i, j) holds block (i, j) -- rows split `rows()` ways,
//               columns split `cols()` ways.
//   Transposed: die (i, j) holds block (j, i) -- rows split `cols()` ways,
//               columns split `rows()` ways.
// A layer whose input is Normal emits its output Transposed and vice versa,
// so two back-to-back layers restore the original assignment and a residual
// can be added without moving data.
//
// Block boundaries come from balanced division: splitting n into p parts,
// the first (n mod p) blocks get one extra element, so sizes differ by at
// most one (blocks are empty only when p > n).

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hecaton/topology.hpp"

namespace hecaton {

using Matrix = Eigen::MatrixXd;

enum class Orientation { Normal, Transposed };

/// Half-open index range [begin, end).
struct IndexRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t size() const { return end - begin; }
};

/// Range of block `k` when n is split into p balanced parts: the first
/// (n mod p) blocks hold one element more than the rest.
inline IndexRange block_range(std::int64_t n, int parts, int k) {
  if (parts < 1) throw std::invalid_argument("block_range: parts must be >= 1");
  if (k < 0 || k >= parts) throw std::out_of_range("block_range: block index out of range");
  const std::int64_t q = n / parts;
  const std::int64_t rem = n % parts;
  IndexRange r;
  r.begin = static_cast<std::int64_t>(k) * q + std::min<std::int64_t>(k, rem);
  r.end = r.begin + q + (k < rem ? 1 : 0);
  return r;
}

/// Block assignment of one dense matrix to an R x C die grid.
struct TileMap {
  std::int64_t mat_rows = 0;
  std::int64_t mat_cols = 0;
  int grid_rows = 1;
  int grid_cols = 1;
  Orientation orient = Orientation::Normal;

  /// Number of partitions along the matrix's row / column dimension.
  int row_parts() const { return orient == Orientation::Normal ? grid_rows : grid_cols; }
  int col_parts() const { return orient == Orientation::Normal ? grid_cols : grid_rows; }

  /// Block indices held by die (r, c).
  std::pair<int, int> block_of_die(int die_row, int die_col) const {
    if (orient == Orientation::Normal) return {die_row, die_col};
    return {die_col, die_row};
  }
};

inline TileMap make_map(std::int64_t rows, std::int64_t cols, const DieGrid& grid,
                        Orientation orient = Orientation::Normal) {
  return TileMap{rows, cols, grid.rows(), grid.cols(), orient};
}

/// Same matrix, flipped orientation: the map a layer's output obeys when its
/// input obeyed `m` (and vice versa).
inline TileMap transpose_map(const TileMap& m) {
  TileMap t = m;
  t.orient = m.orient == Orientation::Normal ? Orientation::Transposed : Orientation::Normal;
  return t;
}

/// Row/column ranges of the block held by die (die_row, die_col).
inline std::pair<IndexRange, IndexRange> tile_of(const TileMap& m, int die_row, int die_col) {
  auto [br, bc] = m.block_of_die(die_row, die_col);
  return {block_range(m.mat_rows, m.row_parts(), br),
          block_range(m.mat_cols, m.col_parts(), bc)};
}

/// Split a dense matrix into per-die tiles (indexed by row-major die id).
inline std::vector<Matrix> shard(const Matrix& dense, const TileMap& m) {
  if (dense.rows() != m.mat_rows || dense.cols() != m.mat_cols)
    throw std::invalid_argument("shard: matrix shape does not match map");
  std::vector<Matrix> tiles;
  tiles.reserve(static_cast<std::size_t>(m.grid_rows) * m.grid_cols);
  for (int r = 0; r < m.grid_rows; ++r) {
    for (int c = 0; c < m.grid_cols; ++c) {
      auto [rr, cr] = tile_of(m, r, c);
      tiles.push_back(dense.block(rr.begin, cr.begin, rr.size(), cr.size()));
    }
  }
  return tiles;
}

/// Reassemble per-die tiles into the dense matrix (inverse of shard).
inline Matrix assemble(const std::vector<Matrix>& tiles, const TileMap& m) {
  if (tiles.size() != static_cast<std::size_t>(m.grid_rows) * m.grid_cols)
    throw std::invalid_argument("assemble: tile count does not match grid");
  Matrix dense = Matrix::Zero(m.mat_rows, m.mat_cols);
  for (int r = 0; r < m.grid_rows; ++r) {
    for (int c = 0; c < m.grid_cols; ++c) {
      auto [rr, cr] = tile_of(m, r, c);
      const Matrix& t = tiles[static_cast<std::size_t>(r) * m.grid_cols + c];
      if (t.rows() != rr.size() || t.cols() != cr.size())
        throw std::invalid_argument("assemble: tile shape mismatch at die (" +
                                    std::to_string(r) + "," + std::to_string(c) + ")");
      dense.block(rr.begin, cr.begin, rr.size(), cr.size()) = t;
    }
  }
  return dense;
}

}  // namespace hecaton
