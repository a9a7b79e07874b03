#pragma once

// Ring collectives with functional data movement and message traces.
//
// Inputs and outputs are indexed canonically: member index k is the k-th
// smallest die id on the ring, so downstream matmuls get a deterministic
// concatenation no matter how the ring rotation visits the dies.  Traffic is
// priced at a configurable element width, independent of the double-precision
// functional payload, so a run can model half-precision wires while computing
// exactly.
//
// Ring all-gather over L members: L-1 rounds; in round r, ring position p
// forwards the block that originated at position (p - r) mod L to position
// (p + 1) mod L.  Ring reduce-scatter: L-1 rounds; in round r, position p
// forwards its running partial of the chunk owned by position (p - r - 1)
// mod L; chunk sums are accumulated in ascending ring-position order so
// results are bit-deterministic run to run.  All-reduce = reduce-scatter +
// all-gather over row chunks, 2(L-1) rounds.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hecaton/tiling.hpp"
#include "hecaton/topology.hpp"
#include "hecaton/trace.hpp"

namespace hecaton {

inline std::int64_t matrix_bytes(const Matrix& m, std::int64_t elem_bytes) {
  return static_cast<std::int64_t>(m.rows()) * m.cols() * elem_bytes;
}

/// canon[p] = canonical member index (rank of die id) of ring position p.
inline std::vector<int> canonical_member_index(const RingPath& ring) {
  std::vector<int> sorted = ring.order;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> canon(ring.order.size());
  for (std::size_t p = 0; p < ring.order.size(); ++p)
    canon[p] = static_cast<int>(
        std::lower_bound(sorted.begin(), sorted.end(), ring.order[p]) - sorted.begin());
  return canon;
}

struct GatherResult {
  std::vector<Matrix> blocks;  // blocks[k] = shard of canonical member k
  CommTrace trace;
};

/// blocks[k] = shard held by canonical member k.  After the gather every
/// member holds all blocks; the returned list is that shared canonical order.
inline GatherResult all_gather(const RingPath& ring, std::vector<Matrix> blocks,
                               std::int64_t elem_bytes) {
  const int L = ring.size();
  if (static_cast<int>(blocks.size()) != L)
    throw std::invalid_argument("all_gather: one block per ring member required");
  const std::vector<int> canon = canonical_member_index(ring);
  GatherResult out;
  for (int r = 0; r < L - 1; ++r) {
    for (int p = 0; p < L; ++p) {
      const int origin_pos = ((p - r) % L + L) % L;
      const std::int64_t bytes = matrix_bytes(blocks[canon[origin_pos]], elem_bytes);
      if (bytes == 0) continue;  // empty ragged shard: nothing on the wire
      CommStep step;
      step.round = r;
      step.src = ring.order[p];
      step.dst = ring.order[(p + 1) % L];
      step.hops = ring.hops[p];
      step.bytes = bytes;
      out.trace.add(step);
    }
  }
  out.blocks = std::move(blocks);
  return out;
}

struct ReduceScatterResult {
  std::vector<Matrix> chunks;  // chunks[k] = reduced chunk of canonical member k
  CommTrace trace;
};

/// contributions[k][c] = canonical member k's partial of chunk c.  Chunk c is
/// summed in ascending ring-position order and lands on canonical member c.
inline ReduceScatterResult reduce_scatter(
    const RingPath& ring, const std::vector<std::vector<Matrix>>& contributions,
    std::int64_t elem_bytes) {
  const int L = ring.size();
  if (static_cast<int>(contributions.size()) != L)
    throw std::invalid_argument("reduce_scatter: one contribution set per ring member");
  for (const auto& per_member : contributions)
    if (static_cast<int>(per_member.size()) != L)
      throw std::invalid_argument("reduce_scatter: one chunk per ring member required");
  for (int c = 0; c < L; ++c)
    for (int k = 1; k < L; ++k)
      if (contributions[k][c].rows() != contributions[0][c].rows() ||
          contributions[k][c].cols() != contributions[0][c].cols())
        throw std::invalid_argument("reduce_scatter: chunk shapes differ across members");

  const std::vector<int> canon = canonical_member_index(ring);
  ReduceScatterResult out;
  out.chunks.resize(L);
  for (int c = 0; c < L; ++c) {
    Matrix sum = Matrix::Zero(contributions[0][c].rows(), contributions[0][c].cols());
    for (int p = 0; p < L; ++p) sum += contributions[canon[p]][c];
    out.chunks[c] = std::move(sum);
  }
  for (int r = 0; r < L - 1; ++r) {
    for (int p = 0; p < L; ++p) {
      const int owner_pos = ((p - r - 1) % L + L) % L;
      const std::int64_t bytes =
          matrix_bytes(contributions[0][canon[owner_pos]], elem_bytes);
      if (bytes == 0) continue;
      CommStep step;
      step.round = r;
      step.src = ring.order[p];
      step.dst = ring.order[(p + 1) % L];
      step.hops = ring.hops[p];
      step.bytes = bytes;
      out.trace.add(step);
    }
  }
  return out;
}

struct AllReduceResult {
  Matrix value;  // full sum, present on every member
  CommTrace trace;
};

/// Reduce-scatter over row chunks followed by an all-gather of the reduced
/// chunks: 2(L-1) rounds, each moving 1/L of the tensor per member.
inline AllReduceResult ring_all_reduce(const RingPath& ring,
                                       const std::vector<Matrix>& contributions,
                                       std::int64_t elem_bytes) {
  const int L = ring.size();
  if (static_cast<int>(contributions.size()) != L)
    throw std::invalid_argument("ring_all_reduce: one contribution per ring member");
  for (int k = 1; k < L; ++k)
    if (contributions[k].rows() != contributions[0].rows() ||
        contributions[k].cols() != contributions[0].cols())
      throw std::invalid_argument("ring_all_reduce: contribution shapes differ");

  const std::int64_t rows = contributions[0].rows();
  const std::int64_t cols = contributions[0].cols();
  std::vector<std::vector<Matrix>> chunked(L);
  for (int k = 0; k < L; ++k) {
    chunked[k].reserve(L);
    for (int c = 0; c < L; ++c) {
      auto r = block_range(rows, L, c);
      chunked[k].push_back(contributions[k].middleRows(r.begin, r.size()));
    }
  }
  auto rs = reduce_scatter(ring, chunked, elem_bytes);
  auto ag = all_gather(ring, std::move(rs.chunks), elem_bytes);

  AllReduceResult out;
  out.value = Matrix::Zero(rows, cols);
  for (int c = 0; c < L; ++c) {
    auto r = block_range(rows, L, c);
    out.value.middleRows(r.begin, r.size()) = ag.blocks[c];
  }
  out.trace = std::move(rs.trace);
  out.trace.append(ag.trace);
  return out;
}

}  // namespace hecaton
