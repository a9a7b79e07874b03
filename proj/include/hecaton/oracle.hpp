#pragma once

// Dense single-device reference implementations: linear, FFN, and multi-head
// attention blocks (forward and backward), a full training step, a central
// finite-difference probe, and an event-driven simulator for the two-resource
// (compute / DRAM) pipeline.  Everything here is straightforward dense Eigen
// math with no sharding, used as the ground truth the distributed engine is
// checked against.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hecaton/math.hpp"
#include "hecaton/tiling.hpp"

namespace hecaton::oracle {

// Elementwise pieces are shared with the distributed engine (math.hpp) so
// the two can only differ through data movement, never through the scalar
// functions themselves.
using hecaton::default_softmax_scale;
using hecaton::gelu;
using hecaton::gelu_grad;
using hecaton::gelu_grad_scalar;
using hecaton::gelu_scalar;
using hecaton::softmax_rows;

// ---------------------------------------------------------------------------
// Linear layer:  y = x * w
// ---------------------------------------------------------------------------

inline Matrix linear_fwd(const Matrix& x, const Matrix& w) { return x * w; }

struct LinearGrads {
  Matrix dx;
  Matrix dw;
};

inline LinearGrads linear_bwd(const Matrix& dy, const Matrix& x, const Matrix& w) {
  return {dy * w.transpose(), x.transpose() * dy};
}

// ---------------------------------------------------------------------------
// FFN block:  y = gelu(x * w1) * w2 + x
// ---------------------------------------------------------------------------

struct FfnSaved {
  Matrix x;     // block input
  Matrix zhat;  // pre-activation x * w1
};

inline Matrix ffn_fwd(const Matrix& x, const Matrix& w1, const Matrix& w2,
                      FfnSaved* saved = nullptr) {
  Matrix zhat = x * w1;
  Matrix y = gelu(zhat) * w2 + x;
  if (saved) {
    saved->x = x;
    saved->zhat = std::move(zhat);
  }
  return y;
}

struct FfnGrads {
  Matrix dx;
  Matrix dw1;
  Matrix dw2;
};

inline FfnGrads ffn_bwd(const Matrix& dy, const FfnSaved& saved, const Matrix& w1,
                        const Matrix& w2) {
  const Matrix z = gelu(saved.zhat);
  FfnGrads g;
  g.dw2 = z.transpose() * dy;
  const Matrix dz = dy * w2.transpose();
  const Matrix dzhat = dz.cwiseProduct(gelu_grad(saved.zhat));
  g.dw1 = saved.x.transpose() * dzhat;
  g.dx = dzhat * w1.transpose() + dy;  // + dy: residual path
  return g;
}

// ---------------------------------------------------------------------------
// Multi-head attention block:
//   q,k,v = x*wq, x*wk, x*wv   (x is samples*s x h, scores stay per sample)
//   per sample and head: a = softmax(q k^T * scale) v
//   y = concat(a) * wo + x
// ---------------------------------------------------------------------------

struct AttenWeights {
  Matrix wq, wk, wv, wo;  // each h x h
};

struct AttenSaved {
  Matrix x;        // block input
  Matrix q, k, v;  // projections
  Matrix a;        // concatenated head outputs
};

inline void check_attention_shape(const Matrix& x, std::int64_t heads,
                                  std::int64_t samples) {
  if (heads < 1 || samples < 1) throw std::invalid_argument("attention: bad heads/samples");
  if (x.cols() % heads != 0)
    throw std::invalid_argument("attention: hidden width not divisible by heads");
  if (x.rows() % samples != 0)
    throw std::invalid_argument("attention: token rows not divisible by samples");
}

inline Matrix attention_fwd(const Matrix& x, const AttenWeights& w, std::int64_t heads,
                            std::int64_t samples, double scale,
                            AttenSaved* saved = nullptr) {
  check_attention_shape(x, heads, samples);
  const Eigen::Index h = x.cols();
  const Eigen::Index d = h / heads;
  const Eigen::Index s = x.rows() / samples;
  Matrix q = x * w.wq, k = x * w.wk, v = x * w.wv;
  Matrix a(x.rows(), h);
  for (std::int64_t b = 0; b < samples; ++b) {
    for (std::int64_t t = 0; t < heads; ++t) {
      const auto qb = q.block(b * s, t * d, s, d);
      const auto kb = k.block(b * s, t * d, s, d);
      const auto vb = v.block(b * s, t * d, s, d);
      const Matrix p = softmax_rows(qb * kb.transpose() * scale);
      a.block(b * s, t * d, s, d) = p * vb;
    }
  }
  Matrix y = a * w.wo + x;
  if (saved) {
    saved->x = x;
    saved->q = std::move(q);
    saved->k = std::move(k);
    saved->v = std::move(v);
    saved->a = std::move(a);
  }
  return y;
}

struct AttenGrads {
  Matrix dx;
  AttenWeights dw;
};

inline AttenGrads attention_bwd(const Matrix& dy, const AttenSaved& saved,
                                const AttenWeights& w, std::int64_t heads,
                                std::int64_t samples, double scale) {
  check_attention_shape(saved.x, heads, samples);
  const Eigen::Index h = saved.x.cols();
  const Eigen::Index d = h / heads;
  const Eigen::Index s = saved.x.rows() / samples;
  AttenGrads g;
  g.dw.wo = saved.a.transpose() * dy;
  const Matrix da = dy * w.wo.transpose();
  Matrix dq(saved.q.rows(), h), dk(saved.q.rows(), h), dv(saved.q.rows(), h);
  for (std::int64_t b = 0; b < samples; ++b) {
    for (std::int64_t t = 0; t < heads; ++t) {
      const auto qb = saved.q.block(b * s, t * d, s, d);
      const auto kb = saved.k.block(b * s, t * d, s, d);
      const auto vb = saved.v.block(b * s, t * d, s, d);
      const auto dab = da.block(b * s, t * d, s, d);
      const Matrix p = softmax_rows(qb * kb.transpose() * scale);
      const Matrix dp = dab * vb.transpose();
      dv.block(b * s, t * d, s, d) = p.transpose() * dab;
      // Softmax backward: ds = p .* (dp - rowsum(dp .* p))
      const Eigen::VectorXd rowsum = dp.cwiseProduct(p).rowwise().sum();
      Matrix shifted = dp;
      shifted.colwise() -= rowsum;
      const Matrix ds = p.cwiseProduct(shifted) * scale;
      dq.block(b * s, t * d, s, d) = ds * kb;
      dk.block(b * s, t * d, s, d) = ds.transpose() * qb;
    }
  }
  g.dw.wq = saved.x.transpose() * dq;
  g.dw.wk = saved.x.transpose() * dk;
  g.dw.wv = saved.x.transpose() * dv;
  g.dx = dq * w.wq.transpose() + dk * w.wk.transpose() + dv * w.wv.transpose() + dy;
  return g;
}

// ---------------------------------------------------------------------------
// Transformer block and training step
// ---------------------------------------------------------------------------

struct BlockWeights {
  AttenWeights atten;
  Matrix w1, w2;  // FFN up (h x e*h), down (e*h x h)
};

struct BlockSaved {
  AttenSaved atten;
  FfnSaved ffn;
};

inline Matrix block_fwd(const Matrix& x, const BlockWeights& w, std::int64_t heads,
                        std::int64_t samples, double scale, BlockSaved* saved = nullptr) {
  AttenSaved as;
  const Matrix o = attention_fwd(x, w.atten, heads, samples, scale, &as);
  FfnSaved fs;
  Matrix y = ffn_fwd(o, w.w1, w.w2, &fs);
  if (saved) {
    saved->atten = std::move(as);
    saved->ffn = std::move(fs);
  }
  return y;
}

struct BlockGrads {
  Matrix dx;
  BlockWeights dw;
};

inline BlockGrads block_bwd(const Matrix& dy, const BlockSaved& saved,
                            const BlockWeights& w, std::int64_t heads,
                            std::int64_t samples, double scale) {
  const FfnGrads fg = ffn_bwd(dy, saved.ffn, w.w1, w.w2);
  const AttenGrads ag = attention_bwd(fg.dx, saved.atten, w.atten, heads, samples, scale);
  BlockGrads g;
  g.dx = ag.dx;
  g.dw.atten = ag.dw;
  g.dw.w1 = fg.dw1;
  g.dw.w2 = fg.dw2;
  return g;
}

/// Squared-error training loss:  L = 0.5 * ||y - target||^2.
inline double loss_value(const Matrix& y, const Matrix& target) {
  return 0.5 * (y - target).squaredNorm();
}

inline Matrix loss_grad(const Matrix& y, const Matrix& target) { return y - target; }

/// One SGD iteration over a stack of blocks; returns the loss before the
/// update and modifies the weights in place.
inline double train_step(std::vector<BlockWeights>& blocks, const Matrix& x,
                         const Matrix& target, std::int64_t heads, std::int64_t samples,
                         double scale, double lr) {
  std::vector<BlockSaved> saved(blocks.size());
  Matrix y = x;
  for (std::size_t l = 0; l < blocks.size(); ++l)
    y = block_fwd(y, blocks[l], heads, samples, scale, &saved[l]);
  const double loss = loss_value(y, target);
  Matrix dy = loss_grad(y, target);
  std::vector<BlockGrads> grads(blocks.size());
  for (std::size_t l = blocks.size(); l-- > 0;) {
    grads[l] = block_bwd(dy, saved[l], blocks[l], heads, samples, scale);
    dy = grads[l].dx;
  }
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    BlockWeights& w = blocks[l];
    const BlockWeights& g = grads[l].dw;
    w.atten.wq -= lr * g.atten.wq;
    w.atten.wk -= lr * g.atten.wk;
    w.atten.wv -= lr * g.atten.wv;
    w.atten.wo -= lr * g.atten.wo;
    w.w1 -= lr * g.w1;
    w.w2 -= lr * g.w2;
  }
  return loss;
}

inline BlockWeights zeros_like(const BlockWeights& w) {
  BlockWeights z;
  z.atten.wq = Matrix::Zero(w.atten.wq.rows(), w.atten.wq.cols());
  z.atten.wk = Matrix::Zero(w.atten.wk.rows(), w.atten.wk.cols());
  z.atten.wv = Matrix::Zero(w.atten.wv.rows(), w.atten.wv.cols());
  z.atten.wo = Matrix::Zero(w.atten.wo.rows(), w.atten.wo.cols());
  z.w1 = Matrix::Zero(w.w1.rows(), w.w1.cols());
  z.w2 = Matrix::Zero(w.w2.rows(), w.w2.cols());
  return z;
}

inline void accumulate(BlockWeights& acc, const BlockWeights& g) {
  acc.atten.wq += g.atten.wq;
  acc.atten.wk += g.atten.wk;
  acc.atten.wv += g.atten.wv;
  acc.atten.wo += g.atten.wo;
  acc.w1 += g.w1;
  acc.w2 += g.w2;
}

/// Gradient-accumulation iteration: forward over every minibatch, then
/// backward over them in reverse order summing weight gradients, and a single
/// SGD update at the end.  Returns the summed loss before the update.
inline double train_iteration(std::vector<BlockWeights>& blocks,
                              const std::vector<Matrix>& xs,
                              const std::vector<Matrix>& targets, std::int64_t heads,
                              std::int64_t samples, double scale, double lr) {
  if (xs.empty() || xs.size() != targets.size())
    throw std::invalid_argument("train_iteration: minibatch lists must match");
  const std::size_t num_layers = blocks.size();
  const std::size_t num_mb = xs.size();
  std::vector<std::vector<BlockSaved>> saved(num_mb, std::vector<BlockSaved>(num_layers));
  std::vector<Matrix> ys(num_mb);
  double loss = 0.0;
  for (std::size_t m = 0; m < num_mb; ++m) {
    Matrix y = xs[m];
    for (std::size_t l = 0; l < num_layers; ++l)
      y = block_fwd(y, blocks[l], heads, samples, scale, &saved[m][l]);
    loss += loss_value(y, targets[m]);
    ys[m] = std::move(y);
  }
  std::vector<BlockWeights> acc(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) acc[l] = zeros_like(blocks[l]);
  for (std::size_t m = num_mb; m-- > 0;) {
    Matrix dy = loss_grad(ys[m], targets[m]);
    for (std::size_t l = num_layers; l-- > 0;) {
      BlockGrads g = block_bwd(dy, saved[m][l], blocks[l], heads, samples, scale);
      dy = std::move(g.dx);
      accumulate(acc[l], g.dw);
    }
  }
  for (std::size_t l = 0; l < num_layers; ++l) {
    BlockWeights& w = blocks[l];
    const BlockWeights& g = acc[l];
    w.atten.wq -= lr * g.atten.wq;
    w.atten.wk -= lr * g.atten.wk;
    w.atten.wv -= lr * g.atten.wv;
    w.atten.wo -= lr * g.atten.wo;
    w.w1 -= lr * g.w1;
    w.w2 -= lr * g.w2;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central difference d loss / d param[i][j] for any scalar-valued callable
/// that depends on `param` by reference.
template <typename F>
double central_difference(F&& loss_of, Matrix& param, Eigen::Index i, Eigen::Index j,
                          double step) {
  const double keep = param(i, j);
  param(i, j) = keep + step;
  const double up = loss_of();
  param(i, j) = keep - step;
  const double down = loss_of();
  param(i, j) = keep;
  return (up - down) / (2.0 * step);
}

// ---------------------------------------------------------------------------
// Two-resource pipeline simulator
// ---------------------------------------------------------------------------

struct PipeUnit {
  double on_s = 0.0;   // on-package work (compute + NoP)
  double off_s = 0.0;  // off-package work (DRAM), prefetched before on_s
};

/// Event-driven simulation of the two-stage pipeline: both resources process
/// units in order; unit k's on-package work waits for its own off-package
/// slot and for unit k-1's on-package work.  Returns the makespan.
inline double simulate_pipeline(const std::vector<PipeUnit>& units) {
  double off_free = 0.0;  // when the DRAM resource becomes free
  double on_free = 0.0;   // when the compute resource becomes free
  for (const PipeUnit& u : units) {
    off_free += u.off_s;
    on_free = std::max(on_free, off_free) + u.on_s;
  }
  return std::max(on_free, off_free);
}

}  // namespace hecaton::oracle
