#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sfc/geometry.hpp"
#include "sfc/graph.hpp"
#include "sfc/rng.hpp"

namespace sfc {

// FIFO ring of past target embeddings serving as negatives. The ring starts
// full of random unit vectors, so its length is always `capacity` and the
// contrastive denominator has a fixed size from the first step.
template <typename T>
class NegativeQueueT {
 public:
  NegativeQueueT(int capacity, int dim, uint64_t seed) : capacity_(capacity), dim_(dim) {
    if (capacity < 1 || dim < 1)
      throw ConfigError("negative queue: capacity and dim must be positive");
    Rng rng(stream_seed(seed, kStreamQueue));
    std::normal_distribution<double> nd(0.0, 1.0);
    data_.resize(static_cast<size_t>(capacity) * dim);
    for (int i = 0; i < capacity; ++i) {
      double norm2 = 0.0;
      std::vector<double> v(static_cast<size_t>(dim));
      for (auto& x : v) {
        x = nd(rng);
        norm2 += x * x;
      }
      const double n = std::sqrt(norm2);
      if (n < 1e-9) {
        v.assign(static_cast<size_t>(dim), 0.0);
        v[0] = 1.0;
      }
      for (int d = 0; d < dim; ++d)
        data_[static_cast<size_t>(i) * dim + d] = static_cast<T>(n < 1e-9 ? v[static_cast<size_t>(d)] : v[static_cast<size_t>(d)] / n);
    }
  }

  // Appends embedding rows [n, dim], oldest entries first to be overwritten.
  // Rows are renormalized on entry; a zero row cannot be stored.
  void enqueue_rows(const TensorT<T>& z) {
    if (z.rank() != 2 || z.dim(1) != dim_)
      throw ShapeError("negative queue: expected rows of dim " + std::to_string(dim_) +
                       ", got " + shape_str(z.shape));
    for (int i = 0; i < z.dim(0); ++i) {
      const T* row = z.ptr() + static_cast<size_t>(i) * dim_;
      double norm2 = 0.0;
      for (int d = 0; d < dim_; ++d) norm2 += static_cast<double>(row[d]) * row[d];
      const double n = std::sqrt(norm2);
      if (n < 1e-9)
        throw NumericError("negative queue: refusing to store a zero embedding");
      T* dst = data_.data() + static_cast<size_t>(cursor_) * dim_;
      for (int d = 0; d < dim_; ++d) dst[d] = static_cast<T>(row[d] / n);
      cursor_ = (cursor_ + 1) % capacity_;
    }
  }

  TensorT<T> snapshot() const {
    return TensorT<T>({capacity_, dim_}, data_);
  }

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  // The ring is pre-seeded, so it is always full.
  int size() const { return capacity_; }

 private:
  int capacity_, dim_;
  std::vector<T> data_;
  int cursor_ = 0;
};

using NegativeQueue = NegativeQueueT<float>;

// InfoNCE over unit embeddings: -log( exp(<z1,z2>/tau) /
// (exp(<z1,z2>/tau) + sum_k exp(<z1,q_k>/tau)) ), averaged over the batch.
// z1 and z2 are [N, D] rows of unit norm; z2 and the queue are gradient-free.
template <typename T>
int info_nce(GraphT<T>& g, int z1, int z2, const NegativeQueueT<T>& queue, T tau) {
  if (!(tau > T(0))) throw ConfigError("info_nce: tau must be > 0");
  const auto& s1 = g.value(z1).shape;
  const auto& s2 = g.value(z2).shape;
  if (s1.size() != 2 || s1 != s2)
    throw ShapeError("info_nce: embedding shapes " + shape_str(s1) + " vs " + shape_str(s2));
  if (s1[1] != queue.dim())
    throw ShapeError("info_nce: queue dim " + std::to_string(queue.dim()) +
                     " does not match embeddings " + shape_str(s1));
  const int n = s1[0];
  int negatives = g.constant(queue.snapshot(), "negative_queue");
  int pos = g.dot_rows(z1, z2);                              // [N]
  int neg = g.matmul_nt(z1, negatives);                      // [N, K]
  int logits = g.concat_cols(g.reshape(pos, {n, 1}), neg);   // positive in column 0
  int lse = g.logsumexp_rows(g.scale(logits, T(1) / tau));
  return g.mean_all(g.sub(lse, g.scale(pos, T(1) / tau)));
}

// Negative mean cosine between predictions and targets: -<p1,z2>/(|p1||z2|),
// batch-averaged. Inputs are raw [N, D] head outputs.
template <typename T>
int global_byol_loss(GraphT<T>& g, int p1, int z2) {
  const auto& s1 = g.value(p1).shape;
  const auto& s2 = g.value(z2).shape;
  if (s1.size() != 2 || s1 != s2)
    throw ShapeError("global_byol_loss: shapes " + shape_str(s1) + " vs " + shape_str(s2));
  int c = g.dot_rows(g.l2_normalize(p1, 1), g.l2_normalize(z2, 1));
  return g.scale(g.mean_all(c), T(-1));
}

// Masked dense similarity: -sum(S .* M) / sum(M) over per-cell rows
// p of view 1 (online predictions) and z of view 2 (target projections).
template <typename T>
int dense_local_loss(GraphT<T>& g, int p_rows, int z_rows, const PositiveMask& mask) {
  const auto& sp = g.value(p_rows).shape;
  const auto& sz = g.value(z_rows).shape;
  if (sp.size() != 2 || sz.size() != 2 || sp[1] != sz[1])
    throw ShapeError("dense_local_loss: row shapes " + shape_str(sp) + " vs " + shape_str(sz));
  if (sp[0] != mask.rows || sz[0] != mask.cols)
    throw ShapeError("dense_local_loss: mask " + std::to_string(mask.rows) + "x" +
                     std::to_string(mask.cols) + " does not match rows " + shape_str(sp) +
                     " / " + shape_str(sz));
  const long positives = mask.count();
  if (positives == 0)
    throw EmptyMaskError("dense_local_loss: positive mask is empty");
  TensorT<T> m({mask.rows, mask.cols});
  for (size_t i = 0; i < m.numel(); ++i) m[i] = static_cast<T>(mask.m[i]);
  int s = g.pairwise_cosine(p_rows, z_rows);
  int masked = g.sum_all(g.mul(s, g.constant(std::move(m), "positive_mask")));
  return g.scale(masked, T(-1) / static_cast<T>(positives));
}

// total = local + alpha * global.
template <typename T>
int joint_loss(GraphT<T>& g, int local, int global, T alpha) {
  if (!(alpha >= T(0))) throw ConfigError("joint_loss: alpha must be >= 0");
  return g.add(local, g.scale(global, alpha));
}

// One training-log row.
struct LossReport {
  long step = 0;
  double total = 0.0;
  double local = 0.0;
  double global = 0.0;
  long positives = 0;
  long skipped = 0;
};

inline void check_cosine_loss_bound(double v, const char* what) {
  if (!(v >= -1.0 - 1e-6 && v <= 1.0 + 1e-6))
    throw NumericError(std::string(what) + " loss " + std::to_string(v) + " outside [-1, 1]");
}

inline void check_infonce_bound(double v) {
  if (!(v >= -1e-5))
    throw NumericError("contrastive loss " + std::to_string(v) + " below 0");
}

}  // namespace sfc
