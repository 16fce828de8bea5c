#pragma once

#include <vector>

#include "sfc/encoder.hpp"
#include "sfc/objectives.hpp"

namespace sfc {

namespace detail {

inline PositiveMask transposed(const PositiveMask& m) {
  PositiveMask t;
  t.rows = m.cols;
  t.cols = m.rows;
  t.r = m.r;
  t.m.assign(m.m.size(), 0);
  for (int a = 0; a < m.rows; ++a)
    for (int b = 0; b < m.cols; ++b)
      t.m[static_cast<size_t>(b) * t.cols + a] = m.at(a, b);
  return t;
}

// Online prediction rows and target projection rows for one direction.
template <typename T>
int dense_direction(GraphT<T>& g, BoundEncoderT<T>& online, BoundEncoderT<T>& target, int v_on,
                    int v_tg, const std::vector<PositiveMask>& masks, BnMode mode,
                    bool update_running) {
  int f1 = online.backbone(v_on, mode, update_running);
  int p1 = online.head("pred", online.head("proj", f1, mode, update_running), mode, update_running);
  int z2 = target.head("proj", target.backbone(v_tg, mode, false), mode, false);
  const int n = g.value(p1).dim(0);
  if (static_cast<int>(masks.size()) != n)
    throw ShapeError("dense loss: " + std::to_string(masks.size()) + " masks for batch of " +
                     std::to_string(n));
  int acc = -1;
  for (int i = 0; i < n; ++i) {
    int li = dense_local_loss(g, g.grid_rows(p1, i), g.grid_rows(z2, i), masks[i]);
    acc = (acc < 0) ? li : g.add(acc, li);
  }
  return g.scale(acc, T(1) / static_cast<T>(n));
}

template <typename T>
int global_direction(GraphT<T>& g, BoundEncoderT<T>& online, BoundEncoderT<T>& target, int v_on,
                     int v_tg, BnMode mode, bool update_running) {
  int f1 = online.backbone(v_on, mode, update_running);
  int f2 = target.backbone(v_tg, mode, false);
  auto as_map = [&g](int pooled) {
    const auto& s = g.value(pooled).shape;
    return g.reshape(pooled, {s[0], s[1], 1, 1});
  };
  int e1 = as_map(g.global_avg_pool(f1));
  int p1 = online.head("gpred", online.head("gproj", e1, mode, update_running), mode, update_running);
  int z2 = target.head("gproj", as_map(g.global_avg_pool(f2)), mode, false);
  const auto& sp = g.value(p1).shape;
  const auto& sz = g.value(z2).shape;
  return global_byol_loss(g, g.reshape(p1, {sp[0], sp[1]}), g.reshape(z2, {sz[0], sz[1]}));
}

}  // namespace detail

template <typename T>
struct DenseLossGraph {
  int loss = -1;
  int local = -1;
  int global_term = -1;  // stays -1 when alpha == 0
  long positives = 0;
};

// Training loss for one batch of augmented view pairs: per-sample masked
// similarity between online predictions on view 1 and target projections on
// view 2, batch-averaged, plus an optional pooled-cosine term on separate
// global heads weighted by alpha. With alpha == 0 the global path is not
// built at all, so its parameters never receive gradients. `symmetrize`
// averages both view orderings (mask transposed for the reverse pass).
template <typename T>
DenseLossGraph<T> build_dense_loss(GraphT<T>& g, BoundEncoderT<T>& online,
                                   BoundEncoderT<T>& target, int v1, int v2,
                                   const std::vector<PositiveMask>& masks, T alpha,
                                   bool symmetrize, BnMode mode, bool update_running) {
  if (!(alpha >= T(0))) throw ConfigError("dense loss: alpha must be >= 0");
  DenseLossGraph<T> out;
  for (const auto& m : masks) out.positives += m.count();

  int local = detail::dense_direction(g, online, target, v1, v2, masks, mode, update_running);
  if (symmetrize) {
    std::vector<PositiveMask> rev;
    rev.reserve(masks.size());
    for (const auto& m : masks) rev.push_back(detail::transposed(m));
    int back = detail::dense_direction(g, online, target, v2, v1, rev, mode, update_running);
    local = g.scale(g.add(local, back), T(0.5));
  }
  out.local = local;

  if (alpha > T(0)) {
    int glob = detail::global_direction(g, online, target, v1, v2, mode, update_running);
    if (symmetrize) {
      int back = detail::global_direction(g, online, target, v2, v1, mode, update_running);
      glob = g.scale(g.add(glob, back), T(0.5));
    }
    out.global_term = glob;
    out.loss = joint_loss(g, local, glob, alpha);
  } else {
    out.loss = local;
  }
  return out;
}

template <typename T>
struct SemanticLossGraph {
  int loss = -1;
  int z2 = -1;  // normalized target embeddings [N, D], read back for the queue
};

// Contrastive loss over globally pooled embeddings: online global projection
// of view 1 against the target global projection of view 2, with queue
// entries as negatives.
template <typename T>
SemanticLossGraph<T> build_semantic_loss(GraphT<T>& g, BoundEncoderT<T>& online,
                                         BoundEncoderT<T>& target, int v1, int v2,
                                         const NegativeQueueT<T>& queue, T tau, BnMode mode,
                                         bool update_running) {
  auto embed = [&g, mode](BoundEncoderT<T>& enc, int v, bool upd) {
    int f = enc.backbone(v, mode, upd);
    int pooled = g.global_avg_pool(f);
    const auto& s = g.value(pooled).shape;
    int e = enc.head("gproj", g.reshape(pooled, {s[0], s[1], 1, 1}), mode, upd);
    const auto& se = g.value(e).shape;
    return g.l2_normalize(g.reshape(e, {se[0], se[1]}), 1);
  };
  SemanticLossGraph<T> out;
  int z1 = embed(online, v1, update_running);
  out.z2 = embed(target, v2, false);
  out.loss = info_nce(g, z1, out.z2, queue, tau);
  return out;
}

}  // namespace sfc
