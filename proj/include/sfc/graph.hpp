#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sfc/errors.hpp"
#include "sfc/tensor.hpp"
#include "sfc/tensor_math.hpp"

namespace sfc {

enum class BnMode { kTrain, kEval };

// Running batch-norm statistics. These live outside the graph (in the
// parameter store) and are mutated at forward time when requested.
template <typename T>
struct BnStatsT {
  TensorT<T> mean;
  TensorT<T> var;
};

// Eager reverse-mode tape. Creation order is topological order; backward walks
// nodes in exact reverse creation order. One graph instance represents one
// forward/backward pass and is then discarded.
template <typename T>
class GraphT {
 public:
  using Tensor = TensorT<T>;

  static constexpr T kBnEps = T(1e-5);
  static constexpr T kNormEps = T(1e-12);

  // ---- leaves ----

  int param(Tensor v, std::string name) {
    int id = push("param", std::move(v), {});
    nodes_[id].requires_grad = true;
    nodes_[id].name = std::move(name);
    return id;
  }

  int constant(Tensor v, std::string name = "") {
    int id = push("constant", std::move(v), {});
    nodes_[id].name = std::move(name);
    return id;
  }

  // ---- elementwise and reductions ----

  int add(int a, int b) {
    check_same_shape("add", a, b);
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    int id = push("add", std::move(out), {a, b});
    set_backward(id, [this, id, a, b] {
      accum(a, grad(id), id);
      accum(b, grad(id), id);
    });
    return id;
  }

  int sub(int a, int b) {
    check_same_shape("sub", a, b);
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    int id = push("sub", std::move(out), {a, b});
    set_backward(id, [this, id, a, b] {
      accum(a, grad(id), id);
      Tensor neg = grad(id);
      for (auto& v : neg.data) v = -v;
      accum(b, neg, id);
    });
    return id;
  }

  int mul(int a, int b) {
    check_same_shape("mul", a, b);
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    int id = push("mul", std::move(out), {a, b});
    set_backward(id, [this, id, a, b] {
      const Tensor& g = grad(id);
      const Tensor& va = value(a);
      const Tensor& vb2 = value(b);
      Tensor da(va.shape), db(vb2.shape);
      for (size_t i = 0; i < g.numel(); ++i) {
        da[i] = g[i] * vb2[i];
        db[i] = g[i] * va[i];
      }
      accum(a, da, id);
      accum(b, db, id);
    });
    return id;
  }

  int scale(int a, T c) {
    Tensor out = value(a);
    for (auto& v : out.data) v *= c;
    int id = push("scale", std::move(out), {a});
    set_backward(id, [this, id, a, c] {
      Tensor da = grad(id);
      for (auto& v : da.data) v *= c;
      accum(a, da, id);
    });
    return id;
  }

  int sum_all(int a) {
    T s = 0;
    for (T v : value(a).data) s += v;
    int id = push("sum_all", Tensor({1}, {s}), {a});
    set_backward(id, [this, id, a] {
      Tensor da = Tensor::full(value(a).shape, grad(id)[0]);
      accum(a, da, id);
    });
    return id;
  }

  int mean_all(int a) {
    const size_t n = value(a).numel();
    if (n == 0) throw ShapeError("mean_all over empty tensor");
    T s = 0;
    for (T v : value(a).data) s += v;
    int id = push("mean_all", Tensor({1}, {s / static_cast<T>(n)}), {a});
    set_backward(id, [this, id, a, n] {
      Tensor da = Tensor::full(value(a).shape, grad(id)[0] / static_cast<T>(n));
      accum(a, da, id);
    });
    return id;
  }

  int reshape(int a, Shape s) {
    if (shape_numel(s) != value(a).numel())
      throw ShapeError("reshape " + shape_str(value(a).shape) + " -> " +
                       shape_str(s) + ": element count mismatch");
    Tensor out(std::move(s), value(a).data);
    int id = push("reshape", std::move(out), {a});
    set_backward(id, [this, id, a] {
      Tensor da(value(a).shape, grad(id).data);
      accum(a, da, id);
    });
    return id;
  }

  // ---- linear algebra ----

  int matmul(int a, int b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
      throw ShapeError("matmul " + shape_str(va.shape) + " x " + shape_str(vb.shape));
    const int M = va.dim(0), K = va.dim(1), N = vb.dim(1);
    Tensor out({M, N});
    gemm_nn_acc(va.ptr(), vb.ptr(), out.ptr(), M, K, N);
    int id = push("matmul", std::move(out), {a, b});
    set_backward(id, [this, id, a, b, M, K, N] {
      const Tensor& g = grad(id);
      Tensor da({M, K}), db({K, N});
      gemm_nt_acc(g.ptr(), value(b).ptr(), da.ptr(), M, N, K);
      gemm_tn_acc(value(a).ptr(), g.ptr(), db.ptr(), K, M, N);
      accum(a, da, id);
      accum(b, db, id);
    });
    return id;
  }

  // out[i,j] = <a_i, b_j> for row matrices a[M,D], b[K,D].
  int matmul_nt(int a, int b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1))
      throw ShapeError("matmul_nt " + shape_str(va.shape) + " x " + shape_str(vb.shape));
    const int M = va.dim(0), D = va.dim(1), K = vb.dim(0);
    Tensor out({M, K});
    gemm_nt_acc(va.ptr(), vb.ptr(), out.ptr(), M, D, K);
    int id = push("matmul_nt", std::move(out), {a, b});
    set_backward(id, [this, id, a, b, M, D, K] {
      const Tensor& g = grad(id);
      Tensor da({M, D}), db({K, D});
      gemm_nn_acc(g.ptr(), value(b).ptr(), da.ptr(), M, K, D);
      gemm_tn_acc(g.ptr(), value(a).ptr(), db.ptr(), K, M, D);
      accum(a, da, id);
      accum(b, db, id);
    });
    return id;
  }

  int dot_rows(int a, int b) {
    check_same_shape("dot_rows", a, b);
    const Tensor& va = value(a);
    if (va.rank() != 2) throw ShapeError("dot_rows expects rank-2, got " + shape_str(va.shape));
    const int N = va.dim(0), D = va.dim(1);
    const Tensor& vb = value(b);
    Tensor out({N});
    for (int i = 0; i < N; ++i) {
      T s = 0;
      for (int d = 0; d < D; ++d) s += va[static_cast<size_t>(i) * D + d] * vb[static_cast<size_t>(i) * D + d];
      out[static_cast<size_t>(i)] = s;
    }
    int id = push("dot_rows", std::move(out), {a, b});
    set_backward(id, [this, id, a, b, N, D] {
      const Tensor& g = grad(id);
      const Tensor& va2 = value(a);
      const Tensor& vb2 = value(b);
      Tensor da(va2.shape), db(vb2.shape);
      for (int i = 0; i < N; ++i)
        for (int d = 0; d < D; ++d) {
          const size_t k = static_cast<size_t>(i) * D + d;
          da[k] = g[static_cast<size_t>(i)] * vb2[k];
          db[k] = g[static_cast<size_t>(i)] * va2[k];
        }
      accum(a, da, id);
      accum(b, db, id);
    });
    return id;
  }

  int concat_cols(int a, int b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(0) != vb.dim(0))
      throw ShapeError("concat_cols " + shape_str(va.shape) + " | " + shape_str(vb.shape));
    const int N = va.dim(0), Ca = va.dim(1), Cb = vb.dim(1);
    Tensor out({N, Ca + Cb});
    for (int i = 0; i < N; ++i) {
      std::memcpy(out.ptr() + static_cast<size_t>(i) * (Ca + Cb),
                  va.ptr() + static_cast<size_t>(i) * Ca, sizeof(T) * Ca);
      std::memcpy(out.ptr() + static_cast<size_t>(i) * (Ca + Cb) + Ca,
                  vb.ptr() + static_cast<size_t>(i) * Cb, sizeof(T) * Cb);
    }
    int id = push("concat_cols", std::move(out), {a, b});
    set_backward(id, [this, id, a, b, N, Ca, Cb] {
      const Tensor& g = grad(id);
      Tensor da({N, Ca}), db({N, Cb});
      for (int i = 0; i < N; ++i) {
        std::memcpy(da.ptr() + static_cast<size_t>(i) * Ca,
                    g.ptr() + static_cast<size_t>(i) * (Ca + Cb), sizeof(T) * Ca);
        std::memcpy(db.ptr() + static_cast<size_t>(i) * Cb,
                    g.ptr() + static_cast<size_t>(i) * (Ca + Cb) + Ca, sizeof(T) * Cb);
      }
      accum(a, da, id);
      accum(b, db, id);
    });
    return id;
  }

  int logsumexp_rows(int a) {
    const Tensor& va = value(a);
    if (va.rank() != 2) throw ShapeError("logsumexp_rows expects rank-2, got " + shape_str(va.shape));
    const int N = va.dim(0), K = va.dim(1);
    if (K == 0) throw ShapeError("logsumexp_rows over empty rows");
    Tensor out({N});
    for (int i = 0; i < N; ++i) {
      const T* row = va.ptr() + static_cast<size_t>(i) * K;
      T m = row[0];
      for (int j = 1; j < K; ++j) m = std::max(m, row[j]);
      T s = 0;
      for (int j = 0; j < K; ++j) s += std::exp(row[j] - m);
      out[static_cast<size_t>(i)] = m + std::log(s);
    }
    int id = push("logsumexp_rows", std::move(out), {a});
    set_backward(id, [this, id, a, N, K] {
      const Tensor& g = grad(id);
      const Tensor& va2 = value(a);
      const Tensor& y = value(id);
      Tensor da({N, K});
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < K; ++j) {
          const size_t k = static_cast<size_t>(i) * K + j;
          da[k] = g[static_cast<size_t>(i)] * std::exp(va2[k] - y[static_cast<size_t>(i)]);
        }
      accum(a, da, id);
    });
    return id;
  }

  // ---- neural ops ----

  int conv2d(int x, int w, int stride, int pad) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    if (vx.rank() != 4 || vw.rank() != 4)
      throw ShapeError("conv2d expects rank-4 input and kernel, got " +
                       shape_str(vx.shape) + " and " + shape_str(vw.shape));
    if (vx.dim(1) != vw.dim(1))
      throw ShapeError("conv2d channel mismatch: input " + shape_str(vx.shape) +
                       " vs kernel " + shape_str(vw.shape));
    if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
    if (pad < 0) throw ConfigError("conv2d padding must be >= 0");
    const int N = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const int O = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
    if (kh > H + 2 * pad || kw > W + 2 * pad)
      throw ConfigError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                        " exceeds padded input " + std::to_string(H + 2 * pad) + "x" +
                        std::to_string(W + 2 * pad));
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    const int ckk = C * kh * kw;
    const int hw = Ho * Wo;
    Tensor out({N, O, Ho, Wo});
    std::vector<T> cols(static_cast<size_t>(ckk) * hw);
    for (int n = 0; n < N; ++n) {
      im2col(vx.ptr() + static_cast<size_t>(n) * C * H * W, C, H, W, kh, kw, stride, pad,
             Ho, Wo, cols.data());
      gemm_nn_acc(vw.ptr(), cols.data(), out.ptr() + static_cast<size_t>(n) * O * hw,
                  O, ckk, hw);
    }
    int id = push("conv2d", std::move(out), {x, w});
    set_backward(id, [this, id, x, w, stride, pad, N, C, H, W, O, kh, kw, Ho, Wo] {
      const Tensor& g = grad(id);
      const Tensor& vx2 = value(x);
      const Tensor& vw2 = value(w);
      const int ckk2 = C * kh * kw;
      const int hw2 = Ho * Wo;
      Tensor dx(vx2.shape), dw(vw2.shape);
      std::vector<T> cols2(static_cast<size_t>(ckk2) * hw2);
      std::vector<T> dcols(static_cast<size_t>(ckk2) * hw2);
      for (int n = 0; n < N; ++n) {
        const T* gn = g.ptr() + static_cast<size_t>(n) * O * hw2;
        im2col(vx2.ptr() + static_cast<size_t>(n) * C * H * W, C, H, W, kh, kw, stride,
               pad, Ho, Wo, cols2.data());
        gemm_nt_acc(gn, cols2.data(), dw.ptr(), O, hw2, ckk2);
        std::fill(dcols.begin(), dcols.end(), T(0));
        gemm_tn_acc(vw2.ptr(), gn, dcols.data(), ckk2, O, hw2);
        col2im_acc(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                   dx.ptr() + static_cast<size_t>(n) * C * H * W);
      }
      accum(x, dx, id);
      accum(w, dw, id);
    });
    return id;
  }

  int bias_add(int x, int b) {
    const Tensor& vx = value(x);
    const Tensor& vb = value(b);
    if (vx.rank() != 4 || vb.rank() != 1 || vb.dim(0) != vx.dim(1))
      throw ShapeError("bias_add " + shape_str(vx.shape) + " + " + shape_str(vb.shape));
    const int N = vx.dim(0), C = vx.dim(1);
    const size_t hw = static_cast<size_t>(vx.dim(2)) * vx.dim(3);
    Tensor out = vx;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T* p = out.ptr() + (static_cast<size_t>(n) * C + c) * hw;
        const T bv = vb[static_cast<size_t>(c)];
        for (size_t i = 0; i < hw; ++i) p[i] += bv;
      }
    int id = push("bias_add", std::move(out), {x, b});
    set_backward(id, [this, id, x, b, N, C, hw] {
      const Tensor& g = grad(id);
      Tensor db(value(b).shape);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T* p = g.ptr() + (static_cast<size_t>(n) * C + c) * hw;
          T s = 0;
          for (size_t i = 0; i < hw; ++i) s += p[i];
          db[static_cast<size_t>(c)] += s;
        }
      accum(x, g, id);
      accum(b, db, id);
    });
    return id;
  }

  // Batch normalization over [N,C,H,W] with per-channel statistics.
  // Training mode uses biased (1/n) batch variance and optionally folds the
  // batch statistics into `stats` with momentum 0.9; eval mode normalizes with
  // the provided running statistics.
  int batch_norm(int x, int gamma, int beta, BnMode mode, BnStatsT<T>* stats,
                 bool update_running) {
    const Tensor& vx = value(x);
    const Tensor& vg = value(gamma);
    const Tensor& vb = value(beta);
    if (vx.rank() != 4) throw ShapeError("batch_norm expects rank-4, got " + shape_str(vx.shape));
    const int N = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    if (vg.rank() != 1 || vg.dim(0) != C || vb.rank() != 1 || vb.dim(0) != C)
      throw ShapeError("batch_norm parameter shape mismatch for " + shape_str(vx.shape));
    const size_t hw = static_cast<size_t>(H) * W;
    const size_t per_c = static_cast<size_t>(N) * hw;

    std::vector<T> mean(C), var(C);
    if (mode == BnMode::kTrain) {
      if (per_c < 2)
        throw ConfigError("batch_norm: degenerate batch, need at least 2 values per channel");
      for (int c = 0; c < C; ++c) {
        T s = 0;
        for (int n = 0; n < N; ++n) {
          const T* p = vx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
          for (size_t i = 0; i < hw; ++i) s += p[i];
        }
        const T m = s / static_cast<T>(per_c);
        T v = 0;
        for (int n = 0; n < N; ++n) {
          const T* p = vx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
          for (size_t i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
        }
        mean[static_cast<size_t>(c)] = m;
        var[static_cast<size_t>(c)] = v / static_cast<T>(per_c);
      }
      if (update_running) {
        if (!stats) throw ConfigError("batch_norm: running stats requested but none provided");
        for (int c = 0; c < C; ++c) {
          stats->mean[static_cast<size_t>(c)] =
              T(0.9) * stats->mean[static_cast<size_t>(c)] + T(0.1) * mean[static_cast<size_t>(c)];
          stats->var[static_cast<size_t>(c)] =
              T(0.9) * stats->var[static_cast<size_t>(c)] + T(0.1) * var[static_cast<size_t>(c)];
        }
      }
    } else {
      if (!stats) throw ConfigError("batch_norm: eval mode needs running stats");
      for (int c = 0; c < C; ++c) {
        mean[static_cast<size_t>(c)] = stats->mean[static_cast<size_t>(c)];
        var[static_cast<size_t>(c)] = stats->var[static_cast<size_t>(c)];
      }
    }

    Tensor out(vx.shape);
    for (int c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(var[static_cast<size_t>(c)] + kBnEps);
      const T gm = vg[static_cast<size_t>(c)], bt = vb[static_cast<size_t>(c)];
      const T mu = mean[static_cast<size_t>(c)];
      for (int n = 0; n < N; ++n) {
        const T* p = vx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
        T* q = out.ptr() + (static_cast<size_t>(n) * C + c) * hw;
        for (size_t i = 0; i < hw; ++i) q[i] = gm * (p[i] - mu) * inv + bt;
      }
    }
    int id = push("batch_norm", std::move(out), {x, gamma, beta});
    set_backward(id, [this, id, x, gamma, beta, mode, N, C, hw, per_c,
                      mean = std::move(mean), var = std::move(var)] {
      const Tensor& g = grad(id);
      const Tensor& vx2 = value(x);
      const Tensor& vg2 = value(gamma);
      Tensor dx(vx2.shape), dg(vg2.shape), db(vg2.shape);
      for (int c = 0; c < C; ++c) {
        const T mu = mean[static_cast<size_t>(c)];
        const T inv = T(1) / std::sqrt(var[static_cast<size_t>(c)] + kBnEps);
        const T gm = vg2[static_cast<size_t>(c)];
        T sum_g = 0, sum_gx = 0;
        for (int n = 0; n < N; ++n) {
          const T* gp = g.ptr() + (static_cast<size_t>(n) * C + c) * hw;
          const T* xp = vx2.ptr() + (static_cast<size_t>(n) * C + c) * hw;
          for (size_t i = 0; i < hw; ++i) {
            sum_g += gp[i];
            sum_gx += gp[i] * (xp[i] - mu) * inv;
          }
        }
        dg[static_cast<size_t>(c)] = sum_gx;
        db[static_cast<size_t>(c)] = sum_g;
        if (mode == BnMode::kTrain) {
          // dL/dx via the batch statistics:
          // dx = (gamma*inv/n) * (n*g - sum(g) - xhat*sum(g*xhat))
          const T nf = static_cast<T>(per_c);
          for (int n = 0; n < N; ++n) {
            const T* gp = g.ptr() + (static_cast<size_t>(n) * C + c) * hw;
            const T* xp = vx2.ptr() + (static_cast<size_t>(n) * C + c) * hw;
            T* dp = dx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
            for (size_t i = 0; i < hw; ++i) {
              const T xhat = (xp[i] - mu) * inv;
              dp[i] = gm * inv / nf * (nf * gp[i] - sum_g - xhat * sum_gx);
            }
          }
        } else {
          for (int n = 0; n < N; ++n) {
            const T* gp = g.ptr() + (static_cast<size_t>(n) * C + c) * hw;
            T* dp = dx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
            for (size_t i = 0; i < hw; ++i) dp[i] = gp[i] * gm * inv;
          }
        }
      }
      accum(x, dx, id);
      accum(gamma, dg, id);
      accum(beta, db, id);
    });
    return id;
  }

  int relu(int x) {
    Tensor out = value(x);
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    int id = push("relu", std::move(out), {x});
    set_backward(id, [this, id, x] {
      const Tensor& g = grad(id);
      const Tensor& vx = value(x);
      Tensor dx(vx.shape);
      // Subgradient at exactly zero is taken as zero.
      for (size_t i = 0; i < g.numel(); ++i) dx[i] = vx[i] > T(0) ? g[i] : T(0);
      accum(x, dx, id);
    });
    return id;
  }

  // L2 normalization of slices along `axis`, guarded as x / sqrt(sum(x^2)+eps).
  int l2_normalize(int x, int axis) {
    const Tensor& vx = value(x);
    if (axis < 0 || axis >= vx.rank())
      throw ShapeError("l2_normalize axis " + std::to_string(axis) + " out of range for " +
                       shape_str(vx.shape));
    const int L = vx.dim(axis);
    size_t inner = 1, outer = 1;
    for (int i = axis + 1; i < vx.rank(); ++i) inner *= static_cast<size_t>(vx.dim(i));
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(vx.dim(i));

    Tensor out(vx.shape);
    std::vector<T> norms(outer * inner);
    for (size_t o = 0; o < outer; ++o)
      for (size_t in = 0; in < inner; ++in) {
        const size_t base = o * static_cast<size_t>(L) * inner + in;
        T s = 0;
        for (int l = 0; l < L; ++l) {
          const T v = vx[base + static_cast<size_t>(l) * inner];
          s += v * v;
        }
        const T n = std::sqrt(s + kNormEps);
        norms[o * inner + in] = n;
        for (int l = 0; l < L; ++l)
          out[base + static_cast<size_t>(l) * inner] = vx[base + static_cast<size_t>(l) * inner] / n;
      }
    int id = push("l2_normalize", std::move(out), {x});
    set_backward(id, [this, id, x, L, inner, outer, norms = std::move(norms)] {
      const Tensor& g = grad(id);
      const Tensor& y = value(id);
      Tensor dx(value(x).shape);
      for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
          const size_t base = o * static_cast<size_t>(L) * inner + in;
          const T n = norms[o * inner + in];
          T dot = 0;
          for (int l = 0; l < L; ++l) {
            const size_t k = base + static_cast<size_t>(l) * inner;
            dot += y[k] * g[k];
          }
          for (int l = 0; l < L; ++l) {
            const size_t k = base + static_cast<size_t>(l) * inner;
            dx[k] = (g[k] - y[k] * dot) / n;
          }
        }
      accum(x, dx, id);
    });
    return id;
  }

  // Cosine similarity between all row pairs of a[M,D] and b[K,D].
  int pairwise_cosine(int a, int b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1))
      throw ShapeError("pairwise_cosine " + shape_str(va.shape) + " x " + shape_str(vb.shape));
    const int M = va.dim(0), D = va.dim(1), K = vb.dim(0);

    auto normalize_rows = [D](const Tensor& m, int rows, std::vector<T>& norms) {
      Tensor out = m;
      norms.resize(static_cast<size_t>(rows));
      for (int i = 0; i < rows; ++i) {
        T* p = out.ptr() + static_cast<size_t>(i) * D;
        T s = 0;
        for (int d = 0; d < D; ++d) s += p[d] * p[d];
        const T n = std::sqrt(s + kNormEps);
        norms[static_cast<size_t>(i)] = n;
        for (int d = 0; d < D; ++d) p[d] /= n;
      }
      return out;
    };

    std::vector<T> na, nb;
    Tensor ah = normalize_rows(va, M, na);
    Tensor bh = normalize_rows(vb, K, nb);
    Tensor out({M, K});
    gemm_nt_acc(ah.ptr(), bh.ptr(), out.ptr(), M, D, K);
    int id = push("pairwise_cosine", std::move(out), {a, b});
    set_backward(id, [this, id, a, b, M, D, K, ah = std::move(ah), bh = std::move(bh),
                      na = std::move(na), nb = std::move(nb)] {
      const Tensor& g = grad(id);
      Tensor dah({M, D}), dbh({K, D});
      gemm_nn_acc(g.ptr(), bh.ptr(), dah.ptr(), M, K, D);
      gemm_tn_acc(g.ptr(), ah.ptr(), dbh.ptr(), K, M, D);
      Tensor da({M, D}), db({K, D});
      for (int i = 0; i < M; ++i) {
        const T* yh = ah.ptr() + static_cast<size_t>(i) * D;
        const T* gh = dah.ptr() + static_cast<size_t>(i) * D;
        T* dp = da.ptr() + static_cast<size_t>(i) * D;
        T dot = 0;
        for (int d = 0; d < D; ++d) dot += yh[d] * gh[d];
        for (int d = 0; d < D; ++d) dp[d] = (gh[d] - yh[d] * dot) / na[static_cast<size_t>(i)];
      }
      for (int j = 0; j < K; ++j) {
        const T* yh = bh.ptr() + static_cast<size_t>(j) * D;
        const T* gh = dbh.ptr() + static_cast<size_t>(j) * D;
        T* dp = db.ptr() + static_cast<size_t>(j) * D;
        T dot = 0;
        for (int d = 0; d < D; ++d) dot += yh[d] * gh[d];
        for (int d = 0; d < D; ++d) dp[d] = (gh[d] - yh[d] * dot) / nb[static_cast<size_t>(j)];
      }
      accum(a, da, id);
      accum(b, db, id);
    });
    return id;
  }

  int global_avg_pool(int x) {
    const Tensor& vx = value(x);
    if (vx.rank() != 4) throw ShapeError("global_avg_pool expects rank-4, got " + shape_str(vx.shape));
    const int N = vx.dim(0), C = vx.dim(1);
    const size_t hw = static_cast<size_t>(vx.dim(2)) * vx.dim(3);
    if (hw == 0) throw ShapeError("global_avg_pool over empty spatial grid");
    Tensor out({N, C});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* p = vx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
        T s = 0;
        for (size_t i = 0; i < hw; ++i) s += p[i];
        out[static_cast<size_t>(n) * C + c] = s / static_cast<T>(hw);
      }
    int id = push("global_avg_pool", std::move(out), {x});
    set_backward(id, [this, id, x, N, C, hw] {
      const Tensor& g = grad(id);
      Tensor dx(value(x).shape);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T gv = g[static_cast<size_t>(n) * C + c] / static_cast<T>(hw);
          T* p = dx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
          for (size_t i = 0; i < hw; ++i) p[i] = gv;
        }
      accum(x, dx, id);
    });
    return id;
  }

  // Flattens sample n of a [N,C,H,W] map into per-cell rows [H*W, C].
  int grid_rows(int x, int n) {
    const Tensor& vx = value(x);
    if (vx.rank() != 4) throw ShapeError("grid_rows expects rank-4, got " + shape_str(vx.shape));
    if (n < 0 || n >= vx.dim(0))
      throw ShapeError("grid_rows sample " + std::to_string(n) + " out of range for " +
                       shape_str(vx.shape));
    const int C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const size_t hw = static_cast<size_t>(H) * W;
    Tensor out({H * W, C});
    for (int c = 0; c < C; ++c) {
      const T* p = vx.ptr() + (static_cast<size_t>(n) * C + c) * hw;
      for (size_t i = 0; i < hw; ++i) out[i * static_cast<size_t>(C) + c] = p[i];
    }
    int id = push("grid_rows", std::move(out), {x});
    set_backward(id, [this, id, x, n, C, hw] {
      const Tensor& g = grad(id);
      Tensor dx(value(x).shape);
      for (int c = 0; c < C; ++c) {
        T* p = dx.ptr() + (static_cast<size_t>(n) * static_cast<size_t>(C) + c) * hw;
        for (size_t i = 0; i < hw; ++i) p[i] = g[i * static_cast<size_t>(C) + c];
      }
      accum(x, dx, id);
    });
    return id;
  }

  // ---- reverse pass ----

  void backward(int loss) {
    if (backward_done_)
      throw Error("backward called twice on the same graph (build a new forward first)");
    if (loss < 0 || loss >= static_cast<int>(nodes_.size()))
      throw Error("backward on unknown node");
    if (value(loss).numel() != 1)
      throw ShapeError("backward expects a scalar loss, got " + shape_str(value(loss).shape));
    backward_done_ = true;
    if (!nodes_[static_cast<size_t>(loss)].requires_grad) return;
    ensure_grad(loss);
    nodes_[static_cast<size_t>(loss)].grad[0] = T(1);
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || !n.grad_alloc || !n.backward_fn) continue;
      n.backward_fn();
    }
    for (const Node& n : nodes_) {
      if (n.grad_alloc && !n.grad.all_finite())
        throw NumericError("non-finite gradient at op '" + n.op +
                           (n.name.empty() ? std::string() : "' ('" + n.name + "')") + "'");
    }
  }

  // ---- access ----

  const Tensor& value(int id) const { return nodes_.at(static_cast<size_t>(id)).value; }
  const std::string& op_name(int id) const { return nodes_.at(static_cast<size_t>(id)).op; }
  const std::string& leaf_name(int id) const { return nodes_.at(static_cast<size_t>(id)).name; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<size_t>(id)).requires_grad; }
  bool has_grad(int id) const { return nodes_.at(static_cast<size_t>(id)).grad_alloc; }
  size_t size() const { return nodes_.size(); }

  const Tensor& grad(int id) {
    ensure_grad(id);
    return nodes_[static_cast<size_t>(id)].grad;
  }

  // Test hook: scales every adjoint contribution produced by `op` backward
  // rules, so gradient checking can prove it catches a broken rule.
  void corrupt_adjoint(std::string op, T factor) {
    corrupt_op_ = std::move(op);
    corrupt_factor_ = factor;
  }

 private:
  struct Node {
    std::string op;
    std::string name;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    std::function<void()> backward_fn;
  };

  int push(const char* op, Tensor v, std::vector<int> inputs) {
    if (!v.all_finite())
      throw NumericError(std::string("non-finite value in output of op '") + op + "'");
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    for (int i : n.inputs) n.requires_grad |= nodes_.at(static_cast<size_t>(i)).requires_grad;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  template <typename F>
  void set_backward(int id, F&& fn) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.requires_grad) n.backward_fn = std::forward<F>(fn);
  }

  void ensure_grad(int id) {
    Node& n = nodes_.at(static_cast<size_t>(id));
    if (!n.grad_alloc) {
      n.grad = Tensor(n.value.shape);
      n.grad_alloc = true;
    }
  }

  // Adds a contribution flowing out of `src`'s backward rule into `dst`.
  void accum(int dst, const Tensor& contrib, int src) {
    Node& d = nodes_.at(static_cast<size_t>(dst));
    if (!d.requires_grad) return;
    if (contrib.shape != d.value.shape)
      throw ShapeError("gradient shape " + shape_str(contrib.shape) + " does not match value " +
                       shape_str(d.value.shape) + " at op '" + d.op + "'");
    ensure_grad(dst);
    T f = T(1);
    if (!corrupt_op_.empty() && nodes_[static_cast<size_t>(src)].op == corrupt_op_)
      f = corrupt_factor_;
    T* g = d.grad.ptr();
    const T* c = contrib.ptr();
    const size_t n = contrib.numel();
    if (f == T(1)) {
      for (size_t i = 0; i < n; ++i) g[i] += c[i];
    } else {
      for (size_t i = 0; i < n; ++i) g[i] += f * c[i];
    }
  }

  static void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                     int Ho, int Wo, T* cols) {
    const int hw = Ho * Wo;
    for (int c = 0; c < C; ++c)
      for (int u = 0; u < kh; ++u)
        for (int v = 0; v < kw; ++v) {
          T* dst = cols + ((static_cast<size_t>(c) * kh + u) * kw + v) * hw;
          for (int ho = 0; ho < Ho; ++ho) {
            const int hi = ho * stride - pad + u;
            if (hi < 0 || hi >= H) {
              for (int wo = 0; wo < Wo; ++wo) dst[ho * Wo + wo] = T(0);
              continue;
            }
            const T* src = x + (static_cast<size_t>(c) * H + hi) * W;
            for (int wo = 0; wo < Wo; ++wo) {
              const int wi = wo * stride - pad + v;
              dst[ho * Wo + wo] = (wi >= 0 && wi < W) ? src[wi] : T(0);
            }
          }
        }
  }

  static void col2im_acc(const T* cols, int C, int H, int W, int kh, int kw, int stride,
                         int pad, int Ho, int Wo, T* x) {
    const int hw = Ho * Wo;
    for (int c = 0; c < C; ++c)
      for (int u = 0; u < kh; ++u)
        for (int v = 0; v < kw; ++v) {
          const T* src = cols + ((static_cast<size_t>(c) * kh + u) * kw + v) * hw;
          for (int ho = 0; ho < Ho; ++ho) {
            const int hi = ho * stride - pad + u;
            if (hi < 0 || hi >= H) continue;
            T* dst = x + (static_cast<size_t>(c) * H + hi) * W;
            for (int wo = 0; wo < Wo; ++wo) {
              const int wi = wo * stride - pad + v;
              if (wi >= 0 && wi < W) dst[wi] += src[ho * Wo + wo];
            }
          }
        }
  }

  void check_same_shape(const char* op, int a, int b) const {
    if (value(a).shape != value(b).shape)
      throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(value(a).shape) +
                       " vs " + shape_str(value(b).shape));
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::string corrupt_op_;
  T corrupt_factor_ = T(1);
};

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

}  // namespace sfc
