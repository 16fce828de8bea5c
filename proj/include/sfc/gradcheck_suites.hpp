#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sfc/gradcheck.hpp"
#include "sfc/graph.hpp"
#include "sfc/rng.hpp"

namespace sfc {

// Randomized central-difference sweeps over every differentiable op, at
// 64-bit. Returns op name -> max relative error across all cases. The same
// sweeps back the unit tests, the `gradcheck` command and the acceptance run.
inline std::map<std::string, double> op_gradient_suite(int cases_per_op, uint64_t seed) {
  Rng rng(seed);
  auto u = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto ui = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto fill = [&](TensorD& t, double lo, double hi) {
    for (auto& v : t.data) v = u(lo, hi);
  };
  // Values bounded away from zero, for ops whose derivative is undefined or
  // ill-conditioned near zero (relu kinks, vector norms).
  auto fill_away = [&](TensorD& t, double lo, double hi) {
    for (auto& v : t.data) v = (ui(0, 1) ? 1 : -1) * u(lo, hi);
  };

  std::map<std::string, double> out;
  auto run = [&](const std::string& op, std::vector<TensorD> params, auto&& build) {
    const std::vector<std::string> names(params.size(), op);
    auto rep = grad_check(std::move(params), names, build);
    auto [it, fresh] = out.try_emplace(op, rep.max_rel_err);
    if (!fresh) it->second = std::max(it->second, rep.max_rel_err);
  };
  // Scalarize an arbitrary output by a fixed random linear functional, so
  // every output element influences the loss with a distinct weight. Seeded
  // per case: rebuilding the graph during finite differencing must evaluate
  // the exact same function.
  auto scalarize = [](GraphT<double>& g, int node, uint64_t wseed) {
    Rng wr(wseed);
    TensorD w(g.value(node).shape);
    for (auto& v : w.data) v = std::uniform_real_distribution<double>(-1.0, 1.0)(wr);
    return g.sum_all(g.mul(node, g.constant(std::move(w))));
  };

  for (int c = 0; c < cases_per_op; ++c) {
    const int n = ui(2, 4), m = ui(2, 5);
    const uint64_t ws = rng();

    {
      TensorD a({n, m}), b({n, m});
      fill(a, -2, 2);
      fill(b, -2, 2);
      run("add", {a, b}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.add(p[0], p[1]), ws);
      });
      run("sub", {a, b}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.sub(p[0], p[1]), ws);
      });
      run("mul", {a, b}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.mul(p[0], p[1]), ws);
      });
      const double s = u(-3, 3);
      run("scale", {a}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.scale(p[0], s), ws);
      });
      run("sum_all", {a}, [&](GraphD& g, const std::vector<int>& p) {
        return g.sum_all(p[0]);
      });
      run("mean_all", {a}, [&](GraphD& g, const std::vector<int>& p) {
        return g.mean_all(p[0]);
      });
      run("reshape", {a}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.reshape(p[0], {m, n}), ws);
      });
      run("dot_rows", {a, b}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.dot_rows(p[0], p[1]), ws);
      });
      run("logsumexp_rows", {a}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.logsumexp_rows(p[0]), ws);
      });
    }
    {
      const int k = ui(2, 4), q = ui(2, 4);
      TensorD a({n, k}), b({k, q});
      fill(a, -2, 2);
      fill(b, -2, 2);
      run("matmul", {a, b}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.matmul(p[0], p[1]), ws);
      });
      TensorD bt({q, k});
      fill(bt, -2, 2);
      run("matmul_nt", {a, bt}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.matmul_nt(p[0], p[1]), ws);
      });
      TensorD c1({n, k}), c2({n, q});
      fill(c1, -2, 2);
      fill(c2, -2, 2);
      run("concat_cols", {c1, c2}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.concat_cols(p[0], p[1]), ws);
      });
    }
    {
      const int N = ui(1, 2), C = ui(1, 3), H = ui(3, 6), W = ui(3, 6);
      const int O = ui(1, 3), kh = ui(1, 3), kw = ui(1, 3);
      const int stride = ui(1, 2), pad = ui(0, 1);
      TensorD x({N, C, H, W}), w({O, C, kh, kw});
      fill(x, -1, 1);
      fill(w, -1, 1);
      run("conv2d", {x, w}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.conv2d(p[0], p[1], stride, pad), ws);
      });
      TensorD b({O});
      fill(b, -1, 1);
      TensorD y({N, O, H, W});
      fill(y, -1, 1);
      run("bias_add", {y, b}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.bias_add(p[0], p[1]), ws);
      });
      run("global_avg_pool", {y}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.global_avg_pool(p[0]), ws);
      });
      const int sample = ui(0, N - 1);
      run("grid_rows", {y}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.grid_rows(p[0], sample), ws);
      });
    }
    {
      const int C = ui(1, 3), H = ui(2, 3), W = ui(2, 3);
      TensorD x({2, C, H, W}), gamma({C}), beta({C});
      fill(x, -2, 2);
      fill(gamma, 0.5, 1.5);
      fill(beta, -0.5, 0.5);
      run("batch_norm_train", {x, gamma, beta}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.batch_norm(p[0], p[1], p[2], BnMode::kTrain, nullptr, false), ws);
      });
      auto stats = std::make_shared<BnStatsT<double>>();
      stats->mean = TensorD({C});
      stats->var = TensorD({C});
      fill(stats->mean, -0.5, 0.5);
      fill(stats->var, 0.5, 1.5);
      run("batch_norm_eval", {x, gamma, beta}, [&, stats](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.batch_norm(p[0], p[1], p[2], BnMode::kEval, stats.get(), false), ws);
      });
    }
    {
      TensorD x({n, m});
      fill_away(x, 0.2, 2.0);
      run("relu", {x}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.relu(p[0]), ws);
      });
      const int axis = ui(0, 1);
      run("l2_normalize", {x}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.l2_normalize(p[0], axis), ws);
      });
      TensorD b({ui(2, 4), m});
      fill_away(b, 0.2, 2.0);
      run("pairwise_cosine", {x, b}, [&](GraphD& g, const std::vector<int>& p) {
        return scalarize(g, g.pairwise_cosine(p[0], p[1]), ws);
      });
    }
  }
  return out;
}

}  // namespace sfc

#include "sfc/loss_graph.hpp"

namespace sfc {

// Reduced-width architecture used for whole-graph gradient checks: small
// enough that central differences over every parameter stay fast.
inline BackboneConfig grad_check_backbone() {
  BackboneConfig bb;
  bb.input_size = 8;
  bb.channels = {4, 6};
  bb.strides = {2, 2};
  bb.kernels = {3, 3};
  return bb;
}

inline HeadConfig grad_check_head() {
  HeadConfig hd;
  hd.hidden = 8;
  hd.out_dim = 6;
  return hd;
}

// Finite-difference check of the full dense training loss (local term, plus
// the pooled global term when alpha > 0) through backbone, heads, batch norm
// and the masked similarity, with the target branch held constant.
inline GradCheckReport dense_loss_grad_check(double alpha, uint64_t seed,
                                             const GradCheckOptions& opt = {}) {
  const BackboneConfig bb = grad_check_backbone();
  const HeadConfig hd = grad_check_head();
  auto pair = init_encoder_pair<double>(bb, hd, alpha > 0.0, seed);

  Rng rng(stream_seed(seed, kStreamBatch));
  const int n = 2;
  TensorD v1({n, bb.in_channels, bb.input_size, bb.input_size});
  TensorD v2(v1.shape);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (auto& x : v1.data) x = ud(rng);
  for (auto& x : v2.data) x = ud(rng);

  std::vector<PositiveMask> masks;
  for (int i = 0; i < n; ++i) {
    auto vp = sample_view_pair_geometry(32, 32, 0.4, 0.9, 0.75, 4.0 / 3.0, bb.input_size,
                                        bb.grid(), 1.0, true, rng);
    masks.push_back(vp.mask);
  }

  std::vector<TensorD> params;
  std::vector<std::string> names;
  for (const auto& [name, t] : pair.online.params) {
    names.push_back(name);
    params.push_back(t);
  }
  auto build = [&](GraphD& g, const std::vector<int>& leaves) {
    BoundEncoderT<double> online(g, pair.online, bb, hd, true);
    BoundEncoderT<double> target(g, pair.target, bb, hd, false);
    for (size_t i = 0; i < names.size(); ++i) online.ids[names[i]] = leaves[i];
    int c1 = g.constant(v1, "view1");
    int c2 = g.constant(v2, "view2");
    auto built = build_dense_loss(g, online, target, c1, c2, masks,  alpha, false,
                                  BnMode::kTrain, false);
    return built.loss;
  };
  return grad_check(params, names, build, opt);
}

// Same check for the pooled contrastive loss.
inline GradCheckReport semantic_loss_grad_check(uint64_t seed, const GradCheckOptions& opt = {}) {
  const BackboneConfig bb = grad_check_backbone();
  const HeadConfig hd = grad_check_head();
  auto pair = init_encoder_pair<double>(bb, hd, true, seed);
  NegativeQueueT<double> queue(8, hd.out_dim, seed);

  Rng rng(stream_seed(seed, kStreamBatch));
  const int n = 2;
  TensorD v1({n, bb.in_channels, bb.input_size, bb.input_size});
  TensorD v2(v1.shape);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (auto& x : v1.data) x = ud(rng);
  for (auto& x : v2.data) x = ud(rng);

  std::vector<TensorD> params;
  std::vector<std::string> names;
  for (const auto& [name, t] : pair.online.params) {
    names.push_back(name);
    params.push_back(t);
  }
  auto build = [&](GraphD& g, const std::vector<int>& leaves) {
    BoundEncoderT<double> online(g, pair.online, bb, hd, true);
    BoundEncoderT<double> target(g, pair.target, bb, hd, false);
    for (size_t i = 0; i < names.size(); ++i) online.ids[names[i]] = leaves[i];
    int c1 = g.constant(v1, "view1");
    int c2 = g.constant(v2, "view2");
    return build_semantic_loss(g, online, target, c1, c2, queue, 0.5, BnMode::kTrain, false).loss;
  };
  return grad_check(params, names, build, opt);
}

}  // namespace sfc
