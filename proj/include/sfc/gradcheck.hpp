#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sfc/graph.hpp"
#include "sfc/tensor.hpp"

namespace sfc {

struct GradCheckOptions {
  double h = 1e-5;
  // Optional adjoint corruption, used to prove the checker catches a broken
  // backward rule.
  std::string corrupt_op;
  double corrupt_factor = 1.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  long evaluated = 0;

  void merge(const GradCheckReport& o) {
    evaluated += o.evaluated;
    if (o.max_rel_err > max_rel_err) {
      max_rel_err = o.max_rel_err;
      worst_param = o.worst_param;
      worst_index = o.worst_index;
      analytic = o.analytic;
      numeric = o.numeric;
    }
  }
};

// Central-difference check of a scalar loss against reverse-mode gradients.
// `build` constructs the forward graph from parameter leaves and returns the
// loss node; it is re-invoked on a fresh graph for every probe, so it must be
// a pure function of the parameter values. Runs at 64-bit only.
template <typename Build>
GradCheckReport grad_check(std::vector<TensorD> params, const std::vector<std::string>& names,
                           Build&& build, const GradCheckOptions& opt = {}) {
  if (params.size() != names.size())
    throw ConfigError("grad_check: parameter/name count mismatch");

  auto eval = [&](bool want_grads, std::vector<TensorD>* grads_out) -> double {
    GraphD g;
    if (want_grads && !opt.corrupt_op.empty())
      g.corrupt_adjoint(opt.corrupt_op, opt.corrupt_factor);
    std::vector<int> ids;
    ids.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) ids.push_back(g.param(params[i], names[i]));
    const int loss = build(g, ids);
    const double f = g.value(loss)[0];
    if (want_grads) {
      g.backward(loss);
      grads_out->clear();
      for (int id : ids) grads_out->push_back(g.grad(id));
    }
    return f;
  };

  std::vector<TensorD> analytic;
  eval(true, &analytic);

  GradCheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (size_t k = 0; k < params[pi].numel(); ++k) {
      const double orig = params[pi][k];
      params[pi][k] = orig + opt.h;
      const double fp = eval(false, nullptr);
      params[pi][k] = orig - opt.h;
      const double fm = eval(false, nullptr);
      params[pi][k] = orig;
      const double num = (fp - fm) / (2.0 * opt.h);
      const double ana = analytic[pi][k];
      const double denom = std::max({1.0, std::abs(ana), std::abs(num)});
      const double rel = std::abs(ana - num) / denom;
      rep.evaluated += 1;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = names[pi];
        rep.worst_index = k;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

}  // namespace sfc
