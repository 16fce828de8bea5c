#pragma once

#include <cmath>
#include <map>
#include <string>

#include "sfc/errors.hpp"
#include "sfc/tensor.hpp"

namespace sfc {

template <typename T>
struct AdamConfigT {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

using AdamConfig = AdamConfigT<float>;

// First/second moment buffers, keyed like the parameter store.
template <typename T>
struct AdamStateT {
  long step = 0;
  std::map<std::string, TensorT<T>> m;
  std::map<std::string, TensorT<T>> v;
};

using AdamState = AdamStateT<float>;

// One Adam update over every parameter. Parameters without a gradient entry
// are treated as having zero gradient (their moments still decay), so a loss
// term that is disabled leaves its parameters bit-identical to init.
template <typename T>
void adam_step(std::map<std::string, TensorT<T>>& params,
               const std::map<std::string, TensorT<T>>& grads, AdamStateT<T>& state,
               const AdamConfigT<T>& cfg) {
  state.step += 1;
  const T bc1 = T(1) - std::pow(cfg.beta1, static_cast<T>(state.step));
  const T bc2 = T(1) - std::pow(cfg.beta2, static_cast<T>(state.step));
  for (auto& [name, p] : params) {
    const TensorT<T>* g = nullptr;
    if (auto it = grads.find(name); it != grads.end()) {
      g = &it->second;
      if (g->shape != p.shape)
        throw ShapeError("adam_step: gradient shape " + shape_str(g->shape) +
                         " does not match parameter '" + name + "' " + shape_str(p.shape));
      if (!g->all_finite())
        throw NumericError("adam_step: non-finite gradient for parameter '" + name + "'");
    }
    auto& m = state.m.try_emplace(name, TensorT<T>(p.shape)).first->second;
    auto& v = state.v.try_emplace(name, TensorT<T>(p.shape)).first->second;
    for (size_t i = 0; i < p.numel(); ++i) {
      const T gi = g ? (*g)[i] : T(0);
      m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * gi * gi;
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    if (!p.all_finite())
      throw NumericError("adam_step: non-finite value in parameter '" + name + "' after update");
  }
}

}  // namespace sfc
