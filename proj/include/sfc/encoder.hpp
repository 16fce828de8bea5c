#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sfc/graph.hpp"
#include "sfc/rng.hpp"

namespace sfc {

// Plain strided conv stack: per stage conv(k, stride, pad k/2) + bias + BN +
// ReLU. The spatial grid of the output is input_size / prod(strides).
struct BackboneConfig {
  int input_size = 64;
  int in_channels = 3;
  std::vector<int> channels = {16, 32, 64, 64};
  std::vector<int> strides = {2, 2, 1, 1};
  std::vector<int> kernels = {3, 3, 3, 3};

  int stages() const { return static_cast<int>(channels.size()); }
  bool operator==(const BackboneConfig&) const = default;

  void validate() const {
    if (channels.empty() || strides.size() != channels.size() ||
        kernels.size() != channels.size())
      throw ConfigError("backbone: channels/strides/kernels must be non-empty and equal length");
    for (int c : channels)
      if (c < 1) throw ConfigError("backbone: channels must be positive");
    for (int s : strides)
      if (s < 1) throw ConfigError("backbone: strides must be >= 1");
    for (int k : kernels)
      if (k < 1 || k % 2 == 0) throw ConfigError("backbone: kernels must be odd and positive");
    if (input_size < 1 || in_channels < 1)
      throw ConfigError("backbone: invalid input size or channel count");
    if (input_size % stride_product() != 0)
      throw ConfigError("backbone: input size " + std::to_string(input_size) +
                        " not divisible by total stride " + std::to_string(stride_product()));
  }

  int stride_product() const {
    int p = 1;
    for (int s : strides) p *= s;
    return p;
  }

  int grid() const {
    validate();
    return input_size / stride_product();
  }

  int out_channels() const { return channels.back(); }
};

// Projection/prediction head: 1x1 conv to `hidden` + BN + ReLU + 1x1 conv to
// `out_dim`.
struct HeadConfig {
  int hidden = 256;
  int out_dim = 64;

  bool operator==(const HeadConfig&) const = default;

  void validate() const {
    if (hidden < 1 || out_dim < 1) throw ConfigError("head: hidden and out_dim must be positive");
  }
};

template <typename T>
struct ParamStoreT {
  std::map<std::string, TensorT<T>> params;
  std::map<std::string, BnStatsT<T>> bn;  // running stats keyed by layer prefix

  long param_count() const {
    long n = 0;
    for (const auto& [name, t] : params) n += static_cast<long>(t.numel());
    return n;
  }
};

using ParamStore = ParamStoreT<float>;

// Online/target encoder pair. The online store carries backbone + proj + pred
// (+ unshared global heads for the joint objective); the target store carries
// the EMA copies of everything except prediction heads.
template <typename T>
struct EncoderPairT {
  BackboneConfig backbone;
  HeadConfig head;
  bool with_global_heads = false;
  ParamStoreT<T> online;
  ParamStoreT<T> target;
};

using EncoderPair = EncoderPairT<float>;

namespace detail {

template <typename T>
void init_conv(ParamStoreT<T>& st, const std::string& prefix, int in_c, int out_c, int k,
               Rng& rng) {
  TensorT<T> w({out_c, in_c, k, k});
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * k * k));
  std::uniform_real_distribution<double> d(-bound, bound);
  for (auto& v : w.data) v = static_cast<T>(d(rng));
  st.params.emplace(prefix + ".weight", std::move(w));
  st.params.emplace(prefix + ".bias", TensorT<T>({out_c}));
}

template <typename T>
void init_bn(ParamStoreT<T>& st, const std::string& prefix, int c) {
  st.params.emplace(prefix + ".gamma", TensorT<T>::full({c}, T(1)));
  st.params.emplace(prefix + ".beta", TensorT<T>({c}));
  BnStatsT<T> stats;
  stats.mean = TensorT<T>({c});
  stats.var = TensorT<T>::full({c}, T(1));
  st.bn.emplace(prefix, std::move(stats));
}

template <typename T>
void init_head(ParamStoreT<T>& st, const std::string& prefix, int in_c, const HeadConfig& hd,
               Rng& rng) {
  init_conv(st, prefix + ".conv0", in_c, hd.hidden, 1, rng);
  init_bn(st, prefix + ".bn0", hd.hidden);
  init_conv(st, prefix + ".conv1", hd.hidden, hd.out_dim, 1, rng);
}

}  // namespace detail

// Fresh online/target pair from one seed. Draw order is fixed (backbone, then
// proj, then pred, then the optional global heads), so configurations sharing
// a prefix of that order initialize the shared part identically. The target
// starts as an exact copy of its online counterparts.
template <typename T>
EncoderPairT<T> init_encoder_pair(const BackboneConfig& bb, const HeadConfig& hd,
                                  bool with_global_heads, uint64_t seed) {
  bb.validate();
  hd.validate();
  EncoderPairT<T> pair;
  pair.backbone = bb;
  pair.head = hd;
  pair.with_global_heads = with_global_heads;

  Rng rng(stream_seed(seed, kStreamInit));
  int in_c = bb.in_channels;
  for (int s = 0; s < bb.stages(); ++s) {
    detail::init_conv(pair.online, "backbone.conv" + std::to_string(s), in_c, bb.channels[s],
                      bb.kernels[static_cast<size_t>(s)], rng);
    detail::init_bn(pair.online, "backbone.bn" + std::to_string(s), bb.channels[s]);
    in_c = bb.channels[static_cast<size_t>(s)];
  }
  detail::init_head(pair.online, "proj", bb.out_channels(), hd, rng);
  detail::init_head(pair.online, "pred", hd.out_dim, hd, rng);
  if (with_global_heads) {
    detail::init_head(pair.online, "gproj", bb.out_channels(), hd, rng);
    detail::init_head(pair.online, "gpred", hd.out_dim, hd, rng);
  }

  auto copy_prefix = [&](const std::string& prefix) {
    for (const auto& [name, t] : pair.online.params)
      if (name.rfind(prefix, 0) == 0) pair.target.params.emplace(name, t);
    for (const auto& [name, s] : pair.online.bn)
      if (name.rfind(prefix, 0) == 0) pair.target.bn.emplace(name, s);
  };
  copy_prefix("backbone.");
  copy_prefix("proj.");
  if (with_global_heads) copy_prefix("gproj.");
  return pair;
}

// One parameter store bound into one graph. Parameters become gradient leaves
// when trainable, plain constants otherwise (the stop-gradient on the target
// branch). BN running stats are read from/written to the store directly.
template <typename T>
struct BoundEncoderT {
  GraphT<T>& g;
  ParamStoreT<T>& store;
  const BackboneConfig& bb;
  const HeadConfig& hd;
  bool trainable = true;
  std::map<std::string, int> ids;

  BoundEncoderT(GraphT<T>& graph, ParamStoreT<T>& s, const BackboneConfig& b,
                const HeadConfig& h, bool train)
      : g(graph), store(s), bb(b), hd(h), trainable(train) {}

  int leaf(const std::string& name) {
    if (auto it = ids.find(name); it != ids.end()) return it->second;
    auto pit = store.params.find(name);
    if (pit == store.params.end())
      throw ConfigError("encoder: unknown parameter '" + name + "'");
    const int id = trainable ? g.param(pit->second, name) : g.constant(pit->second, name);
    ids.emplace(name, id);
    return id;
  }

  int conv_bn_relu(const std::string& conv, const std::string& bn, int x, int stride, int pad,
                  BnMode mode, bool update_running) {
    int y = g.conv2d(x, leaf(conv + ".weight"), stride, pad);
    y = g.bias_add(y, leaf(conv + ".bias"));
    auto sit = store.bn.find(bn);
    if (sit == store.bn.end()) throw ConfigError("encoder: unknown BN layer '" + bn + "'");
    y = g.batch_norm(y, leaf(bn + ".gamma"), leaf(bn + ".beta"), mode, &sit->second,
                     update_running);
    return g.relu(y);
  }

  // Dense feature map [N, C, G, G] of a batch of views [N, 3, S, S]. S only
  // needs to be divisible by the total stride; it may differ from the
  // configured training input size (full frames at propagation time).
  int backbone(int x, BnMode mode, bool update_running) {
    const auto& shape = g.value(x).shape;
    if (shape.size() != 4 || shape[1] != bb.in_channels)
      throw ShapeError("backbone: expected [N," + std::to_string(bb.in_channels) +
                       ",H,W], got " + shape_str(shape));
    if (shape[2] % bb.stride_product() != 0 || shape[3] % bb.stride_product() != 0)
      throw ShapeError("backbone: input " + shape_str(shape) +
                       " not divisible by total stride " + std::to_string(bb.stride_product()));
    int y = x;
    for (int s = 0; s < bb.stages(); ++s) {
      const std::string cs = "backbone.conv" + std::to_string(s);
      const std::string bs = "backbone.bn" + std::to_string(s);
      y = conv_bn_relu(cs, bs, y, bb.strides[static_cast<size_t>(s)],
                       bb.kernels[static_cast<size_t>(s)] / 2, mode, update_running);
    }
    return y;
  }

  // Applies head `prefix` (proj/pred/gproj/gpred) to a rank-4 feature map.
  int head(const std::string& prefix, int x, BnMode mode, bool update_running) {
    int y = conv_bn_relu(prefix + ".conv0", prefix + ".bn0", x, 1, 0, mode, update_running);
    y = g.conv2d(y, leaf(prefix + ".conv1.weight"), 1, 0);
    return g.bias_add(y, leaf(prefix + ".conv1.bias"));
  }

  // Gradients of all bound parameters after backward, keyed by name.
  std::map<std::string, TensorT<T>> collect_grads() {
    std::map<std::string, TensorT<T>> out;
    for (const auto& [name, id] : ids)
      if (g.requires_grad(id) && g.has_grad(id)) out.emplace(name, g.grad(id));
    return out;
  }
};

// Cosine EMA momentum: m0 at step 0, 1 at step = total.
inline double ema_schedule(long step, long total, double m0) {
  if (total < 1) throw ConfigError("ema_schedule: total steps must be positive");
  if (step < 0 || step > total) throw ConfigError("ema_schedule: step outside [0, total]");
  const double pi = 3.14159265358979323846;
  return 1.0 - (1.0 - m0) * (std::cos(pi * static_cast<double>(step) / static_cast<double>(total)) + 1.0) / 2.0;
}

// Folds online weights into the target: xi <- m*xi + (1-m)*theta, matched by
// name. Running BN statistics follow the same rule, so the target's stats are
// driven purely by the online branch.
template <typename T>
void ema_update(EncoderPairT<T>& pair, double m) {
  for (auto& [name, tgt] : pair.target.params) {
    auto it = pair.online.params.find(name);
    if (it == pair.online.params.end())
      throw ConfigError("ema_update: online store lacks parameter '" + name + "'");
    if (it->second.shape != tgt.shape)
      throw ConfigError("ema_update: shape mismatch for parameter '" + name + "'");
    for (size_t i = 0; i < tgt.numel(); ++i)
      tgt[i] = static_cast<T>(m) * tgt[i] + static_cast<T>(1.0 - m) * it->second[i];
  }
  for (auto& [name, tgt] : pair.target.bn) {
    auto it = pair.online.bn.find(name);
    if (it == pair.online.bn.end())
      throw ConfigError("ema_update: online store lacks BN layer '" + name + "'");
    for (size_t i = 0; i < tgt.mean.numel(); ++i) {
      tgt.mean[i] = static_cast<T>(m) * tgt.mean[i] + static_cast<T>(1.0 - m) * it->second.mean[i];
      tgt.var[i] = static_cast<T>(m) * tgt.var[i] + static_cast<T>(1.0 - m) * it->second.var[i];
    }
  }
}

}  // namespace sfc
