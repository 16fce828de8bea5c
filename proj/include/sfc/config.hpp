#pragma once

#include <string>
#include <string_view>

#include "sfc/augment.hpp"
#include "sfc/encoder.hpp"

namespace sfc {

// Sentinel for integer keys that accept "auto" and get resolved per run.
inline constexpr int kAuto = -1;

// Every tunable of the pipeline as flat dotted key=value text. Unknown keys
// are hard errors; parse(serialize(c)) == c.
struct Config {
  uint64_t seed = 1;

  BackboneConfig backbone;
  HeadConfig head;

  double loss_r = 0.5;          // positive-pair radius, in cell spacings
  double loss_tau = 0.07;       // contrastive temperature
  double loss_alpha = 1.0;      // weight of the global term in the joint loss
  bool loss_symmetrize = false;
  int loss_queue = 1024;        // negative queue capacity

  double opt_lr = 0.001;
  int opt_steps = 2000;
  int opt_batch = 8;
  double opt_ema_m0 = 0.99;  // cosine momentum schedule start
  int opt_log_every = 50;

  double crop_g1 = 0.0, crop_g2 = 1.0;  // crop area fraction range

  AugmentationSpec aug;

  int prop_top_k = kAuto;  // auto: 10 single-network, 15 fused
  int prop_m = 20;
  int prop_radius = kAuto;  // auto: scales with the feature grid
  double prop_tau = 0.07;
  double prop_lambda = 1.75;  // fusion weight of the fine-grained half

  bool operator==(const Config&) const = default;
};

// Parses key=value lines ('#' comments, blank lines ignored) on top of base.
Config parse_config(const std::string& text, Config base = {});
Config load_config(const std::string& path, Config base = {});
// One "key=value" override, same key set and validation as parse_config.
void apply_override(Config& c, const std::string& kv);
std::string serialize_config(const Config& c);

uint64_t fnv1a(std::string_view s);
// Hash of the full resolved config text.
uint64_t config_hash(const Config& c);
// Hash of the architecture-determining keys only (backbone.*, head.*);
// checkpoints from runs with equal arch_hash are interchangeable.
uint64_t arch_hash(const Config& c);

int resolved_top_k(const Config& c, bool fused);
int resolved_radius(const Config& c, bool fused, int grid);

// Range checks across all sections; throws ConfigError.
void validate_config(const Config& c);

// Per-command base for the contrastive branch: full photometric recipe on.
Config semantic_defaults();

}  // namespace sfc
