#include "sfc/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace sfc {

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

long long parse_ll(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& v) {
  return static_cast<int>(parse_ll(key, v));
}

int parse_auto_int(const std::string& key, const std::string& v) {
  if (v == "auto") return kAuto;
  const int x = parse_int(key, v);
  if (x < 0) throw ConfigError("config: key '" + key + "' expects 'auto' or a value >= 0");
  return x;
}

double parse_num(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x))
    throw ConfigError("config: key '" + key + "' expects a finite number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::string item;
  std::istringstream s(v);
  while (std::getline(s, item, ',')) out.push_back(parse_int(key, item));
  if (out.empty()) throw ConfigError("config: key '" + key + "' expects a comma list");
  return out;
}

struct KeyHandler {
  const char* key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

const std::vector<KeyHandler>& registry() {
  static const std::vector<KeyHandler> reg = {
      {"seed", [](const Config& c) { return std::to_string(c.seed); },
       [](Config& c, const std::string& v) {
         c.seed = static_cast<uint64_t>(parse_ll("seed", v));
       }},
      {"backbone.input_size",
       [](const Config& c) { return std::to_string(c.backbone.input_size); },
       [](Config& c, const std::string& v) {
         c.backbone.input_size = parse_int("backbone.input_size", v);
       }},
      {"backbone.channels", [](const Config& c) { return fmt_ints(c.backbone.channels); },
       [](Config& c, const std::string& v) {
         c.backbone.channels = parse_ints("backbone.channels", v);
       }},
      {"backbone.strides", [](const Config& c) { return fmt_ints(c.backbone.strides); },
       [](Config& c, const std::string& v) {
         c.backbone.strides = parse_ints("backbone.strides", v);
       }},
      {"backbone.kernels", [](const Config& c) { return fmt_ints(c.backbone.kernels); },
       [](Config& c, const std::string& v) {
         c.backbone.kernels = parse_ints("backbone.kernels", v);
       }},
      {"head.hidden", [](const Config& c) { return std::to_string(c.head.hidden); },
       [](Config& c, const std::string& v) { c.head.hidden = parse_int("head.hidden", v); }},
      {"head.out_dim", [](const Config& c) { return std::to_string(c.head.out_dim); },
       [](Config& c, const std::string& v) { c.head.out_dim = parse_int("head.out_dim", v); }},
      {"loss.r", [](const Config& c) { return fmt_double(c.loss_r); },
       [](Config& c, const std::string& v) { c.loss_r = parse_num("loss.r", v); }},
      {"loss.tau", [](const Config& c) { return fmt_double(c.loss_tau); },
       [](Config& c, const std::string& v) { c.loss_tau = parse_num("loss.tau", v); }},
      {"loss.alpha", [](const Config& c) { return fmt_double(c.loss_alpha); },
       [](Config& c, const std::string& v) { c.loss_alpha = parse_num("loss.alpha", v); }},
      {"loss.symmetrize", [](const Config& c) { return c.loss_symmetrize ? "true" : "false"; },
       [](Config& c, const std::string& v) {
         c.loss_symmetrize = parse_bool("loss.symmetrize", v);
       }},
      {"loss.queue", [](const Config& c) { return std::to_string(c.loss_queue); },
       [](Config& c, const std::string& v) { c.loss_queue = parse_int("loss.queue", v); }},
      {"opt.lr", [](const Config& c) { return fmt_double(c.opt_lr); },
       [](Config& c, const std::string& v) { c.opt_lr = parse_num("opt.lr", v); }},
      {"opt.steps", [](const Config& c) { return std::to_string(c.opt_steps); },
       [](Config& c, const std::string& v) { c.opt_steps = parse_int("opt.steps", v); }},
      {"opt.batch", [](const Config& c) { return std::to_string(c.opt_batch); },
       [](Config& c, const std::string& v) { c.opt_batch = parse_int("opt.batch", v); }},
      {"opt.ema_m0", [](const Config& c) { return fmt_double(c.opt_ema_m0); },
       [](Config& c, const std::string& v) { c.opt_ema_m0 = parse_num("opt.ema_m0", v); }},
      {"opt.log_every", [](const Config& c) { return std::to_string(c.opt_log_every); },
       [](Config& c, const std::string& v) {
         c.opt_log_every = parse_int("opt.log_every", v);
       }},
      {"crop.g1", [](const Config& c) { return fmt_double(c.crop_g1); },
       [](Config& c, const std::string& v) { c.crop_g1 = parse_num("crop.g1", v); }},
      {"crop.g2", [](const Config& c) { return fmt_double(c.crop_g2); },
       [](Config& c, const std::string& v) { c.crop_g2 = parse_num("crop.g2", v); }},
      {"aug.hflip", [](const Config& c) { return c.aug.hflip ? "true" : "false"; },
       [](Config& c, const std::string& v) { c.aug.hflip = parse_bool("aug.hflip", v); }},
      {"aug.color_jitter", [](const Config& c) { return c.aug.color_jitter ? "true" : "false"; },
       [](Config& c, const std::string& v) {
         c.aug.color_jitter = parse_bool("aug.color_jitter", v);
       }},
      {"aug.jitter_strength",
       [](const Config& c) { return fmt_double(c.aug.jitter_strength); },
       [](Config& c, const std::string& v) {
         c.aug.jitter_strength = parse_num("aug.jitter_strength", v);
       }},
      {"aug.blur", [](const Config& c) { return c.aug.blur ? "true" : "false"; },
       [](Config& c, const std::string& v) { c.aug.blur = parse_bool("aug.blur", v); }},
      {"aug.grayscale", [](const Config& c) { return c.aug.grayscale ? "true" : "false"; },
       [](Config& c, const std::string& v) {
         c.aug.grayscale = parse_bool("aug.grayscale", v);
       }},
      {"prop.top_k",
       [](const Config& c) {
         return c.prop_top_k == kAuto ? std::string("auto") : std::to_string(c.prop_top_k);
       },
       [](Config& c, const std::string& v) { c.prop_top_k = parse_auto_int("prop.top_k", v); }},
      {"prop.m", [](const Config& c) { return std::to_string(c.prop_m); },
       [](Config& c, const std::string& v) { c.prop_m = parse_int("prop.m", v); }},
      {"prop.radius",
       [](const Config& c) {
         return c.prop_radius == kAuto ? std::string("auto") : std::to_string(c.prop_radius);
       },
       [](Config& c, const std::string& v) {
         c.prop_radius = parse_auto_int("prop.radius", v);
       }},
      {"prop.tau", [](const Config& c) { return fmt_double(c.prop_tau); },
       [](Config& c, const std::string& v) { c.prop_tau = parse_num("prop.tau", v); }},
      {"prop.lambda", [](const Config& c) { return fmt_double(c.prop_lambda); },
       [](Config& c, const std::string& v) { c.prop_lambda = parse_num("prop.lambda", v); }},
  };
  return reg;
}

const KeyHandler& handler_for(const std::string& key) {
  for (const KeyHandler& h : registry())
    if (key == h.key) return h;
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config parse_config(const std::string& text, Config base) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    handler_for(key).set(base, value);
  }
  return base;
}

Config load_config(const std::string& path, Config base) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

void apply_override(Config& c, const std::string& kv) {
  const size_t eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: override '" + kv + "' is not key=value");
  handler_for(trim(kv.substr(0, eq))).set(c, trim(kv.substr(eq + 1)));
}

std::string serialize_config(const Config& c) {
  std::string out;
  for (const KeyHandler& h : registry()) {
    out += h.key;
    out += '=';
    out += h.get(c);
    out += '\n';
  }
  return out;
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t config_hash(const Config& c) { return fnv1a(serialize_config(c)); }

uint64_t arch_hash(const Config& c) {
  std::string s;
  for (const KeyHandler& h : registry()) {
    const std::string_view key(h.key);
    if (key.rfind("backbone.", 0) == 0 || key.rfind("head.", 0) == 0) {
      s += h.key;
      s += '=';
      s += h.get(c);
      s += '\n';
    }
  }
  return fnv1a(s);
}

int resolved_top_k(const Config& c, bool fused) {
  if (c.prop_top_k != kAuto) return c.prop_top_k;
  return fused ? 15 : 10;
}

int resolved_radius(const Config& c, bool fused, int grid) {
  if (c.prop_radius != kAuto) return c.prop_radius;
  const double scale = fused ? 15.0 / 32.0 : 1.0 / 3.0;
  return std::max(1, static_cast<int>(std::lround(grid * scale)));
}

void validate_config(const Config& c) {
  c.backbone.validate();
  c.head.validate();
  c.aug.validate();
  if (!(c.loss_r > 0)) throw ConfigError("config: loss.r must be > 0");
  if (!(c.loss_tau > 0)) throw ConfigError("config: loss.tau must be > 0");
  if (c.loss_alpha < 0) throw ConfigError("config: loss.alpha must be >= 0");
  if (c.loss_queue < 1) throw ConfigError("config: loss.queue must be >= 1");
  if (!(c.opt_lr > 0)) throw ConfigError("config: opt.lr must be > 0");
  if (c.opt_steps < 0) throw ConfigError("config: opt.steps must be >= 0");
  if (c.opt_batch < 2) throw ConfigError("config: opt.batch must be >= 2");
  if (c.opt_ema_m0 < 0 || c.opt_ema_m0 >= 1)
    throw ConfigError("config: opt.ema_m0 must be in [0,1)");
  if (c.opt_log_every < 1) throw ConfigError("config: opt.log_every must be >= 1");
  if (c.crop_g1 < 0 || c.crop_g2 > 1 || c.crop_g1 > c.crop_g2)
    throw ConfigError("config: crop range must satisfy 0 <= g1 <= g2 <= 1");
  if (c.prop_top_k != kAuto && c.prop_top_k < 1)
    throw ConfigError("config: prop.top_k must be >= 1 or auto");
  if (c.prop_m < 0) throw ConfigError("config: prop.m must be >= 0");
  if (c.prop_radius != kAuto && c.prop_radius < 0)
    throw ConfigError("config: prop.radius must be >= 0 or auto");
  if (!(c.prop_tau > 0)) throw ConfigError("config: prop.tau must be > 0");
  if (c.prop_lambda < 0) throw ConfigError("config: prop.lambda must be >= 0");
}

Config semantic_defaults() {
  Config c;
  c.aug.color_jitter = true;
  c.aug.blur = true;
  c.aug.grayscale = true;
  // Softer temperature than the fine recipe: the small dataset puts many
  // near-duplicate frames in the negative queue, and a hard temperature
  // shatters scene-level structure instead of clustering it.
  c.loss_tau = 0.2;
  return c;
}

}  // namespace sfc
