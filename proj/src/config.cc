#include "bapose/config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bapose/error.h"

namespace bapose {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream is(s);
  while (std::getline(is, part, sep)) out.push_back(trim(part));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

double to_double(const std::string& s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return v;
}

long long to_integer(const std::string& s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected an integer, got '" + s + "'");
  }
  return v;
}

int to_int(const std::string& s) {
  const long long v = to_integer(s);
  if (v < INT32_MIN || v > INT32_MAX) {
    throw ConfigError("integer out of range: " + s);
  }
  return static_cast<int>(v);
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename C, typename F>
std::string join(const C& c, F f) {
  std::string out;
  for (const auto& v : c) {
    if (!out.empty()) out += ",";
    out += f(v);
  }
  return out;
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (const auto& p : split(s, ',')) out.push_back(to_double(p));
  return out;
}

std::vector<int> to_ints(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (const auto& p : split(s, ',')) out.push_back(to_int(p));
  return out;
}

template <std::size_t N, typename T, typename F>
std::array<T, N> to_array(const std::string& s, F conv) {
  const auto parts = s.empty() ? std::vector<std::string>{} : split(s, ',');
  if (parts.size() != N) {
    throw ConfigError("expected " + std::to_string(N) +
                      " comma-separated values, got '" + s + "'");
  }
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = conv(parts[i]);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define BAPOSE_FIELD(key, member, parse, print)                              \
  {                                                                          \
    key, Field {                                                             \
      [](RunConfig& c, const std::string& v) { c.member = parse(v); },       \
          [](const RunConfig& c) { return print(c.member); }                 \
    }                                                                        \
  }

std::string print_int(int v) { return std::to_string(v); }
std::string print_u64(std::uint64_t v) { return std::to_string(v); }
std::string print_str(const std::string& s) { return s; }
std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}
std::string print_double(double v) { return fmt(v); }
std::string print_bool(bool v) { return fmt(v); }
template <typename C>
std::string print_ints(const C& c) {
  return join(c, [](int v) { return std::to_string(v); });
}
template <typename C>
std::string print_doubles(const C& c) {
  return join(c, [](double v) { return fmt(v); });
}
std::array<int, 4> to_int4(const std::string& s) {
  return to_array<4, int>(s, to_int);
}
std::array<double, 2> to_double2(const std::string& s) {
  return to_array<2, double>(s, to_double);
}
std::array<double, 4> to_double4(const std::string& s) {
  return to_array<4, double>(s, to_double);
}

std::vector<std::pair<int, int>> to_pairs(const std::string& s) {
  std::vector<std::pair<int, int>> out;
  if (s.empty()) return out;
  for (const auto& p : split(s, ',')) {
    const auto ab = split(p, '-');
    if (ab.size() != 2) {
      throw ConfigError("expected joint pairs like 0-1, got '" + p + "'");
    }
    out.emplace_back(to_int(ab[0]), to_int(ab[1]));
  }
  return out;
}
std::string print_pairs(const std::vector<std::pair<int, int>>& v) {
  return join(v, [](const std::pair<int, int>& p) {
    return std::to_string(p.first) + "-" + std::to_string(p.second);
  });
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      BAPOSE_FIELD("backbone.widths", model.pyramid.widths, to_int4, print_ints),
      BAPOSE_FIELD("backbone.stem_width", model.pyramid.stem_width, to_int,
                   print_int),
      BAPOSE_FIELD("backbone.base_stride", model.pyramid.base_stride, to_int,
                   print_int),
      BAPOSE_FIELD("backbone.blocks", model.pyramid.blocks, to_int, print_int),
      BAPOSE_FIELD("dwasp.dilations", model.dwasp.dilations, to_int4,
                   print_ints),
      BAPOSE_FIELD("dwasp.branch_width", model.dwasp.branch_width, to_int,
                   print_int),
      BAPOSE_FIELD("dwasp.waterfall_width", model.dwasp.waterfall_width, to_int,
                   print_int),
      BAPOSE_FIELD("dwasp.final_width", model.dwasp.final_width, to_int,
                   print_int),
      BAPOSE_FIELD("dwasp.keypoints", model.dwasp.keypoints, to_int, print_int),
      BAPOSE_FIELD("dwasp.group_width", model.dwasp.group_width, to_int,
                   print_int),
      BAPOSE_FIELD("dwasp.head_width", model.dwasp.head_width, to_int,
                   print_int),
      BAPOSE_FIELD("dwasp.center_map", model.dwasp.center_map, to_bool,
                   print_bool),
      BAPOSE_FIELD("dwasp.offset_mode", model.dwasp.offset_mode,
                   parse_offset_mode, to_string),
      BAPOSE_FIELD("decode.center_threshold", decode.center_threshold,
                   to_double, print_double),
      BAPOSE_FIELD("decode.nms_window", decode.nms_window, to_int, print_int),
      BAPOSE_FIELD("decode.max_instances", decode.max_instances, to_int,
                   print_int),
      BAPOSE_FIELD("decode.dedup_oks", decode.dedup_oks, to_double,
                   print_double),
      BAPOSE_FIELD("oks.falloff", eval.oks.falloff, to_doubles,
                   print_doubles),
      BAPOSE_FIELD("eval.style", eval.style, parse_eval_style, to_string),
      BAPOSE_FIELD("eval.max_detections", eval.max_detections, to_int,
                   print_int),
      BAPOSE_FIELD("eval.area_medium", eval.area_medium, to_double2,
                   print_doubles),
      BAPOSE_FIELD("eval.area_large", eval.area_large, to_double2,
                   print_doubles),
      BAPOSE_FIELD("eval.crowd_buckets", eval.crowd_edges, to_double4,
                   print_doubles),
      BAPOSE_FIELD("overlay.skeleton", skeleton, to_pairs, print_pairs),
      BAPOSE_FIELD("train.epochs", train.epochs, to_int, print_int),
      BAPOSE_FIELD("train.lr", train.lr, to_double, print_double),
      BAPOSE_FIELD("train.lr_steps", train.lr_steps, to_ints, print_ints),
      BAPOSE_FIELD("train.lr_factor", train.lr_factor, to_double,
                   print_double),
      BAPOSE_FIELD("train.rotation", train.rotation, to_double, print_double),
      BAPOSE_FIELD("train.scale_min", train.scale_min, to_double,
                   print_double),
      BAPOSE_FIELD("train.scale_max", train.scale_max, to_double,
                   print_double),
      BAPOSE_FIELD("train.translation", train.translation, to_double,
                   print_double),
      BAPOSE_FIELD("train.heat_weight", train.heat_weight, to_double,
                   print_double),
      BAPOSE_FIELD("train.offset_weight", train.offset_weight, to_double,
                   print_double),
      BAPOSE_FIELD("train.optimizer", train.optimizer, print_str, print_str),
      BAPOSE_FIELD("train.seed", train.seed, to_u64, print_u64),
      BAPOSE_FIELD("train.augment", train.augment, to_bool, print_bool),
      BAPOSE_FIELD("train.sigma", train.sigma, to_double, print_double),
      BAPOSE_FIELD("train.offset_radius", train.offset_radius, to_int,
                   print_int),
      BAPOSE_FIELD("train.checkpoint_every", train.checkpoint_every, to_int,
                   print_int),
  };
  return table;
}

#undef BAPOSE_FIELD

std::string render(const RunConfig& cfg, const std::string& prefix_a,
                   const std::string& prefix_b) {
  std::string out;
  for (const auto& [key, f] : fields()) {
    if (!prefix_a.empty() && key.rfind(prefix_a, 0) != 0 &&
        key.rfind(prefix_b, 0) != 0) {
      continue;
    }
    out += key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  model.pyramid.validate();
  resolve_widths(model.dwasp, model.pyramid);
  train.validate();
  decode.validate();
  if (!eval.oks.falloff.empty()) require_oks();
  if (eval.max_detections < 1) {
    throw ConfigError("eval.max_detections must be positive");
  }
  const auto& e = eval.crowd_edges;
  if (!(e[0] <= e[1] && e[1] <= e[2] && e[2] <= e[3])) {
    throw ConfigError("eval.crowd_buckets must be ascending");
  }
  for (const auto& [a, b] : skeleton) {
    if (a < 0 || b < 0 || a >= model.dwasp.keypoints ||
        b >= model.dwasp.keypoints) {
      throw ConfigError("overlay.skeleton joint out of range: " +
                        std::to_string(a) + "-" + std::to_string(b));
    }
  }
}

void RunConfig::require_oks() const {
  if (eval.oks.falloff.empty()) {
    throw ConfigError("oks.falloff is required: give one falloff constant "
                      "per keypoint");
  }
  if (eval.oks.falloff.size() !=
      static_cast<std::size_t>(model.dwasp.keypoints)) {
    throw ConfigError("oks.falloff has " +
                      std::to_string(eval.oks.falloff.size()) +
                      " entries but dwasp.keypoints = " +
                      std::to_string(model.dwasp.keypoints));
  }
  eval.oks.validate();
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::istringstream is(text);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) {
      throw ConfigError(where + "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (auto [pos, fresh] = seen.emplace(key, number); !fresh) {
      throw ConfigError(where + "key '" + key + "' already set on line " +
                        std::to_string(pos->second));
    }
    try {
      it->second.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_run_config(os.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string canonical_config(const RunConfig& cfg) {
  return render(cfg, "", "");
}

std::string canonical_model_config(const ModelConfig& cfg) {
  RunConfig r;
  r.model = cfg;
  return render(r, "backbone.", "dwasp.");
}

std::uint64_t model_fingerprint(const ModelConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_model_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bapose
