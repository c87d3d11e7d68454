#include "lpcdet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace lpcdet {

namespace {

enum class Kind { Int, Real, Bool, U64, Refine };

struct KeySpec {
  Kind kind;
  const char* desk;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table{
      {"seed", {Kind::U64, "1"}},
      {"extent.x_min", {Kind::Real, "-20"}},
      {"extent.x_max", {Kind::Real, "20"}},
      {"extent.y_min", {Kind::Real, "-20"}},
      {"extent.y_max", {Kind::Real, "20"}},
      {"scene.min_objects", {Kind::Int, "2"}},
      {"scene.max_objects", {Kind::Int, "6"}},
      {"scene.surface_density", {Kind::Real, "5"}},
      {"scene.min_points_per_box", {Kind::Int, "20"}},
      {"scene.clutter_points", {Kind::Int, "300"}},
      {"scene.clutter_sigma", {Kind::Real, "0.05"}},
      {"scene.moving", {Kind::Bool, "false"}},
      {"scene.max_speed", {Kind::Real, "10"}},
      {"scene.yaw_min", {Kind::Real, "-1.5707963267948966"}},
      {"scene.yaw_max", {Kind::Real, "1.5707963267948966"}},
      {"scene.min_gap", {Kind::Real, "0.5"}},
      {"scene.max_placement_attempts", {Kind::Int, "100"}},
      {"class.width", {Kind::Real, "1.9"}},
      {"class.length", {Kind::Real, "4.5"}},
      {"class.height", {Kind::Real, "1.6"}},
      {"class.jitter", {Kind::Real, "0.08"}},
      {"grid.cell_size", {Kind::Real, "1.25"}},
      {"grid.max_points_per_pillar", {Kind::Int, "32"}},
      {"model.d", {Kind::Int, "64"}},
      {"model.layers", {Kind::Int, "4"}},
      {"model.heads", {Kind::Int, "4"}},
      {"model.queries", {Kind::Int, "25"}},
      {"model.ffn_dim", {Kind::Int, "128"}},
      {"model.refine", {Kind::Refine, "none"}},
      {"model.mask_empty_cells", {Kind::Bool, "false"}},
      {"model.detach_refined_anchors", {Kind::Bool, "false"}},
      {"model.fourier_sigma", {Kind::Real, "1"}},
      {"model.z_min", {Kind::Real, "-1"}},
      {"model.z_span", {Kind::Real, "4"}},
      {"model.fps_start", {Kind::Int, "0"}},
      {"train.epochs", {Kind::Int, "20"}},
      {"train.lr", {Kind::Real, "1e-3"}},
      {"train.lr_decay", {Kind::Real, "0.1"}},
      {"train.lr_decay_period", {Kind::Int, "15"}},
      {"train.batch_size", {Kind::Int, "4"}},
      {"train.grad_clip", {Kind::Real, "1"}},
      {"train.weight_reg", {Kind::Real, "1"}},
      {"train.weight_cls", {Kind::Real, "1"}},
      {"train.weight_no_object", {Kind::Real, "0.1"}},
      {"train.cost_reg", {Kind::Real, "1"}},
      {"train.cost_cls", {Kind::Real, "1"}},
      {"stage2.epochs", {Kind::Int, "20"}},
      {"stage2.lr", {Kind::Real, "1e-3"}},
      {"stage2.lr_decay_period", {Kind::Int, "15"}},
      {"aam.epochs", {Kind::Int, "20"}},
      {"aam.lr", {Kind::Real, "1e-3"}},
      {"aam.batch_size", {Kind::Int, "128"}},
      {"aam.location_weight", {Kind::Real, "1"}},
      {"data.train_scenes", {Kind::Int, "1000"}},
      {"data.eval_scenes", {Kind::Int, "50"}},
      {"eval.travel_bin", {Kind::Real, "4"}},
  };
  return table;
}

const std::map<std::string, std::map<std::string, std::string>>& profile_overrides() {
  static const std::map<std::string, std::map<std::string, std::string>> table{
      {"desk", {}},
      {"paper-shape",
       {{"extent.x_min", "-50"},
        {"extent.x_max", "50"},
        {"extent.y_min", "-50"},
        {"extent.y_max", "50"},
        {"scene.min_objects", "10"},
        {"scene.max_objects", "40"},
        {"scene.clutter_points", "3000"},
        {"grid.cell_size", "0.78125"},
        {"model.d", "256"},
        {"model.layers", "6"},
        {"model.heads", "8"},
        {"model.queries", "100"},
        {"model.ffn_dim", "1024"}}},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

template <typename T>
bool parse_integral(const std::string& v, T& out) {
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_real(const std::string& v, double& out) {
  if (v.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == v.size() && std::isfinite(out);
}

void check_value(const std::string& key, Kind kind, const std::string& value) {
  bool ok = true;
  switch (kind) {
    case Kind::Int: {
      int i = 0;
      ok = parse_integral(value, i);
      break;
    }
    case Kind::U64: {
      std::uint64_t u = 0;
      ok = parse_integral(value, u);
      break;
    }
    case Kind::Real: {
      double d = 0;
      ok = parse_real(value, d);
      break;
    }
    case Kind::Bool: {
      bool b = false;
      ok = parse_bool(value, b);
      break;
    }
    case Kind::Refine:
      try {
        parse_refine_spec(value, 1 << 20);
      } catch (const ConfigError&) {
        ok = false;
      }
      break;
  }
  if (!ok) throw ConfigError("config key '" + key + "': malformed value '" + value + "'");
}

}  // namespace

std::set<int> parse_refine_spec(const std::string& spec, int layers) {
  const std::string s = trim(spec);
  std::set<int> out;
  if (s.empty() || s == "none") return out;
  if (s == "all") {
    for (int k = 1; k < layers; ++k) out.insert(k);
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    int k = 0;
    if (!parse_integral(item, k)) throw ConfigError("refinement spec '" + spec + "': bad entry '" + item + "'");
    if (k < 1 || k >= layers) {
      throw ConfigError("refinement spec '" + spec + "': layer " + item + " outside [1, " +
                        std::to_string(layers - 1) + "]");
    }
    out.insert(k);
  }
  return out;
}

std::string format_refine_spec(const std::set<int>& layers) {
  if (layers.empty()) return "none";
  std::string out;
  for (int k : layers) out += (out.empty() ? "" : ",") + std::to_string(k);
  return out;
}

const std::set<std::string>& RunConfig::profiles() {
  static const std::set<std::string> names = [] {
    std::set<std::string> n;
    for (const auto& [k, v] : profile_overrides()) n.insert(k);
    return n;
  }();
  return names;
}

RunConfig RunConfig::profile(const std::string& name) {
  const auto it = profile_overrides().find(name);
  if (it == profile_overrides().end()) throw ConfigError("unknown profile '" + name + "'");
  RunConfig c;
  c.profile_ = name;
  for (const auto& [k, spec] : key_table()) c.values_[k] = spec.desk;
  for (const auto& [k, v] : it->second) c.values_.at(k) = v;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = key_table().find(key);
  if (it == key_table().end()) throw ConfigError("unknown config key '" + key + "'");
  const std::string v = trim(value);
  check_value(key, it->second.kind, v);
  values_[key] = v;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void RunConfig::merge_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  double d = 0;
  if (!parse_real(get(key), d)) throw ConfigError("config key '" + key + "' is not a number");
  return d;
}

int RunConfig::integer(const std::string& key) const {
  int i = 0;
  if (!parse_integral(get(key), i)) throw ConfigError("config key '" + key + "' is not an integer");
  return i;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  std::uint64_t u = 0;
  if (!parse_integral(get(key), u)) throw ConfigError("config key '" + key + "' is not an unsigned integer");
  return u;
}

bool RunConfig::flag(const std::string& key) const {
  bool b = false;
  if (!parse_bool(get(key), b)) throw ConfigError("config key '" + key + "' is not a boolean");
  return b;
}

std::string RunConfig::echo() const {
  std::ostringstream out;
  out << "# profile: " << profile_ << '\n';
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  return out.str();
}

Extent RunConfig::extent() const {
  return {number("extent.x_min"), number("extent.x_max"), number("extent.y_min"), number("extent.y_max")};
}

SceneConfig RunConfig::scene_config() const {
  SceneConfig s;
  s.extent = extent();
  s.min_objects = integer("scene.min_objects");
  s.max_objects = integer("scene.max_objects");
  s.classes = {ClassSizePrior{number("class.width"), number("class.length"), number("class.height"),
                              number("class.jitter")}};
  s.surface_density = number("scene.surface_density");
  s.min_points_per_box = integer("scene.min_points_per_box");
  s.clutter_points = integer("scene.clutter_points");
  s.clutter_sigma = number("scene.clutter_sigma");
  s.moving = flag("scene.moving");
  s.max_speed = number("scene.max_speed");
  s.yaw_min = number("scene.yaw_min");
  s.yaw_max = number("scene.yaw_max");
  s.min_gap = number("scene.min_gap");
  s.max_placement_attempts = integer("scene.max_placement_attempts");
  s.seed = u64("seed");
  return s;
}

std::set<int> RunConfig::refine_layers() const {
  return parse_refine_spec(get("model.refine"), integer("model.layers"));
}

DetectorConfig RunConfig::detector_config() const {
  DetectorConfig c;
  c.grid = GridConfig::from_extent(extent(), number("grid.cell_size"), integer("model.d"),
                                   integer("grid.max_points_per_pillar"));
  c.grid.pillar_seed = u64("seed");
  c.decoder.layers = integer("model.layers");
  c.decoder.d = integer("model.d");
  c.decoder.heads = integer("model.heads");
  c.decoder.queries = integer("model.queries");
  c.decoder.classes = 1;
  c.decoder.ffn_dim = integer("model.ffn_dim");
  c.decoder.refine_layers = refine_layers();
  c.decoder.mask_empty_cells = flag("model.mask_empty_cells");
  c.decoder.detach_refined_anchors = flag("model.detach_refined_anchors");
  c.fourier_sigma = number("model.fourier_sigma");
  c.z_min = number("model.z_min");
  c.z_span = number("model.z_span");
  c.fps_start = integer("model.fps_start");
  c.init_seed = u64("seed");
  return c;
}

TrainConfig RunConfig::train_config(int stage) const {
  TrainConfig t;
  const std::string p = stage == 2 ? "stage2." : "train.";
  t.epochs = integer(p + "epochs");
  t.learning_rate = number(p + "lr");
  t.lr_decay_period = integer(p + "lr_decay_period");
  t.lr_decay = number("train.lr_decay");
  t.batch_size = integer("train.batch_size");
  t.grad_clip = number("train.grad_clip");
  t.loss.regression = number("train.weight_reg");
  t.loss.classification = number("train.weight_cls");
  t.loss.no_object = number("train.weight_no_object");
  t.cost.regression = number("train.cost_reg");
  t.cost.classification = number("train.cost_cls");
  t.seed = u64("seed");
  return t;
}

AamTrainConfig RunConfig::aam_config() const {
  AamTrainConfig a;
  a.epochs = integer("aam.epochs");
  a.learning_rate = number("aam.lr");
  a.batch_size = integer("aam.batch_size");
  a.location_weight = number("aam.location_weight");
  a.seed = u64("seed");
  return a;
}

void RunConfig::validate() const {
  try {
    scene_config().validate();
    detector_config().validate();
    train_config(1).validate();
    train_config(2).validate();
    const AamTrainConfig a = aam_config();
    if (a.epochs < 0 || a.batch_size < 1 || !(a.learning_rate >= 0.0)) {
      throw std::invalid_argument("aam: bad epochs, batch size or rate");
    }
    if (integer("data.train_scenes") < 1 || integer("data.eval_scenes") < 1) {
      throw std::invalid_argument("data: scene counts must be positive");
    }
    if (!(number("eval.travel_bin") > 0.0)) throw std::invalid_argument("eval.travel_bin must be > 0");
    if (integer("scene.max_objects") > integer("model.queries")) {
      throw std::invalid_argument("scene.max_objects exceeds model.queries");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

}  // namespace lpcdet
