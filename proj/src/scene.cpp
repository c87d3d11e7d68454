#include "lpcdet/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string_view>

namespace lpcdet {

namespace {

using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Box sample_box(const SceneConfig& cfg, const ClassSizePrior& prior, Rng& rng) {
  Box b;
  auto jit = [&](double nominal) {
    return quantize(nominal * (1.0 + uniform(rng, -prior.jitter, prior.jitter)));
  };
  b.width = jit(prior.width);
  b.length = jit(prior.length);
  b.height = jit(prior.height);
  b.yaw = quantize(uniform(rng, cfg.yaw_min, cfg.yaw_max));
  b.yaw = std::clamp(b.yaw, -3.141592, 3.141592);
  // keep the whole footprint inside the extent
  const double r = 0.5 * std::hypot(b.width, b.length);
  b.center.x = quantize(uniform(rng, cfg.extent.x_min + r, cfg.extent.x_max - r));
  b.center.y = quantize(uniform(rng, cfg.extent.y_min + r, cfg.extent.y_max - r));
  b.center.z = quantize(0.5 * b.height);
  if (cfg.moving) {
    const double speed = uniform(rng, 0.0, cfg.max_speed);
    b.vx = quantize(speed * std::cos(b.yaw));
    b.vy = quantize(speed * std::sin(b.yaw));
  }
  return b;
}

bool overlaps(const Box& a, const Box& b, double gap) {
  Box ga = a, gb = b;
  ga.width += gap;
  ga.length += gap;
  gb.width += gap;
  gb.length += gap;
  const double reach = 0.5 * (std::hypot(ga.width, ga.length) + std::hypot(gb.width, gb.length));
  if (bev_distance(a.center, b.center) > reach) return false;
  return bev_intersection_area(ga, gb) > 0.0;
}

// Uniform surface sample: pick a face by area, then a point on it.
Point3 sample_surface(const Box& b, Rng& rng) {
  const double hx = 0.5 * b.length, hy = 0.5 * b.width, hz = 0.5 * b.height;
  const double a_x = b.width * b.height;   // faces normal to local x
  const double a_y = b.length * b.height;  // normal to local y
  const double a_z = b.length * b.width;   // normal to z
  const double total = 2.0 * (a_x + a_y + a_z);
  double pick = uniform(rng, 0.0, total);
  const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  Point3 local;
  if ((pick -= 2.0 * a_x) < 0.0) {
    local = {sign * hx, uniform(rng, -hy, hy), uniform(rng, -hz, hz)};
  } else if ((pick -= 2.0 * a_y) < 0.0) {
    local = {uniform(rng, -hx, hx), sign * hy, uniform(rng, -hz, hz)};
  } else {
    local = {uniform(rng, -hx, hx), uniform(rng, -hy, hy), sign * hz};
  }
  return from_box_frame(b, local);
}

Point3 quantize(const Point3& p) { return {lpcdet::quantize(p.x), lpcdet::quantize(p.y), lpcdet::quantize(p.z)}; }

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

void append_fixed(std::string& out, double v) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof(buf), " %.6f", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

void SceneConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("scene config: " + m); };
  if (!(extent.x_max > extent.x_min) || !(extent.y_max > extent.y_min)) fail("degenerate extent");
  if (min_objects < 0 || max_objects < min_objects) fail("bad object count range");
  if (max_objects > 0 && classes.empty()) fail("no object classes");
  if (surface_density < 0.0 || min_points_per_box < 1 || clutter_points < 0) {
    fail("negative density or count");
  }
  if (clutter_sigma < 0.0 || max_speed < 0.0 || min_gap < 0.0) fail("negative noise/speed/gap");
  if (yaw_min < -std::numbers::pi || yaw_max > std::numbers::pi || yaw_max <= yaw_min) {
    fail("yaw range must lie in [-pi, pi]");
  }
  if (max_placement_attempts < 1) fail("max_placement_attempts < 1");
  for (const auto& c : classes) {
    if (!(c.width > 0.0 && c.length > 0.0 && c.height > 0.0) || c.jitter < 0.0 || c.jitter >= 1.0) {
      fail("bad class size prior");
    }
    const double r = 0.5 * std::hypot(c.width, c.length) * (1.0 + c.jitter);
    if (max_objects > 0 && (2.0 * r >= extent.width() || 2.0 * r >= extent.depth())) {
      fail("object class larger than the extent");
    }
  }
  if (min_objects == max_objects && max_objects == 0 && clutter_points == 0) {
    fail("scene would contain no points");
  }
}

double quantize(double v) { return std::round(v * 1e6) / 1e6; }

double surface_area(const Box& b) {
  return 2.0 * (b.width * b.length + b.width * b.height + b.length * b.height);
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(config.seed, seed);
  Scene scene;
  scene.extent = config.extent;

  const int count = std::uniform_int_distribution<int>(config.min_objects, config.max_objects)(rng);
  for (int i = 0; i < count; ++i) {
    const int cls =
        std::uniform_int_distribution<int>(0, static_cast<int>(config.classes.size()) - 1)(rng);
    bool placed = false;
    for (int attempt = 0; attempt < config.max_placement_attempts && !placed; ++attempt) {
      Box candidate = sample_box(config, config.classes[static_cast<std::size_t>(cls)], rng);
      const bool clash = std::any_of(scene.boxes.begin(), scene.boxes.end(), [&](const auto& g) {
        return overlaps(candidate, g.box, config.min_gap);
      });
      if (!clash) {
        scene.boxes.push_back({candidate, cls});
        placed = true;
      }
    }
    if (!placed) {
      throw PlacementError("could not place object " + std::to_string(i) + " of " +
                           std::to_string(count) + " without overlap after " +
                           std::to_string(config.max_placement_attempts) + " attempts");
    }
  }

  for (const auto& g : scene.boxes) {
    const auto n = std::max<long>(config.min_points_per_box,
                                  std::lround(config.surface_density * surface_area(g.box)));
    for (long k = 0; k < n; ++k) scene.points.push_back(quantize(sample_surface(g.box, rng)));
  }

  std::normal_distribution<double> noise(0.0, config.clutter_sigma);
  for (int k = 0; k < config.clutter_points; ++k) {
    for (;;) {
      const double x = quantize(uniform(rng, config.extent.x_min, config.extent.x_max));
      const double y = quantize(uniform(rng, config.extent.y_min, config.extent.y_max));
      const bool inside = std::any_of(scene.boxes.begin(), scene.boxes.end(),
                                      [&](const auto& g) { return contains_bev(g.box, x, y); });
      if (inside) continue;
      scene.points.push_back({x, y, quantize(config.clutter_sigma > 0.0 ? noise(rng) : 0.0)});
      break;
    }
  }

  std::shuffle(scene.points.begin(), scene.points.end(), rng);
  return scene;
}

std::string format_scene(const Scene& scene) {
  std::string out;
  out.reserve(64 + scene.boxes.size() * 128 + scene.points.size() * 40);
  out += "SCENE v1";
  append_fixed(out, scene.extent.x_min);
  append_fixed(out, scene.extent.x_max);
  append_fixed(out, scene.extent.y_min);
  append_fixed(out, scene.extent.y_max);
  out += '\n';
  for (const auto& g : scene.boxes) {
    const Box& b = g.box;
    out += "BOX";
    for (double v : {b.center.x, b.center.y, b.center.z, b.width, b.length, b.height, b.yaw,
                     b.vx, b.vy}) {
      append_fixed(out, v);
    }
    out += ' ';
    out += std::to_string(g.class_id);
    out += '\n';
  }
  for (const auto& p : scene.points) {
    out += "PT";
    append_fixed(out, p.x);
    append_fixed(out, p.y);
    append_fixed(out, p.z);
    out += '\n';
  }
  return out;
}

Scene parse_scene(const std::string& text) {
  Scene scene;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool in_points = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    auto number = [&](std::size_t i) {
      double v = 0.0;
      if (!parse_double(toks[i], v)) {
        throw ParseError(lineno, "invalid number '" + std::string(toks[i]) + "'");
      }
      return v;
    };
    if (!have_header) {
      if (toks.size() != 6 || toks[0] != "SCENE" || toks[1] != "v1") {
        throw ParseError(lineno, "expected header 'SCENE v1 x_min x_max y_min y_max'");
      }
      scene.extent = {number(2), number(3), number(4), number(5)};
      if (!(scene.extent.x_max > scene.extent.x_min) || !(scene.extent.y_max > scene.extent.y_min)) {
        throw ParseError(lineno, "degenerate extent");
      }
      have_header = true;
    } else if (toks[0] == "BOX") {
      if (in_points) throw ParseError(lineno, "BOX record after PT records");
      if (toks.size() != 11) throw ParseError(lineno, "BOX needs 10 fields");
      GroundTruthBox g;
      g.box.center = {number(1), number(2), number(3)};
      g.box.width = number(4);
      g.box.length = number(5);
      g.box.height = number(6);
      g.box.yaw = number(7);
      g.box.vx = number(8);
      g.box.vy = number(9);
      int cls = -1;
      auto res = std::from_chars(toks[10].data(), toks[10].data() + toks[10].size(), cls);
      if (res.ec != std::errc() || res.ptr != toks[10].data() + toks[10].size() || cls < 0) {
        throw ParseError(lineno, "invalid class id '" + std::string(toks[10]) + "'");
      }
      g.class_id = cls;
      if (!(g.box.width > 0.0 && g.box.length > 0.0 && g.box.height > 0.0)) {
        throw ParseError(lineno, "box dimensions must be positive");
      }
      if (g.box.yaw < -std::numbers::pi || g.box.yaw >= std::numbers::pi) {
        throw ParseError(lineno, "yaw outside [-pi, pi)");
      }
      if (!scene.extent.contains(g.box.center.x, g.box.center.y)) {
        throw ParseError(lineno, "box center outside extent");
      }
      scene.boxes.push_back(g);
    } else if (toks[0] == "PT") {
      in_points = true;
      if (toks.size() != 4) throw ParseError(lineno, "PT needs 3 fields");
      const Point3 p{number(1), number(2), number(3)};
      if (!scene.extent.contains(p.x, p.y)) throw ParseError(lineno, "point outside extent");
      scene.points.push_back(p);
    } else {
      throw ParseError(lineno, "unknown record '" + std::string(toks[0]) + "'");
    }
  }
  if (!have_header) throw ParseError(lineno + 1, "missing SCENE header");
  if (scene.points.empty()) throw ParseError(lineno + 1, "scene has no points");
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write scene file " + path.string());
  out << format_scene(scene);
  if (!out) throw std::runtime_error("failed writing scene file " + path.string());
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read scene file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scene(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".scene") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Scene> load_scene_dir(const std::filesystem::path& dir) {
  std::vector<Scene> scenes;
  for (const auto& f : list_scene_files(dir)) scenes.push_back(load_scene(f));
  if (scenes.empty()) throw std::runtime_error("no .scene files in " + dir.string());
  return scenes;
}

}  // namespace lpcdet
