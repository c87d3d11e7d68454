#pragma once

#include "lpcdet/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpcdet {

struct Extent {
  double x_min = -50.0;
  double x_max = 50.0;
  double y_min = -50.0;
  double y_max = 50.0;

  double width() const { return x_max - x_min; }
  double depth() const { return y_max - y_min; }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  friend bool operator==(const Extent&, const Extent&) = default;
};

struct GroundTruthBox {
  Box box;
  int class_id = 0;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct Scene {
  std::vector<Point3> points;
  std::vector<GroundTruthBox> boxes;
  Extent extent;

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Nominal footprint of one object class; each dimension is jittered
/// uniformly by +-jitter (fraction of nominal).
struct ClassSizePrior {
  double width = 1.9;
  double length = 4.5;
  double height = 1.6;
  double jitter = 0.08;
};

struct SceneConfig {
  Extent extent;
  int min_objects = 2;
  int max_objects = 6;
  std::vector<ClassSizePrior> classes{ClassSizePrior{}};
  double surface_density = 5.0;  // points per m^2 of box surface
  int min_points_per_box = 20;
  int clutter_points = 300;
  double clutter_sigma = 0.05;  // ground noise in z, meters
  bool moving = false;
  double max_speed = 10.0;  // m/s, used when moving
  double yaw_min = -std::numbers::pi / 2;
  double yaw_max = std::numbers::pi / 2;
  double min_gap = 0.5;  // BEV clearance between boxes, meters
  int max_placement_attempts = 100;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on a degenerate or inconsistent config.
  void validate() const;
};

/// Thrown when objects cannot be placed without overlap.
class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Deterministic in (config, seed). Boxes rest on the ground (center z = h/2),
/// their surfaces are sampled with config.surface_density (at least
/// min_points_per_box each), and clutter lies on z ~ N(0, clutter_sigma)
/// outside every box. All values are rounded to 1e-6 so that the text
/// format round-trips exactly.
Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Total surface area of a box.
double surface_area(const Box& box);

/// Rounds to 6 fractional digits (the file precision).
double quantize(double v);

std::string format_scene(const Scene& scene);
Scene parse_scene(const std::string& text);
void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

/// Scene files in a directory, sorted by name.
std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir);
std::vector<Scene> load_scene_dir(const std::filesystem::path& dir);

}  // namespace lpcdet
