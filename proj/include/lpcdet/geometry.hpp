#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace lpcdet {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline double norm(const Point3& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }
inline double distance(const Point3& a, const Point3& b) { return norm(a - b); }
inline double bev_distance(const Point3& a, const Point3& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Oriented 3D box. `length` runs along the heading (yaw measured from +x),
/// `width` across it, `height` along z. Center is the volumetric center.
struct Box {
  Point3 center;
  double width = 1.0;
  double length = 1.0;
  double height = 1.0;
  double yaw = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  friend bool operator==(const Box&, const Box&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Counter-clockwise BEV footprint corners.
std::array<Vec2, 4> bev_corners(const Box& box);

/// Intersection of two convex polygons given counter-clockwise.
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip);
double polygon_area(const std::vector<Vec2>& poly);

double bev_intersection_area(const Box& a, const Box& b);
/// Intersection over union of the yawed BEV rectangles; 0 for degenerate boxes.
double oriented_bev_iou(const Box& a, const Box& b);
/// 3D IoU after translating and rotating b onto a (sizes only).
double aligned_iou(const Box& a, const Box& b);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);
/// |a - b| wrapped into [0, pi].
double yaw_difference(double a, double b);

/// Transforms a world point into the box frame (origin at center, x along heading).
Point3 to_box_frame(const Box& box, const Point3& p);
Point3 from_box_frame(const Box& box, const Point3& local);
/// Unsigned distance from p to the surface of the box.
double distance_to_surface(const Box& box, const Point3& p);
bool contains_bev(const Box& box, double x, double y);

}  // namespace lpcdet
