#include "lpcdet/geometry.hpp"

#include <algorithm>

namespace lpcdet {

std::array<Vec2, 4> bev_corners(const Box& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = 0.5 * box.length, hw = 0.5 * box.width;
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {box.center.x + c * local[i].x - s * local[i].y,
              box.center.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 line_intersection(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double a1 = p2.y - p1.y, b1 = p1.x - p2.x;
  const double a2 = q2.y - q1.y, b2 = q1.x - q2.x;
  const double c1 = a1 * p1.x + b1 * p1.y;
  const double c2 = a2 * q1.x + b2 * q1.y;
  const double det = a1 * b2 - a2 * b1;
  if (std::abs(det) < 1e-300) return p1;
  return {(c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det};
}

}  // namespace

std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::vector<Vec2>& clip) {
  // Sutherland-Hodgman
  std::vector<Vec2> out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Vec2& a = clip[i];
    const Vec2& b = clip[(i + 1) % clip.size()];
    std::vector<Vec2> input;
    input.swap(out);
    for (std::size_t j = 0; j < input.size(); ++j) {
      const Vec2& cur = input[j];
      const Vec2& prev = input[(j + input.size() - 1) % input.size()];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) out.push_back(line_intersection(prev, cur, a, b));
        out.push_back(cur);
      } else if (prev_in) {
        out.push_back(line_intersection(prev, cur, a, b));
      }
    }
  }
  return out;
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(acc);
}

double bev_intersection_area(const Box& a, const Box& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  std::vector<Vec2> pa(ca.begin(), ca.end());
  std::vector<Vec2> pb(cb.begin(), cb.end());
  return polygon_area(clip_convex(pa, pb));
}

double oriented_bev_iou(const Box& a, const Box& b) {
  const double area_a = a.width * a.length;
  const double area_b = b.width * b.length;
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const double inter = bev_intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double aligned_iou(const Box& a, const Box& b) {
  const double va = a.width * a.length * a.height;
  const double vb = b.width * b.length * b.height;
  if (!(va > 0.0) || !(vb > 0.0)) return 0.0;
  const double inter = std::min(a.width, b.width) * std::min(a.length, b.length) *
                       std::min(a.height, b.height);
  return inter / (va + vb - inter);
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  return r - std::numbers::pi;
}

double yaw_difference(double a, double b) { return std::abs(wrap_angle(a - b)); }

Point3 to_box_frame(const Box& box, const Point3& p) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Point3 d = p - box.center;
  return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

Point3 from_box_frame(const Box& box, const Point3& local) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return {box.center.x + c * local.x - s * local.y, box.center.y + s * local.x + c * local.y,
          box.center.z + local.z};
}

double distance_to_surface(const Box& box, const Point3& p) {
  const Point3 q = to_box_frame(box, p);
  const double hx = 0.5 * box.length, hy = 0.5 * box.width, hz = 0.5 * box.height;
  const double dx = std::abs(q.x) - hx, dy = std::abs(q.y) - hy, dz = std::abs(q.z) - hz;
  if (dx <= 0.0 && dy <= 0.0 && dz <= 0.0) return -std::max({dx, dy, dz});
  const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0), oz = std::max(dz, 0.0);
  return std::sqrt(ox * ox + oy * oy + oz * oz);
}

bool contains_bev(const Box& box, double x, double y) {
  const Point3 q = to_box_frame(box, {x, y, box.center.z});
  return std::abs(q.x) <= 0.5 * box.length && std::abs(q.y) <= 0.5 * box.width;
}

}  // namespace lpcdet
