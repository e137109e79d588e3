#pragma once

// Shared per-triangle setup and pixel test. The parallel rasterizer and the
// serial reference iterate in different orders but run the exact same
// arithmetic per (pixel, triangle), and the lexicographic (depth, index)
// winner rule is order-independent, so their outputs are bit-identical.

#include <cmath>
#include <limits>

#include "strandopt/diffrast.hpp"

namespace strandopt {
namespace detail {

constexpr double kZNear = 1e-6;
constexpr double kMinArea = 1e-14;

struct ProjectedVerts {
  std::vector<Vec2> uv;
  std::vector<double> z;
};

inline ProjectedVerts project_all(const BillboardMesh& mesh, const Camera& cam) {
  ProjectedVerts pv;
  pv.uv.resize(mesh.positions.size());
  pv.z.resize(mesh.positions.size());
  for (size_t i = 0; i < mesh.positions.size(); ++i) {
    Vec3 pc = cam.to_camera(mesh.positions[i]);
    pv.z[i] = pc.z();
    pv.uv[i] = (pc.z() > kZNear) ? cam.project_cam(pc) : Vec2(0, 0);
  }
  return pv;
}

struct TriSetup {
  Vec2 q0, q1, q2;
  double z0, z1, z2;
  double area;      // signed: cross(q1-q0, q2-q0)
  int xmin, xmax, ymin, ymax;  // clipped pixel bbox, inclusive
  bool valid;
};

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline TriSetup setup_triangle(const ProjectedVerts& pv, const std::array<int, 3>& f, int width,
                               int height) {
  TriSetup s;
  s.valid = false;
  s.z0 = pv.z[f[0]];
  s.z1 = pv.z[f[1]];
  s.z2 = pv.z[f[2]];
  if (s.z0 <= kZNear || s.z1 <= kZNear || s.z2 <= kZNear) return s;
  s.q0 = pv.uv[f[0]];
  s.q1 = pv.uv[f[1]];
  s.q2 = pv.uv[f[2]];
  s.area = cross2(s.q1 - s.q0, s.q2 - s.q0);
  if (std::abs(s.area) < kMinArea) return s;
  double lox = std::min(s.q0.x(), std::min(s.q1.x(), s.q2.x()));
  double hix = std::max(s.q0.x(), std::max(s.q1.x(), s.q2.x()));
  double loy = std::min(s.q0.y(), std::min(s.q1.y(), s.q2.y()));
  double hiy = std::max(s.q0.y(), std::max(s.q1.y(), s.q2.y()));
  s.xmin = std::max(0, (int)std::floor(lox - 0.5));
  s.xmax = std::min(width - 1, (int)std::ceil(hix - 0.5));
  s.ymin = std::max(0, (int)std::floor(loy - 0.5));
  s.ymax = std::min(height - 1, (int)std::ceil(hiy - 0.5));
  if (s.xmin > s.xmax || s.ymin > s.ymax) return s;
  s.valid = true;
  return s;
}

// Top-left fill rule for a boundary edge, in y-down screen space.
inline bool top_left(const Vec2& w) {
  if (w.y() == 0.0) return w.x() > 0.0;
  return w.y() < 0.0;
}

// Coverage + perspective-correct interpolation at the center of pixel (x, y).
// Returns false when not covered; otherwise z and corrected b0, b1.
inline bool shade_pixel(const TriSetup& s, int x, int y, double& z, double& b0, double& b1) {
  Vec2 p(x + 0.5, y + 0.5);
  double sgn = (s.area > 0) ? 1.0 : -1.0;
  double e0 = cross2(s.q2 - s.q1, p - s.q1);  // opposite vertex 0
  double e1 = cross2(s.q0 - s.q2, p - s.q2);
  double e2 = cross2(s.q1 - s.q0, p - s.q0);
  double f0 = sgn * e0, f1 = sgn * e1, f2 = sgn * e2;
  auto edge_ok = [&](double f, const Vec2& w) { return f > 0.0 || (f == 0.0 && top_left(w)); };
  if (!edge_ok(f0, sgn * (s.q2 - s.q1))) return false;
  if (!edge_ok(f1, sgn * (s.q0 - s.q2))) return false;
  if (!edge_ok(f2, sgn * (s.q1 - s.q0))) return false;
  double sb0 = e0 / s.area, sb1 = e1 / s.area, sb2 = e2 / s.area;
  double w0 = sb0 / s.z0, w1 = sb1 / s.z1, w2 = sb2 / s.z2;
  double wsum = w0 + w1 + w2;
  z = 1.0 / wsum;
  b0 = w0 * z;
  b1 = w1 * z;
  return true;
}

}  // namespace detail
}  // namespace strandopt
