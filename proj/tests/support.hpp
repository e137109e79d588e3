#pragma once

// Shared fixtures for the test binaries: simple watertight geometry and a few
// scene shortcuts used by several suites.

#include <cmath>

#include "strandopt/types.hpp"

namespace strandopt::testsupport {

// Watertight lat-long sphere: two pole fans plus quad rings.
inline TriMesh make_sphere(double radius, int rings, int sectors, const Vec3& center = Vec3::Zero()) {
  TriMesh m;
  const double pi = 3.14159265358979323846;
  m.positions.push_back(center + Vec3(0, 0, radius));  // top pole
  for (int r = 1; r < rings; ++r) {
    double theta = pi * r / rings;
    for (int s = 0; s < sectors; ++s) {
      double phi = 2.0 * pi * s / sectors;
      m.positions.push_back(center + radius * Vec3(std::sin(theta) * std::cos(phi),
                                                   std::sin(theta) * std::sin(phi),
                                                   std::cos(theta)));
    }
  }
  m.positions.push_back(center + Vec3(0, 0, -radius));  // bottom pole
  int bottom = (int)m.positions.size() - 1;
  auto ring_vtx = [&](int r, int s) { return 1 + (r - 1) * sectors + (s % sectors); };
  for (int s = 0; s < sectors; ++s) m.triangles.push_back({0, ring_vtx(1, s), ring_vtx(1, s + 1)});
  for (int r = 1; r + 1 < rings; ++r)
    for (int s = 0; s < sectors; ++s) {
      int a = ring_vtx(r, s), b = ring_vtx(r, s + 1);
      int c = ring_vtx(r + 1, s), d = ring_vtx(r + 1, s + 1);
      m.triangles.push_back({a, c, d});
      m.triangles.push_back({a, d, b});
    }
  for (int s = 0; s < sectors; ++s)
    m.triangles.push_back({bottom, ring_vtx(rings - 1, s + 1), ring_vtx(rings - 1, s)});
  return m;
}

}  // namespace strandopt::testsupport
