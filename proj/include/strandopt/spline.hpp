#pragma once

#include "strandopt/types.hpp"

namespace strandopt {

// Uniform Catmull-Rom point on the segment p1 -> p2, t in [0,1].
Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t);

// Tessellate every strand so each segment becomes `factor` sub-segments.
// Endpoints are handled by phantom-point reflection, so the curve passes
// through all original vertices. factor == 1 copies the input exactly.
StrandSet subdivide_catmull_rom(const StrandSet& set, int factor);

// Resample a polyline to `count` vertices at uniform arc-length spacing,
// keeping both endpoints.
Strand resample_uniform(const Strand& s, int count);

// Positions at a fixed arc-length spacing along the polyline, starting at the
// root. Every strand yields at least one sample. Also reports the local unit
// direction at each sample.
void sample_polyline(const Strand& s, double spacing, std::vector<Vec3>& points,
                     std::vector<Vec3>& directions);

}  // namespace strandopt
