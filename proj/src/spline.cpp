#include "strandopt/spline.hpp"

namespace strandopt {

void validate_strand(const Strand& s) {
  if (s.vertices.size() < 2) throw ContractError("strand has fewer than 2 vertices");
  for (size_t i = 1; i < s.vertices.size(); ++i) {
    if ((s.vertices[i] - s.vertices[i - 1]).squaredNorm() == 0.0)
      throw ContractError("strand has a zero-length segment");
  }
}

void validate_strandset(const StrandSet& set) {
  for (const auto& s : set.strands) validate_strand(s);
}

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t) {
  double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3);
}

StrandSet subdivide_catmull_rom(const StrandSet& set, int factor) {
  if (factor < 1) throw ConfigError("subdivision factor must be >= 1");
  validate_strandset(set);
  StrandSet out;
  out.strands.reserve(set.strands.size());
  for (const auto& s : set.strands) {
    if (factor == 1) {
      out.strands.push_back(s);
      continue;
    }
    const auto& v = s.vertices;
    int n = (int)v.size();
    Strand r;
    r.vertices.reserve((size_t)(n - 1) * factor + 1);
    for (int i = 0; i + 1 < n; ++i) {
      // Phantom points reflect the curve endpoints.
      Vec3 p0 = (i > 0) ? v[i - 1] : 2.0 * v[0] - v[1];
      Vec3 p3 = (i + 2 < n) ? v[i + 2] : 2.0 * v[n - 1] - v[n - 2];
      for (int k = 0; k < factor; ++k)
        r.vertices.push_back(catmull_rom(p0, v[i], v[i + 1], p3, (double)k / factor));
    }
    r.vertices.push_back(v.back());
    out.strands.push_back(std::move(r));
  }
  return out;
}

Strand resample_uniform(const Strand& s, int count) {
  validate_strand(s);
  if (count < 2) throw ConfigError("resample count must be >= 2");
  const auto& v = s.vertices;
  std::vector<double> arc(v.size(), 0.0);
  for (size_t i = 1; i < v.size(); ++i) arc[i] = arc[i - 1] + (v[i] - v[i - 1]).norm();
  double total = arc.back();
  Strand out;
  out.vertices.reserve(count);
  size_t seg = 0;
  for (int k = 0; k < count; ++k) {
    double target = total * k / (count - 1);
    while (seg + 2 < v.size() && arc[seg + 1] < target) ++seg;
    double lo = arc[seg], hi = arc[seg + 1];
    double t = (hi > lo) ? (target - lo) / (hi - lo) : 0.0;
    out.vertices.push_back(v[seg] + t * (v[seg + 1] - v[seg]));
  }
  out.vertices.front() = v.front();
  out.vertices.back() = v.back();
  return out;
}

void sample_polyline(const Strand& s, double spacing, std::vector<Vec3>& points,
                     std::vector<Vec3>& directions) {
  points.clear();
  directions.clear();
  const auto& v = s.vertices;
  if (v.size() < 2) {
    if (!v.empty()) {
      points.push_back(v[0]);
      directions.push_back(Vec3(0, 0, 1));
    }
    return;
  }
  double carry = 0.0;  // arc position of the next sample relative to segment start
  for (size_t i = 0; i + 1 < v.size(); ++i) {
    Vec3 d = v[i + 1] - v[i];
    double len = d.norm();
    if (len <= 0.0) continue;
    Vec3 dir = d / len;
    while (carry <= len) {
      points.push_back(v[i] + dir * carry);
      directions.push_back(dir);
      carry += spacing;
    }
    carry -= len;
  }
  if (points.empty()) {
    points.push_back(v[0]);
    directions.push_back((v[1] - v[0]).normalized());
  }
}

}  // namespace strandopt
