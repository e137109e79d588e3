#include "strandopt/scene.hpp"

#include <algorithm>
#include <cmath>

#include "strandopt/rng.hpp"

namespace strandopt {

HairStyle parse_hair_style(const std::string& name) {
  if (name == "straight") return HairStyle::Straight;
  if (name == "wavy") return HairStyle::Wavy;
  if (name == "curly") return HairStyle::Curly;
  throw ConfigError("unknown hair style: " + name);
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// Hemisphere grid: pole vertex + `rings` rings of `sectors` vertices, the last
// ring on the equator (z = 0). Returns the dome mesh; equator ring occupies the
// final `sectors` vertex slots.
TriMesh make_dome(double radius, int rings, int sectors) {
  TriMesh m;
  m.positions.emplace_back(0, 0, radius);
  for (int i = 1; i <= rings; ++i) {
    double theta = 0.5 * kPi * i / rings;
    for (int j = 0; j < sectors; ++j) {
      double phi = 2.0 * kPi * j / sectors;
      m.positions.emplace_back(radius * std::sin(theta) * std::cos(phi),
                               radius * std::sin(theta) * std::sin(phi),
                               radius * std::cos(theta));
    }
  }
  auto ring_vert = [&](int i, int j) { return 1 + (i - 1) * sectors + (j % sectors); };
  for (int j = 0; j < sectors; ++j)
    m.triangles.push_back({0, ring_vert(1, j), ring_vert(1, j + 1)});
  for (int i = 1; i < rings; ++i)
    for (int j = 0; j < sectors; ++j) {
      int a = ring_vert(i, j), b = ring_vert(i, j + 1);
      int c = ring_vert(i + 1, j), d = ring_vert(i + 1, j + 1);
      m.triangles.push_back({a, c, d});
      m.triangles.push_back({a, d, b});
    }
  // Outward orientation (radial normals).
  for (auto& f : m.triangles) {
    Vec3 centroid = (m.positions[f[0]] + m.positions[f[1]] + m.positions[f[2]]) / 3.0;
    Vec3 n = (m.positions[f[1]] - m.positions[f[0]]).cross(m.positions[f[2]] - m.positions[f[0]]);
    if (n.dot(centroid) < 0) std::swap(f[1], f[2]);
  }
  return m;
}

void pick_tessellation(int n_target, int& rings, int& sectors) {
  rings = std::max(2, (int)std::lround(std::sqrt(std::max(1, n_target - 1) / 2.0)));
  sectors = std::max(3, (int)std::lround((double)(n_target - 1) / rings));
}

Vec3 perp_frame_axis(const Vec3& d) {
  Vec3 g(0, 0, -1);
  if (std::abs(d.dot(g)) < 0.9) return g;
  return Vec3(1, 0, 0);
}

Strand grow_strand(const Vec3& root, const Vec3& normal, HairStyle style, double length,
                   int nverts, double phase) {
  double h = length / (nverts - 1);
  const Vec3 g(0, 0, -1);
  const double kappa = 0.022;  // bend toward gravity, rad per mm
  Strand s;
  s.vertices.resize(nverts);
  s.vertices[0] = root;
  Vec3 d = normal;
  std::vector<Vec3> dirs(nverts, d);
  for (int k = 1; k < nverts; ++k) {
    s.vertices[k] = s.vertices[k - 1] + h * d;
    dirs[k] = d;
    Vec3 gp = g - g.dot(d) * d;
    if (gp.norm() > 1e-9 && d.dot(g) < 0.93)
      d = (d + kappa * h * gp.normalized()).normalized();
  }
  if (style == HairStyle::Straight) return s;
  for (int k = 1; k < nverts; ++k) {
    double env = std::min(1.0, k / 3.0);  // keep the root on the scalp
    Vec3 e1 = dirs[k].cross(perp_frame_axis(dirs[k])).normalized();
    Vec3 e2 = dirs[k].cross(e1).normalized();
    if (style == HairStyle::Wavy) {
      s.vertices[k] += env * 1.8 * std::sin(2.0 * kPi * k / 8.0 + phase) * e1;
    } else {
      double a = 2.0 * kPi * k / 7.5 + phase;
      s.vertices[k] += env * 2.5 * (std::cos(a) * e1 + std::sin(a) * e2);
    }
  }
  return s;
}

}  // namespace

ScalpSurface make_scalp(int n_vertices_target, double radius) {
  int rings, sectors;
  pick_tessellation(n_vertices_target, rings, sectors);
  ScalpSurface scalp;
  scalp.mesh = make_dome(radius, rings, sectors);
  scalp.vertex_normals.reserve(scalp.mesh.positions.size());
  for (const auto& p : scalp.mesh.positions) scalp.vertex_normals.push_back(p.normalized());
  return scalp;
}

std::vector<Vec3> sample_child_roots(const ScalpSurface& scalp, int n, uint64_t seed) {
  std::vector<Vec3> roots;
  if (n == 0) return roots;
  if (n < 0) throw ConfigError("negative child root count");
  const TriMesh& m = scalp.mesh;
  if (m.triangles.empty()) throw ContractError("scalp mesh has no triangles");
  std::vector<double> cdf(m.triangles.size());
  double acc = 0.0;
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    acc += m.face_area((int)t);
    cdf[t] = acc;
  }
  Sobol2D sobol(seed);
  roots.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec2 u = sobol.sample((uint32_t)i);
    double target = u.x() * acc;
    size_t t = std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin();
    if (t >= cdf.size()) t = cdf.size() - 1;
    // Rescale the CDF remainder so both barycentric coordinates stay stratified.
    double lo = (t == 0) ? 0.0 : cdf[t - 1];
    double u0 = (target - lo) / std::max(1e-300, cdf[t] - lo);
    u0 = std::clamp(u0, 1e-9, 1.0 - 1e-9);
    double u1 = std::clamp(u.y(), 1e-9, 1.0 - 1e-9);
    double su = std::sqrt(u0);
    double b0 = 1.0 - su, b1 = u1 * su;
    const auto& f = m.triangles[t];
    roots.push_back(b0 * m.positions[f[0]] + b1 * m.positions[f[1]] +
                    (1.0 - b0 - b1) * m.positions[f[2]]);
  }
  return roots;
}

GuideChildMap nearest_four_guides(const std::vector<Vec3>& guide_roots,
                                  const std::vector<Vec3>& child_roots) {
  if (guide_roots.size() < 4) throw ContractError("need at least 4 guide roots");
  GuideChildMap map;
  map.entries.resize(child_roots.size());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < (int)child_roots.size(); ++c) {
    // Top-4 scan; ties keep the lower guide index.
    int idx[4] = {-1, -1, -1, -1};
    double d2[4] = {1e300, 1e300, 1e300, 1e300};
    for (int gi = 0; gi < (int)guide_roots.size(); ++gi) {
      double d = (guide_roots[gi] - child_roots[c]).squaredNorm();
      for (int k = 0; k < 4; ++k) {
        if (d < d2[k]) {
          for (int m2 = 3; m2 > k; --m2) {
            d2[m2] = d2[m2 - 1];
            idx[m2] = idx[m2 - 1];
          }
          d2[k] = d;
          idx[k] = gi;
          break;
        }
      }
    }
    auto& e = map.entries[c];
    if (d2[0] == 0.0) {
      e.guide = {idx[0], idx[1], idx[2], idx[3]};
      e.weight = {1.0, 0.0, 0.0, 0.0};
      continue;
    }
    double w[4], sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      w[k] = 1.0 / std::sqrt(d2[k]);
      sum += w[k];
    }
    for (int k = 0; k < 4; ++k) {
      e.guide[k] = idx[k];
      e.weight[k] = w[k] / sum;
    }
  }
  return map;
}

StrandSet interpolate_children(const StrandSet& guides, const GuideChildMap& map,
                               const std::vector<Vec3>& child_roots) {
  if (map.entries.size() != child_roots.size())
    throw ContractError("guide map and child root counts differ");
  if (guides.strands.empty()) throw ContractError("no guide strands");
  size_t nv = guides.strands[0].vertices.size();
  for (const auto& s : guides.strands)
    if (s.vertices.size() != nv) throw ContractError("guides have mismatched vertex counts");
  StrandSet children;
  children.strands.resize(child_roots.size());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < (int)child_roots.size(); ++c) {
    const auto& e = map.entries[c];
    Strand s;
    s.vertices.resize(nv);
    for (size_t j = 0; j < nv; ++j) {
      Vec3 off = Vec3::Zero();
      for (int k = 0; k < 4; ++k) {
        if (e.weight[k] == 0.0) continue;
        const auto& gv = guides.strands[e.guide[k]].vertices;
        off += e.weight[k] * (gv[j] - gv[0]);
      }
      s.vertices[j] = child_roots[c] + off;
    }
    children.strands[c] = std::move(s);
  }
  return children;
}

SyntheticScene generate_synthetic_scene(const SceneParams& params, uint64_t seed) {
  if (params.verts_per_strand < 2) throw ConfigError("verts_per_strand must be >= 2");
  SyntheticScene scene;
  scene.scalp = make_scalp(params.n_guides, params.scalp_radius);
  const auto& verts = scene.scalp.mesh.positions;

  Rng phase_rng(seed, 7001);
  scene.gt_guides.strands.reserve(verts.size());
  for (size_t i = 0; i < verts.size(); ++i) {
    double phase = phase_rng.uniform(0.0, 2.0 * kPi);
    scene.gt_guides.strands.push_back(grow_strand(verts[i], scene.scalp.vertex_normals[i],
                                                  params.style, params.strand_length,
                                                  params.verts_per_strand, phase));
  }

  scene.child_roots = sample_child_roots(scene.scalp, params.n_children, seed);
  std::vector<Vec3> guide_roots(verts.begin(), verts.end());
  scene.child_map = nearest_four_guides(guide_roots, scene.child_roots);
  scene.gt_children = interpolate_children(scene.gt_guides, scene.child_map, scene.child_roots);

  // Solids for the flow-field domain. The shell hugs the hair with a margin
  // and is closed below the lowest strand point so it stays watertight.
  double r_max = params.scalp_radius, z_min = 0.0;
  for (const auto* set : {&scene.gt_guides, &scene.gt_children})
    for (const auto& s : set->strands)
      for (const auto& p : s.vertices) {
        r_max = std::max(r_max, p.norm());
        z_min = std::min(z_min, p.z());
      }
  double shell_radius = r_max + 5.0;
  double drop = std::max(0.0, -z_min) + 5.0;

  int rings, sectors;
  pick_tessellation(params.n_guides, rings, sectors);

  scene.scalp_solid = make_dome(params.scalp_radius, rings, sectors);
  {
    TriMesh& m = scene.scalp_solid;
    int eq0 = 1 + (rings - 1) * sectors;
    int center = (int)m.positions.size();
    m.positions.emplace_back(0, 0, 0);
    for (int j = 0; j < sectors; ++j)
      m.triangles.push_back({center, eq0 + (j + 1) % sectors, eq0 + j});
  }

  scene.shell_solid = make_dome(shell_radius, rings, sectors);
  {
    TriMesh& m = scene.shell_solid;
    int eq0 = 1 + (rings - 1) * sectors;
    int bot0 = (int)m.positions.size();
    for (int j = 0; j < sectors; ++j) {
      Vec3 e = m.positions[eq0 + j];
      m.positions.emplace_back(e.x(), e.y(), -drop);
    }
    for (int j = 0; j < sectors; ++j) {
      int a = eq0 + j, b = eq0 + (j + 1) % sectors;
      int c = bot0 + j, d = bot0 + (j + 1) % sectors;
      m.triangles.push_back({a, c, d});
      m.triangles.push_back({a, d, b});
    }
    int center = (int)m.positions.size();
    m.positions.emplace_back(0, 0, -drop);
    for (int j = 0; j < sectors; ++j)
      m.triangles.push_back({center, bot0 + (j + 1) % sectors, bot0 + j});
  }
  return scene;
}

std::vector<Camera> make_camera_ring(int n, double radius, const Vec3& center, double fx,
                                     int image_size) {
  if (n < 1) throw ConfigError("camera count must be >= 1");
  std::vector<Camera> cams;
  cams.reserve(n);
  const double ga = 2.39996322972865332;
  for (int i = 0; i < n; ++i) {
    double z = 0.12 + 0.68 * (i + 0.5) / n;  // elevation band, avoids the pole
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double a = ga * i;
    Vec3 dir(r * std::cos(a), r * std::sin(a), z);
    Vec3 pos = center + radius * dir;
    Vec3 f = (center - pos).normalized();
    Vec3 g(0, 0, -1);
    Vec3 ycam = g - g.dot(f) * f;
    if (ycam.norm() < 1e-6) ycam = Vec3(1, 0, 0) - f.x() * f;
    ycam.normalize();
    Vec3 xcam = ycam.cross(f);
    Camera c;
    c.R.row(0) = xcam.transpose();
    c.R.row(1) = ycam.transpose();
    c.R.row(2) = f.transpose();
    c.t = -(c.R * pos);
    c.fx = c.fy = fx;
    c.cx = c.cy = image_size * 0.5;
    c.width = c.height = image_size;
    cams.push_back(c);
  }
  return cams;
}

}  // namespace strandopt
