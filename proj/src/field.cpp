#include "strandopt/field.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "strandopt/spatial_grid.hpp"
#include "strandopt/spline.hpp"

namespace strandopt {

namespace {

void check_watertight(const TriMesh& mesh, const char* name) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& f : mesh.triangles) {
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw ContractError(std::string(name) + " mesh has a degenerate face");
    for (int e = 0; e < 3; ++e) count[{f[e], f[(e + 1) % 3]}]++;
  }
  for (const auto& [edge, c] : count) {
    auto rev = count.find({edge.second, edge.first});
    int cr = rev == count.end() ? 0 : rev->second;
    if (c != 1 || cr != 1)
      throw ContractError(std::string(name) + " mesh is not watertight: edge " +
                          std::to_string(edge.first) + "-" + std::to_string(edge.second) +
                          " bounds " + std::to_string(c + cr) + " half-edges");
  }
}

double cross2d(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool edge_included(double e, const Vec2& w) {
  if (e > 0.0) return true;
  if (e < 0.0) return false;
  return w.y() == 0.0 ? w.x() > 0.0 : w.y() < 0.0;  // consistent tie rule on shared edges
}

// Center-parity voxelization: one ray along +x per (y,z) row of voxel
// centers; crossings found by 2D coverage of the centers in the (y,z)
// projection, x recovered from the face plane.
std::vector<uint8_t> inside_mask(const TriMesh& mesh, const OrientationVolume& vol) {
  std::vector<std::vector<double>> rows((size_t)vol.ny * vol.nz);
  for (const auto& f : mesh.triangles) {
    Vec3 A = mesh.positions[f[0]], B = mesh.positions[f[1]], C = mesh.positions[f[2]];
    Vec2 q0(A.y(), A.z()), q1(B.y(), B.z()), q2(C.y(), C.z());
    double area2 = cross2d(q1 - q0, q2 - q0);
    if (area2 == 0.0) continue;  // face parallel to the ray: measure-zero crossings
    double s = area2 > 0.0 ? 1.0 : -1.0;
    Vec3 n = (B - A).cross(C - A);
    double pd = n.dot(A);
    double ulo = std::min({q0.x(), q1.x(), q2.x()}), uhi = std::max({q0.x(), q1.x(), q2.x()});
    double vlo = std::min({q0.y(), q1.y(), q2.y()}), vhi = std::max({q0.y(), q1.y(), q2.y()});
    int iy0 = std::max(0, (int)std::floor((ulo - vol.origin.y()) / vol.h - 0.5));
    int iy1 = std::min(vol.ny - 1, (int)std::ceil((uhi - vol.origin.y()) / vol.h - 0.5));
    int iz0 = std::max(0, (int)std::floor((vlo - vol.origin.z()) / vol.h - 0.5));
    int iz1 = std::min(vol.nz - 1, (int)std::ceil((vhi - vol.origin.z()) / vol.h - 0.5));
    for (int iz = iz0; iz <= iz1; ++iz)
      for (int iy = iy0; iy <= iy1; ++iy) {
        Vec2 p(vol.origin.y() + vol.h * (iy + 0.5), vol.origin.z() + vol.h * (iz + 0.5));
        double e0 = s * cross2d(q1 - q0, p - q0);
        double e1 = s * cross2d(q2 - q1, p - q1);
        double e2 = s * cross2d(q0 - q2, p - q2);
        if (!edge_included(e0, Vec2(s * (q1 - q0))) || !edge_included(e1, Vec2(s * (q2 - q1))) ||
            !edge_included(e2, Vec2(s * (q0 - q2))))
          continue;
        rows[(size_t)iz * vol.ny + iy].push_back((pd - n.y() * p.x() - n.z() * p.y()) / n.x());
      }
  }
  std::vector<uint8_t> inside((size_t)vol.nx * vol.ny * vol.nz, 0);
#pragma omp parallel for schedule(static)
  for (int iz = 0; iz < vol.nz; ++iz)
    for (int iy = 0; iy < vol.ny; ++iy) {
      auto& xs = rows[(size_t)iz * vol.ny + iy];
      if (xs.empty()) continue;
      std::sort(xs.begin(), xs.end());
      size_t k = 0;
      for (int ix = 0; ix < vol.nx; ++ix) {
        double cx = vol.origin.x() + vol.h * (ix + 0.5);
        while (k < xs.size() && xs[k] <= cx) ++k;
        if ((xs.size() - k) & 1) inside[vol.idx(ix, iy, iz)] = 1;
      }
    }
  return inside;
}

const int kStencilDx[6] = {1, -1, 0, 0, 0, 0};
const int kStencilDy[6] = {0, 0, 1, -1, 0, 0};
const int kStencilDz[6] = {0, 0, 0, 0, 1, -1};

}  // namespace

OrientationVolume voxelize_domain(const TriMesh& scalp_solid, const TriMesh& shell_solid,
                                  double h_mm) {
  if (h_mm <= 0.0) throw ConfigError("voxel size must be positive");
  check_watertight(shell_solid, "shell");
  check_watertight(scalp_solid, "scalp");
  if (shell_solid.positions.empty()) throw ContractError("shell mesh is empty");

  OrientationVolume vol;
  vol.h = h_mm;
  Vec3 lo = shell_solid.positions[0], hi = lo;
  for (const auto& p : shell_solid.positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  vol.origin = lo - Vec3(h_mm, h_mm, h_mm);
  vol.nx = (int)std::ceil((hi.x() - lo.x()) / h_mm) + 2;
  vol.ny = (int)std::ceil((hi.y() - lo.y()) / h_mm) + 2;
  vol.nz = (int)std::ceil((hi.z() - lo.z()) / h_mm) + 2;
  size_t n = (size_t)vol.nx * vol.ny * vol.nz;
  vol.label.assign(n, VoxelLabel::kExterior);
  vol.value.assign(n, Vec3::Zero());

  std::vector<uint8_t> in_shell = inside_mask(shell_solid, vol);
  std::vector<uint8_t> in_scalp = inside_mask(scalp_solid, vol);

  size_t interior = 0;
  for (size_t i = 0; i < n; ++i)
    if (in_shell[i] && !in_scalp[i]) {
      vol.label[i] = VoxelLabel::kInterior;
      ++interior;
    }
  if (interior == 0) throw ContractError("empty domain: no interior voxels at this resolution");

#pragma omp parallel for schedule(static)
  for (int z = 0; z < vol.nz; ++z)
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x) {
        size_t i = vol.idx(x, y, z);
        if (vol.label[i] == VoxelLabel::kInterior) continue;
        bool touches = false;
        for (int s = 0; s < 6 && !touches; ++s) {
          int xx = x + kStencilDx[s], yy = y + kStencilDy[s], zz = z + kStencilDz[s];
          touches = vol.in_bounds(xx, yy, zz) &&
                    vol.label[vol.idx(xx, yy, zz)] == VoxelLabel::kInterior;
        }
        if (touches)
          vol.label[i] = in_scalp[i] ? VoxelLabel::kBoundaryS : VoxelLabel::kBoundaryH;
      }
  return vol;
}

void set_boundary(OrientationVolume& vol, const OrientedPointCloud& cloud,
                  const ScalpSurface& scalp, const Vec3& down) {
  if (scalp.vertex_normals.size() != scalp.mesh.positions.size())
    throw ContractError("scalp normals length mismatch");
  SpatialGrid cloud_grid;
  if (cloud.size()) cloud_grid.build(cloud.positions, vol.h);
  SpatialGrid scalp_grid;
  if (!scalp.mesh.positions.empty()) {
    Vec3 lo = scalp.mesh.positions[0], hi = lo;
    for (const auto& p : scalp.mesh.positions) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    double cell = std::max(1e-6, (hi - lo).norm() /
                                     std::max(4.0, std::cbrt((double)scalp.mesh.positions.size())));
    scalp_grid.build(scalp.mesh.positions, cell);
  }

#pragma omp parallel
  {
    std::vector<int> hits;
#pragma omp for schedule(static)
    for (int z = 0; z < vol.nz; ++z)
      for (int y = 0; y < vol.ny; ++y)
        for (int x = 0; x < vol.nx; ++x) {
          size_t i = vol.idx(x, y, z);
          if (vol.label[i] == VoxelLabel::kBoundaryH) {
            Vec3 acc = Vec3::Zero();
            if (cloud.size()) {
              cloud_grid.query_radius(vol.center(x, y, z), vol.h, hits);
              for (int j : hits) acc += cloud.confidence[j] * cloud.directions[j];
            }
            double nrm = acc.norm();
            if (nrm > 1e-12) {
              vol.value[i] = acc / nrm;
            } else {
              vol.label[i] = VoxelLabel::kBoundaryU;  // no valid orientation evidence
              vol.value[i] = Vec3::Zero();
            }
          } else if (vol.label[i] == VoxelLabel::kBoundaryS) {
            if (scalp.mesh.positions.empty()) throw ContractError("scalp surface is empty");
            scalp_grid.query_knn(vol.center(x, y, z), 1, hits);
            Vec3 ns = scalp.vertex_normals[hits[0]];
            Vec3 s = ns + down * std::min(ns.dot(down) + 1.0, 1.0);
            vol.value[i] = s.normalized();
          } else if (vol.label[i] == VoxelLabel::kInterior) {
            vol.value[i] = Vec3::Zero();
          }
        }
  }
}

namespace {

Vec3 stencil_mean(const OrientationVolume& vol, int x, int y, int z) {
  Vec3 sum = Vec3::Zero();
  int cnt = 0;
  for (int s = 0; s < 6; ++s) {
    int xx = x + kStencilDx[s], yy = y + kStencilDy[s], zz = z + kStencilDz[s];
    if (!vol.in_bounds(xx, yy, zz)) continue;
    size_t j = vol.idx(xx, yy, zz);
    if (!vol.in_domain(j)) continue;  // Neumann closure: exterior neighbors drop out
    sum += vol.value[j];
    ++cnt;
  }
  return cnt ? Vec3(sum / cnt) : Vec3::Zero();
}

void check_solver_inputs(const OrientationVolume& vol, double omega) {
  if (!(omega >= 1.0 && omega < 2.0)) throw ConfigError("omega must be in [1, 2)");
  bool any_fixed = false;
  for (size_t i = 0; i < vol.label.size() && !any_fixed; ++i) any_fixed = vol.fixed(i);
  if (!any_fixed) throw ContractError("unconstrained system: no fixed boundary voxels");
}

void normalize_free(OrientationVolume& vol) {
  std::vector<Vec3> fixed_pos;
  std::vector<size_t> fixed_idx;
  for (int z = 0; z < vol.nz; ++z)
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x) {
        size_t i = vol.idx(x, y, z);
        if (vol.fixed(i)) {
          fixed_pos.push_back(vol.center(x, y, z));
          fixed_idx.push_back(i);
        }
      }
  SpatialGrid grid(fixed_pos, vol.h * 2.0);
#pragma omp parallel
  {
    std::vector<int> hit;
#pragma omp for schedule(static)
    for (int z = 0; z < vol.nz; ++z)
      for (int y = 0; y < vol.ny; ++y)
        for (int x = 0; x < vol.nx; ++x) {
          size_t i = vol.idx(x, y, z);
          if (!vol.free_voxel(i)) continue;
          double n = vol.value[i].norm();
          if (n > 1e-12) {
            vol.value[i] /= n;
          } else {
            grid.query_knn(vol.center(x, y, z), 1, hit);
            vol.value[i] = vol.value[fixed_idx[hit[0]]];
          }
        }
  }
}

}  // namespace

SolveStats solve_laplace_sor(OrientationVolume& vol, double omega, double tol, int max_iter,
                             bool normalize) {
  check_solver_inputs(vol, omega);
  SolveStats stats;
  for (int it = 0; it < max_iter; ++it) {
    double max_update = 0.0;
    for (int color = 0; color < 2; ++color) {
#pragma omp parallel for schedule(static) reduction(max : max_update)
      for (int z = 0; z < vol.nz; ++z)
        for (int y = 0; y < vol.ny; ++y)
          for (int x = (z + y + color) & 1; x < vol.nx; x += 2) {
            size_t i = vol.idx(x, y, z);
            if (!vol.free_voxel(i)) continue;
            Vec3 delta = omega * (stencil_mean(vol, x, y, z) - vol.value[i]);
            vol.value[i] += delta;
            max_update = std::max(max_update, delta.cwiseAbs().maxCoeff());
          }
    }
    stats.iterations = it + 1;
    stats.last_update = max_update;
    if (max_update < tol) break;
  }
  if (normalize) normalize_free(vol);
  return stats;
}

namespace reference {

SolveStats solve_laplace_sor(OrientationVolume& vol, double omega, double tol, int max_iter,
                             bool normalize) {
  check_solver_inputs(vol, omega);
  SolveStats stats;
  for (int it = 0; it < max_iter; ++it) {
    double max_update = 0.0;
    for (int z = 0; z < vol.nz; ++z)
      for (int y = 0; y < vol.ny; ++y)
        for (int x = 0; x < vol.nx; ++x) {
          size_t i = vol.idx(x, y, z);
          if (!vol.free_voxel(i)) continue;
          Vec3 delta = omega * (stencil_mean(vol, x, y, z) - vol.value[i]);
          vol.value[i] += delta;
          max_update = std::max(max_update, delta.cwiseAbs().maxCoeff());
        }
    stats.iterations = it + 1;
    stats.last_update = max_update;
    if (max_update < tol) break;
  }
  if (normalize) normalize_free(vol);
  return stats;
}

}  // namespace reference

namespace {

// Trilinear over the 8 surrounding voxel centers, exterior corners dropped
// with the weights renormalized. Zero when nothing usable surrounds p.
Vec3 sample_field(const OrientationVolume& vol, const Vec3& p) {
  Vec3 g = (p - vol.origin) / vol.h - Vec3(0.5, 0.5, 0.5);
  int bx = (int)std::floor(g.x()), by = (int)std::floor(g.y()), bz = (int)std::floor(g.z());
  double fx = g.x() - bx, fy = g.y() - by, fz = g.z() - bz;
  Vec3 acc = Vec3::Zero();
  double wsum = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        int x = bx + dx, y0 = by + dy, z = bz + dz;
        if (!vol.in_bounds(x, y0, z)) continue;
        size_t i = vol.idx(x, y0, z);
        if (!vol.in_domain(i)) continue;
        double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
        acc += w * vol.value[i];
        wsum += w;
      }
  if (wsum <= 1e-12) return Vec3::Zero();
  return acc / wsum;
}

VoxelLabel label_at(const OrientationVolume& vol, const Vec3& p) {
  int x = (int)std::floor((p.x() - vol.origin.x()) / vol.h);
  int y = (int)std::floor((p.y() - vol.origin.y()) / vol.h);
  int z = (int)std::floor((p.z() - vol.origin.z()) / vol.h);
  if (!vol.in_bounds(x, y, z)) return VoxelLabel::kExterior;
  return vol.label[vol.idx(x, y, z)];
}

}  // namespace

TraceResult trace_strands(const OrientationVolume& vol, const std::vector<RootPoint>& roots,
                          const TraceParams& params) {
  double step = params.step_factor * vol.h;
  std::vector<Strand> traced(roots.size());
  std::vector<uint8_t> ok(roots.size(), 0);
#pragma omp parallel for schedule(dynamic, 8)
  for (int ri = 0; ri < (int)roots.size(); ++ri) {
    VoxelLabel l0 = label_at(vol, roots[ri].position);
    if (l0 == VoxelLabel::kExterior) continue;  // root outside the grid domain
    Strand s;
    s.vertices.push_back(roots[ri].position);
    Vec3 p = roots[ri].position;
    for (int it = 0; it < params.max_steps; ++it) {
      Vec3 d = sample_field(vol, p);
      double n = d.norm();
      if (n <= 1e-12) {
        if (s.vertices.size() > 1) break;
        d = roots[ri].normal;  // degenerate field right at the root
        n = d.norm();
        if (n <= 1e-12) break;
      }
      Vec3 q = p + step * (d / n);
      VoxelLabel l = label_at(vol, q);
      if (l == VoxelLabel::kExterior || l == VoxelLabel::kBoundaryU) break;
      s.vertices.push_back(q);
      p = q;
      if (l == VoxelLabel::kBoundaryH) break;  // reached the hair surface
    }
    if (s.vertices.size() < 2) continue;
    if (params.vertex_count >= 2) s = resample_uniform(s, params.vertex_count);
    traced[ri] = std::move(s);
    ok[ri] = 1;
  }
  TraceResult res;
  for (size_t i = 0; i < roots.size(); ++i) {
    if (ok[i])
      res.strands.strands.push_back(std::move(traced[i]));
    else
      res.skipped_roots++;
  }
  return res;
}

VolumeDump dump_volume(const OrientationVolume& vol) {
  VolumeDump d;
  d.nx = vol.nx;
  d.ny = vol.ny;
  d.nz = vol.nz;
  d.channels = 3;
  d.h = vol.h;
  d.origin = vol.origin;
  d.data.reserve(vol.value.size() * 3);
  for (const auto& v : vol.value) {
    d.data.push_back((float)v.x());
    d.data.push_back((float)v.y());
    d.data.push_back((float)v.z());
  }
  return d;
}

}  // namespace strandopt
