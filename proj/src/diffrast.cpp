#include "strandopt/diffrast.hpp"

#include <cmath>
#include <limits>

#include "raster_detail.hpp"

namespace strandopt {

using detail::cross2;
using detail::ProjectedVerts;

const int kNeighborDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
const int kNeighborDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

int channel_arity(Channel c) {
  switch (c) {
    case Channel::Silhouette:
    case Channel::Depth: return 1;
    default: return 3;
  }
}

RenderBuffers rasterize(const BillboardMesh& mesh, const Camera& camera) {
  if (camera.width <= 0 || camera.height <= 0) throw ConfigError("camera image size not set");
  RenderBuffers rb;
  rb.width = camera.width;
  rb.height = camera.height;
  size_t npx = (size_t)rb.width * rb.height;
  rb.tri.assign(npx, -1);
  rb.depth.assign(npx, std::numeric_limits<double>::infinity());
  rb.b0.assign(npx, 0.0);
  rb.b1.assign(npx, 0.0);

  ProjectedVerts pv = detail::project_all(mesh, camera);
  int ntri = (int)mesh.triangles.size();
  std::vector<detail::TriSetup> setups(ntri);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < ntri; ++t)
    setups[t] = detail::setup_triangle(pv, mesh.triangles[t], rb.width, rb.height);

  // Row bins, triangle order preserved; each row is then owned by one thread.
  std::vector<int> row_count(rb.height + 1, 0);
  for (int t = 0; t < ntri; ++t) {
    if (!setups[t].valid) continue;
    for (int y = setups[t].ymin; y <= setups[t].ymax; ++y) row_count[y + 1]++;
  }
  for (int y = 0; y < rb.height; ++y) row_count[y + 1] += row_count[y];
  std::vector<int> bins(row_count.back());
  {
    std::vector<int> cursor(row_count.begin(), row_count.end() - 1);
    for (int t = 0; t < ntri; ++t) {
      if (!setups[t].valid) continue;
      for (int y = setups[t].ymin; y <= setups[t].ymax; ++y) bins[cursor[y]++] = t;
    }
  }

#pragma omp parallel for schedule(static)
  for (int y = 0; y < rb.height; ++y) {
    for (int k = row_count[y]; k < row_count[y + 1]; ++k) {
      int t = bins[k];
      const auto& s = setups[t];
      for (int x = s.xmin; x <= s.xmax; ++x) {
        double z, b0, b1;
        if (!detail::shade_pixel(s, x, y, z, b0, b1)) continue;
        size_t p = rb.pixel(x, y);
        if (z < rb.depth[p] || (z == rb.depth[p] && t < rb.tri[p])) {
          rb.depth[p] = z;
          rb.tri[p] = t;
          rb.b0[p] = b0;
          rb.b1[p] = b1;
        }
      }
    }
  }
  return rb;
}

namespace {

// Crossing search for one pixel pair. p0/p1 are the two pixel centers.
// A real crossing (edge strictly between the centers) always outranks a
// clamped candidate; among real crossings the closest depth wins, and the
// clamped fallback picks the edge nearest the neighbor pixel.
bool find_crossing(const BillboardMesh& mesh, const ProjectedVerts& pv, int owner_tri,
                   const Vec2& p0, const Vec2& p1, Crossing& out) {
  int group = mesh.tri_group[owner_tri];
  Vec2 d = p1 - p0;
  double best_depth = std::numeric_limits<double>::infinity();
  double best_dist = std::numeric_limits<double>::infinity();
  bool found = false, found_real = false;
  for (int k = mesh.group_edge_start[group]; k < mesh.group_edge_start[group + 1]; ++k) {
    int ia = mesh.group_edges[k][0], ib = mesh.group_edges[k][1];
    Vec2 A = pv.uv[ia], B = pv.uv[ib];
    Vec2 e = B - A;
    double denom = cross2(d, e);
    if (std::abs(denom) < 1e-14) continue;
    Vec2 q = A - p0;
    double t = cross2(q, e) / denom;
    double v = cross2(q, d) / denom;
    if (v < 0.0 || v > 1.0) continue;
    bool real = t > 0.0 && t < 1.0;
    bool take;
    if (real) {
      double zc = 1.0 / ((1.0 - v) / pv.z[ia] + v / pv.z[ib]);
      take = !found_real || zc < best_depth;
      if (take) best_depth = zc;
      found_real = true;
    } else {
      if (found_real) continue;
      double len2 = e.squaredNorm();
      double s = len2 > 0.0 ? std::clamp((p1 - A).dot(e) / len2, 0.0, 1.0) : 0.0;
      double dist = (A + s * e - p1).squaredNorm();
      take = dist < best_dist;
      if (take) best_dist = dist;
    }
    if (take) {
      out.owner_tri = owner_tri;
      out.a = ia;
      out.b = ib;
      out.r = std::clamp(t, 0.0, 1.0);
      out.active = real;
      found = true;
    }
  }
  return found;
}

}  // namespace

AAOutput antialias(const BillboardMesh& mesh, const Camera& camera, const RenderBuffers& rb) {
  AAOutput aa;
  aa.width = rb.width;
  aa.height = rb.height;
  size_t npx = (size_t)rb.width * rb.height;
  ProjectedVerts pv = detail::project_all(mesh, camera);

  std::vector<std::vector<Crossing>> row_records(rb.height);
  std::vector<std::vector<int>> row_pixels(rb.height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < rb.height; ++y) {
    auto& recs = row_records[y];
    auto& pixs = row_pixels[y];
    for (int x = 0; x < rb.width; ++x) {
      size_t p = rb.pixel(x, y);
      int ts = rb.tri[p];
      int gs = ts >= 0 ? mesh.tri_group[ts] : -1;
      for (int n = 0; n < 8; ++n) {
        int xn = x + kNeighborDx[n], yn = y + kNeighborDy[n];
        if (xn < 0 || xn >= rb.width || yn < 0 || yn >= rb.height) continue;
        size_t pn = rb.pixel(xn, yn);
        int tn = rb.tri[pn];
        int gn = tn >= 0 ? mesh.tri_group[tn] : -1;
        if (gs == gn) continue;
        bool owner_s;
        if (rb.depth[p] < rb.depth[pn]) owner_s = true;
        else if (rb.depth[pn] < rb.depth[p]) owner_s = false;
        else owner_s = ts < tn;
        int ot = owner_s ? ts : tn;
        Crossing c;
        c.neighbor = n;
        Vec2 p0(x + 0.5, y + 0.5), p1(xn + 0.5, yn + 0.5);
        if (!find_crossing(mesh, pv, ot, p0, p1, c)) continue;
        recs.push_back(c);
        pixs.push_back((int)p);
      }
    }
  }

  aa.offset.assign(npx + 1, 0);
  size_t total = 0;
  for (auto& r : row_records) total += r.size();
  aa.records.reserve(total);
  for (int y = 0; y < rb.height; ++y)
    for (size_t k = 0; k < row_records[y].size(); ++k) {
      aa.offset[row_pixels[y][k] + 1]++;
      aa.records.push_back(row_records[y][k]);
    }
  for (size_t p = 0; p < npx; ++p) aa.offset[p + 1] += aa.offset[p];
  return aa;
}

std::vector<double> extract_channel(const BillboardMesh& mesh, const RenderBuffers& rb,
                                    Channel c) {
  size_t npx = (size_t)rb.width * rb.height;
  int arity = channel_arity(c);
  std::vector<double> plane(npx * arity, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < rb.height; ++y)
    for (int x = 0; x < rb.width; ++x) {
      size_t p = rb.pixel(x, y);
      int t = rb.tri[p];
      if (t < 0) continue;
      switch (c) {
        case Channel::Silhouette: plane[p] = 1.0; break;
        case Channel::Depth: plane[p] = rb.depth[p]; break;
        case Channel::Tangent: {
          const auto& f = mesh.triangles[t];
          double b0 = rb.b0[p], b1 = rb.b1[p], b2 = 1.0 - b0 - b1;
          Vec3 tv = b0 * mesh.tangent[f[0]] + b1 * mesh.tangent[f[1]] + b2 * mesh.tangent[f[2]];
          plane[p * 3 + 0] = tv.x();
          plane[p * 3 + 1] = tv.y();
          plane[p * 3 + 2] = tv.z();
          break;
        }
        case Channel::IdColor: {
          int si = mesh.tri_strand[t];
          Vec3 col = (si >= 0 && si < (int)mesh.strand_color.size()) ? mesh.strand_color[si]
                                                                     : Vec3::Zero();
          plane[p * 3 + 0] = col.x();
          plane[p * 3 + 1] = col.y();
          plane[p * 3 + 2] = col.z();
          break;
        }
      }
    }
  return plane;
}

std::vector<double> aa_apply(const AAOutput& aa, const std::vector<double>& plane, int arity) {
  size_t npx = (size_t)aa.width * aa.height;
  std::vector<double> out(npx * arity);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < aa.height; ++y)
    for (int x = 0; x < aa.width; ++x) {
      size_t p = (size_t)y * aa.width + x;
      int n0 = aa.offset[p], n1 = aa.offset[p + 1];
      for (int k = 0; k < arity; ++k) {
        double cs = plane[p * arity + k];
        double acc = (9.0 - (n1 - n0)) * cs;
        for (int ri = n0; ri < n1; ++ri) {
          const Crossing& c = aa.records[ri];
          size_t pn = p + (size_t)(kNeighborDy[c.neighbor] * aa.width + kNeighborDx[c.neighbor]);
          acc += c.r * cs + (1.0 - c.r) * plane[pn * arity + k];
        }
        out[p * arity + k] = acc / 9.0;
      }
    }
  return out;
}

VertexGrads diffrast_backward(const BillboardMesh& mesh, const Camera& camera,
                              const RenderBuffers& rb, const AAOutput& aa,
                              const AAGradients& upstream) {
  VertexGrads grads;
  grads.init(mesh.positions.size());
  size_t npx = (size_t)rb.width * rb.height;

  std::vector<double> sil = extract_channel(mesh, rb, Channel::Silhouette);
  std::vector<double> dep = extract_channel(mesh, rb, Channel::Depth);
  std::vector<double> tan = extract_channel(mesh, rb, Channel::Tangent);
  const std::vector<double>* planes[3] = {&sil, &dep, &tan};
  const std::vector<double>* ups[3] = {&upstream.silhouette, &upstream.depth, &upstream.tangent};
  const int arity[3] = {1, 1, 3};

  // Backward through the 9-tap blend: gradients to pre-AA planes and to r.
  std::vector<double> dsil(npx, 0.0), ddep(npx, 0.0), dtan(npx * 3, 0.0);
  std::vector<double>* dplanes[3] = {&dsil, &ddep, &dtan};
  std::vector<double> dr(aa.records.size(), 0.0);
  for (size_t p = 0; p < npx; ++p) {
    int n0 = aa.offset[p], n1 = aa.offset[p + 1];
    for (int ch = 0; ch < 3; ++ch) {
      const auto& up = *ups[ch];
      const auto& plane = *planes[ch];
      auto& dplane = *dplanes[ch];
      for (int k = 0; k < arity[ch]; ++k) {
        double u = up[p * arity[ch] + k];
        if (u == 0.0) continue;
        double u9 = u / 9.0;
        dplane[p * arity[ch] + k] += (9.0 - (n1 - n0)) * u9;
        for (int ri = n0; ri < n1; ++ri) {
          const Crossing& c = aa.records[ri];
          size_t pn = p + (size_t)(kNeighborDy[c.neighbor] * rb.width + kNeighborDx[c.neighbor]);
          double cs = plane[p * arity[ch] + k];
          double cn = plane[pn * arity[ch] + k];
          dplane[p * arity[ch] + k] += c.r * u9;
          dplane[pn * arity[ch] + k] += (1.0 - c.r) * u9;
          dr[ri] += (cs - cn) * u9;
        }
      }
    }
  }

  // Pre-AA planes to vertex attributes through the interpolation weights.
  for (size_t p = 0; p < npx; ++p) {
    int t = rb.tri[p];
    if (t < 0) continue;
    const auto& f = mesh.triangles[t];
    double b[3] = {rb.b0[p], rb.b1[p], 1.0 - rb.b0[p] - rb.b1[p]};
    if (ddep[p] != 0.0)
      for (int i = 0; i < 3; ++i) grads.depth[f[i]] += b[i] * ddep[p];
    for (int k = 0; k < 3; ++k) {
      double u = dtan[p * 3 + k];
      if (u == 0.0) continue;
      for (int i = 0; i < 3; ++i) grads.tangent[f[i]][k] += b[i] * u;
    }
  }

  // r to the screen positions of the crossed edge's endpoints, then to world.
  ProjectedVerts pv = detail::project_all(mesh, camera);
  for (size_t p = 0; p < npx; ++p) {
    int x = (int)(p % rb.width), y = (int)(p / rb.width);
    for (int ri = aa.offset[p]; ri < aa.offset[p + 1]; ++ri) {
      const Crossing& c = aa.records[ri];
      if (!c.active || dr[ri] == 0.0) continue;
      Vec2 p0(x + 0.5, y + 0.5);
      Vec2 p1(x + kNeighborDx[c.neighbor] + 0.5, y + kNeighborDy[c.neighbor] + 0.5);
      Vec2 A = pv.uv[c.a], B = pv.uv[c.b];
      Vec2 d = p1 - p0, e = B - A, q = A - p0;
      double D = cross2(d, e);
      if (std::abs(D) < 1e-14) continue;
      double N = cross2(q, e);
      double D2 = D * D;
      // dN/dA etc. from N = (Ax-p0x)(By-Ay) - (Ay-p0y)(Bx-Ax)
      Vec2 dNdA(B.y() - p0.y(), -(B.x() - p0.x()));
      Vec2 dNdB(-(A.y() - p0.y()), A.x() - p0.x());
      Vec2 dDdA(d.y(), -d.x());
      Vec2 dDdB(-d.y(), d.x());
      Vec2 dtdA = (dNdA * D - N * dDdA) / D2;
      Vec2 dtdB = (dNdB * D - N * dDdB) / D2;
      for (int side = 0; side < 2; ++side) {
        int vi = side == 0 ? c.a : c.b;
        Vec2 dscreen = (side == 0 ? dtdA : dtdB) * dr[ri];
        Vec3 pc = camera.to_camera(mesh.positions[vi]);
        double iz = 1.0 / pc.z();
        Vec3 du = camera.fx * iz * (camera.R.row(0).transpose() - pc.x() * iz * camera.R.row(2).transpose());
        Vec3 dv = camera.fy * iz * (camera.R.row(1).transpose() - pc.y() * iz * camera.R.row(2).transpose());
        grads.pos[vi] += dscreen.x() * du + dscreen.y() * dv;
      }
    }
  }
  return grads;
}

void orient2d_from_tangent(const std::vector<double>& tangent_aa, const Camera& camera,
                           std::vector<double>& encoded, std::vector<uint8_t>& valid) {
  size_t npx = tangent_aa.size() / 3;
  encoded.assign(npx * 2, 0.0);
  valid.assign(npx, 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      size_t p = (size_t)y * camera.width + x;
      Vec3 tw(tangent_aa[p * 3], tangent_aa[p * 3 + 1], tangent_aa[p * 3 + 2]);
      Vec3 tc = camera.R * tw;
      double un = (x + 0.5 - camera.cx) / camera.fx;
      double vn = (y + 0.5 - camera.cy) / camera.fy;
      double gx = camera.fx * (tc.x() - un * tc.z());
      double gy = camera.fy * (tc.y() - vn * tc.z());
      double m = gx * gx + gy * gy;
      if (m < 1e-12) continue;
      encoded[p * 2 + 0] = (gx * gx - gy * gy) / m;
      encoded[p * 2 + 1] = 2.0 * gx * gy / m;
      valid[p] = 1;
    }
}

void orient2d_backward(const std::vector<double>& tangent_aa, const Camera& camera,
                       const std::vector<double>& up_encoded, std::vector<double>& up_tangent) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) {
      size_t p = (size_t)y * camera.width + x;
      double ue1 = up_encoded[p * 2], ue2 = up_encoded[p * 2 + 1];
      if (ue1 == 0.0 && ue2 == 0.0) continue;
      Vec3 tw(tangent_aa[p * 3], tangent_aa[p * 3 + 1], tangent_aa[p * 3 + 2]);
      Vec3 tc = camera.R * tw;
      double un = (x + 0.5 - camera.cx) / camera.fx;
      double vn = (y + 0.5 - camera.cy) / camera.fy;
      double gx = camera.fx * (tc.x() - un * tc.z());
      double gy = camera.fy * (tc.y() - vn * tc.z());
      double m = gx * gx + gy * gy;
      if (m < 1e-12) continue;
      double m2 = m * m;
      double de1dgx = 4.0 * gx * gy * gy / m2;
      double de1dgy = -4.0 * gx * gx * gy / m2;
      double de2dgx = 2.0 * gy * (gy * gy - gx * gx) / m2;
      double de2dgy = 2.0 * gx * (gx * gx - gy * gy) / m2;
      double dgx = ue1 * de1dgx + ue2 * de2dgx;
      double dgy = ue1 * de1dgy + ue2 * de2dgy;
      // g = (fx (tcx - un tcz), fy (tcy - vn tcz)), tc = R tw
      Vec3 dtc(camera.fx * dgx, camera.fy * dgy,
               -camera.fx * un * dgx - camera.fy * vn * dgy);
      Vec3 dtw = camera.R.transpose() * dtc;
      up_tangent[p * 3 + 0] += dtw.x();
      up_tangent[p * 3 + 1] += dtw.y();
      up_tangent[p * 3 + 2] += dtw.z();
    }
}

BillboardMesh wrap_trimesh(const TriMesh& mesh) {
  BillboardMesh bm;
  bm.positions = mesh.positions;
  bm.tangent.assign(mesh.positions.size(), Vec3::Zero());
  bm.vertex_strand.assign(mesh.positions.size(), -1);
  bm.triangles = mesh.triangles;
  bm.n_groups = (int)mesh.triangles.size();
  bm.tri_group.resize(mesh.triangles.size());
  bm.tri_strand.assign(mesh.triangles.size(), -1);
  bm.group_edge_start.resize(mesh.triangles.size() + 1);
  bm.group_edges.reserve(mesh.triangles.size() * 3);
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    bm.tri_group[t] = (int)t;
    bm.group_edge_start[t] = (int)bm.group_edges.size();
    const auto& f = mesh.triangles[t];
    bm.group_edges.push_back({f[0], f[1]});
    bm.group_edges.push_back({f[1], f[2]});
    bm.group_edges.push_back({f[2], f[0]});
  }
  bm.group_edge_start[mesh.triangles.size()] = (int)bm.group_edges.size();
  return bm;
}

RenderOutputs render_channels(const BillboardMesh& mesh, const Camera& camera) {
  RenderOutputs out;
  out.buffers = rasterize(mesh, camera);
  out.aa = antialias(mesh, camera, out.buffers);
  out.silhouette = aa_apply(out.aa, extract_channel(mesh, out.buffers, Channel::Silhouette), 1);
  out.depth = aa_apply(out.aa, extract_channel(mesh, out.buffers, Channel::Depth), 1);
  out.tangent = aa_apply(out.aa, extract_channel(mesh, out.buffers, Channel::Tangent), 3);
  out.id_color = aa_apply(out.aa, extract_channel(mesh, out.buffers, Channel::IdColor), 3);
  orient2d_from_tangent(out.tangent, camera, out.orient2d, out.orient2d_valid);
  return out;
}

}  // namespace strandopt
