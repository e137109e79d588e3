#include "strandopt/billboard.hpp"

#include <cmath>

namespace strandopt {

namespace {

constexpr double kZNear = 1e-6;
constexpr double kDegenerate = 1e-12;

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), 0, v.x();
  return m;
}

Vec3 arbitrary_perp(const Vec3& v) {
  Vec3 a = (std::abs(v.z()) < 0.9 * v.norm()) ? Vec3(0, 0, 1) : Vec3(0, 1, 0);
  return v.cross(a).normalized();
}

}  // namespace

Vec3 strand_preview_color(int strand_index) {
  // Golden-ratio hue walk, medium saturation; distinct for neighbors.
  double h = std::fmod(0.61803398875 * (strand_index + 1), 1.0) * 6.0;
  int i = (int)h;
  double f = h - i;
  double v = 1.0, s = 0.75;
  double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return Vec3(v, t, p);
    case 1: return Vec3(q, v, p);
    case 2: return Vec3(p, v, t);
    case 3: return Vec3(p, q, v);
    case 4: return Vec3(t, p, v);
    default: return Vec3(v, p, q);
  }
}

BillboardMesh build_billboards(const StrandSet& set, const Camera& camera, double width) {
  if (width <= 0.0) throw ConfigError("billboard width must be positive");
  validate_strandset(set);
  BillboardMesh mesh;
  mesh.width = width;
  const Vec3 cam_pos = camera.position();
  const double half = 0.5 * width;

  mesh.frame_start.push_back(0);
  mesh.strand_color.reserve(set.strands.size());

  for (int si = 0; si < (int)set.strands.size(); ++si) {
    mesh.strand_color.push_back(strand_preview_color(si));
    const auto& v = set.strands[si].vertices;
    int n = (int)v.size();

    // Rail frames at division points 0..n-2. The offset direction comes from
    // the outgoing segment; if that is parallel to the view ray, reuse the
    // previous frame, else fall back to a fixed perpendicular.
    std::vector<Vec3> rail_dir(n - 1);
    int last_own = -1;
    for (int j = 0; j + 1 < n; ++j) {
      Vec3 view = v[j] - cam_pos;
      Vec3 d = v[j + 1] - v[j];
      Vec3 o = view.cross(d);
      BillboardMesh::FrameInfo fi;
      if (o.norm() > kDegenerate * view.norm() * d.norm()) {
        fi.rule = BillboardMesh::kFrameOwn;
        fi.src = j;
        last_own = j;
        rail_dir[j] = o.normalized();
      } else if (last_own >= 0) {
        fi.rule = BillboardMesh::kFrameBorrowed;
        fi.src = last_own;
        rail_dir[j] = rail_dir[last_own];
      } else {
        fi.rule = BillboardMesh::kFrameFixed;
        fi.src = -1;
        rail_dir[j] = arbitrary_perp(view);
      }
      mesh.frames.push_back(fi);
    }
    mesh.frame_start.push_back((int)mesh.frames.size());

    auto rail = [&](int j, int sign) { return v[j] + (sign * half) * rail_dir[j]; };
    auto push_vertex = [&](const Vec3& p, const Vec3& tang, int vtx, int sign, int seg,
                           int frame) {
      mesh.positions.push_back(p);
      mesh.tangent.push_back(tang);
      mesh.vertex_strand.push_back(si);
      mesh.vertex_source.push_back({si, vtx, sign, seg, frame});
      return (int)mesh.positions.size() - 1;
    };

    for (int j = 0; j + 1 < n; ++j) {
      double z0 = camera.to_camera(v[j]).z();
      double z1 = camera.to_camera(v[j + 1]).z();
      if (z0 <= kZNear || z1 <= kZNear) continue;  // behind-camera segment
      Vec3 tang = (v[j + 1] - v[j]).normalized();
      int group = mesh.n_groups++;
      int edge_begin = (int)mesh.group_edges.size();
      if (j + 2 < n) {
        int a = push_vertex(rail(j, -1), tang, j, -1, j, j);
        int b = push_vertex(rail(j, +1), tang, j, +1, j, j);
        int c = push_vertex(rail(j + 1, +1), tang, j + 1, +1, j, j + 1);
        int d = push_vertex(rail(j + 1, -1), tang, j + 1, -1, j, j + 1);
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
        mesh.tri_group.push_back(group);
        mesh.tri_group.push_back(group);
        mesh.tri_strand.push_back(si);
        mesh.tri_strand.push_back(si);
        // Diagonal a-c stays internal.
        mesh.group_edges.push_back({a, b});
        mesh.group_edges.push_back({b, c});
        mesh.group_edges.push_back({c, d});
        mesh.group_edges.push_back({d, a});
      } else {
        int a = push_vertex(rail(j, -1), tang, j, -1, j, j);
        int b = push_vertex(rail(j, +1), tang, j, +1, j, j);
        int c = push_vertex(v[j + 1], tang, j + 1, 0, j, -1);
        mesh.triangles.push_back({a, b, c});
        mesh.tri_group.push_back(group);
        mesh.tri_strand.push_back(si);
        mesh.group_edges.push_back({a, b});
        mesh.group_edges.push_back({b, c});
        mesh.group_edges.push_back({c, a});
      }
      mesh.group_edge_start.push_back(edge_begin);
    }
  }
  mesh.group_edge_start.push_back((int)mesh.group_edges.size());
  return mesh;
}

std::vector<Vec3> billboard_backward(const BillboardMesh& mesh, const StrandSet& set,
                                     const Camera& camera, const VertexGrads& grads) {
  auto offsets = set.vertex_offsets();
  std::vector<Vec3> out(offsets.back(), Vec3::Zero());
  const Vec3 cam_pos = camera.position();
  const Vec3 zrow = camera.R.row(2).transpose();
  const double half = 0.5 * mesh.width;

  // Per division point: accumulated dL/d(rail direction).
  std::vector<Vec3> dn(mesh.frames.size(), Vec3::Zero());
  // Per (strand, local segment): accumulated dL/d(unit tangent).
  // Indexed like division points (segment j <-> division point j).
  std::vector<Vec3> dt(mesh.frames.size(), Vec3::Zero());

  for (size_t bv = 0; bv < mesh.positions.size(); ++bv) {
    const auto& src = mesh.vertex_source[bv];
    Vec3 g = grads.pos[bv] + grads.depth[bv] * zrow;  // fold camera-z attr into position
    out[offsets[src.strand] + src.vtx] += g;
    int base = mesh.frame_start[src.strand];
    if (src.rail != 0) dn[base + src.frame] += (src.rail * half) * g;
    dt[base + src.seg] += grads.tangent[bv];
  }

  // Resolve borrowed frames onto the frame they copy.
  for (size_t si = 0; si + 1 < (size_t)mesh.frame_start.size(); ++si) {
    int base = mesh.frame_start[si];
    int count = mesh.frame_start[si + 1] - base;
    for (int j = 0; j < count; ++j) {
      const auto& fi = mesh.frames[base + j];
      if (fi.rule == BillboardMesh::kFrameBorrowed && dn[base + j].squaredNorm() > 0)
        dn[base + fi.src] += dn[base + j];
    }
    const auto& v = set.strands[si].vertices;
    for (int j = 0; j < count; ++j) {
      const auto& fi = mesh.frames[base + j];
      // Tangent chain: t = d / |d|.
      Vec3 d = v[j + 1] - v[j];
      double dl = d.norm();
      if (dt[base + j].squaredNorm() > 0 && dl > 0) {
        Vec3 dhat = d / dl;
        Vec3 gd = (dt[base + j] - dhat * dhat.dot(dt[base + j])) / dl;
        out[offsets[si] + j] -= gd;
        out[offsets[si] + j + 1] += gd;
      }
      if (fi.rule != BillboardMesh::kFrameOwn || dn[base + j].squaredNorm() == 0) continue;
      // Rail direction chain: n = normalize((p_j - cam) x d).
      Vec3 view = v[j] - cam_pos;
      Vec3 o = view.cross(d);
      double ol = o.norm();
      if (ol <= 0) continue;
      Vec3 nn = o / ol;
      Vec3 go = (dn[base + j] - nn * nn.dot(dn[base + j])) / ol;
      Vec3 gview = skew(d) * go;         // d(o)/d(view)^T = [d]x
      Vec3 gd = -(skew(view) * go);      // d(o)/d(d)^T   = -[view]x
      out[offsets[si] + j] += gview - gd;
      out[offsets[si] + j + 1] += gd;
    }
  }
  return out;
}

}  // namespace strandopt
