#include <cmath>

#include "doctest.h"
#include "strandopt/diffrast.hpp"
#include "strandopt/reference.hpp"
#include "strandopt/rng.hpp"

using namespace strandopt;

namespace {

// Image-plane camera: world xy at z = 1 are pixel coordinates.
Camera px_camera(int size) {
  Camera cam;
  cam.fx = cam.fy = 1.0;
  cam.cx = cam.cy = 0.0;
  cam.width = cam.height = size;
  return cam;
}

Camera front_camera(double f, int size) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = 0.5 * size;
  cam.width = cam.height = size;
  return cam;
}

BillboardMesh viewport_triangle(double z, int size) {
  TriMesh m;
  double s = (double)size;
  m.positions = {Vec3(-10 * s * z, -10 * s * z, z), Vec3(10 * s * z, -10 * s * z, z),
                 Vec3(0, 10 * s * z, z)};
  m.triangles = {{0, 1, 2}};
  return wrap_trimesh(m);
}

StrandSet random_scene(int n_strands, uint64_t seed, double extent, double z) {
  Rng rng(mix_seed(seed, 5));
  StrandSet set;
  for (int i = 0; i < n_strands; ++i) {
    Strand s;
    Vec3 p(rng.uniform(-extent, extent), rng.uniform(-extent, extent), z + rng.uniform(-20, 20));
    Vec3 d = rng.unit_vector();
    int n = 3 + (int)rng.uniform_index(4);
    for (int k = 0; k < n; ++k) {
      s.vertices.push_back(p);
      d = (d + 0.4 * rng.unit_vector()).normalized();
      p += d * rng.uniform(3, 8);
    }
    set.strands.push_back(std::move(s));
  }
  return set;
}

double plane_sum(const std::vector<double>& plane) {
  double s = 0.0;
  for (double v : plane) s += v;
  return s;
}

}  // namespace

TEST_SUITE("diffrast") {
  TEST_CASE("full-viewport triangle covers every pixel") {
    Camera cam = front_camera(100, 32);
    BillboardMesh mesh = viewport_triangle(50, 32);
    RenderBuffers rb = rasterize(mesh, cam);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        size_t p = rb.pixel(x, y);
        CHECK(rb.tri[p] == 0);
        CHECK(rb.depth[p] == doctest::Approx(50.0));
      }
  }

  TEST_CASE("nearer depth wins regardless of draw order") {
    Camera cam = front_camera(100, 16);
    TriMesh m;
    for (double z : {20.0, 10.0}) {  // far triangle first
      int base = (int)m.positions.size();
      double s = 16.0;
      m.positions.push_back(Vec3(-10 * s * z, -10 * s * z, z));
      m.positions.push_back(Vec3(10 * s * z, -10 * s * z, z));
      m.positions.push_back(Vec3(0, 10 * s * z, z));
      m.triangles.push_back({base, base + 1, base + 2});
    }
    RenderBuffers rb = rasterize(wrap_trimesh(m), cam);
    for (size_t p = 0; p < rb.tri.size(); ++p) {
      CHECK(rb.tri[p] == 1);
      CHECK(rb.depth[p] == doctest::Approx(10.0));
    }
  }

  TEST_CASE("sub-pixel strip covers a matching fraction of pixel centers") {
    Camera cam = front_camera(1000, 128);
    StrandSet set;
    Strand s;
    // 100 px tall, slight tilt, 0.6 px wide. World units are pixels (z = f).
    for (int i = 0; i < 5; ++i)
      s.vertices.push_back(Vec3(-4.0 + 1.25 * i, -50.0 + 25.0 * i, 1000.0));
    set.strands.push_back(s);
    RenderBuffers rb = rasterize(build_billboards(set, cam, 0.6), cam);
    int covered = 0;
    for (int t : rb.tri) covered += (t >= 0);
    CHECK(covered >= 40);   // 0.4 * 100 rows
    CHECK(covered <= 80);   // 0.8 * 100 rows
  }

  TEST_CASE("vertical edge midway between columns blends to 7.5/9 and 1.5/9") {
    Camera cam = px_camera(16);
    TriMesh m;
    m.positions = {Vec3(8, -1000, 1), Vec3(8, 1000, 1), Vec3(-2000, 0, 1)};
    m.triangles = {{0, 1, 2}};
    BillboardMesh mesh = wrap_trimesh(m);
    RenderBuffers rb = rasterize(mesh, cam);
    AAOutput aa = antialias(mesh, cam, rb);
    std::vector<double> sil = aa_apply(aa, extract_channel(mesh, rb, Channel::Silhouette), 1);
    for (int y = 1; y < 15; ++y) {
      CHECK(rb.tri[rb.pixel(7, y)] == 0);
      CHECK(rb.tri[rb.pixel(8, y)] == -1);
      // Covered boundary column: 6 whole neighbors + 3 half crossings.
      CHECK(sil[rb.pixel(7, y)] == doctest::Approx(7.5 / 9.0).epsilon(1e-12));
      // Background boundary column: 3 half crossings only.
      CHECK(sil[rb.pixel(8, y)] == doctest::Approx(1.5 / 9.0).epsilon(1e-12));
      // Interior stays exact.
      CHECK(sil[rb.pixel(3, y)] == 1.0);
      CHECK(sil[rb.pixel(12, y)] == 0.0);
    }
    // All crossings at this edge sit exactly halfway and are active.
    int n_half = 0;
    for (const Crossing& c : aa.records) {
      CHECK(c.r == doctest::Approx(0.5));
      CHECK(c.active);
      ++n_half;
    }
    CHECK(n_half > 0);
  }

  TEST_CASE("uniform coverage leaves every channel unchanged") {
    Camera cam = front_camera(100, 16);
    BillboardMesh mesh = viewport_triangle(25, 16);
    RenderBuffers rb = rasterize(mesh, cam);
    AAOutput aa = antialias(mesh, cam, rb);
    CHECK(aa.records.empty());
    for (Channel ch : {Channel::Silhouette, Channel::Depth, Channel::IdColor}) {
      int ar = channel_arity(ch);
      std::vector<double> plane = extract_channel(mesh, rb, ch);
      std::vector<double> out = aa_apply(aa, plane, ar);
      for (size_t i = 0; i < plane.size(); ++i)
        CHECK(out[i] == doctest::Approx(plane[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("AA output is a convex combination of plane values") {
    Camera cam = front_camera(500, 64);
    StrandSet set = random_scene(6, 21, 20, 500);
    BillboardMesh mesh = build_billboards(set, cam, 2.0);
    RenderBuffers rb = rasterize(mesh, cam);
    AAOutput aa = antialias(mesh, cam, rb);
    for (Channel ch : {Channel::Silhouette, Channel::Depth, Channel::Tangent}) {
      int ar = channel_arity(ch);
      std::vector<double> plane = extract_channel(mesh, rb, ch);
      std::vector<double> out = aa_apply(aa, plane, ar);
      for (int k = 0; k < ar; ++k) {
        double lo = 1e300, hi = -1e300;
        for (size_t p = 0; p * ar + k < plane.size(); ++p) {
          lo = std::min(lo, plane[p * ar + k]);
          hi = std::max(hi, plane[p * ar + k]);
        }
        for (size_t p = 0; p * ar + k < out.size(); ++p) {
          CHECK(out[p * ar + k] >= lo - 1e-9);
          CHECK(out[p * ar + k] <= hi + 1e-9);
        }
      }
    }
    // Crossing records are well formed.
    REQUIRE(!aa.records.empty());
    for (const Crossing& c : aa.records) {
      CHECK(c.neighbor >= 0);
      CHECK(c.neighbor < 8);
      CHECK(c.r >= 0.0);
      CHECK(c.r <= 1.0);
      CHECK(c.owner_tri >= 0);
      CHECK(c.owner_tri < (int)mesh.triangles.size());
    }
    size_t npx = (size_t)64 * 64;
    REQUIRE(aa.offset.size() == npx + 1);
    for (size_t p = 0; p < npx; ++p) CHECK(aa.offset[p] <= aa.offset[p + 1]);
    CHECK((size_t)aa.offset[npx] == aa.records.size());
  }

  TEST_CASE("uniform scene produces zero position gradients") {
    Camera cam = front_camera(100, 16);
    BillboardMesh mesh = viewport_triangle(25, 16);
    RenderBuffers rb = rasterize(mesh, cam);
    AAOutput aa = antialias(mesh, cam, rb);
    AAGradients up;
    up.init((size_t)16 * 16);
    Rng rng(mix_seed(3, 3));
    for (auto& g : up.silhouette) g = rng.uniform(-1, 1);
    VertexGrads grads = diffrast_backward(mesh, cam, rb, aa, up);
    for (const Vec3& g : grads.pos) CHECK(g.norm() == 0.0);
  }

  TEST_CASE("translating the scene by whole pixels shifts the render") {
    // Fixed world-space triangles (camera-facing billboards would change
    // shape under the perspective shift). Coordinates on a 1/64 grid stay
    // exact under the +4 px shift, so the result must shift bit-for-bit.
    Camera cam = px_camera(32);
    auto make_mesh = [](double dx) {
      TriMesh m;
      m.positions = {Vec3(6.0 + 13.0 / 64 + dx, 5.0 + 7.0 / 64, 1.0),
                     Vec3(11.0 + 3.0 / 64 + dx, 12.0 + 45.0 / 64, 1.0),
                     Vec3(14.0 + 9.0 / 64 + dx, 20.0 + 21.0 / 64, 1.0),
                     Vec3(7.0 + 33.0 / 64 + dx, 18.0 + 11.0 / 64, 1.0)};
      m.triangles = {{0, 1, 2}, {0, 2, 3}};
      return wrap_trimesh(m);
    };
    BillboardMesh mesh_a = make_mesh(0.0);
    BillboardMesh mesh_b = make_mesh(4.0);
    RenderBuffers ra = rasterize(mesh_a, cam);
    RenderBuffers rb = rasterize(mesh_b, cam);
    std::vector<double> sa = aa_apply(antialias(mesh_a, cam, ra),
                                      extract_channel(mesh_a, ra, Channel::Silhouette), 1);
    std::vector<double> sb = aa_apply(antialias(mesh_b, cam, rb),
                                      extract_channel(mesh_b, rb, Channel::Silhouette), 1);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 28; ++x)
        CHECK(sa[ra.pixel(x, y)] == sb[rb.pixel(x + 4, y)]);
  }

  TEST_CASE("orient2d encodes the doubled screen angle") {
    Camera cam = front_camera(1000, 64);
    StrandSet set;
    Strand s;
    // Vertical strand: screen angle 90 degrees, encoding (-1, 0).
    for (int i = 0; i < 4; ++i) s.vertices.push_back(Vec3(0, -15.0 + 10.0 * i, 1000));
    set.strands.push_back(s);
    RenderOutputs out = render_channels(build_billboards(set, cam, 5.0), cam);
    int inside = 0;
    for (int y = 8; y < 56; ++y)
      for (int x = 0; x < 64; ++x) {
        size_t p = out.buffers.pixel(x, y);
        if (out.buffers.tri[p] < 0 || out.silhouette[p] < 0.999) continue;
        REQUIRE(out.orient2d_valid[p] == 1);
        CHECK(out.orient2d[2 * p + 0] == doctest::Approx(-1.0).epsilon(1e-9));
        CHECK(out.orient2d[2 * p + 1] == doctest::Approx(0.0).epsilon(1e-9));
        ++inside;
      }
    CHECK(inside > 50);
  }

  TEST_CASE("empty scene renders background everywhere") {
    Camera cam = front_camera(100, 16);
    StrandSet set;
    BillboardMesh mesh = build_billboards(set, cam, 1.0);
    RenderOutputs out = render_channels(mesh, cam);
    for (size_t p = 0; p < out.buffers.tri.size(); ++p) {
      CHECK(out.buffers.tri[p] == -1);
      CHECK(out.silhouette[p] == 0.0);
      CHECK(out.depth[p] == 0.0);  // channel constant, not the depth sentinel
      CHECK(out.orient2d_valid[p] == 0);
    }
    CHECK(out.aa.records.empty());
  }

  TEST_CASE("disjoint strands rasterize to the union of their footprints") {
    Camera cam = front_camera(500, 64);
    StrandSet a, b, both;
    Strand s1, s2;
    for (int i = 0; i < 4; ++i) s1.vertices.push_back(Vec3(-15, -10.0 + 7.0 * i, 500));
    for (int i = 0; i < 4; ++i) s2.vertices.push_back(Vec3(15, -10.0 + 7.0 * i, 500));
    a.strands.push_back(s1);
    b.strands.push_back(s2);
    both.strands = {s1, s2};
    RenderBuffers ra = rasterize(build_billboards(a, cam, 2.0), cam);
    RenderBuffers rb = rasterize(build_billboards(b, cam, 2.0), cam);
    RenderBuffers rc = rasterize(build_billboards(both, cam, 2.0), cam);
    for (size_t p = 0; p < rc.tri.size(); ++p)
      CHECK((rc.tri[p] >= 0) == (ra.tri[p] >= 0 || rb.tri[p] >= 0));
  }

  TEST_CASE("parallel rasterizer bit-equals the serial reference") {
    Camera cam = front_camera(400, 96);
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      StrandSet set = random_scene(8, seed + 30, 25, 400);
      BillboardMesh mesh = build_billboards(set, cam, 2.5);
      RenderBuffers fast = rasterize(mesh, cam);
      RenderBuffers slow = reference::rasterize(mesh, cam);
      CHECK(fast.tri == slow.tri);
      CHECK(fast.depth == slow.depth);
      CHECK(fast.b0 == slow.b0);
      CHECK(fast.b1 == slow.b1);
    }
  }

  TEST_CASE("silhouette position gradient matches finite differences") {
    // One tilted strand on a stable configuration; the loss is a fixed random
    // weighting of the AA silhouette so every pixel contributes.
    Camera cam = front_camera(1000, 32);
    auto make_set = [](double dx) {
      StrandSet set;
      Strand s;
      s.vertices = {Vec3(-6.3 + dx, -7.1, 1000), Vec3(-1.8 + dx, -0.6, 1000),
                    Vec3(4.4 + dx, 5.9, 1000)};
      set.strands.push_back(s);
      return set;
    };
    std::vector<double> w((size_t)32 * 32);
    Rng rng(mix_seed(8, 1));
    for (auto& v : w) v = rng.uniform(-1, 1);
    auto loss = [&](const StrandSet& set) {
      BillboardMesh mesh = build_billboards(set, cam, 1.8);
      RenderBuffers rb = rasterize(mesh, cam);
      std::vector<double> sil =
          aa_apply(antialias(mesh, cam, rb), extract_channel(mesh, rb, Channel::Silhouette), 1);
      double l = 0.0;
      for (size_t p = 0; p < sil.size(); ++p) l += w[p] * sil[p];
      return l;
    };
    StrandSet set = make_set(0.0);
    BillboardMesh mesh = build_billboards(set, cam, 1.8);
    RenderBuffers rb = rasterize(mesh, cam);
    AAOutput aa = antialias(mesh, cam, rb);
    AAGradients up;
    up.init(w.size());
    up.silhouette = w;
    VertexGrads vg = diffrast_backward(mesh, cam, rb, aa, up);
    std::vector<Vec3> g = billboard_backward(mesh, set, cam, vg);
    // Sum over vertices equals the directional derivative of a rigid x shift.
    double analytic = 0.0;
    for (const Vec3& gi : g) analytic += gi.x();
    double h = 1e-4;
    double fd = (loss(make_set(h)) - loss(make_set(-h))) / (2 * h);
    CHECK(std::abs(fd) > 1e-3);
    CHECK(analytic == doctest::Approx(fd).epsilon(0.02));
  }
}
