#pragma once

#include "strandopt/billboard.hpp"
#include "strandopt/types.hpp"

namespace strandopt {

// Winner-take-all rasterization state per pixel.
struct RenderBuffers {
  int width = 0, height = 0;
  std::vector<int> tri;      // winning triangle index, -1 for background
  std::vector<double> depth;  // camera-space z, +inf for background
  std::vector<double> b0, b1;  // perspective-corrected barycentrics (b2 = 1 - b0 - b1)

  size_t pixel(int x, int y) const { return (size_t)y * width + x; }
};

// One silhouette-edge crossing between a pixel and one of its 8 neighbors.
// r is the clamped parameter of the crossing along center(s) -> center(s_n);
// it weights c(s) in the blend r*c(s) + (1-r)*c(s_n).
struct Crossing {
  int neighbor;    // 0..7, fixed offset table
  int owner_tri;   // triangle whose silhouette edge was crossed
  int a, b;        // billboard vertex indices of that edge
  double r;
  bool active;     // true when the unclamped parameter is strictly inside (0,1)
};

// Per-pixel CSR of crossings. Pixels with no differing neighbor have no
// entries and blend to their own value.
struct AAOutput {
  int width = 0, height = 0;
  std::vector<int> offset;  // size width*height + 1
  std::vector<Crossing> records;
};

extern const int kNeighborDx[8];
extern const int kNeighborDy[8];

// Deterministic winner-take-all rasterization at pixel centers (top-left fill
// rule, depth ties to the smaller triangle index).
RenderBuffers rasterize(const BillboardMesh& mesh, const Camera& camera);

// Crossing discovery for the analytic anti-aliasing pass. The owner of a pair
// is the triangle at whichever pixel is nearer in depth; its outer edges are
// intersected with the inter-center segment, closest crossing depth wins.
AAOutput antialias(const BillboardMesh& mesh, const Camera& camera, const RenderBuffers& buffers);

enum class Channel { Silhouette, Depth, Tangent, IdColor };
int channel_arity(Channel c);

// Pre-AA channel plane (width*height*arity, pixel-major). Background pixels
// take the channel's constant (zero), never the depth sentinel.
std::vector<double> extract_channel(const BillboardMesh& mesh, const RenderBuffers& buffers,
                                    Channel c);

// c_aa(s) = (c(s) + sum over 8 neighbors of the blended value) / 9.
std::vector<double> aa_apply(const AAOutput& aa, const std::vector<double>& plane, int arity);

// Upstream gradients w.r.t. AA-blended planes, filled in by loss terms.
struct AAGradients {
  std::vector<double> silhouette, depth, tangent;
  void init(size_t npx) {
    silhouette.assign(npx, 0.0);
    depth.assign(npx, 0.0);
    tangent.assign(npx * 3, 0.0);
  }
  bool empty() const { return silhouette.empty(); }
};

// Backward through AA and interpolation. Geometry gradients flow only through
// each crossing's r; attribute gradients flow through the interpolation
// weights and blend factors.
VertexGrads diffrast_backward(const BillboardMesh& mesh, const Camera& camera,
                              const RenderBuffers& buffers, const AAOutput& aa,
                              const AAGradients& upstream);

// Screen-space doubled-angle encoding (cos 2a, sin 2a) of the AA tangent
// plane. valid marks pixels where the projected direction is well defined.
void orient2d_from_tangent(const std::vector<double>& tangent_aa, const Camera& camera,
                           std::vector<double>& encoded, std::vector<uint8_t>& valid);

// Chain upstream orient2d gradients onto the AA tangent plane.
void orient2d_backward(const std::vector<double>& tangent_aa, const Camera& camera,
                       const std::vector<double>& up_encoded, std::vector<double>& up_tangent);

// Wrap a plain mesh so it can go through the same rasterizer (e.g. scalp
// depth). Every triangle is its own AA group with all edges outer.
BillboardMesh wrap_trimesh(const TriMesh& mesh);

// Everything the pipeline renders for one view.
struct RenderOutputs {
  RenderBuffers buffers;
  AAOutput aa;
  std::vector<double> silhouette, depth, tangent, id_color;  // AA-blended
  std::vector<double> orient2d;
  std::vector<uint8_t> orient2d_valid;
};

RenderOutputs render_channels(const BillboardMesh& mesh, const Camera& camera);

}  // namespace strandopt
