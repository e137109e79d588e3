#pragma once

#include "strandopt/types.hpp"

namespace strandopt {

// Camera-facing billboard strip for a strand set. Each interior segment is a
// quad (two triangles sharing one AA group), the terminal segment a single
// tapered triangle. Rail vertices are duplicated per segment so attributes
// stay per-segment; duplicated copies share identical positions.
struct BillboardMesh {
  std::vector<Vec3> positions;
  std::vector<Vec3> tangent;       // per-vertex: unit direction of the source segment
  std::vector<int> vertex_strand;  // per-vertex strand index
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> tri_group;   // AA group id; both halves of a quad share one
  std::vector<int> tri_strand;  // strand index per triangle

  int n_groups = 0;
  // Outer (silhouette) edges per group, CSR over group id. The quad diagonal
  // is not part of this list.
  std::vector<int> group_edge_start;
  std::vector<std::array<int, 2>> group_edges;

  // Construction bookkeeping for the backward pass.
  enum FrameRule { kFrameOwn = 0, kFrameBorrowed = 1, kFrameFixed = 2 };
  struct VertexSource {
    int strand;
    int vtx;       // strand vertex index the billboard vertex is anchored to
    int rail;      // -1 / +1 for rails, 0 for the tip vertex
    int seg;       // local segment the vertex was emitted for
    int frame;     // division-point index of the rail frame (-1 for tip)
  };
  std::vector<VertexSource> vertex_source;
  struct FrameInfo {
    int rule;   // FrameRule
    int src;    // division point whose own frame supplies the direction
  };
  std::vector<FrameInfo> frames;     // per strand, per division point, CSR
  std::vector<int> frame_start;      // size n_strands+1

  std::vector<Vec3> strand_color;  // deterministic per-strand color

  double width = 0.0;
};

// Gradients w.r.t. billboard vertices, as produced by the rasterizer backward.
struct VertexGrads {
  std::vector<Vec3> pos;
  std::vector<Vec3> tangent;
  std::vector<double> depth;  // w.r.t. camera-space z of the vertex

  void init(size_t n) {
    pos.assign(n, Vec3::Zero());
    tangent.assign(n, Vec3::Zero());
    depth.assign(n, 0.0);
  }
};

// Width is measured perpendicular to both the view ray and the segment.
// Segments with an endpoint behind the camera are dropped.
BillboardMesh build_billboards(const StrandSet& set, const Camera& camera, double width);

// Pull billboard-vertex gradients back to strand vertices, differentiating the
// full construction (rail offsets including their view/segment dependence,
// per-segment tangents, camera-z depth attributes).
std::vector<Vec3> billboard_backward(const BillboardMesh& mesh, const StrandSet& set,
                                     const Camera& camera, const VertexGrads& grads);

Vec3 strand_preview_color(int strand_index);

}  // namespace strandopt
