#pragma once

#include <cstdint>
#include <vector>

#include "strandopt/io_formats.hpp"
#include "strandopt/orientation.hpp"
#include "strandopt/types.hpp"

namespace strandopt {

// Voxel classification of the hair domain. The domain is the space inside the
// outer shell and outside the scalp solid; boundary voxels sit just outside
// the domain (hair-surface side = H, scalp side = S) and carry fixed unit
// values once assigned. H voxels without orientation evidence become U and
// join the unknowns with a Neumann closure. Exterior voxels are never read.
enum class VoxelLabel : uint8_t { kExterior, kInterior, kBoundaryH, kBoundaryS, kBoundaryU };

struct OrientationVolume {
  Vec3 origin = Vec3::Zero();  // min corner; voxel (0,0,0) spans [origin, origin + h)
  double h = 2.0;
  int nx = 0, ny = 0, nz = 0;
  std::vector<VoxelLabel> label;
  std::vector<Vec3> value;

  size_t idx(int x, int y, int z) const { return ((size_t)z * ny + y) * nx + x; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  Vec3 center(int x, int y, int z) const {
    return origin + h * Vec3(x + 0.5, y + 0.5, z + 0.5);
  }
  bool fixed(size_t i) const {
    return label[i] == VoxelLabel::kBoundaryH || label[i] == VoxelLabel::kBoundaryS;
  }
  bool free_voxel(size_t i) const {
    return label[i] == VoxelLabel::kInterior || label[i] == VoxelLabel::kBoundaryU;
  }
  bool in_domain(size_t i) const { return label[i] != VoxelLabel::kExterior; }
};

// Classify voxels by center parity against the two watertight solids.
// Interior = inside shell, outside scalp. Boundary voxels are the non-domain
// voxels 6-adjacent to an interior voxel.
OrientationVolume voxelize_domain(const TriMesh& scalp_solid, const TriMesh& shell_solid,
                                  double h_mm);

// H voxels take the confidence-weighted mean cloud direction within one voxel
// radius (H with no evidence is retyped U); S voxels take the Eq.-style
// heuristic blend of the nearest scalp-vertex normal with the down vector.
void set_boundary(OrientationVolume& vol, const OrientedPointCloud& cloud,
                  const ScalpSurface& scalp, const Vec3& down);

struct SolveStats {
  int iterations = 0;
  double last_update = 0.0;  // max component change in the final sweep
};

// SOR with the 6-neighbor stencil over free voxels; exterior neighbors are
// skipped with the diagonal reduced. Red-black sweeps, parallel within each
// color. Values renormalized to unit length after convergence (zero vectors
// take the nearest fixed voxel's value); normalize = false leaves the raw
// harmonic solution in place (exactness tests read it).
SolveStats solve_laplace_sor(OrientationVolume& vol, double omega, double tol, int max_iter,
                             bool normalize = true);

struct RootPoint {
  Vec3 position;
  Vec3 normal;  // fallback direction when the field vanishes at the root
};

struct TraceResult {
  StrandSet strands;
  int skipped_roots = 0;  // roots outside the domain
};

struct TraceParams {
  double step_factor = 0.5;  // step = factor * h
  int max_steps = 4000;
  int vertex_count = 17;     // uniform resampling target; 0 keeps raw steps
};

// Advect each root through the normalized trilinear field until it enters an
// H voxel, leaves the domain, or exhausts max_steps. Strands with fewer than
// 2 vertices are dropped.
TraceResult trace_strands(const OrientationVolume& vol, const std::vector<RootPoint>& roots,
                          const TraceParams& params);

VolumeDump dump_volume(const OrientationVolume& vol);

namespace reference {
// Lexicographic serial SOR; converges to the same field (within tolerance) as
// the red-black parallel version.
SolveStats solve_laplace_sor(OrientationVolume& vol, double omega, double tol, int max_iter,
                             bool normalize = true);
}  // namespace reference

}  // namespace strandopt
