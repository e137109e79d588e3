#pragma once

#include <cstdint>

#include "strandopt/types.hpp"

namespace strandopt {

enum class HairStyle { Straight, Wavy, Curly };

HairStyle parse_hair_style(const std::string& name);

// Synthetic head: scalp dome (roots live on its vertices), watertight solids
// for the scalp and the outer shell, and ground-truth guide/child strands.
struct SyntheticScene {
  ScalpSurface scalp;
  TriMesh scalp_solid;  // dome closed with a base disk
  TriMesh shell_solid;  // offset dome closed below the lowest strand point
  StrandSet gt_guides;
  StrandSet gt_children;
  GuideChildMap child_map;
  std::vector<Vec3> child_roots;
};

struct SceneParams {
  HairStyle style = HairStyle::Straight;
  int n_guides = 653;    // approximate; tessellation picks the closest ring grid
  int n_children = 50000;
  int verts_per_strand = 17;
  double scalp_radius = 80.0;   // mm
  double strand_length = 45.0;  // mm
};

// Hemisphere scalp with ~n vertices (1 + rings * sectors) and radial normals.
ScalpSurface make_scalp(int n_vertices_target, double radius);

SyntheticScene generate_synthetic_scene(const SceneParams& params, uint64_t seed);

// n Sobol-sampled root positions on the scalp surface. Triangles are chosen by
// an area CDF, placement inside a triangle is uniform.
std::vector<Vec3> sample_child_roots(const ScalpSurface& scalp, int n, uint64_t seed);

// Inverse-distance weights over the four guides whose roots are closest to
// each child root. A coincident guide root takes the full weight.
GuideChildMap nearest_four_guides(const std::vector<Vec3>& guide_roots,
                                  const std::vector<Vec3>& child_roots);

// Child strand j-th vertex = child root + sum_k w_k * (guide_k[j] - guide_k[0]).
// All guides must share one vertex count.
StrandSet interpolate_children(const StrandSet& guides, const GuideChildMap& map,
                               const std::vector<Vec3>& child_roots);

// Cameras on the upper hemisphere looking at `center`, image y pointing down
// in world space. Determined entirely by the arguments.
std::vector<Camera> make_camera_ring(int n, double radius, const Vec3& center, double fx,
                                     int image_size);

}  // namespace strandopt
