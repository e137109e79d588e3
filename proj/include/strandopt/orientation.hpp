#pragma once

#include <cstdint>
#include <vector>

#include "strandopt/types.hpp"

namespace strandopt {

// Per-pixel 2D line orientation, angle in [0, pi) measured in image
// coordinates (x right, y down). confidence == 0 marks invalid pixels.
struct OrientationMap {
  int width = 0, height = 0;
  std::vector<double> angle;
  std::vector<double> confidence;

  size_t pixel(int x, int y) const { return (size_t)y * width + x; }
  bool valid(int x, int y) const { return confidence[pixel(x, y)] > 0.0; }
};

struct GaborBank {
  int n_orientations = 32;
  std::vector<double> wavelengths = {2.0, 4.0, 6.0, 8.0};
  double sigma_factor = 0.5;  // sigma = factor * wavelength
  double confidence_floor = 1e-3;
};

// Per pixel: angle = the filter-bank orientation with the largest absolute
// response (max over wavelengths), confidence = max response - mean response
// over orientations. Flat regions fall below the floor and become invalid.
OrientationMap gabor_orientation(const std::vector<double>& gray, int width, int height,
                                 const GaborBank& bank);

struct OrientedPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> directions;  // unit
  std::vector<double> confidence;
  std::vector<int> view_ids;

  size_t size() const { return positions.size(); }
};

struct LiftParams {
  int n_candidates = 256;      // Fibonacci hemisphere sample count
  int refine_steps = 14;       // local pattern-search refinement after argmax
  double score_floor = 0.5;    // keep points with mean |cos| score above this
  int min_views = 2;           // valid observations required per point
  int stride = 1;              // reference-pixel subsampling
  double depth_tol_mm = 2.0;   // occlusion test against each view's depth map
};

// Back-project every valid reference pixel at its rendered depth and pick the
// unit direction maximizing sum over views of conf * |cos(delta theta)|
// between the direction's screen projection and the observed 2D orientation.
// The direction sign stays ambiguous; output is canonicalized to z >= 0.
// Depth maps use 0 for background.
OrientedPointCloud lift_orientations(const std::vector<OrientationMap>& maps,
                                     const std::vector<std::vector<double>>& depth_maps,
                                     const std::vector<Camera>& cameras, int reference_view,
                                     const LiftParams& params);

// Replace each direction by the sign-aligned confidence-weighted mean over
// neighbors within radius (positions fixed), `iterations` times.
OrientedPointCloud meanshift_denoise(const OrientedPointCloud& cloud, double radius_mm,
                                     int iterations);

// One representative per occupied voxel; back_map sends each original point
// to its representative's index.
OrientedPointCloud downsample(const OrientedPointCloud& cloud, double voxel_mm,
                              std::vector<int>& back_map);

struct SignResult {
  std::vector<int> sign;  // +1 / -1 per point
  double score = 0.0;     // best full-graph score, summed over components
};

// Global 180-degree disambiguation: kNN graph with edge weight 1 - |dot|,
// `restarts` weight-perturbed minimum spanning trees, signs propagated from
// each tree root, keeping the restart whose propagated signs maximize the sum
// of inner products over ALL graph edges. Components are scored separately.
SignResult disambiguate_mst(const OrientedPointCloud& cloud, int k_graph, int restarts,
                            double perturbation, uint64_t seed);

void apply_signs(OrientedPointCloud& cloud, const std::vector<int>& sign);

// Flip every direction when the confidence-weighted mean points against
// gravity. Returns whether a flip happened.
bool gravity_flip(OrientedPointCloud& cloud, const Vec3& down);

// Carry resolved signs back to the full-resolution cloud and drop points
// whose aligned direction still deviates from their representative by more
// than the cutoff.
OrientedPointCloud propagate_and_filter(const OrientedPointCloud& full,
                                        const OrientedPointCloud& signed_reps,
                                        const std::vector<int>& back_map,
                                        double angle_cutoff_deg);

}  // namespace strandopt
