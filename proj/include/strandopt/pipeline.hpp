#pragma once

#include <string>
#include <vector>

#include "strandopt/config.hpp"
#include "strandopt/optimize.hpp"
#include "strandopt/types.hpp"

namespace strandopt {

// Exclusive ownership of the output directory for the lifetime of the object.
// Creates the directory and a lock file; a second owner is a config error.
class OutputLock {
 public:
  OutputLock() = default;
  explicit OutputLock(const std::string& out_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::string lock_path_;
  bool owned_ = false;
};

// Camera rig, framing, and gravity convention shared by all stages.
std::vector<Camera> pipeline_cameras(const PipelineConfig& cfg);
Vec3 gravity_down();

// Mesh loaded from disk gets its vertex normals back by area weighting.
ScalpSurface scalp_from_mesh(TriMesh mesh);

// Rendered ground-truth supervision plus the grayscale images the 2D
// orientation filter runs on. noise_sigma > 0 perturbs mask and gray.
struct SyntheticTargets {
  TargetViews views;
  std::vector<std::vector<double>> gray;
};

SyntheticTargets make_targets(const StrandSet& gt, const std::vector<Camera>& cameras,
                              const TriMesh& scalp_solid, double width_mm, double noise_sigma,
                              uint64_t seed);

void write_targets(const std::string& dir, const SyntheticTargets& targets);
TargetViews load_targets(const std::string& dir, const std::vector<Camera>& cameras);
std::vector<std::vector<double>> load_gray(const std::string& dir,
                                           const std::vector<Camera>& cameras);

// Stage entry points. Every stage reads its inputs from cfg.out_dir and
// writes its artifacts back there, so running stages one by one is identical
// to `all`. Locking is the caller's job (the CLI takes it once per process).
void stage_synth(const PipelineConfig& cfg);
void stage_orient(const PipelineConfig& cfg);
void stage_init(const PipelineConfig& cfg);
void stage_fit_guides(const PipelineConfig& cfg);
void stage_fit_children(const PipelineConfig& cfg);
void stage_render(const PipelineConfig& cfg, const std::string& artifact);
void stage_eval(const PipelineConfig& cfg);
void stage_all(const PipelineConfig& cfg);

// The 2D line-growing benchmark: a 2-vertex strand with a fixed root chases a
// full-length segment's anti-aliased silhouette under plain gradient descent
// on a sum-of-squares loss. out_prefix empty = no CSV / frame output.
struct ToyResult {
  double width_px = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double tip_error_px = 0.0;
  int iterations = 0;
};

ToyResult toy_aa_run(double width_px, int image_size, int iterations, double lr,
                     const std::string& out_prefix);
void stage_toy_aa(const PipelineConfig& cfg);

}  // namespace strandopt
