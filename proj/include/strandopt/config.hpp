#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace strandopt {

// Every knob of the pipeline, flat. Loaded from a key=value file (# comments),
// then overridden by STRANDOPT_<KEY> environment variables, then by CLI flags.
// Unknown keys are rejected.
struct PipelineConfig {
  // synthetic scene
  std::string style = "straight";  // straight | wavy | curly
  int guides = 100;
  int children = 2000;
  int strand_vertices = 17;
  double scalp_radius = 80.0;   // mm
  double strand_length = 45.0;  // mm
  int views = 58;
  int image_size = 256;
  double noise_sigma = 0.0;  // optional Gaussian pixel noise on targets
  uint64_t seed = 1;

  std::string out_dir = "out";

  // rendering
  double width_mm = 1.5;  // billboard width; suits ~1 mm pixels at 256^2

  // orientation estimation
  std::string orient_source = "gabor";  // gabor | exact
  int gabor_orientations = 32;
  std::string gabor_wavelengths = "2,4,6,8";  // px
  double gabor_sigma_factor = 0.5;
  double gabor_conf_floor = 1e-3;
  int lift_candidates = 256;
  int lift_refine_steps = 14;
  double lift_score_floor = 0.5;
  int lift_min_views = 2;
  int lift_stride = 2;
  double lift_depth_tol = 2.0;  // mm
  double meanshift_radius = 4.0;
  int meanshift_iters = 3;
  double downsample_voxel = 5.0;
  int mst_k = 8;
  int mst_restarts = 100;
  double mst_perturbation = 0.1;
  double noise_cutoff_deg = 45.0;

  // orientation field + tracing
  std::string init_mode = "laplace";  // laplace | lines (straight-line ablation)
  double grid_h = 2.0;
  double sor_omega = 1.8;
  double sor_tol = 1e-5;
  int sor_max_iter = 5000;
  double trace_step_factor = 0.5;
  int trace_max_steps = 4000;

  // optimization
  int k_guides = 4;
  int k_children = 4;
  double lambda = 50.0;
  int iters_guides = 2000;
  int iters_children0 = 2000;
  int iters_children1 = 1000;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int view_batch = 4;
  int checkpoint_every = 0;  // 0 disables checkpoint dumps

  double w_stick = 0.1;
  double w_root = 1.0;
  double w_c = 0.01;
  double w_d = 0.01;
  double w_m = 1.0;
  double w_t = 1.0;
  double w_o = 1.0;

  // evaluation
  double sample_spacing = 1.0;                    // mm
  std::string eval_thresholds = "1:10,2:20,3:30";  // d_mm:a_deg pairs

  // toy benchmark
  int toy_size = 128;
  int toy_iters = 25000;
  double toy_lr = 1.0;
  std::string toy_widths = "1.0,0.8,0.6";  // px
};

PipelineConfig load_config(const std::string& path);  // empty path = defaults
void apply_config_line(PipelineConfig& cfg, const std::string& key, const std::string& value);
void apply_env_overrides(PipelineConfig& cfg);
void validate_config(const PipelineConfig& cfg);
std::string serialize_config(const PipelineConfig& cfg);  // re-loadable key=value text
std::string config_documentation();

std::vector<double> parse_double_list(const std::string& csv);
std::vector<std::pair<double, double>> parse_thresholds(const std::string& spec);

}  // namespace strandopt
