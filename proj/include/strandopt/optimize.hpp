#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "strandopt/io_formats.hpp"
#include "strandopt/types.hpp"

namespace strandopt {

struct LossWeights {
  double w_stick = 0.1;
  double w_root = 1.0;
  double w_c = 0.01;
  double w_d = 0.01;
  double w_m = 1.0;
  double w_t = 1.0;
  double w_o = 1.0;
};

struct StageConfig {
  int k = 4;               // reparameterization neighborhood degree
  double lambda = 50.0;
  int iterations = 2000;
  double lr = 0.001;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double width_mm = 0.2;   // billboard width during fitting
  int view_batch = 4;      // views sampled per iteration
};

// Rendered supervision for one view. Planes use 0 for background; orientation
// vectors are unit where valid.
struct TargetView {
  Camera camera;
  std::vector<double> mask;
  std::vector<double> depth;
  std::vector<double> tangent;          // 3 per pixel
  std::vector<double> orient2d;         // 2 per pixel, doubled-angle encoding
  std::vector<uint8_t> orient2d_valid;
  std::vector<double> scalp_depth;
};
using TargetViews = std::vector<TargetView>;

struct AdamState {
  Eigen::MatrixXd m, v;
  int step = 0;

  void init(int n) {
    m = Eigen::MatrixXd::Zero(n, 3);
    v = Eigen::MatrixXd::Zero(n, 3);
    step = 0;
  }
};

void adam_step(AdamState& state, Eigen::MatrixXd& params, const Eigen::MatrixXd& grad,
               const StageConfig& cfg);

// One full differentiable loss evaluation of a strand set against a batch of
// target views. Image terms and the stick regularizer are averaged over the
// batch; root and curvature terms are view independent. use_orient2d picks
// the 2D orientation loss instead of the 3D tangent loss.
struct LossBreakdown {
  double total = 0.0;
  double depth = 0.0, mask = 0.0, tangent = 0.0, orient2d = 0.0;
  double stick = 0.0, root = 0.0, curvature = 0.0;
};

LossBreakdown evaluate_losses(const StrandSet& set, const StrandSet& root_ref,
                              const TargetViews& targets, const std::vector<int>& batch,
                              const LossWeights& w, double width_mm, bool use_orient2d,
                              Eigen::MatrixXd* grad_out);

// Individual terms (exposed for tests). Each returns the raw mean value and,
// when grad is non-null, adds scale * d(term)/d(plane) into it.
double loss_depth(const std::vector<double>& sil, const std::vector<double>& depth,
                  const std::vector<double>& target_mask, const std::vector<double>& target_depth,
                  std::vector<double>* grad_depth, double scale);
double loss_mask(const std::vector<double>& sil, const std::vector<double>& target_mask,
                 std::vector<double>* grad_sil, double scale);
double loss_tangent3d(const std::vector<double>& sil, const std::vector<double>& tangent,
                      const std::vector<double>& target_mask,
                      const std::vector<double>& target_tangent, std::vector<double>* grad_tangent,
                      double scale);
double loss_orient2d(const std::vector<double>& sil, const std::vector<double>& enc,
                     const std::vector<uint8_t>& enc_valid, const std::vector<double>& target_mask,
                     const std::vector<double>& target_enc,
                     const std::vector<uint8_t>& target_valid, std::vector<double>* grad_enc,
                     double scale);
double reg_stick(const std::vector<double>& sil, const std::vector<double>& depth,
                 const std::vector<double>& scalp_depth, std::vector<double>* grad_depth,
                 double scale);
double reg_root(const StrandSet& set, const StrandSet& root_ref, Eigen::MatrixXd* grad,
                double scale);
double reg_curvature(const StrandSet& set, Eigen::MatrixXd* grad, double scale);

struct StageHooks {
  CsvLogger* log = nullptr;
  std::string checkpoint_prefix;  // dumps {prefix}{iter}.hair when set
  int checkpoint_every = 0;
};

// Adam on the differential coordinates u = A x; gradients pulled back through
// A^-1 each iteration. Root reference for R_root is the input set's roots.
StrandSet run_stage(const StrandSet& init, const StrandSet& root_ref, const TargetViews& targets,
                    const LossWeights& w, const StageConfig& stage, bool use_orient2d,
                    uint64_t seed, uint64_t stream_base, const StageHooks& hooks);

StrandSet fit_guides(const StrandSet& guides, const TargetViews& targets, const LossWeights& w,
                     const StageConfig& stage, uint64_t seed, const StageHooks& hooks);

// Two phases: neighborhood-coupled (k = phase1.k), then relaxed (k forced to
// 0) so strands leave the guide interpolation pattern individually. The root
// reference for both phases is the original children's roots.
StrandSet fit_children(const StrandSet& children, const TargetViews& targets,
                       const LossWeights& w, const StageConfig& phase1, const StageConfig& phase2,
                       uint64_t seed, const StageHooks& hooks1, const StageHooks& hooks2);

}  // namespace strandopt
