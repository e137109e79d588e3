#include "strandopt/optimize.hpp"

#include <chrono>
#include <cmath>

#include "strandopt/billboard.hpp"
#include "strandopt/diffrast.hpp"
#include "strandopt/reparam.hpp"
#include "strandopt/rng.hpp"

namespace strandopt {

void adam_step(AdamState& st, Eigen::MatrixXd& params, const Eigen::MatrixXd& grad,
               const StageConfig& cfg) {
  st.step += 1;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  double bc1 = 1.0 - std::pow(cfg.beta1, st.step);
  double bc2 = 1.0 - std::pow(cfg.beta2, st.step);
  params.array() -=
      cfg.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + cfg.eps);
}

namespace {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double loss_depth(const std::vector<double>& sil, const std::vector<double>& depth,
                  const std::vector<double>& target_mask, const std::vector<double>& target_depth,
                  std::vector<double>* grad_depth, double scale) {
  size_t n = sil.size();
  size_t count = 0;
  for (size_t i = 0; i < n; ++i)
    if (sil[i] > 0.5 && target_mask[i] > 0.5 && target_depth[i] > 0.0) ++count;
  if (count == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!(sil[i] > 0.5 && target_mask[i] > 0.5 && target_depth[i] > 0.0)) continue;
    double d = depth[i] - target_depth[i];
    sum += std::abs(d);
    if (grad_depth) (*grad_depth)[i] += scale * sgn(d) / count;
  }
  return sum / count;
}

double loss_mask(const std::vector<double>& sil, const std::vector<double>& target_mask,
                 std::vector<double>* grad_sil, double scale) {
  size_t n = sil.size();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = sil[i] - target_mask[i];
    sum += std::abs(d);
    if (grad_sil) (*grad_sil)[i] += scale * sgn(d) / n;
  }
  return sum / n;
}

double loss_tangent3d(const std::vector<double>& sil, const std::vector<double>& tangent,
                      const std::vector<double>& target_mask,
                      const std::vector<double>& target_tangent, std::vector<double>* grad_tangent,
                      double scale) {
  size_t n = sil.size();
  size_t count = 0;
  auto usable = [&](size_t i) {
    if (!(sil[i] > 0.5 && target_mask[i] > 0.5)) return false;
    Eigen::Map<const Vec3> tr(tangent.data() + 3 * i), tt(target_tangent.data() + 3 * i);
    return tr.squaredNorm() > 1e-18 && tt.squaredNorm() > 1e-18;
  };
  for (size_t i = 0; i < n; ++i)
    if (usable(i)) ++count;
  if (count == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!usable(i)) continue;
    Eigen::Map<const Vec3> tr(tangent.data() + 3 * i), tt(target_tangent.data() + 3 * i);
    double nr = tr.norm();
    Vec3 hr = tr / nr;
    Vec3 ht = tt.normalized();
    sum += 1.0 - hr.dot(ht);
    if (grad_tangent) {
      Vec3 g = -(ht - hr * hr.dot(ht)) / nr * (scale / count);
      for (int c = 0; c < 3; ++c) (*grad_tangent)[3 * i + c] += g[c];
    }
  }
  return sum / count;
}

double loss_orient2d(const std::vector<double>& sil, const std::vector<double>& enc,
                     const std::vector<uint8_t>& enc_valid, const std::vector<double>& target_mask,
                     const std::vector<double>& target_enc,
                     const std::vector<uint8_t>& target_valid, std::vector<double>* grad_enc,
                     double scale) {
  size_t n = sil.size();
  auto usable = [&](size_t i) {
    if (!enc_valid[i] || !target_valid[i]) return false;
    if (!(sil[i] > 0.5 && target_mask[i] > 0.5)) return false;
    Eigen::Map<const Vec2> er(enc.data() + 2 * i), et(target_enc.data() + 2 * i);
    return er.squaredNorm() > 1e-18 && et.squaredNorm() > 1e-18;
  };
  size_t count = 0;
  for (size_t i = 0; i < n; ++i)
    if (usable(i)) ++count;
  if (count == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!usable(i)) continue;
    Eigen::Map<const Vec2> er(enc.data() + 2 * i), et(target_enc.data() + 2 * i);
    double nr = er.norm();
    Vec2 hr = er / nr;
    Vec2 ht = et.normalized();
    sum += 1.0 - hr.dot(ht);
    if (grad_enc) {
      Vec2 g = -(ht - hr * hr.dot(ht)) / nr * (scale / count);
      (*grad_enc)[2 * i] += g[0];
      (*grad_enc)[2 * i + 1] += g[1];
    }
  }
  return sum / count;
}

double reg_stick(const std::vector<double>& sil, const std::vector<double>& depth,
                 const std::vector<double>& scalp_depth, std::vector<double>* grad_depth,
                 double scale) {
  size_t n = sil.size();
  size_t count = 0;
  for (size_t i = 0; i < n; ++i)
    if (sil[i] > 0.5) ++count;
  if (count == 0) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!(sil[i] > 0.5) || scalp_depth[i] <= 0.0) continue;
    double pen = depth[i] - scalp_depth[i];
    if (pen <= 0.0) continue;
    sum += pen;
    if (grad_depth) (*grad_depth)[i] += scale / count;
  }
  return sum / count;
}

double reg_root(const StrandSet& set, const StrandSet& root_ref, Eigen::MatrixXd* grad,
                double scale) {
  if (set.strands.size() != root_ref.strands.size())
    throw ContractError("root reference strand count mismatch");
  size_t R = set.strands.size();
  if (R == 0) return 0.0;
  auto offsets = set.vertex_offsets();
  double sum = 0.0;
  for (size_t s = 0; s < R; ++s) {
    Vec3 d = set.strands[s].vertices[0] - root_ref.strands[s].vertices[0];
    for (int c = 0; c < 3; ++c) {
      sum += std::abs(d[c]);
      if (grad) (*grad)(offsets[s], c) += scale * sgn(d[c]) / (3.0 * R);
    }
  }
  return sum / (3.0 * R);
}

double reg_curvature(const StrandSet& set, Eigen::MatrixXd* grad, double scale) {
  auto offsets = set.vertex_offsets();
  size_t M = 0;
  for (const auto& s : set.strands)
    if (s.vertices.size() > 2) M += s.vertices.size() - 2;
  if (M == 0) return 0.0;
  double sum = 0.0;
  for (size_t si = 0; si < set.strands.size(); ++si) {
    const auto& v = set.strands[si].vertices;
    for (size_t j = 1; j + 1 < v.size(); ++j) {
      Vec3 a = v[j] - v[j - 1], b = v[j + 1] - v[j];
      double na = a.norm(), nb = b.norm();
      if (na <= 1e-12 || nb <= 1e-12) continue;
      Vec3 ha = a / na, hb = b / nb;
      double c = ha.dot(hb);
      sum += 1.0 - c;
      if (grad) {
        Vec3 dLda = -(hb - ha * c) / na * (scale / M);
        Vec3 dLdb = -(ha - hb * c) / nb * (scale / M);
        int base = offsets[si];
        grad->row(base + j - 1) -= dLda.transpose();
        grad->row(base + j) += (dLda - dLdb).transpose();
        grad->row(base + j + 1) += dLdb.transpose();
      }
    }
  }
  return sum / M;
}

LossBreakdown evaluate_losses(const StrandSet& set, const StrandSet& root_ref,
                              const TargetViews& targets, const std::vector<int>& batch,
                              const LossWeights& w, double width_mm, bool use_orient2d,
                              Eigen::MatrixXd* grad_out) {
  if (batch.empty()) throw ContractError("empty view batch");
  if (grad_out) grad_out->setZero((int)set.total_vertices(), 3);
  LossBreakdown bd;
  double inv = 1.0 / batch.size();
  for (int vi : batch) {
    if (vi < 0 || vi >= (int)targets.size()) throw ContractError("view index out of range");
    const TargetView& tv = targets[vi];
    BillboardMesh mesh = build_billboards(set, tv.camera, width_mm);
    RenderOutputs ro = render_channels(mesh, tv.camera);
    size_t npx = (size_t)tv.camera.width * tv.camera.height;
    AAGradients up;
    if (grad_out) up.init(npx);
    auto gp = [&](std::vector<double>& v) { return grad_out ? &v : nullptr; };

    bd.depth += inv * loss_depth(ro.silhouette, ro.depth, tv.mask, tv.depth, gp(up.depth),
                                 w.w_d * inv);
    bd.mask += inv * loss_mask(ro.silhouette, tv.mask, gp(up.silhouette), w.w_m * inv);
    if (use_orient2d) {
      std::vector<double> genc;
      if (grad_out) genc.assign(npx * 2, 0.0);
      bd.orient2d += inv * loss_orient2d(ro.silhouette, ro.orient2d, ro.orient2d_valid, tv.mask,
                                         tv.orient2d, tv.orient2d_valid, gp(genc), w.w_o * inv);
      if (grad_out) orient2d_backward(ro.tangent, tv.camera, genc, up.tangent);
    } else {
      bd.tangent += inv * loss_tangent3d(ro.silhouette, ro.tangent, tv.mask, tv.tangent,
                                         gp(up.tangent), w.w_t * inv);
    }
    bd.stick += inv * reg_stick(ro.silhouette, ro.depth, tv.scalp_depth, gp(up.depth),
                                w.w_stick * inv);
    if (grad_out) {
      VertexGrads vg = diffrast_backward(mesh, tv.camera, ro.buffers, ro.aa, up);
      std::vector<Vec3> gx = billboard_backward(mesh, set, tv.camera, vg);
      for (size_t i = 0; i < gx.size(); ++i) grad_out->row((int)i) += gx[i].transpose();
    }
  }
  bd.root = reg_root(set, root_ref, grad_out, w.w_root);
  bd.curvature = reg_curvature(set, grad_out, w.w_c);
  bd.total = w.w_d * bd.depth + w.w_m * bd.mask + w.w_t * bd.tangent + w.w_o * bd.orient2d +
             w.w_stick * bd.stick + w.w_root * bd.root + w.w_c * bd.curvature;
  return bd;
}

namespace {

std::vector<int> pick_batch(size_t n_views, int batch, Rng& rng) {
  std::vector<int> idx(n_views);
  for (size_t i = 0; i < n_views; ++i) idx[i] = (int)i;
  if (batch <= 0 || (size_t)batch >= n_views) return idx;
  for (int i = 0; i < batch; ++i) {
    int j = i + (int)rng.uniform_index((uint32_t)(n_views - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(batch);
  return idx;
}

}  // namespace

StrandSet run_stage(const StrandSet& init, const StrandSet& root_ref, const TargetViews& targets,
                    const LossWeights& w, const StageConfig& stage, bool use_orient2d,
                    uint64_t seed, uint64_t stream_base, const StageHooks& hooks) {
  if (targets.empty()) throw ContractError("no target views");
  validate_strandset(init);
  LineLaplacian lap = build_laplacian(init, stage.k, stage.lambda);
  Eigen::MatrixXd x = flatten_positions(init);
  Eigen::MatrixXd u = to_differential(lap, x);
  AdamState adam;
  adam.init((int)x.rows());
  StrandSet cur = init;
  Eigen::MatrixXd gx((int)x.rows(), 3);
  auto t0 = std::chrono::steady_clock::now();
  for (int it = 0; it < stage.iterations; ++it) {
    Rng rng(seed, stream_base + (uint64_t)it);
    std::vector<int> batch = pick_batch(targets.size(), stage.view_batch, rng);
    LossBreakdown bd =
        evaluate_losses(cur, root_ref, targets, batch, w, stage.width_mm, use_orient2d, &gx);
    Eigen::MatrixXd gu = pull_back_gradient(lap, gx);
    adam_step(adam, u, gu, stage);
    x = from_differential(lap, u);
    unflatten_positions(x, cur);
    if (hooks.log) {
      double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      hooks.log->row({(double)it, bd.depth, bd.mask, use_orient2d ? bd.orient2d : bd.tangent,
                      bd.stick, bd.root, bd.curvature, bd.total, wall});
    }
    if (hooks.checkpoint_every > 0 && !hooks.checkpoint_prefix.empty() &&
        (it + 1) % hooks.checkpoint_every == 0)
      write_hair_strands(hooks.checkpoint_prefix + std::to_string(it + 1) + ".hair", cur);
  }
  return cur;
}

StrandSet fit_guides(const StrandSet& guides, const TargetViews& targets, const LossWeights& w,
                     const StageConfig& stage, uint64_t seed, const StageHooks& hooks) {
  return run_stage(guides, guides, targets, w, stage, /*use_orient2d=*/false, seed,
                   0x200000ull, hooks);
}

StrandSet fit_children(const StrandSet& children, const TargetViews& targets,
                       const LossWeights& w, const StageConfig& phase1, const StageConfig& phase2,
                       uint64_t seed, const StageHooks& hooks1, const StageHooks& hooks2) {
  StrandSet mid = run_stage(children, children, targets, w, phase1, /*use_orient2d=*/true, seed,
                            0x300000ull, hooks1);
  StageConfig relaxed = phase2;
  relaxed.k = 0;  // strands detach from the interpolation pattern
  return run_stage(mid, children, targets, w, relaxed, /*use_orient2d=*/true, seed, 0x400000ull,
                   hooks2);
}

}  // namespace strandopt
