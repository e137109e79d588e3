#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "strandopt/billboard.hpp"
#include "strandopt/diffrast.hpp"
#include "strandopt/optimize.hpp"
#include "strandopt/reparam.hpp"
#include "strandopt/scene.hpp"

using namespace strandopt;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string tmp_path(const std::string& name) {
  return std::string("/tmp/strandopt_opt_") + name;
}

// Two straight vertical strands near the origin, 5 vertices each.
StrandSet straight_pair() {
  StrandSet set;
  for (int s = 0; s < 2; ++s) {
    Strand st;
    for (int i = 0; i < 5; ++i)
      st.vertices.push_back(Vec3(-4.0 + 8.0 * s, -8.0 + 4.0 * i, 2.0 * s));
    set.strands.push_back(st);
  }
  return set;
}

StrandSet zigzag_pair() {
  StrandSet set;
  for (int s = 0; s < 2; ++s) {
    Strand st;
    for (int i = 0; i < 6; ++i)
      st.vertices.push_back(Vec3(-4.0 + 8.0 * s + (i % 2 ? 2.0 : -2.0), -8.0 + 3.2 * i, 0.0));
    set.strands.push_back(st);
  }
  return set;
}

TargetViews render_targets(const StrandSet& set, const std::vector<Camera>& cams,
                           double width_mm) {
  TargetViews targets;
  for (const Camera& cam : cams) {
    BillboardMesh mesh = build_billboards(set, cam, width_mm);
    RenderOutputs ro = render_channels(mesh, cam);
    TargetView tv;
    tv.camera = cam;
    tv.mask = ro.silhouette;
    tv.depth = ro.depth;
    tv.tangent = ro.tangent;
    tv.orient2d = ro.orient2d;
    tv.orient2d_valid = ro.orient2d_valid;
    tv.scalp_depth.assign(tv.mask.size(), 0.0);
    targets.push_back(std::move(tv));
  }
  return targets;
}

double max_vertex_move(const StrandSet& a, const StrandSet& b) {
  double worst = 0.0;
  for (size_t s = 0; s < a.strands.size(); ++s)
    for (size_t i = 0; i < a.strands[s].vertices.size(); ++i)
      worst = std::max(worst, (a.strands[s].vertices[i] - b.strands[s].vertices[i]).norm());
  return worst;
}

}  // namespace

TEST_SUITE("optimize") {
  TEST_CASE("adam: zero gradient leaves parameters untouched") {
    StageConfig cfg;
    cfg.lr = 0.1;
    AdamState st;
    st.init(4);
    Eigen::MatrixXd p = Eigen::MatrixXd::Random(4, 3);
    Eigen::MatrixXd p0 = p;
    adam_step(st, p, Eigen::MatrixXd::Zero(4, 3), cfg);
    CHECK((p - p0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.step == 1);
  }

  TEST_CASE("adam: a constant gradient moves each coordinate by about lr per step") {
    StageConfig cfg;
    cfg.lr = 0.01;
    AdamState st;
    st.init(2);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2, 3);
    Eigen::MatrixXd g = Eigen::MatrixXd::Constant(2, 3, 0.5);
    // Bias correction makes m_hat = g and v_hat = g*g exactly at every step,
    // so each step subtracts lr * g / (|g| + eps).
    double per_step = cfg.lr * 0.5 / (0.5 + cfg.eps);
    for (int it = 1; it <= 5; ++it) {
      adam_step(st, p, g, cfg);
      CHECK(p(0, 0) == doctest::Approx(-it * per_step).epsilon(1e-12));
      CHECK(p(1, 2) == doctest::Approx(-it * per_step).epsilon(1e-12));
    }
  }

  TEST_CASE("mask loss closed forms over all pixels") {
    std::vector<double> zero(8, 0.0), one(8, 1.0), checker(8);
    for (int i = 0; i < 8; ++i) checker[i] = i % 2 ? 1.0 : 0.0;
    CHECK(loss_mask(one, one, nullptr, 1.0) == 0.0);
    CHECK(loss_mask(one, zero, nullptr, 1.0) == doctest::Approx(1.0));
    CHECK(loss_mask(checker, zero, nullptr, 1.0) == doctest::Approx(0.5));

    std::vector<double> grad(8, 0.0);
    loss_mask(checker, zero, &grad, 2.0);
    for (int i = 0; i < 8; ++i) CHECK(grad[i] == doctest::Approx(i % 2 ? 2.0 / 8 : 0.0));
  }

  TEST_CASE("depth loss averages absolute error over jointly covered pixels") {
    std::vector<double> sil(10, 1.0), mask(10, 1.0), td(10, 100.0), d(10);
    for (int i = 0; i < 10; ++i) d[i] = 100.0 + 0.75;
    CHECK(loss_depth(sil, d, mask, td, nullptr, 1.0) == doctest::Approx(0.75));
    for (int i = 0; i < 10; ++i) d[i] = 100.0 + (i < 5 ? 2.0 : -2.0);
    CHECK(loss_depth(sil, d, mask, td, nullptr, 1.0) == doctest::Approx(2.0));

    // Pixels outside either mask or with background target depth do not count.
    mask[0] = 0.0;
    sil[1] = 0.0;
    td[2] = 0.0;
    d.assign(10, 100.0 + 1.0);
    CHECK(loss_depth(sil, d, mask, td, nullptr, 1.0) == doctest::Approx(1.0));
    std::vector<double> grad(10, 0.0);
    loss_depth(sil, d, mask, td, &grad, 1.0);
    CHECK(grad[0] == 0.0);
    CHECK(grad[1] == 0.0);
    CHECK(grad[2] == 0.0);
    CHECK(grad[3] == doctest::Approx(1.0 / 7));
  }

  TEST_CASE("tangent loss is one minus the cosine between unit tangents") {
    std::vector<double> sil(3, 1.0), mask(3, 1.0);
    std::vector<double> t = {1, 0, 0, 0, 2, 0, 3, 0, 0};   // unnormalized ok
    std::vector<double> tt = {1, 0, 0, 0, -1, 0, 0, 1, 0};  // same, opposite, orthogonal
    double v = loss_tangent3d(sil, t, mask, tt, nullptr, 1.0);
    CHECK(v == doctest::Approx((0.0 + 2.0 + 1.0) / 3));

    // A zero rendered tangent drops the pixel from the average.
    t[0] = t[1] = t[2] = 0.0;
    CHECK(loss_tangent3d(sil, t, mask, tt, nullptr, 1.0) == doctest::Approx((2.0 + 1.0) / 2));
  }

  TEST_CASE("2D orientation loss compares doubled-angle encodings where both are valid") {
    std::vector<double> sil(4, 1.0), mask(4, 1.0);
    std::vector<double> enc = {1, 0, 1, 0, 1, 0, 1, 0};
    std::vector<double> tenc = {1, 0, 0, 1, -1, 0, 1, 0};  // 0, 45, 90 degrees apart, equal
    std::vector<uint8_t> valid(4, 1), tvalid(4, 1);
    double v = loss_orient2d(sil, enc, valid, mask, tenc, tvalid, nullptr, 1.0);
    CHECK(v == doctest::Approx((0.0 + 1.0 + 2.0 + 0.0) / 4));

    tvalid[2] = 0;  // the worst pixel leaves the average
    v = loss_orient2d(sil, enc, valid, mask, tenc, tvalid, nullptr, 1.0);
    CHECK(v == doctest::Approx(1.0 / 3));
  }

  TEST_CASE("stick regularizer charges only depth behind the scalp") {
    std::vector<double> sil(10, 1.0), depth(10, 95.0), scalp(10, 100.0);
    CHECK(reg_stick(sil, depth, scalp, nullptr, 1.0) == 0.0);
    depth[4] = 103.0;  // 3mm behind
    CHECK(reg_stick(sil, depth, scalp, nullptr, 1.0) == doctest::Approx(3.0 / 10));
    depth[5] = 101.0;
    CHECK(reg_stick(sil, depth, scalp, nullptr, 1.0) == doctest::Approx(4.0 / 10));
    scalp[4] = 0.0;  // unknown scalp depth exempts the pixel
    CHECK(reg_stick(sil, depth, scalp, nullptr, 1.0) == doctest::Approx(1.0 / 10));
  }

  TEST_CASE("root regularizer measures per-axis drift of first vertices") {
    StrandSet set = straight_pair();
    StrandSet ref = set;
    CHECK(reg_root(set, ref, nullptr, 1.0) == 0.0);
    set.strands[1].vertices[0] += Vec3(1, 1, 1);
    CHECK(reg_root(set, ref, nullptr, 1.0) == doctest::Approx(3.0 / (3.0 * 2)));

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero((int)set.total_vertices(), 3);
    reg_root(set, ref, &grad, 6.0);
    auto off = set.vertex_offsets();
    for (int c = 0; c < 3; ++c) {
      CHECK(grad(off[0], c) == 0.0);
      CHECK(grad(off[1], c) == doctest::Approx(6.0 / (3.0 * 2)));
    }

    StrandSet wrong;
    wrong.strands.push_back(set.strands[0]);
    CHECK_THROWS_AS(reg_root(set, wrong, nullptr, 1.0), ContractError);
  }

  TEST_CASE("curvature regularizer: straight is free, turns cost one minus cosine") {
    StrandSet straight = straight_pair();
    CHECK(reg_curvature(straight, nullptr, 1.0) == 0.0);

    StrandSet elbow;
    Strand e;
    e.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0)};
    elbow.strands.push_back(e);
    CHECK(reg_curvature(elbow, nullptr, 1.0) == doctest::Approx(1.0));

    // Regular polygon arc: every interior vertex turns by exactly alpha.
    double alpha = 2.0 * kPi / 24;
    StrandSet poly;
    Strand p;
    for (int k = 0; k <= 10; ++k)
      p.vertices.push_back(Vec3(10.0 * std::cos(k * alpha), 10.0 * std::sin(k * alpha), 0.0));
    poly.strands.push_back(p);
    CHECK(reg_curvature(poly, nullptr, 1.0) == doctest::Approx(1.0 - std::cos(alpha)));

    // The gradient of a translation-invariant energy sums to zero per axis.
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero((int)poly.total_vertices(), 3);
    reg_curvature(poly, &grad, 1.0);
    for (int c = 0; c < 3; ++c) CHECK(grad.col(c).sum() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(grad.cwiseAbs().maxCoeff() > 0.0);
  }

  TEST_CASE("rendering a set against its own targets scores zero everywhere") {
    StrandSet set = straight_pair();
    std::vector<Camera> cams = make_camera_ring(2, 300.0, Vec3::Zero(), 400.0, 24);
    TargetViews targets = render_targets(set, cams, 2.0);
    LossWeights w;
    Eigen::MatrixXd grad;
    LossBreakdown bd = evaluate_losses(set, set, targets, {0, 1}, w, 2.0, false, &grad);
    CHECK(bd.mask == 0.0);
    CHECK(bd.depth == 0.0);
    CHECK(bd.tangent == 0.0);
    CHECK(bd.stick == 0.0);
    CHECK(bd.root == 0.0);
    CHECK(bd.curvature == 0.0);
    CHECK(bd.total == 0.0);
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(evaluate_losses(set, set, targets, {}, w, 2.0, false, nullptr),
                    ContractError);
    CHECK_THROWS_AS(evaluate_losses(set, set, targets, {2}, w, 2.0, false, nullptr),
                    ContractError);
  }

  TEST_CASE("view order inside a batch changes nothing") {
    StrandSet set = straight_pair();
    StrandSet target_set = set;
    for (auto& s : target_set.strands)
      for (auto& v : s.vertices) v += Vec3(1.2, 0.8, 0.0);
    std::vector<Camera> cams = make_camera_ring(2, 300.0, Vec3::Zero(), 400.0, 32);
    TargetViews targets = render_targets(target_set, cams, 2.0);
    LossWeights w;
    Eigen::MatrixXd ga, gb;
    LossBreakdown a = evaluate_losses(set, set, targets, {0, 1}, w, 2.0, false, &ga);
    LossBreakdown b = evaluate_losses(set, set, targets, {1, 0}, w, 2.0, false, &gb);
    CHECK(a.total == b.total);
    CHECK(a.mask == b.mask);
    CHECK((ga - gb).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("mask-only gradients match finite differences on a stable scene") {
    StrandSet set = straight_pair();
    StrandSet target_set = set;
    for (auto& s : target_set.strands)
      for (auto& v : s.vertices) v += Vec3(1.2, 0.8, 0.0);
    std::vector<Camera> cams = make_camera_ring(2, 300.0, Vec3::Zero(), 400.0, 32);
    TargetViews targets = render_targets(target_set, cams, 2.0);
    LossWeights w;
    w.w_d = w.w_t = w.w_o = w.w_stick = w.w_root = w.w_c = 0.0;  // mask only
    std::vector<int> batch = {0, 1};

    Eigen::MatrixXd grad;
    evaluate_losses(set, set, targets, batch, w, 2.0, false, &grad);

    auto eval_total = [&](const StrandSet& s) {
      return evaluate_losses(s, set, targets, batch, w, 2.0, false, nullptr).total;
    };
    double h = 1e-3;
    int checked = 0;
    for (int vi : {1, 2, 3}) {
      for (int c = 0; c < 2; ++c) {
        for (int s = 0; s < 2; ++s) {
          StrandSet plus = set, minus = set;
          plus.strands[s].vertices[vi][c] += h;
          minus.strands[s].vertices[vi][c] -= h;
          double fd = (eval_total(plus) - eval_total(minus)) / (2.0 * h);
          if (std::abs(fd) < 1e-6) continue;
          int row = set.vertex_offsets()[s] + vi;
          CHECK(grad(row, c) == doctest::Approx(fd).epsilon(0.1));
          ++checked;
        }
      }
    }
    CHECK(checked >= 6);
  }

  TEST_CASE("pulled-back gradients match finite differences in differential coordinates") {
    StrandSet set = zigzag_pair();
    StrandSet root_ref = set;
    for (auto& s : root_ref.strands) s.vertices[0] += Vec3(0.3, -0.2, 0.1);
    std::vector<Camera> cams = make_camera_ring(1, 300.0, Vec3::Zero(), 400.0, 16);
    TargetViews targets = render_targets(set, cams, 2.0);
    LossWeights w;
    w.w_d = w.w_m = w.w_t = w.w_o = w.w_stick = 0.0;  // smooth terms only
    w.w_root = 1.0;
    w.w_c = 0.5;

    LineLaplacian lap = build_laplacian(set, 2, 3.0);
    Eigen::MatrixXd x = flatten_positions(set);
    Eigen::MatrixXd u = to_differential(lap, x);
    Eigen::MatrixXd gx;
    evaluate_losses(set, root_ref, targets, {0}, w, 2.0, false, &gx);
    Eigen::MatrixXd gu = pull_back_gradient(lap, gx);

    auto eval_u = [&](const Eigen::MatrixXd& uu) {
      StrandSet s2 = set;
      unflatten_positions(from_differential(lap, uu), s2);
      return evaluate_losses(s2, root_ref, targets, {0}, w, 2.0, false, nullptr).total;
    };
    double h = 1e-4;
    int checked = 0;
    for (int row : {0, 3, 7, 9}) {
      for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXd up = u, um = u;
        up(row, c) += h;
        um(row, c) -= h;
        double fd = (eval_u(up) - eval_u(um)) / (2.0 * h);
        if (std::abs(fd) < 1e-9) continue;
        CHECK(gu(row, c) == doctest::Approx(fd).epsilon(0.02));
        ++checked;
      }
    }
    CHECK(checked >= 8);
  }

  TEST_CASE("a stage on regularizers alone straightens zigzag strands") {
    StrandSet set = zigzag_pair();
    std::vector<Camera> cams = make_camera_ring(1, 300.0, Vec3::Zero(), 400.0, 16);
    TargetViews targets = render_targets(set, cams, 2.0);
    LossWeights w;
    w.w_d = w.w_m = w.w_t = w.w_o = w.w_stick = 0.0;
    w.w_root = 0.2;
    w.w_c = 1.0;
    StageConfig stage;
    stage.k = 0;
    stage.lambda = 1.0;
    stage.iterations = 250;
    stage.lr = 0.1;
    stage.width_mm = 2.0;
    stage.view_batch = 1;
    double before = evaluate_losses(set, set, targets, {0}, w, 2.0, false, nullptr).total;
    StrandSet out = run_stage(set, set, targets, w, stage, false, 7, 0x900000ull, {});
    double after = evaluate_losses(out, set, targets, {0}, w, 2.0, false, nullptr).total;
    CHECK(after < 0.5 * before);
  }

  TEST_CASE("a stage is a deterministic function of its seed") {
    StrandSet guides = straight_pair();
    StrandSet truth = guides;
    for (auto& s : truth.strands)
      for (auto& v : s.vertices) v += Vec3(1.0, 0.5, 0.0);
    std::vector<Camera> cams = make_camera_ring(3, 300.0, Vec3::Zero(), 400.0, 24);
    StageConfig stage;
    stage.iterations = 8;
    stage.lr = 0.02;
    stage.width_mm = 2.0;
    stage.view_batch = 2;  // forces the per-iteration view sampler into play
    TargetViews targets = render_targets(truth, cams, stage.width_mm);
    StrandSet a = fit_guides(guides, targets, LossWeights{}, stage, 11, {});
    StrandSet b = fit_guides(guides, targets, LossWeights{}, stage, 11, {});
    CHECK(max_vertex_move(a, b) == 0.0);
    StrandSet c = fit_guides(guides, targets, LossWeights{}, stage, 12, {});
    CHECK(max_vertex_move(a, c) > 0.0);  // a different view schedule shows up
  }

  TEST_CASE("fitting recovers a translated target") {
    StrandSet guides = straight_pair();
    StrandSet truth = guides;
    for (auto& s : truth.strands)
      for (auto& v : s.vertices) v += Vec3(1.5, 0.0, 0.0);
    std::vector<Camera> cams = make_camera_ring(3, 300.0, Vec3::Zero(), 400.0, 32);
    StageConfig stage;
    stage.k = 2;
    stage.lambda = 2.0;
    stage.iterations = 80;
    stage.lr = 0.03;
    stage.width_mm = 2.0;
    stage.view_batch = 3;
    TargetViews targets = render_targets(truth, cams, stage.width_mm);
    LossWeights w;
    w.w_root = 0.0;  // let roots chase the translation
    w.w_stick = 0.0;
    auto mask_loss = [&](const StrandSet& s) {
      return evaluate_losses(s, guides, targets, {0, 1, 2}, w, stage.width_mm, false, nullptr)
          .mask;
    };
    double before = mask_loss(guides);
    StrandSet out = fit_guides(guides, targets, w, stage, 13, {});
    CHECK(mask_loss(out) < 0.5 * before);
    CHECK(max_vertex_move(guides, out) > 0.3);
  }

  TEST_CASE("two-phase child fitting preserves topology and stays finite") {
    StrandSet children = zigzag_pair();
    std::vector<Camera> cams = make_camera_ring(2, 300.0, Vec3::Zero(), 400.0, 16);
    TargetViews targets = render_targets(children, cams, 2.0);
    StageConfig phase;
    phase.iterations = 2;
    phase.lr = 0.01;
    phase.width_mm = 2.0;
    phase.view_batch = 1;
    StrandSet out = fit_children(children, targets, LossWeights{}, phase, phase, 17, {}, {});
    REQUIRE(out.strands.size() == children.strands.size());
    for (size_t s = 0; s < out.strands.size(); ++s) {
      REQUIRE(out.strands[s].vertices.size() == children.strands[s].vertices.size());
      for (const Vec3& v : out.strands[s].vertices) CHECK(v.allFinite());
    }
  }

  TEST_CASE("stage hooks log a row per iteration and drop periodic checkpoints") {
    StrandSet set = straight_pair();
    std::vector<Camera> cams = make_camera_ring(1, 300.0, Vec3::Zero(), 400.0, 16);
    TargetViews targets = render_targets(set, cams, 2.0);
    StageConfig stage;
    stage.iterations = 4;
    stage.lr = 0.001;
    stage.width_mm = 2.0;
    stage.view_batch = 1;
    std::string log_path = tmp_path("stage_log.csv");
    std::string ckpt = tmp_path("ckpt_");
    {
      CsvLogger log(log_path, {"iteration", "depth", "mask", "orient", "stick", "root",
                               "curvature", "total", "wall_s"});
      StageHooks hooks;
      hooks.log = &log;
      hooks.checkpoint_prefix = ckpt;
      hooks.checkpoint_every = 2;
      run_stage(set, set, targets, LossWeights{}, stage, false, 19, 0x900000ull, hooks);
    }
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    CHECK(line.substr(0, 9) == "iteration");
    int rows = 0;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 4);
    for (int n : {2, 4}) {
      StrandSet ck = read_hair_strands(ckpt + std::to_string(n) + ".hair");
      CHECK(ck.strands.size() == set.strands.size());
      std::remove((ckpt + std::to_string(n) + ".hair").c_str());
    }
    std::remove(log_path.c_str());
  }
}
