#include <omp.h>

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "strandopt/io_formats.hpp"
#include "strandopt/optimize.hpp"
#include "strandopt/pipeline.hpp"
#include "strandopt/scene.hpp"
#include "support.hpp"

using namespace strandopt;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& name) {
  std::string d = std::string("/tmp/strandopt_pipe_") + name;
  fs::remove_all(d);
  return d;
}

// Three short strands by the sphere pole, growing straight up: visible and in
// front of the scalp from every upper-hemisphere camera.
struct PoleScene {
  TriMesh scalp_solid = testsupport::make_sphere(30.0, 8, 12);
  StrandSet strands;
  std::vector<Camera> cams = make_camera_ring(2, 150.0, Vec3::Zero(), 200.0, 48);

  PoleScene() {
    for (int s = 0; s < 3; ++s) {
      Strand st;
      Vec3 root(6.0 * s - 6.0, 0.0, 28.0);
      root *= 30.0 / root.norm();
      for (int k = 0; k < 4; ++k) st.vertices.push_back(root + Vec3(0, 0, 5.0 * k));
      strands.strands.push_back(st);
    }
  }
};

int count_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  int n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("the camera rig matches the config and frames the head") {
    PipelineConfig cfg;
    cfg.views = 7;
    cfg.image_size = 96;
    std::vector<Camera> cams = pipeline_cameras(cfg);
    REQUIRE(cams.size() == 7);
    Vec3 center(0, 0, 0.25 * cfg.scalp_radius);
    double extent = cfg.scalp_radius + cfg.strand_length + 10.0;
    for (const Camera& c : cams) {
      CHECK(c.width == 96);
      CHECK(c.height == 96);
      // The hull sphere around `center` stays inside the image.
      const std::vector<Vec3> probes = {
          center + Vec3(extent, 0, 0), center - Vec3(extent, 0, 0), center + Vec3(0, extent, 0),
          center + Vec3(0, 0, extent), center - Vec3(0, 0, extent)};
      for (const Vec3& probe : probes) {
        Vec2 uv = c.project(probe);
        CHECK(uv.x() > -1.0);
        CHECK(uv.x() < 97.0);
        CHECK(uv.y() > -1.0);
        CHECK(uv.y() < 97.0);
      }
    }
    CHECK(gravity_down() == Vec3(0, 0, -1));
  }

  TEST_CASE("meshes loaded from disk recover radial normals on a sphere") {
    ScalpSurface s = scalp_from_mesh(testsupport::make_sphere(10.0, 8, 12));
    REQUIRE(s.vertex_normals.size() == s.mesh.positions.size());
    for (size_t i = 0; i < s.vertex_normals.size(); ++i)
      CHECK(s.vertex_normals[i].dot(s.mesh.positions[i].normalized()) > 0.9);

    TriMesh orphan = testsupport::make_sphere(10.0, 4, 6);
    orphan.positions.push_back(Vec3(99, 99, 99));  // no incident triangle
    CHECK_THROWS_AS(scalp_from_mesh(orphan), ContractError);
  }

  TEST_CASE("targets of an empty strand set show only the scalp") {
    PoleScene ps;
    SyntheticTargets t = make_targets(StrandSet{}, ps.cams, ps.scalp_solid, 2.0, 0.0, 1);
    REQUIRE(t.views.size() == 2);
    REQUIRE(t.gray.size() == 2);
    for (size_t v = 0; v < t.views.size(); ++v) {
      const TargetView& tv = t.views[v];
      for (double m : tv.mask) CHECK(m == 0.0);
      for (double g : t.gray[v]) CHECK(g == 0.0);
      for (uint8_t f : tv.orient2d_valid) CHECK(f == 0);
      // The scalp fills the image center (the optical axis hits the sphere).
      int w = tv.camera.width;
      CHECK(tv.scalp_depth[w * (w / 2) + w / 2] > 0.0);
    }
    CHECK_THROWS_AS(make_targets(StrandSet{}, {}, ps.scalp_solid, 2.0, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(make_targets(StrandSet{}, ps.cams, ps.scalp_solid, 0.0, 0.0, 1),
                    ConfigError);
  }

  TEST_CASE("ground truth scores zero against its own targets") {
    PoleScene ps;
    SyntheticTargets t = make_targets(ps.strands, ps.cams, ps.scalp_solid, 2.0, 0.0, 1);
    LossBreakdown bd =
        evaluate_losses(ps.strands, ps.strands, t.views, {0, 1}, LossWeights{}, 2.0, false,
                        nullptr);
    CHECK(bd.mask == 0.0);
    CHECK(bd.depth == 0.0);
    CHECK(bd.tangent == 0.0);
    CHECK(bd.stick == 0.0);
    CHECK(bd.root == 0.0);
  }

  TEST_CASE("target noise moves the mask loss by about the noise magnitude") {
    PoleScene ps;
    SyntheticTargets noisy = make_targets(ps.strands, ps.cams, ps.scalp_solid, 2.0, 0.05, 3);
    LossWeights w;
    LossBreakdown bd =
        evaluate_losses(ps.strands, ps.strands, noisy.views, {0, 1}, w, 2.0, false, nullptr);
    CHECK(bd.mask > 0.01);
    CHECK(bd.mask < 0.1);

    SyntheticTargets again = make_targets(ps.strands, ps.cams, ps.scalp_solid, 2.0, 0.05, 3);
    CHECK(noisy.views[0].mask == again.views[0].mask);
    SyntheticTargets other = make_targets(ps.strands, ps.cams, ps.scalp_solid, 2.0, 0.05, 4);
    CHECK(noisy.views[0].mask != other.views[0].mask);
  }

  TEST_CASE("targets survive the disk round trip at float precision") {
    PoleScene ps;
    SyntheticTargets t = make_targets(ps.strands, ps.cams, ps.scalp_solid, 2.0, 0.0, 1);
    std::string dir = tmp_dir("targets");
    write_targets(dir, t);
    TargetViews back = load_targets(dir, ps.cams);
    std::vector<std::vector<double>> gray = load_gray(dir, ps.cams);
    REQUIRE(back.size() == t.views.size());
    for (size_t v = 0; v < back.size(); ++v) {
      const TargetView &a = t.views[v], &b = back[v];
      REQUIRE(a.mask.size() == b.mask.size());
      for (size_t p = 0; p < a.mask.size(); ++p) {
        CHECK(std::abs(a.mask[p] - b.mask[p]) < 1e-6);
        CHECK(std::abs(a.depth[p] - b.depth[p]) < 1e-3);
        CHECK(std::abs(a.scalp_depth[p] - b.scalp_depth[p]) < 1e-3);
        for (int c = 0; c < 3; ++c)
          CHECK(std::abs(a.tangent[3 * p + c] - b.tangent[3 * p + c]) < 1e-5);
        for (int c = 0; c < 2; ++c)
          CHECK(std::abs(a.orient2d[2 * p + c] - b.orient2d[2 * p + c]) < 1e-5);
        CHECK(std::abs(t.gray[v][p] - gray[v][p]) < 1e-6);
      }
    }
    fs::remove_all(dir);
  }

  TEST_CASE("rendering is independent of the OpenMP thread count") {
    PoleScene ps;
    int n0 = omp_get_max_threads();
    omp_set_num_threads(1);
    SyntheticTargets serial = make_targets(ps.strands, ps.cams, ps.scalp_solid, 2.0, 0.0, 1);
    omp_set_num_threads(4);
    SyntheticTargets parallel = make_targets(ps.strands, ps.cams, ps.scalp_solid, 2.0, 0.0, 1);
    omp_set_num_threads(n0);
    for (size_t v = 0; v < serial.views.size(); ++v) {
      CHECK(serial.views[v].mask == parallel.views[v].mask);
      CHECK(serial.views[v].depth == parallel.views[v].depth);
      CHECK(serial.views[v].tangent == parallel.views[v].tangent);
      CHECK(serial.gray[v] == parallel.gray[v]);
    }
  }

  TEST_CASE("the output lock is exclusive for its lifetime") {
    std::string dir = tmp_dir("lock");
    {
      OutputLock lock(dir);
      CHECK(fs::exists(dir + "/.lock"));
      CHECK_THROWS_AS(OutputLock{dir}, ConfigError);
    }
    CHECK(!fs::exists(dir + "/.lock"));
    {
      OutputLock relock(dir);  // fine after release
      CHECK(fs::exists(dir + "/.lock"));
    }
    fs::remove_all(dir);
  }

  TEST_CASE("the line-growing benchmark rejects bad arguments and idles at zero rate") {
    CHECK_THROWS_AS(toy_aa_run(0.0, 64, 10, 1.0, ""), ConfigError);
    CHECK_THROWS_AS(toy_aa_run(1.0, 16, 10, 1.0, ""), ConfigError);
    CHECK_THROWS_AS(toy_aa_run(1.0, 64, 0, 1.0, ""), ConfigError);

    ToyResult idle = toy_aa_run(1.0, 64, 3, 0.0, "");
    CHECK(idle.final_loss == idle.initial_loss);
    CHECK(idle.tip_error_px > 10.0);
  }

  TEST_CASE("the line-growing benchmark makes clear progress at unit rate") {
    ToyResult r = toy_aa_run(1.0, 64, 1500, 1.0, "");
    CHECK(r.final_loss < 0.5 * r.initial_loss);
    CHECK(r.tip_error_px < 10.0);
  }

  TEST_CASE("all stages run back to back on a miniature scene") {
    std::string dir = tmp_dir("stages");
    PipelineConfig cfg;
    cfg.out_dir = dir;
    cfg.style = "straight";
    cfg.guides = 24;
    cfg.children = 40;
    cfg.strand_vertices = 6;
    cfg.scalp_radius = 20.0;
    cfg.strand_length = 12.0;
    cfg.views = 4;
    cfg.image_size = 64;
    cfg.width_mm = 5.0;  // ~2.4 px: leaves interior pixels with exact depth
    cfg.seed = 5;
    cfg.orient_source = "exact";
    cfg.lift_candidates = 64;
    cfg.lift_refine_steps = 6;
    cfg.lift_stride = 1;
    cfg.lift_depth_tol = 4.0;
    cfg.downsample_voxel = 4.0;
    cfg.meanshift_radius = 3.0;
    cfg.mst_restarts = 10;
    cfg.grid_h = 3.0;
    cfg.iters_guides = 10;
    cfg.iters_children0 = 6;
    cfg.iters_children1 = 4;
    cfg.view_batch = 2;

    stage_synth(cfg);
    CHECK(fs::exists(dir + "/cameras.json"));
    CHECK(fs::exists(dir + "/gt.hair"));
    CHECK(fs::exists(dir + "/gt_guides.hair"));
    CHECK(fs::exists(dir + "/scalp.obj"));
    CHECK(fs::exists(dir + "/shell.obj"));
    CHECK(fs::exists(dir + "/targets/view_000_mask.pfm"));

    stage_orient(cfg);
    OrientedPoints cloud = read_ply_points(dir + "/cloud.ply");
    CHECK(cloud.positions.size() > 50);

    stage_init(cfg);
    StrandSet init = read_hair_strands(dir + "/init.hair");
    CHECK(init.strands.size() >= 4);
    CHECK(fs::exists(dir + "/field.ovol"));
    StrandSet init_children = read_hair_strands(dir + "/init_children.hair");
    CHECK(init_children.strands.size() == 40);

    stage_fit_guides(cfg);
    StrandSet guides = read_hair_strands(dir + "/guides.hair");
    CHECK(guides.strands.size() == init.strands.size());
    CHECK(count_lines(dir + "/log_guides.csv") == 1 + cfg.iters_guides);

    stage_fit_children(cfg);
    StrandSet children = read_hair_strands(dir + "/children.hair");
    CHECK(children.strands.size() == 40);
    CHECK(count_lines(dir + "/log_children0.csv") == 1 + cfg.iters_children0);
    CHECK(count_lines(dir + "/log_children1.csv") == 1 + cfg.iters_children1);

    stage_render(cfg, "children");
    CHECK(fs::exists(dir + "/renders/children_view000.png"));
    CHECK(fs::exists(dir + "/renders/children_view003.png"));
    CHECK_THROWS_AS(stage_render(cfg, "nonexistent"), ConfigError);

    stage_eval(cfg);
    // 4 artifacts x 2 match modes x 3 thresholds, plus the header.
    CHECK(count_lines(dir + "/metrics.csv") == 1 + 4 * 2 * 3);
    fs::remove_all(dir);
  }
}
