#include "strandopt/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "strandopt/billboard.hpp"
#include "strandopt/diffrast.hpp"
#include "strandopt/field.hpp"
#include "strandopt/io_formats.hpp"
#include "strandopt/metrics.hpp"
#include "strandopt/orientation.hpp"
#include "strandopt/rng.hpp"
#include "strandopt/scene.hpp"

namespace strandopt {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Seed streams. Scene generation burns its own streams; these stay disjoint.
constexpr uint64_t kStreamNoiseBase = 0x500000;   // + view index
constexpr uint64_t kStreamGuideRoots = 0x600001;
constexpr uint64_t kStreamChildRoots = 0x600002;
constexpr uint64_t kStreamGuideFit = 0x200000;    // + iteration, used inside run_stage
constexpr uint64_t kStreamChildFit0 = 0x300000;
constexpr uint64_t kStreamChildFit1 = 0x400000;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string view_file(const std::string& dir, int v, const char* tag, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "view_%03d_%s.%s", v, tag, ext);
  return dir + "/" + buf;
}

PfmImage plane_to_pfm(const std::vector<double>& plane, int w, int h, int c) {
  PfmImage img;
  img.width = w;
  img.height = h;
  img.channels = c;
  img.data.resize(plane.size());
  if (plane.size() != (size_t)w * h * c) throw ContractError("plane size mismatch on PFM export");
  for (size_t i = 0; i < plane.size(); ++i) img.data[i] = (float)plane[i];
  return img;
}

std::vector<double> pfm_plane(const PfmImage& img, int w, int h, int c, const std::string& what) {
  if (img.width != w || img.height != h || img.channels != c)
    throw ContractError("target image " + what + " does not match the camera geometry");
  std::vector<double> plane(img.data.size());
  for (size_t i = 0; i < plane.size(); ++i) plane[i] = img.data[i];
  return plane;
}

std::vector<unsigned char> to_bytes(const std::vector<double>& plane) {
  std::vector<unsigned char> px(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) {
    double v = std::clamp(plane[i], 0.0, 1.0);
    px[i] = (unsigned char)std::lround(v * 255.0);
  }
  return px;
}

LossWeights weights_from(const PipelineConfig& cfg) {
  LossWeights w;
  w.w_stick = cfg.w_stick;
  w.w_root = cfg.w_root;
  w.w_c = cfg.w_c;
  w.w_d = cfg.w_d;
  w.w_m = cfg.w_m;
  w.w_t = cfg.w_t;
  w.w_o = cfg.w_o;
  return w;
}

StageConfig stage_from(const PipelineConfig& cfg, int k, int iterations) {
  StageConfig s;
  s.k = k;
  s.lambda = cfg.lambda;
  s.iterations = iterations;
  s.lr = cfg.lr;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.adam_eps;
  s.width_mm = cfg.width_mm;
  s.view_batch = cfg.view_batch;
  return s;
}

// Sobol root positions plus the nearest scalp vertex normal as the root frame.
std::vector<RootPoint> sample_scalp_roots(const ScalpSurface& scalp, int n, uint64_t seed) {
  std::vector<Vec3> pos = sample_child_roots(scalp, n, seed);
  std::vector<RootPoint> roots(pos.size());
  for (size_t i = 0; i < pos.size(); ++i) {
    int best = 0;
    double best_d = 1e300;
    for (size_t v = 0; v < scalp.mesh.positions.size(); ++v) {
      double d = (scalp.mesh.positions[v] - pos[i]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = (int)v;
      }
    }
    roots[i] = RootPoint{pos[i], scalp.vertex_normals[best]};
  }
  return roots;
}

StrandSet line_strands(const std::vector<RootPoint>& roots, double length, int nverts) {
  StrandSet set;
  set.strands.resize(roots.size());
  double step = length / (nverts - 1);
  for (size_t i = 0; i < roots.size(); ++i) {
    auto& v = set.strands[i].vertices;
    v.resize(nverts);
    for (int k = 0; k < nverts; ++k) v[k] = roots[i].position + (step * k) * roots[i].normal;
  }
  return set;
}

std::vector<Vec3> first_vertices(const StrandSet& set) {
  std::vector<Vec3> roots;
  roots.reserve(set.strands.size());
  for (const auto& s : set.strands) roots.push_back(s.vertices.front());
  return roots;
}

std::vector<double> silhouette_aa(const BillboardMesh& bb, const Camera& cam,
                                  RenderBuffers* rb_out, AAOutput* aa_out) {
  RenderBuffers rb = rasterize(bb, cam);
  AAOutput aa = antialias(bb, cam, rb);
  std::vector<double> sil = aa_apply(aa, extract_channel(bb, rb, Channel::Silhouette), 1);
  if (rb_out) *rb_out = std::move(rb);
  if (aa_out) *aa_out = std::move(aa);
  return sil;
}

}  // namespace

OutputLock::OutputLock(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + out_dir + ": " + ec.message());
  lock_path_ = out_dir + "/.lock";
  int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw ConfigError("output directory " + out_dir + " is locked by another process (remove " +
                        lock_path_ + " if stale)");
    throw ConfigError("cannot create lock file " + lock_path_);
  }
  char buf[32];
  int n = std::snprintf(buf, sizeof(buf), "%ld\n", (long)::getpid());
  if (::write(fd, buf, n) != n) { /* informational only */
  }
  ::close(fd);
  owned_ = true;
}

OutputLock::~OutputLock() {
  if (owned_) ::unlink(lock_path_.c_str());
}

Vec3 gravity_down() { return Vec3(0, 0, -1); }

std::vector<Camera> pipeline_cameras(const PipelineConfig& cfg) {
  // Frame the whole hair hull with a margin at the nearest camera distance.
  double extent = cfg.scalp_radius + cfg.strand_length + 10.0;
  double dist = 2.6 * extent;
  Vec3 center(0, 0, 0.25 * cfg.scalp_radius);
  double f = 0.45 * cfg.image_size * (dist - extent) / extent;
  return make_camera_ring(cfg.views, dist, center, f, cfg.image_size);
}

ScalpSurface scalp_from_mesh(TriMesh mesh) {
  ScalpSurface s;
  s.vertex_normals.assign(mesh.positions.size(), Vec3::Zero());
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    Vec3 n = mesh.face_normal((int)t);  // area weighted
    for (int c = 0; c < 3; ++c) s.vertex_normals[mesh.triangles[t][c]] += n;
  }
  for (auto& n : s.vertex_normals) {
    double l = n.norm();
    if (l < 1e-12) throw ContractError("scalp vertex with no incident area");
    n /= l;
  }
  s.mesh = std::move(mesh);
  return s;
}

SyntheticTargets make_targets(const StrandSet& gt, const std::vector<Camera>& cameras,
                              const TriMesh& scalp_solid, double width_mm, double noise_sigma,
                              uint64_t seed) {
  if (cameras.empty()) throw ConfigError("no cameras for target rendering");
  if (width_mm <= 0) throw ConfigError("billboard width must be positive");
  SyntheticTargets out;
  out.views.resize(cameras.size());
  out.gray.resize(cameras.size());
  BillboardMesh scalp_bb = wrap_trimesh(scalp_solid);
  for (size_t v = 0; v < cameras.size(); ++v) {
    const Camera& cam = cameras[v];
    TargetView& tv = out.views[v];
    tv.camera = cam;
    RenderBuffers sb = rasterize(scalp_bb, cam);
    tv.scalp_depth = extract_channel(scalp_bb, sb, Channel::Depth);

    BillboardMesh bb = build_billboards(gt, cam, width_mm);
    RenderOutputs ro = render_channels(bb, cam);
    tv.mask = std::move(ro.silhouette);
    tv.depth = std::move(ro.depth);
    tv.tangent = std::move(ro.tangent);
    tv.orient2d = std::move(ro.orient2d);
    tv.orient2d_valid = std::move(ro.orient2d_valid);

    size_t npx = (size_t)cam.width * cam.height;
    auto& gray = out.gray[v];
    gray.resize(npx);
    for (size_t p = 0; p < npx; ++p)
      gray[p] = 0.2126 * ro.id_color[p * 3] + 0.7152 * ro.id_color[p * 3 + 1] +
                0.0722 * ro.id_color[p * 3 + 2];

    if (noise_sigma > 0) {
      Rng rng(seed, kStreamNoiseBase + v);
      auto gauss = [&rng]() {
        double u1 = std::max(rng.uniform(), 1e-12);
        double u2 = rng.uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
      };
      for (size_t p = 0; p < npx; ++p) tv.mask[p] += noise_sigma * gauss();
      for (size_t p = 0; p < npx; ++p) gray[p] += noise_sigma * gauss();
    }
  }
  return out;
}

void write_targets(const std::string& dir, const SyntheticTargets& targets) {
  fs::create_directories(dir);
  for (size_t v = 0; v < targets.views.size(); ++v) {
    const TargetView& tv = targets.views[v];
    int w = tv.camera.width, h = tv.camera.height;
    write_pfm(view_file(dir, (int)v, "gray", "pfm"), plane_to_pfm(targets.gray[v], w, h, 1));
    write_pfm(view_file(dir, (int)v, "mask", "pfm"), plane_to_pfm(tv.mask, w, h, 1));
    write_pfm(view_file(dir, (int)v, "depth", "pfm"), plane_to_pfm(tv.depth, w, h, 1));
    write_pfm(view_file(dir, (int)v, "tangent", "pfm"), plane_to_pfm(tv.tangent, w, h, 3));
    write_pfm(view_file(dir, (int)v, "orient2d", "pfm"), plane_to_pfm(tv.orient2d, w, h, 2));
    write_pfm(view_file(dir, (int)v, "scalp_depth", "pfm"),
              plane_to_pfm(tv.scalp_depth, w, h, 1));
    write_png(view_file(dir, (int)v, "preview", "png"), w, h, 1, to_bytes(targets.gray[v]));
  }
}

TargetViews load_targets(const std::string& dir, const std::vector<Camera>& cameras) {
  TargetViews views(cameras.size());
  for (size_t v = 0; v < cameras.size(); ++v) {
    TargetView& tv = views[v];
    tv.camera = cameras[v];
    int w = tv.camera.width, h = tv.camera.height;
    tv.mask = pfm_plane(read_pfm(view_file(dir, (int)v, "mask", "pfm")), w, h, 1, "mask");
    tv.depth = pfm_plane(read_pfm(view_file(dir, (int)v, "depth", "pfm")), w, h, 1, "depth");
    tv.tangent =
        pfm_plane(read_pfm(view_file(dir, (int)v, "tangent", "pfm")), w, h, 3, "tangent");
    tv.orient2d =
        pfm_plane(read_pfm(view_file(dir, (int)v, "orient2d", "pfm")), w, h, 2, "orient2d");
    tv.scalp_depth = pfm_plane(read_pfm(view_file(dir, (int)v, "scalp_depth", "pfm")), w, h, 1,
                               "scalp_depth");
    tv.orient2d_valid.assign((size_t)w * h, 0);
    for (size_t p = 0; p < tv.orient2d_valid.size(); ++p) {
      double c = tv.orient2d[p * 2], s = tv.orient2d[p * 2 + 1];
      tv.orient2d_valid[p] = (c * c + s * s > 0.25) ? 1 : 0;
    }
  }
  return views;
}

std::vector<std::vector<double>> load_gray(const std::string& dir,
                                           const std::vector<Camera>& cameras) {
  std::vector<std::vector<double>> gray(cameras.size());
  for (size_t v = 0; v < cameras.size(); ++v)
    gray[v] = pfm_plane(read_pfm(view_file(dir, (int)v, "gray", "pfm")), cameras[v].width,
                        cameras[v].height, 1, "gray");
  return gray;
}

void stage_synth(const PipelineConfig& cfg) {
  validate_config(cfg);
  double t0 = now_s();
  fs::create_directories(cfg.out_dir);
  SceneParams sp;
  sp.style = parse_hair_style(cfg.style);
  sp.n_guides = cfg.guides;
  sp.n_children = cfg.children;
  sp.verts_per_strand = cfg.strand_vertices;
  sp.scalp_radius = cfg.scalp_radius;
  sp.strand_length = cfg.strand_length;
  SyntheticScene scene = generate_synthetic_scene(sp, cfg.seed);
  std::vector<Camera> cams = pipeline_cameras(cfg);

  const std::string& out = cfg.out_dir;
  write_cameras_json(out + "/cameras.json", cams);
  write_hair_strands(out + "/gt.hair", scene.gt_children);
  write_hair_strands(out + "/gt_guides.hair", scene.gt_guides);
  write_obj(out + "/scalp.obj", scene.scalp_solid);
  write_obj(out + "/shell.obj", scene.shell_solid);
  write_obj(out + "/scalp_surface.obj", scene.scalp.mesh);
  std::ofstream(out + "/config_used.txt") << serialize_config(cfg);

  SyntheticTargets targets = make_targets(scene.gt_children, cams, scene.scalp_solid,
                                          cfg.width_mm, cfg.noise_sigma, cfg.seed);
  write_targets(out + "/targets", targets);
  std::printf("[synth] %zu guides, %zu children, %zu views -> %s (%.1fs)\n",
              scene.gt_guides.strands.size(), scene.gt_children.strands.size(), cams.size(),
              out.c_str(), now_s() - t0);
}

void stage_orient(const PipelineConfig& cfg) {
  validate_config(cfg);
  double t0 = now_s();
  const std::string& out = cfg.out_dir;
  std::vector<Camera> cams = read_cameras_json(out + "/cameras.json");
  TargetViews targets = load_targets(out + "/targets", cams);

  std::vector<OrientationMap> maps(cams.size());
  if (cfg.orient_source == "gabor") {
    std::vector<std::vector<double>> gray = load_gray(out + "/targets", cams);
    GaborBank bank;
    bank.n_orientations = cfg.gabor_orientations;
    bank.wavelengths = parse_double_list(cfg.gabor_wavelengths);
    bank.sigma_factor = cfg.gabor_sigma_factor;
    bank.confidence_floor = cfg.gabor_conf_floor;
    for (size_t v = 0; v < cams.size(); ++v)
      maps[v] = gabor_orientation(gray[v], cams[v].width, cams[v].height, bank);
  } else {  // exact: decode the doubled-angle targets
    for (size_t v = 0; v < cams.size(); ++v) {
      OrientationMap& m = maps[v];
      m.width = cams[v].width;
      m.height = cams[v].height;
      size_t npx = (size_t)m.width * m.height;
      m.angle.assign(npx, 0.0);
      m.confidence.assign(npx, 0.0);
      const TargetView& tv = targets[v];
      for (size_t p = 0; p < npx; ++p) {
        if (!tv.orient2d_valid[p]) continue;
        double a = 0.5 * std::atan2(tv.orient2d[p * 2 + 1], tv.orient2d[p * 2]);
        if (a < 0) a += kPi;
        m.angle[p] = a;
        m.confidence[p] = 1.0;
      }
    }
  }

  std::vector<std::vector<double>> depths(cams.size());
  for (size_t v = 0; v < cams.size(); ++v) depths[v] = targets[v].depth;

  LiftParams lp;
  lp.n_candidates = cfg.lift_candidates;
  lp.refine_steps = cfg.lift_refine_steps;
  lp.score_floor = cfg.lift_score_floor;
  lp.min_views = cfg.lift_min_views;
  lp.stride = cfg.lift_stride;
  lp.depth_tol_mm = cfg.lift_depth_tol;

  OrientedPointCloud cloud;
  for (size_t r = 0; r < cams.size(); ++r) {
    OrientedPointCloud part = lift_orientations(maps, depths, cams, (int)r, lp);
    cloud.positions.insert(cloud.positions.end(), part.positions.begin(), part.positions.end());
    cloud.directions.insert(cloud.directions.end(), part.directions.begin(),
                            part.directions.end());
    cloud.confidence.insert(cloud.confidence.end(), part.confidence.begin(),
                            part.confidence.end());
    cloud.view_ids.insert(cloud.view_ids.end(), part.view_ids.begin(), part.view_ids.end());
  }
  if (cloud.size() == 0) throw ContractError("orientation lifting produced no 3D points");
  std::printf("[orient] lifted %zu points from %zu views (%.1fs)\n", cloud.size(), cams.size(),
              now_s() - t0);

  OrientedPointCloud smooth = meanshift_denoise(cloud, cfg.meanshift_radius, cfg.meanshift_iters);
  std::vector<int> back;
  OrientedPointCloud reps = downsample(smooth, cfg.downsample_voxel, back);
  if (reps.size() == 0) throw ContractError("downsampling produced no representatives");
  SignResult sr = disambiguate_mst(reps, cfg.mst_k, cfg.mst_restarts, cfg.mst_perturbation,
                                   cfg.seed);
  apply_signs(reps, sr.sign);
  bool flipped = gravity_flip(reps, gravity_down());
  OrientedPointCloud final_cloud =
      propagate_and_filter(smooth, reps, back, cfg.noise_cutoff_deg);
  if (final_cloud.size() == 0) throw ContractError("orientation filtering removed every point");

  write_ply_points(out + "/cloud_reps.ply",
                   OrientedPoints{reps.positions, reps.directions, reps.confidence});
  write_ply_points(out + "/cloud.ply",
                   OrientedPoints{final_cloud.positions, final_cloud.directions,
                                  final_cloud.confidence});
  std::printf("[orient] %zu reps (sign score %.3f%s), %zu filtered points -> cloud.ply (%.1fs)\n",
              reps.size(), sr.score, flipped ? ", gravity flip" : "", final_cloud.size(),
              now_s() - t0);
}

void stage_init(const PipelineConfig& cfg) {
  validate_config(cfg);
  double t0 = now_s();
  const std::string& out = cfg.out_dir;
  ScalpSurface scalp = scalp_from_mesh(read_obj(out + "/scalp_surface.obj"));
  std::vector<RootPoint> roots =
      sample_scalp_roots(scalp, cfg.guides, mix_seed(cfg.seed, kStreamGuideRoots));

  StrandSet guides;
  if (cfg.init_mode == "lines") {
    guides = line_strands(roots, cfg.strand_length, cfg.strand_vertices);
    std::printf("[init] straight-line init: %zu guides\n", guides.strands.size());
  } else {
    TriMesh scalp_solid = read_obj(out + "/scalp.obj");
    TriMesh shell_solid = read_obj(out + "/shell.obj");
    OrientedPoints pts = read_ply_points(out + "/cloud.ply");
    OrientedPointCloud cloud;
    cloud.positions = std::move(pts.positions);
    cloud.directions = std::move(pts.directions);
    cloud.confidence = std::move(pts.confidence);
    cloud.view_ids.assign(cloud.positions.size(), 0);

    OrientationVolume vol = voxelize_domain(scalp_solid, shell_solid, cfg.grid_h);
    set_boundary(vol, cloud, scalp, gravity_down());
    SolveStats stats = solve_laplace_sor(vol, cfg.sor_omega, cfg.sor_tol, cfg.sor_max_iter);
    write_ovol(out + "/field.ovol", dump_volume(vol));
    std::printf("[init] %dx%dx%d field solved in %d sweeps (last update %.2e) (%.1fs)\n", vol.nx,
                vol.ny, vol.nz, stats.iterations, stats.last_update, now_s() - t0);

    TraceParams tp;
    tp.step_factor = cfg.trace_step_factor;
    tp.max_steps = cfg.trace_max_steps;
    tp.vertex_count = cfg.strand_vertices;
    TraceResult traced = trace_strands(vol, roots, tp);
    guides = std::move(traced.strands);
    std::printf("[init] traced %zu guides (%d roots skipped)\n", guides.strands.size(),
                traced.skipped_roots);
  }
  if (guides.strands.size() < 4)
    throw ContractError("strand initialization produced fewer than 4 guides");
  write_hair_strands(out + "/init.hair", guides);

  if (cfg.children > 0) {
    std::vector<Vec3> child_roots =
        sample_child_roots(scalp, cfg.children, mix_seed(cfg.seed, kStreamChildRoots));
    GuideChildMap map = nearest_four_guides(first_vertices(guides), child_roots);
    StrandSet init_children = interpolate_children(guides, map, child_roots);
    write_hair_strands(out + "/init_children.hair", init_children);
  }
  std::printf("[init] wrote init.hair (%.1fs)\n", now_s() - t0);
}

void stage_fit_guides(const PipelineConfig& cfg) {
  validate_config(cfg);
  double t0 = now_s();
  const std::string& out = cfg.out_dir;
  std::vector<Camera> cams = read_cameras_json(out + "/cameras.json");
  TargetViews targets = load_targets(out + "/targets", cams);
  StrandSet guides = read_hair_strands(out + "/init.hair");

  CsvLogger log(out + "/log_guides.csv",
                {"iteration", "L_d", "L_m", "L_t", "R_stick", "R_root", "R_c", "total", "wall_s"});
  StageHooks hooks;
  hooks.log = &log;
  if (cfg.checkpoint_every > 0) {
    hooks.checkpoint_prefix = out + "/ckpt_guides_";
    hooks.checkpoint_every = cfg.checkpoint_every;
  }
  StageConfig sc = stage_from(cfg, cfg.k_guides, cfg.iters_guides);
  StrandSet fitted = fit_guides(guides, targets, weights_from(cfg), sc, cfg.seed, hooks);
  write_hair_strands(out + "/guides.hair", fitted);
  std::printf("[fit-guides] %zu guides, %d iterations (%.1fs)\n", fitted.strands.size(),
              sc.iterations, now_s() - t0);
}

void stage_fit_children(const PipelineConfig& cfg) {
  validate_config(cfg);
  if (cfg.children <= 0) throw ConfigError("fit-children requires children > 0");
  double t0 = now_s();
  const std::string& out = cfg.out_dir;
  std::vector<Camera> cams = read_cameras_json(out + "/cameras.json");
  TargetViews targets = load_targets(out + "/targets", cams);
  StrandSet guides = read_hair_strands(out + "/guides.hair");
  ScalpSurface scalp = scalp_from_mesh(read_obj(out + "/scalp_surface.obj"));

  std::vector<Vec3> child_roots =
      sample_child_roots(scalp, cfg.children, mix_seed(cfg.seed, kStreamChildRoots));
  GuideChildMap map = nearest_four_guides(first_vertices(guides), child_roots);
  StrandSet children = interpolate_children(guides, map, child_roots);

  CsvLogger log0(out + "/log_children0.csv",
                 {"iteration", "L_d", "L_m", "L_o", "R_stick", "R_root", "R_c", "total",
                  "wall_s"});
  CsvLogger log1(out + "/log_children1.csv",
                 {"iteration", "L_d", "L_m", "L_o", "R_stick", "R_root", "R_c", "total",
                  "wall_s"});
  StageHooks hooks0, hooks1;
  hooks0.log = &log0;
  hooks1.log = &log1;
  if (cfg.checkpoint_every > 0) {
    hooks0.checkpoint_prefix = out + "/ckpt_children0_";
    hooks0.checkpoint_every = cfg.checkpoint_every;
    hooks1.checkpoint_prefix = out + "/ckpt_children1_";
    hooks1.checkpoint_every = cfg.checkpoint_every;
  }
  StageConfig phase1 = stage_from(cfg, cfg.k_children, cfg.iters_children0);
  StageConfig phase2 = stage_from(cfg, 0, cfg.iters_children1);
  StrandSet fitted =
      fit_children(children, targets, weights_from(cfg), phase1, phase2, cfg.seed, hooks0, hooks1);
  write_hair_strands(out + "/children.hair", fitted);
  std::printf("[fit-children] %zu children, %d+%d iterations (%.1fs)\n", fitted.strands.size(),
              phase1.iterations, phase2.iterations, now_s() - t0);
}

void stage_render(const PipelineConfig& cfg, const std::string& artifact) {
  validate_config(cfg);
  std::string name = artifact.empty() ? "children" : artifact;
  const std::string& out = cfg.out_dir;
  std::string path = out + "/" + name + ".hair";
  if (!fs::exists(path)) throw ConfigError("no such artifact: " + path);
  StrandSet set = read_hair_strands(path);
  std::vector<Camera> cams = read_cameras_json(out + "/cameras.json");
  fs::create_directories(out + "/renders");
  for (size_t v = 0; v < cams.size(); ++v) {
    BillboardMesh bb = build_billboards(set, cams[v], cfg.width_mm);
    RenderBuffers rb = rasterize(bb, cams[v]);
    AAOutput aa = antialias(bb, cams[v], rb);
    std::vector<double> color = aa_apply(aa, extract_channel(bb, rb, Channel::IdColor), 3);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "/renders/%s_view%03d.png", name.c_str(), (int)v);
    write_png(out + buf, cams[v].width, cams[v].height, 3, to_bytes(color));
  }
  std::printf("[render] %s: %zu strands, %zu views -> %s/renders\n", name.c_str(),
              set.strands.size(), cams.size(), out.c_str());
}

void stage_eval(const PipelineConfig& cfg) {
  validate_config(cfg);
  const std::string& out = cfg.out_dir;
  StrandSet gt = read_hair_strands(out + "/gt.hair");
  OrientedSampleSet ref = sample_strands(gt, cfg.sample_spacing);
  std::vector<std::pair<double, double>> thresholds = parse_thresholds(cfg.eval_thresholds);

  std::ofstream csv(out + "/metrics.csv");
  if (!csv) throw ConfigError("cannot open " + out + "/metrics.csv for writing");
  csv << "artifact,d_mm,a_deg,mode,precision,recall,f1\n";

  int evaluated = 0;
  for (const char* name : {"init", "init_children", "guides", "children"}) {
    std::string path = out + "/" + name + ".hair";
    if (!fs::exists(path)) continue;
    StrandSet rec = read_hair_strands(path);
    OrientedSampleSet recs = sample_strands(rec, cfg.sample_spacing);
    for (MatchMode mode : {MatchMode::kDeg360, MatchMode::kDeg180}) {
      std::vector<MatchScore> rows = score_table(recs, ref, thresholds, mode);
      const char* mode_name = mode == MatchMode::kDeg360 ? "deg360" : "deg180";
      std::printf("== %s vs gt (%s) ==\n%s", name, mode_name,
                  format_score_table(rows).c_str());
      for (const MatchScore& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%s,%.10g,%.10g,%.10g\n", name, r.d_mm,
                      r.a_deg, mode_name, r.precision, r.recall, r.f1);
        csv << buf;
      }
    }
    ++evaluated;
  }
  if (evaluated == 0)
    throw ContractError("eval found no reconstruction artifacts in " + out);
  std::printf("[eval] %d artifacts scored -> metrics.csv\n", evaluated);
}

void stage_all(const PipelineConfig& cfg) {
  stage_synth(cfg);
  if (cfg.init_mode != "lines") stage_orient(cfg);
  stage_init(cfg);
  stage_fit_guides(cfg);
  stage_fit_children(cfg);
  stage_eval(cfg);
}

ToyResult toy_aa_run(double width_px, int image_size, int iterations, double lr,
                     const std::string& out_prefix) {
  if (width_px <= 0) throw ConfigError("toy width must be positive");
  if (image_size < 32) throw ConfigError("toy image size must be at least 32");
  if (iterations < 1) throw ConfigError("toy iterations must be positive");

  // World scale: 1 world unit projects to 0.6 px at the scene depth
  // (near-orthographic). The scale sets the effective step of unit-lr
  // descent; 0.6 px/unit keeps the tip update inside the stable range of
  // the loss landscape for sub-pixel widths.
  const double depth = 1000.0;
  const double px_per_unit = 0.6;
  Camera cam;
  cam.fx = cam.fy = px_per_unit * depth;
  cam.cx = cam.cy = 0.5 * image_size;
  cam.width = cam.height = image_size;

  const double s = image_size / 128.0;  // keep the layout proportional
  const Vec2 dir = Vec2(34.0, -73.0).normalized();
  const Vec2 center(-3.0 * s, -1.5 * s);
  const Vec2 root_px = center - 25.0 * s * dir;
  const Vec2 tip_px = center + 25.0 * s * dir;
  const Vec3 root(root_px.x() / px_per_unit, root_px.y() / px_per_unit, depth);
  const Vec3 target_tip(tip_px.x() / px_per_unit, tip_px.y() / px_per_unit, depth);
  const double width_world = width_px / px_per_unit;

  StrandSet target;
  target.strands.push_back(Strand{{root, target_tip}});
  std::vector<double> target_sil = silhouette_aa(build_billboards(target, cam, width_world), cam,
                                                 nullptr, nullptr);

  StrandSet cur;
  cur.strands.push_back(Strand{{root, root + 0.2 * (target_tip - root)}});

  CsvLogger log;
  int frame_every = 0;
  if (!out_prefix.empty()) {
    log = CsvLogger(out_prefix + "loss.csv", {"iteration", "loss", "tip_err_px"});
    frame_every = std::max(1, iterations / 8);
  }
  auto tip_err = [&]() {
    return (cam.project(cur.strands[0].vertices[1]) - cam.project(target_tip)).norm();
  };
  auto write_frame = [&](int it, const std::vector<double>& sil) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.png", it);
    write_png(out_prefix + buf, image_size, image_size, 1, to_bytes(sil));
  };

  ToyResult res;
  res.width_px = width_px;
  res.iterations = iterations;
  size_t npx = (size_t)image_size * image_size;
  for (int it = 0; it < iterations; ++it) {
    BillboardMesh bb = build_billboards(cur, cam, width_world);
    RenderBuffers rb;
    AAOutput aa;
    std::vector<double> sil = silhouette_aa(bb, cam, &rb, &aa);

    double loss = 0.0;
    AAGradients up;
    up.init(npx);
    for (size_t p = 0; p < npx; ++p) {
      double d = sil[p] - target_sil[p];
      loss += d * d;
      up.silhouette[p] = 2.0 * d;
    }
    if (it == 0) res.initial_loss = loss;
    if (!out_prefix.empty()) {
      log.row({(double)it, loss, tip_err()});
      if (it % frame_every == 0) write_frame(it, sil);
    }

    VertexGrads vg = diffrast_backward(bb, cam, rb, aa, up);
    std::vector<Vec3> g = billboard_backward(bb, cur, cam, vg);
    Vec3 tip = cur.strands[0].vertices[1] - lr * g[1];
    // never collapse the segment to zero length
    if ((tip - root).norm() > 1e-9) cur.strands[0].vertices[1] = tip;
  }

  std::vector<double> sil = silhouette_aa(build_billboards(cur, cam, width_world), cam, nullptr,
                                          nullptr);
  double loss = 0.0;
  for (size_t p = 0; p < npx; ++p) {
    double d = sil[p] - target_sil[p];
    loss += d * d;
  }
  res.final_loss = loss;
  res.tip_error_px = tip_err();
  if (!out_prefix.empty()) {
    log.row({(double)iterations, loss, res.tip_error_px});
    write_frame(iterations, sil);
  }
  return res;
}

void stage_toy_aa(const PipelineConfig& cfg) {
  validate_config(cfg);
  fs::create_directories(cfg.out_dir);
  for (double w : parse_double_list(cfg.toy_widths)) {
    char tag[48];
    std::snprintf(tag, sizeof(tag), "/toy_w%g_", w);
    double t0 = now_s();
    ToyResult r = toy_aa_run(w, cfg.toy_size, cfg.toy_iters, cfg.toy_lr, cfg.out_dir + tag);
    double red = r.initial_loss > 0 ? 100.0 * (1.0 - r.final_loss / r.initial_loss) : 0.0;
    std::printf("[toy-aa] width %.2f px: loss %.6g -> %.6g (%.1f%% reduction), tip error %.3f px"
                " (%.1fs)\n",
                r.width_px, r.initial_loss, r.final_loss, red, r.tip_error_px, now_s() - t0);
  }
}

}  // namespace strandopt
