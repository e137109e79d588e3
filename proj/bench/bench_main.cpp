// Parallel kernels vs their serial reference implementations.

#include <benchmark/benchmark.h>

#include "strandopt/billboard.hpp"
#include "strandopt/diffrast.hpp"
#include "strandopt/field.hpp"
#include "strandopt/metrics.hpp"
#include "strandopt/reference.hpp"
#include "strandopt/rng.hpp"
#include "strandopt/scene.hpp"
#include "strandopt/spatial_grid.hpp"

namespace {

using namespace strandopt;

StrandSet bench_strands(int n_strands, uint64_t seed) {
  Rng rng(seed, 1);
  StrandSet set;
  set.strands.resize(n_strands);
  for (auto& s : set.strands) {
    Vec3 p(rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(-40, 40));
    Vec3 d = rng.unit_vector();
    s.vertices.resize(9);
    for (int k = 0; k < 9; ++k) {
      s.vertices[k] = p;
      p += 4.0 * d;
      d = (d + 0.25 * rng.unit_vector()).normalized();
    }
  }
  return set;
}

Camera bench_camera(int size) {
  Camera c;
  c.fx = c.fy = 1.5 * size;
  c.cx = c.cy = 0.5 * size;
  c.width = c.height = size;
  c.t = Vec3(0, 0, 220);
  return c;
}

void BM_rasterize_parallel(benchmark::State& state) {
  StrandSet set = bench_strands((int)state.range(0), 7);
  Camera cam = bench_camera(256);
  BillboardMesh mesh = build_billboards(set, cam, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize(mesh, cam));
}

void BM_rasterize_reference(benchmark::State& state) {
  StrandSet set = bench_strands((int)state.range(0), 7);
  Camera cam = bench_camera(256);
  BillboardMesh mesh = build_billboards(set, cam, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(reference::rasterize(mesh, cam));
}

std::vector<Vec3> bench_points(int n, uint64_t seed) {
  Rng rng(seed, 2);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100));
  return pts;
}

void BM_knn_grid(benchmark::State& state) {
  std::vector<Vec3> pts = bench_points((int)state.range(0), 3);
  for (auto _ : state) {
    SpatialGrid grid(pts, 5.0);
    std::vector<std::vector<int>> out(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) grid.query_knn(pts[i], 8, out[i]);
    benchmark::DoNotOptimize(out);
  }
}

void BM_knn_reference(benchmark::State& state) {
  std::vector<Vec3> pts = bench_points((int)state.range(0), 3);
  for (auto _ : state) benchmark::DoNotOptimize(reference::knn(pts, 8));
}

OrientationVolume bench_volume() {
  ScalpSurface scalp = make_scalp(300, 40.0);
  SceneParams sp;
  sp.n_guides = 300;
  sp.n_children = 0;
  sp.scalp_radius = 40.0;
  sp.strand_length = 25.0;
  SyntheticScene scene = generate_synthetic_scene(sp, 11);
  OrientationVolume vol = voxelize_domain(scene.scalp_solid, scene.shell_solid, 2.0);
  OrientedPointCloud cloud;
  Rng rng(11, 4);
  for (int i = 0; i < 2000; ++i) {
    cloud.positions.push_back(55.0 * rng.unit_vector());
    cloud.directions.push_back(rng.unit_vector());
    cloud.confidence.push_back(1.0);
    cloud.view_ids.push_back(0);
  }
  set_boundary(vol, cloud, scalp, Vec3(0, 0, -1));
  return vol;
}

void BM_sor_parallel(benchmark::State& state) {
  OrientationVolume base = bench_volume();
  for (auto _ : state) {
    OrientationVolume vol = base;
    benchmark::DoNotOptimize(solve_laplace_sor(vol, 1.8, 1e-4, 200));
  }
}

void BM_sor_reference(benchmark::State& state) {
  OrientationVolume base = bench_volume();
  for (auto _ : state) {
    OrientationVolume vol = base;
    benchmark::DoNotOptimize(reference::solve_laplace_sor(vol, 1.8, 1e-4, 200));
  }
}

OrientedSampleSet bench_samples(int n, uint64_t seed) {
  Rng rng(seed, 5);
  OrientedSampleSet s;
  s.spacing_mm = 1.0;
  for (int i = 0; i < n; ++i) {
    s.positions.push_back(Vec3(rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(0, 60)));
    s.directions.push_back(rng.unit_vector());
    s.strand_ids.push_back(i);
  }
  return s;
}

void BM_score_grid(benchmark::State& state) {
  OrientedSampleSet a = bench_samples((int)state.range(0), 21);
  OrientedSampleSet b = bench_samples((int)state.range(0), 22);
  for (auto _ : state) benchmark::DoNotOptimize(score(a, b, 3.0, 30.0, MatchMode::kDeg360));
}

void BM_score_reference(benchmark::State& state) {
  OrientedSampleSet a = bench_samples((int)state.range(0), 21);
  OrientedSampleSet b = bench_samples((int)state.range(0), 22);
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::score(a, b, 3.0, 30.0, MatchMode::kDeg360));
}

}  // namespace

BENCHMARK(BM_rasterize_parallel)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rasterize_reference)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_knn_grid)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_knn_reference)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sor_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sor_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score_grid)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score_reference)->Arg(5000)->Arg(50000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
