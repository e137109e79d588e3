#include "strandopt/orientation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>

#include "strandopt/rng.hpp"
#include "strandopt/spatial_grid.hpp"

namespace strandopt {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Kernel {
  int radius = 0;
  std::vector<double> w;  // (2r+1)^2, row-major
};

// Gabor kernel responding to lines along `theta`: the carrier oscillates
// perpendicular to the line. Zero-meaned so flat regions give no response,
// then L2-normalized so responses are comparable across wavelengths.
Kernel make_gabor(double theta, double lambda, double sigma) {
  Kernel k;
  k.radius = (int)std::ceil(2.0 * sigma);
  int n = 2 * k.radius + 1;
  k.w.resize((size_t)n * n);
  double cphi = std::cos(theta + 0.5 * kPi), sphi = std::sin(theta + 0.5 * kPi);
  std::vector<double> env(k.w.size());
  double sum_g = 0.0, sum_env = 0.0;
  for (int dy = -k.radius; dy <= k.radius; ++dy)
    for (int dx = -k.radius; dx <= k.radius; ++dx) {
      size_t at = (size_t)(dy + k.radius) * n + (dx + k.radius);
      double xp = dx * cphi + dy * sphi;
      double e = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      env[at] = e;
      k.w[at] = e * std::cos(2.0 * kPi * xp / lambda);
      sum_g += k.w[at];
      sum_env += e;
    }
  double c = sum_g / sum_env;
  double norm2 = 0.0;
  for (size_t i = 0; i < k.w.size(); ++i) {
    k.w[i] -= c * env[i];
    norm2 += k.w[i] * k.w[i];
  }
  double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (double& v : k.w) v *= inv;
  return k;
}

}  // namespace

OrientationMap gabor_orientation(const std::vector<double>& gray, int width, int height,
                                 const GaborBank& bank) {
  if ((size_t)width * height != gray.size()) throw ContractError("image size does not match dims");
  if (bank.n_orientations < 2 || bank.wavelengths.empty())
    throw ConfigError("gabor bank needs >= 2 orientations and >= 1 wavelength");
  int N = bank.n_orientations;
  std::vector<Kernel> kernels;  // orientation-major, then wavelength
  kernels.reserve((size_t)N * bank.wavelengths.size());
  for (int o = 0; o < N; ++o)
    for (double lambda : bank.wavelengths)
      kernels.push_back(make_gabor(o * kPi / N, lambda, bank.sigma_factor * lambda));

  OrientationMap out;
  out.width = width;
  out.height = height;
  out.angle.assign((size_t)width * height, 0.0);
  out.confidence.assign((size_t)width * height, 0.0);

#pragma omp parallel
  {
    std::vector<double> score(N);
#pragma omp for schedule(dynamic, 4)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        for (int o = 0; o < N; ++o) {
          double best = 0.0;
          for (size_t li = 0; li < bank.wavelengths.size(); ++li) {
            const Kernel& k = kernels[(size_t)o * bank.wavelengths.size() + li];
            int n = 2 * k.radius + 1;
            double resp = 0.0;
            for (int dy = -k.radius; dy <= k.radius; ++dy) {
              int sy = std::clamp(y + dy, 0, height - 1);
              const double* row = gray.data() + (size_t)sy * width;
              const double* wrow = k.w.data() + (size_t)(dy + k.radius) * n;
              for (int dx = -k.radius; dx <= k.radius; ++dx)
                resp += wrow[dx + k.radius] * row[std::clamp(x + dx, 0, width - 1)];
            }
            best = std::max(best, std::abs(resp));
          }
          score[o] = best;
        }
        int arg = 0;
        double mx = score[0], sum = score[0];
        for (int o = 1; o < N; ++o) {
          sum += score[o];
          if (score[o] > mx) {
            mx = score[o];
            arg = o;
          }
        }
        double conf = mx - sum / N;
        if (conf > bank.confidence_floor) {
          out.angle[out.pixel(x, y)] = arg * kPi / N;
          out.confidence[out.pixel(x, y)] = conf;
        }
      }
  }
  return out;
}

namespace {

struct Observation {
  double conf;
  Vec2 uv;
  Vec2 e;  // (cos theta, sin theta)
};

double lift_score(const std::vector<Observation>& obs, const std::vector<Camera>& cameras,
                  const std::vector<int>& obs_view, const Vec3& d) {
  double s = 0.0;
  for (size_t i = 0; i < obs.size(); ++i) {
    Vec2 g = cameras[obs_view[i]].project_dir(d, obs[i].uv);
    double n = g.norm();
    if (n > 1e-12) s += obs[i].conf * std::abs(g.dot(obs[i].e)) / n;
  }
  return s;
}

Vec3 canonical_sign(Vec3 d) {
  if (d.z() < 0.0 || (d.z() == 0.0 && (d.y() < 0.0 || (d.y() == 0.0 && d.x() < 0.0)))) d = -d;
  return d;
}

}  // namespace

OrientedPointCloud lift_orientations(const std::vector<OrientationMap>& maps,
                                     const std::vector<std::vector<double>>& depth_maps,
                                     const std::vector<Camera>& cameras, int reference_view,
                                     const LiftParams& params) {
  size_t nv = cameras.size();
  if (maps.size() != nv || depth_maps.size() != nv)
    throw ContractError("view array lengths differ");
  if (nv < 2) throw ContractError("lifting needs at least 2 views");
  if (reference_view < 0 || reference_view >= (int)nv)
    throw ConfigError("reference view out of range");
  const Camera& rc = cameras[reference_view];
  const OrientationMap& rm = maps[reference_view];
  const std::vector<double>& rd = depth_maps[reference_view];
  if (rm.width != rc.width || rm.height != rc.height)
    throw ContractError("orientation map size does not match camera");
  std::vector<Vec3> candidates = fibonacci_hemisphere(params.n_candidates);
  const int stride = std::max(1, params.stride);

  std::vector<OrientedPointCloud> rows(rc.height);
#pragma omp parallel
  {
    std::vector<Observation> obs;
    std::vector<int> obs_view;
#pragma omp for schedule(dynamic, 2)
    for (int y = 0; y < rc.height; y += stride)
      for (int x = 0; x < rc.width; x += stride) {
        size_t px = rm.pixel(x, y);
        if (rm.confidence[px] <= 0.0) continue;
        double z = rd[px];
        if (z <= 0.0) continue;
        Vec2 uv0(x + 0.5, y + 0.5);
        Vec3 pc((uv0.x() - rc.cx) / rc.fx * z, (uv0.y() - rc.cy) / rc.fy * z, z);
        Vec3 p = rc.R.transpose() * (pc - rc.t);

        obs.clear();
        obs_view.clear();
        for (int v = 0; v < (int)nv; ++v) {
          Vec3 q = cameras[v].to_camera(p);
          if (q.z() <= 1e-6) continue;
          Vec2 uv = cameras[v].project_cam(q);
          int ix = (int)std::floor(uv.x()), iy = (int)std::floor(uv.y());
          if (ix < 0 || iy < 0 || ix >= maps[v].width || iy >= maps[v].height) continue;
          size_t vp = maps[v].pixel(ix, iy);
          double c = maps[v].confidence[vp];
          if (c <= 0.0) continue;
          double dz = depth_maps[v][vp];
          if (dz <= 0.0 || std::abs(dz - q.z()) > params.depth_tol_mm) continue;
          obs.push_back({c, uv, Vec2(std::cos(maps[v].angle[vp]), std::sin(maps[v].angle[vp]))});
          obs_view.push_back(v);
        }
        if ((int)obs.size() < params.min_views) continue;

        int arg = 0;
        double best = -1.0;
        for (int ci = 0; ci < (int)candidates.size(); ++ci) {
          double s = lift_score(obs, cameras, obs_view, candidates[ci]);
          if (s > best) {
            best = s;
            arg = ci;
          }
        }
        // Pattern search around the winning candidate; the step halves when
        // no axis move improves the score.
        Vec3 d = candidates[arg];
        double step = 0.1;
        for (int it = 0; it < params.refine_steps; ++it) {
          Vec3 a = std::abs(d.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
          Vec3 t1 = d.cross(a).normalized();
          Vec3 t2 = d.cross(t1);
          bool moved = false;
          const Vec3 moves[4] = {t1, -t1, t2, -t2};
          for (const Vec3& t : moves) {
            Vec3 cand = (std::cos(step) * d + std::sin(step) * t).normalized();
            double s = lift_score(obs, cameras, obs_view, cand);
            if (s > best) {
              best = s;
              d = cand;
              moved = true;
              break;
            }
          }
          if (!moved) step *= 0.5;
        }

        double total_conf = 0.0;
        for (const auto& o : obs) total_conf += o.conf;
        double norm_score = total_conf > 0.0 ? best / total_conf : 0.0;
        if (norm_score < params.score_floor) continue;

        OrientedPointCloud& out = rows[y];
        out.positions.push_back(p);
        out.directions.push_back(canonical_sign(d));
        out.confidence.push_back(norm_score);
        out.view_ids.push_back(reference_view);
      }
  }

  OrientedPointCloud cloud;
  for (const auto& r : rows) {
    cloud.positions.insert(cloud.positions.end(), r.positions.begin(), r.positions.end());
    cloud.directions.insert(cloud.directions.end(), r.directions.begin(), r.directions.end());
    cloud.confidence.insert(cloud.confidence.end(), r.confidence.begin(), r.confidence.end());
    cloud.view_ids.insert(cloud.view_ids.end(), r.view_ids.begin(), r.view_ids.end());
  }
  return cloud;
}

OrientedPointCloud meanshift_denoise(const OrientedPointCloud& cloud, double radius_mm,
                                     int iterations) {
  if (radius_mm <= 0.0) throw ConfigError("mean-shift radius must be positive");
  OrientedPointCloud out = cloud;
  if (cloud.size() == 0) return out;
  SpatialGrid grid(out.positions, radius_mm);
  std::vector<Vec3> next(out.size());
  for (int it = 0; it < iterations; ++it) {
#pragma omp parallel
    {
      std::vector<int> nbr;
#pragma omp for schedule(static)
      for (int i = 0; i < (int)out.size(); ++i) {
        grid.query_radius(out.positions[i], radius_mm, nbr);
        Vec3 acc = Vec3::Zero();
        for (int j : nbr) {
          Vec3 d = out.directions[j];
          if (d.dot(out.directions[i]) < 0.0) d = -d;
          acc += out.confidence[j] * d;
        }
        double n = acc.norm();
        next[i] = n > 1e-12 ? Vec3(acc / n) : out.directions[i];
      }
    }
    out.directions.swap(next);
  }
  return out;
}

OrientedPointCloud downsample(const OrientedPointCloud& cloud, double voxel_mm,
                              std::vector<int>& back_map) {
  if (voxel_mm <= 0.0) throw ConfigError("voxel size must be positive");
  back_map.assign(cloud.size(), -1);
  OrientedPointCloud reps;
  std::map<std::array<int, 3>, int> index;  // first-seen order assigns rep ids
  std::vector<double> wsum;
  std::vector<Vec3> psum, anchor, dsum;
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    std::array<int, 3> key = {(int)std::floor(p.x() / voxel_mm), (int)std::floor(p.y() / voxel_mm),
                              (int)std::floor(p.z() / voxel_mm)};
    auto [it, fresh] = index.try_emplace(key, (int)wsum.size());
    if (fresh) {
      wsum.push_back(0.0);
      psum.push_back(Vec3::Zero());
      anchor.push_back(cloud.directions[i]);
      dsum.push_back(Vec3::Zero());
    }
    int r = it->second;
    back_map[i] = r;
    double w = cloud.confidence[i];
    wsum[r] += w;
    psum[r] += w * p;
    Vec3 d = cloud.directions[i];
    if (d.dot(anchor[r]) < 0.0) d = -d;
    dsum[r] += w * d;
  }
  for (size_t r = 0; r < wsum.size(); ++r) {
    reps.positions.push_back(wsum[r] > 0.0 ? Vec3(psum[r] / wsum[r]) : anchor[r]);
    double n = dsum[r].norm();
    reps.directions.push_back(n > 1e-12 ? Vec3(dsum[r] / n) : anchor[r]);
    reps.confidence.push_back(wsum[r]);
    reps.view_ids.push_back(-1);
  }
  // wsum == 0 can only happen with all-zero confidences; fall back to the
  // first point's position then.
  for (size_t i = 0; i < cloud.size(); ++i)
    if (wsum[back_map[i]] <= 0.0) reps.positions[back_map[i]] = cloud.positions[i];
  return reps;
}

SignResult disambiguate_mst(const OrientedPointCloud& cloud, int k_graph, int restarts,
                            double perturbation, uint64_t seed) {
  int n = (int)cloud.size();
  if (n == 0) throw ContractError("sign disambiguation on an empty cloud");
  if (k_graph < 1 || restarts < 1) throw ConfigError("k_graph and restarts must be >= 1");

  // kNN graph, deduplicated undirected edges in sorted order.
  std::vector<std::pair<int, int>> edges;
  if (n > 1) {
    Vec3 lo = cloud.positions[0], hi = cloud.positions[0];
    for (const auto& p : cloud.positions) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    double cell = std::max(1e-6, (hi - lo).norm() / std::max(4.0, std::cbrt((double)n)));
    SpatialGrid grid(cloud.positions, cell);
    std::vector<std::vector<int>> nbrs(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      grid.query_knn(cloud.positions[i], k_graph, nbrs[i], [&](int j) { return j == i; });
    for (int i = 0; i < n; ++i)
      for (int j : nbrs[i]) edges.emplace_back(std::min(i, j), std::max(i, j));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }
  int m = (int)edges.size();
  std::vector<double> base_w(m), dots(m);
  for (int e = 0; e < m; ++e) {
    dots[e] = cloud.directions[edges[e].first].dot(cloud.directions[edges[e].second]);
    base_w[e] = 1.0 - std::abs(dots[e]);
  }

  // Adjacency CSR and connected components.
  std::vector<int> deg(n + 1, 0);
  for (const auto& [i, j] : edges) {
    deg[i + 1]++;
    deg[j + 1]++;
  }
  for (int i = 0; i < n; ++i) deg[i + 1] += deg[i];
  std::vector<std::pair<int, int>> adj(2 * (size_t)m);  // (other node, edge id)
  {
    std::vector<int> cur(deg.begin(), deg.end() - 1);
    for (int e = 0; e < m; ++e) {
      adj[cur[edges[e].first]++] = {edges[e].second, e};
      adj[cur[edges[e].second]++] = {edges[e].first, e};
    }
  }
  std::vector<int> comp(n, -1);
  int n_comp = 0;
  for (int i = 0; i < n; ++i) {
    if (comp[i] >= 0) continue;
    std::vector<int> stack = {i};
    comp[i] = n_comp;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int a = deg[u]; a < deg[u + 1]; ++a)
        if (comp[adj[a].first] < 0) {
          comp[adj[a].first] = n_comp;
          stack.push_back(adj[a].first);
        }
    }
    ++n_comp;
  }

  std::vector<int8_t> all_signs((size_t)restarts * n);
  std::vector<double> comp_scores((size_t)restarts * n_comp);

#pragma omp parallel
  {
    std::vector<double> w(m);
    std::vector<int> order;
    std::vector<char> seen(n);
    std::vector<int> parent(n), parent_edge(n);
#pragma omp for schedule(static)
    for (int r = 0; r < restarts; ++r) {
      Rng rng(seed, (uint64_t)r);
      for (int e = 0; e < m; ++e) w[e] = base_w[e] + rng.uniform(-perturbation, perturbation);

      int8_t* sign = all_signs.data() + (size_t)r * n;
      std::fill(seen.begin(), seen.end(), 0);
      order.clear();
      // Prim from the lowest-index node of each component; a node's parent is
      // final when it is popped, so parents precede children in pop order.
      using Item = std::tuple<double, int, int, int>;  // w, node, parent, edge
      for (int root = 0; root < n; ++root) {
        if (seen[root]) continue;
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
        heap.push({-1.0, root, -1, -1});
        while (!heap.empty()) {
          auto [wt, u, pu, eu] = heap.top();
          heap.pop();
          if (seen[u]) continue;
          seen[u] = 1;
          parent[u] = pu;
          parent_edge[u] = eu;
          order.push_back(u);
          for (int a = deg[u]; a < deg[u + 1]; ++a)
            if (!seen[adj[a].first]) heap.push({w[adj[a].second], adj[a].first, u, adj[a].second});
        }
      }
      for (int u : order) {
        if (parent[u] < 0)
          sign[u] = 1;
        else
          sign[u] = dots[parent_edge[u]] < 0.0 ? (int8_t)-sign[parent[u]] : sign[parent[u]];
      }
      double* cs = comp_scores.data() + (size_t)r * n_comp;
      std::fill(cs, cs + n_comp, 0.0);
      for (int e = 0; e < m; ++e)
        cs[comp[edges[e].first]] += sign[edges[e].first] * sign[edges[e].second] * dots[e];
    }
  }

  SignResult res;
  res.sign.resize(n);
  res.score = 0.0;
  std::vector<int> best_restart(n_comp, 0);
  for (int c = 0; c < n_comp; ++c) {
    double best = comp_scores[c];
    for (int r = 1; r < restarts; ++r)
      if (comp_scores[(size_t)r * n_comp + c] > best) {
        best = comp_scores[(size_t)r * n_comp + c];
        best_restart[c] = r;
      }
    res.score += best;
  }
  for (int i = 0; i < n; ++i)
    res.sign[i] = all_signs[(size_t)best_restart[comp[i]] * n + i];
  return res;
}

void apply_signs(OrientedPointCloud& cloud, const std::vector<int>& sign) {
  if (sign.size() != cloud.size()) throw ContractError("sign array length mismatch");
  for (size_t i = 0; i < cloud.size(); ++i)
    if (sign[i] < 0) cloud.directions[i] = -cloud.directions[i];
}

bool gravity_flip(OrientedPointCloud& cloud, const Vec3& down) {
  double s = 0.0;
  for (size_t i = 0; i < cloud.size(); ++i) s += cloud.confidence[i] * cloud.directions[i].dot(down);
  if (s >= 0.0) return false;
  for (auto& d : cloud.directions) d = -d;
  return true;
}

OrientedPointCloud propagate_and_filter(const OrientedPointCloud& full,
                                        const OrientedPointCloud& signed_reps,
                                        const std::vector<int>& back_map,
                                        double angle_cutoff_deg) {
  if (back_map.size() != full.size()) throw ContractError("back map length mismatch");
  double cos_cut = std::cos(angle_cutoff_deg * kPi / 180.0);
  OrientedPointCloud out;
  for (size_t i = 0; i < full.size(); ++i) {
    int r = back_map[i];
    if (r < 0 || r >= (int)signed_reps.size()) throw ContractError("back map entry out of range");
    Vec3 d = full.directions[i];
    if (d.dot(signed_reps.directions[r]) < 0.0) d = -d;
    if (d.dot(signed_reps.directions[r]) < cos_cut) continue;
    out.positions.push_back(full.positions[i]);
    out.directions.push_back(d);
    out.confidence.push_back(full.confidence[i]);
    out.view_ids.push_back(full.view_ids[i]);
  }
  return out;
}

}  // namespace strandopt
