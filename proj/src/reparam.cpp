#include "strandopt/reparam.hpp"

#include <algorithm>
#include <cmath>

#include "strandopt/spatial_grid.hpp"

namespace strandopt {

Eigen::MatrixXd flatten_positions(const StrandSet& set) {
  Eigen::MatrixXd x(set.total_vertices(), 3);
  int row = 0;
  for (const auto& s : set.strands)
    for (const auto& p : s.vertices) x.row(row++) = p.transpose();
  return x;
}

void unflatten_positions(const Eigen::MatrixXd& x, StrandSet& set) {
  if ((size_t)x.rows() != set.total_vertices())
    throw ContractError("position matrix size does not match strand set");
  int row = 0;
  for (auto& s : set.strands)
    for (auto& p : s.vertices) p = x.row(row++).transpose();
}

LineLaplacian build_laplacian(const StrandSet& set, int k, double lambda) {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (k < 0) throw ConfigError("neighbor count must be >= 0");
  validate_strandset(set);
  LineLaplacian lap;
  lap.lambda = lambda;
  lap.offsets = set.vertex_offsets();
  lap.n = lap.offsets.back();

  std::vector<std::pair<int, int>> edges;
  for (size_t si = 0; si < set.strands.size(); ++si) {
    int base = lap.offsets[si];
    for (int j = 0; j + 1 < (int)set.strands[si].vertices.size(); ++j)
      edges.emplace_back(base + j, base + j + 1);
  }

  if (k > 0 && set.strands.size() > 1) {
    // Segment midpoints; neighbors restricted to other strands.
    std::vector<Vec3> mids;
    std::vector<int> seg_strand, seg_first;
    for (size_t si = 0; si < set.strands.size(); ++si) {
      const auto& v = set.strands[si].vertices;
      for (int j = 0; j + 1 < (int)v.size(); ++j) {
        mids.push_back(0.5 * (v[j] + v[j + 1]));
        seg_strand.push_back((int)si);
        seg_first.push_back(lap.offsets[si] + j);
      }
    }
    Vec3 lo = mids[0], hi = mids[0];
    for (const auto& m : mids) {
      lo = lo.cwiseMin(m);
      hi = hi.cwiseMax(m);
    }
    double extent = (hi - lo).norm();
    double cell = std::max(1e-6, extent / std::max(4.0, std::cbrt((double)mids.size())));
    SpatialGrid grid(mids, cell);
    std::vector<std::vector<int>> nbrs(mids.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < (int)mids.size(); ++i)
      grid.query_knn(mids[i], k, nbrs[i],
                     [&](int j) { return seg_strand[j] == seg_strand[i]; });
    for (int i = 0; i < (int)mids.size(); ++i)
      for (int j : nbrs[i]) {
        edges.emplace_back(seg_first[i], seg_first[j]);
        edges.emplace_back(seg_first[i] + 1, seg_first[j] + 1);
      }
  }

  for (auto& e : edges)
    if (e.first > e.second) std::swap(e.first, e.second);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(edges.size() * 4);
  for (const auto& [i, j] : edges) {
    trip.emplace_back(i, j, -1.0);
    trip.emplace_back(j, i, -1.0);
    trip.emplace_back(i, i, 1.0);
    trip.emplace_back(j, j, 1.0);
  }
  lap.L.resize(lap.n, lap.n);
  lap.L.setFromTriplets(trip.begin(), trip.end());

  Eigen::SparseMatrix<double> I(lap.n, lap.n);
  I.setIdentity();
  lap.A = I + lambda * lap.L;
  lap.solver = std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
  lap.solver->compute(lap.A);
  if (lap.solver->info() != Eigen::Success)
    throw ContractError("reparameterization matrix factorization failed");
  return lap;
}

Eigen::MatrixXd to_differential(const LineLaplacian& lap, const Eigen::MatrixXd& x) {
  if (x.rows() != lap.n) throw ContractError("vertex count mismatch");
  return lap.A * x;
}

Eigen::MatrixXd from_differential(const LineLaplacian& lap, const Eigen::MatrixXd& u) {
  if (u.rows() != lap.n) throw ContractError("vertex count mismatch");
  return lap.solver->solve(u);
}

Eigen::MatrixXd pull_back_gradient(const LineLaplacian& lap, const Eigen::MatrixXd& g_x) {
  if (g_x.rows() != lap.n) throw ContractError("vertex count mismatch");
  return lap.solver->solve(g_x);
}

}  // namespace strandopt
