#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>

#include "strandopt/types.hpp"

namespace strandopt {

// Differential reparameterization of strand vertices: u = (I + lambda L) x,
// where L is the graph Laplacian over consecutive-vertex edges plus k-nearest
// segment neighborhood edges across strands (unit weights). The factorization
// is computed once and reused for the inverse map and the gradient pull-back.
struct LineLaplacian {
  int n = 0;
  double lambda = 0.0;
  Eigen::SparseMatrix<double> L;
  Eigen::SparseMatrix<double> A;  // I + lambda L
  std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> solver;
  std::vector<int> offsets;  // strand start indices into the flat vertex order
};

Eigen::MatrixXd flatten_positions(const StrandSet& set);
void unflatten_positions(const Eigen::MatrixXd& x, StrandSet& set);

// k: neighbor segments per segment (on other strands); k = 0 keeps only the
// consecutive-vertex edges. Neighbor vertex pairs are matched first-to-first,
// second-to-second and deduplicated.
LineLaplacian build_laplacian(const StrandSet& set, int k, double lambda);

Eigen::MatrixXd to_differential(const LineLaplacian& lap, const Eigen::MatrixXd& x);
Eigen::MatrixXd from_differential(const LineLaplacian& lap, const Eigen::MatrixXd& u);
// g_u = A^-1 g_x (A is symmetric).
Eigen::MatrixXd pull_back_gradient(const LineLaplacian& lap, const Eigen::MatrixXd& g_x);

}  // namespace strandopt
