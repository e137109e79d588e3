#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "strandopt/reparam.hpp"
#include "strandopt/rng.hpp"

using namespace strandopt;

namespace {

StrandSet random_set(int n_strands, int n_verts, uint64_t seed) {
  Rng rng(mix_seed(seed, 0));
  StrandSet set;
  for (int i = 0; i < n_strands; ++i) {
    Strand s;
    Vec3 p(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
    for (int k = 0; k < n_verts; ++k) {
      s.vertices.push_back(p);
      p += rng.unit_vector() * 1.5;
    }
    set.strands.push_back(std::move(s));
  }
  return set;
}

}  // namespace

TEST_SUITE("reparam") {
  TEST_CASE("flatten / unflatten round trip") {
    StrandSet set = random_set(3, 5, 1);
    Eigen::MatrixXd x = flatten_positions(set);
    REQUIRE(x.rows() == 15);
    REQUIRE(x.cols() == 3);
    StrandSet copy = set;
    for (auto& s : copy.strands)
      for (auto& v : s.vertices) v.setZero();
    unflatten_positions(x, copy);
    for (size_t i = 0; i < set.strands.size(); ++i)
      for (size_t k = 0; k < set.strands[i].vertices.size(); ++k)
        CHECK(copy.strands[i].vertices[k] == set.strands[i].vertices[k]);
  }

  TEST_CASE("path-graph Laplacian rows") {
    StrandSet set;
    Strand s;
    s.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
    set.strands.push_back(s);
    LineLaplacian lap = build_laplacian(set, 0, 1.0);
    Eigen::MatrixXd L = Eigen::MatrixXd(lap.L);
    REQUIRE(L.rows() == 3);
    CHECK(L(0, 0) == doctest::Approx(1.0));
    CHECK(L(0, 1) == doctest::Approx(-1.0));
    CHECK(L(0, 2) == doctest::Approx(0.0));
    CHECK(L(1, 0) == doctest::Approx(-1.0));
    CHECK(L(1, 1) == doctest::Approx(2.0));
    CHECK(L(1, 2) == doctest::Approx(-1.0));
    CHECK(L(2, 0) == doctest::Approx(0.0));
    CHECK(L(2, 1) == doctest::Approx(-1.0));
    CHECK(L(2, 2) == doctest::Approx(1.0));
  }

  TEST_CASE("lambda = 0 makes the map an identity") {
    StrandSet set = random_set(2, 6, 2);
    LineLaplacian lap = build_laplacian(set, 0, 0.0);
    Eigen::MatrixXd A = Eigen::MatrixXd(lap.A);
    CHECK((A - Eigen::MatrixXd::Identity(A.rows(), A.cols())).norm() < 1e-14);
    Eigen::MatrixXd x = flatten_positions(set);
    CHECK((to_differential(lap, x) - x).norm() < 1e-12);
    CHECK((from_differential(lap, x) - x).norm() < 1e-12);
  }

  TEST_CASE("3-vertex path, lambda = 1: u = (I + L) x") {
    StrandSet set;
    Strand s;
    s.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)};
    set.strands.push_back(s);
    LineLaplacian lap = build_laplacian(set, 0, 1.0);
    Eigen::MatrixXd u = to_differential(lap, flatten_positions(set));
    CHECK(u(0, 0) == doctest::Approx(-1.0));  // 2*0 - 1
    CHECK(u(1, 0) == doctest::Approx(0.0));   // 3*1 - 0 - 3
    CHECK(u(2, 0) == doctest::Approx(5.0));   // 2*3 - 1
  }

  TEST_CASE("round trip to machine precision") {
    StrandSet set = random_set(5, 8, 3);
    for (int k : {0, 2, 4}) {
      LineLaplacian lap = build_laplacian(set, k, 50.0);
      Eigen::MatrixXd x = flatten_positions(set);
      Eigen::MatrixXd back = from_differential(lap, to_differential(lap, x));
      CHECK((back - x).cwiseAbs().maxCoeff() < 1e-8);
    }
  }

  TEST_CASE("pull-back inverts A on gradients") {
    StrandSet set = random_set(4, 6, 4);
    LineLaplacian lap = build_laplacian(set, 3, 25.0);
    Rng rng(mix_seed(4, 1));
    Eigen::MatrixXd v(lap.n, 3);
    for (int i = 0; i < lap.n; ++i)
      for (int c = 0; c < 3; ++c) v(i, c) = rng.uniform(-1, 1);
    Eigen::MatrixXd g_x = lap.A * v;
    CHECK((pull_back_gradient(lap, g_x) - v).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("A is symmetric positive definite (dense eigen oracle)") {
    StrandSet set = random_set(6, 7, 5);  // 42 vertices
    LineLaplacian lap = build_laplacian(set, 4, 50.0);
    Eigen::MatrixXd A = Eigen::MatrixXd(lap.A);
    CHECK((A - A.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    // Smallest eigenvalue of I + lambda L is at least 1 (L is PSD).
    CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-9);
  }

  TEST_CASE("L is symmetric with zero row sums and nonpositive off-diagonals") {
    StrandSet set = random_set(5, 6, 6);
    LineLaplacian lap = build_laplacian(set, 4, 50.0);
    Eigen::MatrixXd L = Eigen::MatrixXd(lap.L);
    CHECK((L - L.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    for (int i = 0; i < L.rows(); ++i) {
      CHECK(std::abs(L.row(i).sum()) < 1e-12);
      for (int j = 0; j < L.cols(); ++j)
        if (i != j) CHECK(L(i, j) <= 1e-12);
    }
  }

  TEST_CASE("k > 0 couples parallel strands with zero row sums") {
    StrandSet set;
    for (int i = 0; i < 2; ++i) {
      Strand s;
      for (int k = 0; k < 4; ++k) s.vertices.push_back(Vec3(1.0 * k, 2.0 * i, 0));
      set.strands.push_back(s);
    }
    LineLaplacian lap = build_laplacian(set, 1, 1.0);
    Eigen::MatrixXd L = Eigen::MatrixXd(lap.L);
    // Facing vertices of the two strands are coupled.
    bool coupled = false;
    for (int i = 0; i < 4; ++i)
      if (L(i, 4 + i) != 0.0) coupled = true;
    CHECK(coupled);
    for (int i = 0; i < L.rows(); ++i) CHECK(std::abs(L.row(i).sum()) < 1e-12);
  }

  TEST_CASE("neighborhood never links a strand to itself") {
    StrandSet set = random_set(1, 10, 7);
    LineLaplacian k0 = build_laplacian(set, 0, 1.0);
    LineLaplacian k8 = build_laplacian(set, 8, 1.0);
    CHECK((Eigen::MatrixXd(k8.L) - Eigen::MatrixXd(k0.L)).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("constant translation is preserved up to the identity part") {
    // L annihilates constants, so u = x for a constant field.
    StrandSet set;
    Strand s;
    s.vertices = {Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
    set.strands.push_back(s);
    LineLaplacian lap = build_laplacian(set, 0, 7.0);
    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 3, 4.25);
    CHECK((to_differential(lap, c) - c).cwiseAbs().maxCoeff() < 1e-12);
  }
}
