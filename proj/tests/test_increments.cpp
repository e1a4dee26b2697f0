#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spias/errors.hpp"
#include "spias/increments.hpp"
#include "spias/mesh.hpp"
#include "test_support.hpp"

#include <Eigen/Dense>

using namespace spias;
using test_support::random_vector;

TEST_CASE("star graph: L is 3x1 with +-1 entries and LtL = [3]") {
  Mesh m = test_support::star_mesh();
  auto op = IncrementOperator::build(m);
  REQUIRE(op.rows() == 3);
  REQUIRE(op.cols() == 1);
  Eigen::MatrixXd dense = op.matrix().toDense();
  for (int l = 0; l < 3; ++l) CHECK(std::fabs(dense(l, 0)) == 1.0);
  CHECK((dense.transpose() * dense)(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("increments of a constant vanish on interior-interior edges") {
  Mesh m = test_support::small_disk(0.25);
  auto op = IncrementOperator::build(m);
  Eigen::VectorXd xi = Eigen::VectorXd::Constant(op.cols(), 2.5);
  Eigen::VectorXd zeta = op.apply(xi);
  for (int l = 0; l < op.rows(); ++l) {
    const auto [u, v] = op.edges()[l];
    const bool both_interior =
        !m.nodes()[u].is_boundary && !m.nodes()[v].is_boundary;
    if (both_interior) CHECK(zeta[l] == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("apply: zero in, zero out; indicator has degree-many nonzeros") {
  Mesh m = test_support::small_disk(0.25);
  auto op = IncrementOperator::build(m);
  CHECK(op.apply(Eigen::VectorXd::Zero(op.cols())).norm() == 0.0);

  const int col = 0;
  const int node = m.interior_nodes()[col];
  int degree = 0;
  for (const auto& e : op.edges()) {
    if (e.first == node || e.second == node) ++degree;
  }
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(op.cols());
  xi[col] = 3.0;
  Eigen::VectorXd zeta = op.apply(xi);
  int nonzeros = 0;
  for (int l = 0; l < op.rows(); ++l) {
    if (zeta[l] != 0.0) {
      ++nonzeros;
      CHECK(std::fabs(zeta[l]) == doctest::Approx(3.0));
    }
  }
  CHECK(nonzeros == degree);
}

TEST_CASE("entrywise norm bound holds for random xi") {
  Mesh m = test_support::small_disk(0.3);
  auto op = IncrementOperator::build(m);
  Eigen::VectorXd xi = random_vector(op.cols(), 7);
  const double lhs = op.apply(xi).norm();
  double entrywise_l1 = 0.0;
  for (int k = 0; k < op.matrix().outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(op.matrix(), k); it; ++it) {
      entrywise_l1 += std::fabs(it.value());
    }
  }
  CHECK(lhs <= entrywise_l1 * xi.lpNorm<Eigen::Infinity>() + 1e-12);
  CHECK(entrywise_l1 <= 2.0 * op.rows());  // at most two nonzeros per row
}

TEST_CASE("pseudoinverse recovers xi on the range of L") {
  Mesh m = test_support::small_disk(0.18);
  auto op = IncrementOperator::build(m);
  Eigen::VectorXd xi0 = random_vector(op.cols(), 11);
  Eigen::VectorXd back = op.pseudoinverse_apply(op.apply(xi0));
  CHECK((back - xi0).norm() <= 1e-12 * xi0.norm());
}

TEST_CASE("pseudoinverse of range-orthogonal zeta is zero") {
  Mesh m = test_support::small_disk(0.3);
  auto op = IncrementOperator::build(m);
  Eigen::VectorXd zeta = random_vector(op.rows(), 13);
  // Project out the range of L.
  Eigen::VectorXd perp = zeta - op.apply(op.pseudoinverse_apply(zeta));
  CHECK(op.pseudoinverse_apply(perp).norm() <= 1e-10 * zeta.norm());
}

TEST_CASE("pseudoinverse matches a dense QR least-squares oracle") {
  Mesh m = test_support::small_disk(0.45, 4, 20.0);  // ~30 nodes
  REQUIRE(m.n_nodes() < 60);
  auto op = IncrementOperator::build(m);
  Eigen::MatrixXd dense = op.matrix().toDense();
  for (unsigned seed : {1u, 2u, 3u}) {
    Eigen::VectorXd zeta = random_vector(op.rows(), seed);
    Eigen::VectorXd oracle = dense.colPivHouseholderQr().solve(zeta);
    Eigen::VectorXd got = op.pseudoinverse_apply(zeta);
    CHECK((got - oracle).norm() <= 1e-10 * (oracle.norm() + 1.0));
  }
}

TEST_CASE("L-dagger L = I on the KTC-scale mesh") {
  Mesh m = spias::generate_disk_mesh(1.0, 0.075,
                                     ElectrodeLayout::uniform(32, 5.625));
  auto op = IncrementOperator::build(m);
  CHECK(op.rows() >= op.cols());
  Eigen::VectorXd xi = random_vector(op.cols(), 21);
  Eigen::VectorXd back = op.pseudoinverse_apply(op.apply(xi));
  CHECK((back - xi).norm() <= 1e-10 * xi.norm());
}

TEST_CASE("whitened pseudoinverse") {
  Mesh m = test_support::small_disk(0.25);
  auto op = IncrementOperator::build(m);

  SUBCASE("theta = 1 reduces to the plain pseudoinverse") {
    Eigen::VectorXd theta = Eigen::VectorXd::Ones(op.rows());
    Eigen::VectorXd alpha = random_vector(op.rows(), 31);
    Eigen::VectorXd a = op.whitened_pseudoinverse_apply(theta, alpha);
    Eigen::VectorXd b = op.pseudoinverse_apply(alpha);
    CHECK((a - b).norm() <= 1e-12 * (b.norm() + 1.0));
  }

  SUBCASE("consistency: alpha = L_theta xi0 recovers xi0") {
    Eigen::VectorXd theta = random_vector(op.rows(), 33).array().abs() + 0.5;
    auto white = op.whitened(theta);
    Eigen::VectorXd xi0 = random_vector(op.cols(), 35);
    Eigen::VectorXd back = white.pseudoinverse_apply(white.apply(xi0));
    CHECK((back - xi0).norm() <= 1e-10 * xi0.norm());
  }

  SUBCASE("uniform theta scaling leaves the preimage of a fixed zeta invariant") {
    Eigen::VectorXd theta = random_vector(op.rows(), 37).array().abs() + 0.5;
    Eigen::VectorXd zeta = random_vector(op.rows(), 39);
    auto preimage = [&](const Eigen::VectorXd& th) {
      Eigen::VectorXd alpha = th.cwiseSqrt().cwiseInverse().asDiagonal() * zeta;
      return op.whitened_pseudoinverse_apply(th, alpha);
    };
    Eigen::VectorXd a = preimage(theta);
    Eigen::VectorXd b = preimage((4.0 * theta).eval());
    CHECK((a - b).norm() <= 1e-10 * (a.norm() + 1.0));
  }

  SUBCASE("nonpositive theta is rejected") {
    Eigen::VectorXd theta = Eigen::VectorXd::Ones(op.rows());
    theta[2] = 0.0;
    CHECK_THROWS_AS(op.whitened_pseudoinverse_apply(
                        theta, Eigen::VectorXd::Zero(op.rows())),
                    config_error);
  }

  SUBCASE("update_theta refactorizes in place") {
    Eigen::VectorXd t1 = Eigen::VectorXd::Ones(op.rows());
    auto white = op.whitened(t1);
    Eigen::VectorXd t2 = random_vector(op.rows(), 41).array().abs() + 0.25;
    white.update_theta(t2);
    Eigen::VectorXd xi0 = random_vector(op.cols(), 43);
    Eigen::VectorXd back = white.pseudoinverse_apply(white.apply(xi0));
    CHECK((back - xi0).norm() <= 1e-10 * xi0.norm());
  }
}
