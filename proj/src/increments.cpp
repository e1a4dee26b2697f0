#include "spias/increments.hpp"

#include "spias/errors.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace spias {

namespace {

void check_positive_definite(
    const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& ldlt,
    const char* what) {
  if (ldlt.info() != Eigen::Success) {
    throw config_error(std::string(what) + ": factorization failed");
  }
  const auto d = ldlt.vectorD();
  const double dmax = d.maxCoeff();
  if (dmax <= 0.0 || d.minCoeff() <= 1e-14 * dmax) {
    throw config_error(std::string(what) +
                       ": operator is rank deficient (disconnected interior?)");
  }
}

}  // namespace

IncrementOperator IncrementOperator::build(const Mesh& mesh) {
  const auto edges = interior_edges(mesh);
  if (edges.empty()) {
    throw config_error("increment operator: mesh has no interior edges");
  }
  const int N = static_cast<int>(edges.size());
  const int n = mesh.n_interior();

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * edges.size());
  for (int l = 0; l < N; ++l) {
    const auto [u, v] = edges[l];
    if (!mesh.nodes()[u].is_boundary) {
      triplets.emplace_back(l, mesh.interior_index(u), 1.0);
    }
    if (!mesh.nodes()[v].is_boundary) {
      triplets.emplace_back(l, mesh.interior_index(v), -1.0);
    }
  }

  IncrementOperator op;
  op.matrix_.resize(N, n);
  op.matrix_.setFromTriplets(triplets.begin(), triplets.end());
  op.matrix_.makeCompressed();
  op.edges_ = edges;

  Eigen::SparseMatrix<double> normal = op.matrix_.transpose() * op.matrix_;
  op.normal_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
  op.normal_->compute(normal);
  check_positive_definite(*op.normal_, "increment operator");
  return op;
}

Eigen::VectorXd IncrementOperator::apply(const Eigen::VectorXd& xi) const {
  if (xi.size() != cols()) {
    throw config_error("increment operator: xi has wrong dimension");
  }
  return matrix_ * xi;
}

Eigen::VectorXd IncrementOperator::pseudoinverse_apply(
    const Eigen::VectorXd& zeta) const {
  if (zeta.size() != rows()) {
    throw config_error("increment operator: zeta has wrong dimension");
  }
  return normal_->solve(matrix_.transpose() * zeta);
}

Eigen::VectorXd IncrementOperator::whitened_pseudoinverse_apply(
    const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha) const {
  return WhitenedIncrement(*this, theta).pseudoinverse_apply(alpha);
}

WhitenedIncrement::WhitenedIncrement(const IncrementOperator& op,
                                     const Eigen::VectorXd& theta)
    : op_(&op) {
  factor_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
  // Symbolic analysis on the unweighted normal matrix; the pattern does not
  // depend on theta.
  Eigen::SparseMatrix<double> pattern = op.matrix_.transpose() * op.matrix_;
  factor_->analyzePattern(pattern);
  update_theta(theta);
}

void WhitenedIncrement::update_theta(const Eigen::VectorXd& theta) {
  if (theta.size() != op_->rows()) {
    throw config_error("whitened increments: theta has wrong dimension");
  }
  if (theta.minCoeff() <= 0.0) {
    throw config_error("whitened increments: theta must be positive");
  }
  inv_sqrt_theta_ = theta.cwiseSqrt().cwiseInverse();
  const Eigen::VectorXd inv_theta = theta.cwiseInverse();
  Eigen::SparseMatrix<double> weighted =
      op_->matrix_.transpose() * inv_theta.asDiagonal() * op_->matrix_;
  factor_->factorize(weighted);
  check_positive_definite(*factor_, "whitened increments");
}

Eigen::VectorXd WhitenedIncrement::apply(const Eigen::VectorXd& xi) const {
  return inv_sqrt_theta_.asDiagonal() * op_->apply(xi);
}

Eigen::VectorXd WhitenedIncrement::pseudoinverse_apply(
    const Eigen::VectorXd& alpha) const {
  if (alpha.size() != op_->rows()) {
    throw config_error("whitened increments: alpha has wrong dimension");
  }
  return factor_->solve(op_->matrix_.transpose() *
                        (inv_sqrt_theta_.asDiagonal() * alpha));
}

Eigen::VectorXd WhitenedIncrement::solve_normal(const Eigen::VectorXd& rhs) const {
  return factor_->solve(rhs);
}

}  // namespace spias
