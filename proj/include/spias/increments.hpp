#pragma once

#include "spias/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

namespace spias {

class IncrementOperator;

/// Working state for a fixed variance vector theta: holds the factorization
/// of Lᵀ D_θ⁻¹ L. The symbolic analysis is done once; update_theta only
/// refactorizes numerically. Not shared across concurrent reconstructions.
class WhitenedIncrement {
 public:
  WhitenedIncrement(const IncrementOperator& op, const Eigen::VectorXd& theta);

  /// Refactorize for a new theta (same operator, same sparsity pattern).
  void update_theta(const Eigen::VectorXd& theta);

  /// alpha = L_theta xi = D_theta^{-1/2} L xi.
  Eigen::VectorXd apply(const Eigen::VectorXd& xi) const;
  /// xi = L_theta^dagger alpha, the least-squares preimage.
  Eigen::VectorXd pseudoinverse_apply(const Eigen::VectorXd& alpha) const;
  /// Solve (Lᵀ D_θ⁻¹ L) x = rhs.
  Eigen::VectorXd solve_normal(const Eigen::VectorXd& rhs) const;

  const Eigen::VectorXd& inv_sqrt_theta() const { return inv_sqrt_theta_; }
  const IncrementOperator& base() const { return *op_; }

 private:
  const IncrementOperator* op_;
  Eigen::VectorXd inv_sqrt_theta_;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> factor_;
};

/// Sparse operator mapping nodal coefficients xi (interior nodes) to edge
/// increments zeta. Row l corresponds to interior edge l in (min, max) edge
/// order; entries are +1 on the lower-index endpoint and -1 on the higher
/// one, with boundary endpoints contributing zero. Immutable after build.
class IncrementOperator {
 public:
  static IncrementOperator build(const Mesh& mesh);

  int rows() const { return static_cast<int>(matrix_.rows()); }  // N
  int cols() const { return static_cast<int>(matrix_.cols()); }  // n
  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }
  /// Interior edges in row order.
  const std::vector<Edge>& edges() const { return edges_; }

  /// zeta = L xi.
  Eigen::VectorXd apply(const Eigen::VectorXd& xi) const;
  /// xi = L^dagger zeta = (LᵀL)⁻¹ Lᵀ zeta via the cached factorization.
  Eigen::VectorXd pseudoinverse_apply(const Eigen::VectorXd& zeta) const;
  /// One-shot whitened preimage xi = L_theta^dagger alpha; factorizes
  /// Lᵀ D_θ⁻¹ L on the fly. Use WhitenedIncrement inside iteration loops.
  Eigen::VectorXd whitened_pseudoinverse_apply(const Eigen::VectorXd& theta,
                                               const Eigen::VectorXd& alpha) const;

  WhitenedIncrement whitened(const Eigen::VectorXd& theta) const {
    return WhitenedIncrement(*this, theta);
  }

 private:
  friend class WhitenedIncrement;
  IncrementOperator() = default;

  Eigen::SparseMatrix<double> matrix_;  // N x n
  std::vector<Edge> edges_;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> normal_;
};

}  // namespace spias
