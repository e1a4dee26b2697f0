#pragma once

#include "spias/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <vector>

namespace spias {

/// Piecewise-linear conductivity sigma0 + sum_nu xi_nu phi_nu, with xi
/// supported on interior nodes (the perturbation vanishes on the boundary).
struct Conductivity {
  double sigma0 = 1.0;
  Eigen::VectorXd xi;  // length n_interior

  static Conductivity homogeneous(const Mesh& mesh, double sigma0) {
    return {sigma0, Eigen::VectorXd::Zero(mesh.n_interior())};
  }
};

/// One column per injection; each column is an L-vector of injected
/// currents summing to zero.
struct CurrentFrame {
  Eigen::MatrixXd patterns;  // L x n_inj

  int n_injections() const { return static_cast<int>(patterns.cols()); }
  void validate(int n_electrodes) const;
};

/// Linear functionals applied to the electrode voltage vector of every
/// injection. neg < 0 marks an absolute-voltage row (single +1).
struct MeasurementRow {
  int pos = 0;
  int neg = -1;
};

struct MeasurementPattern {
  std::vector<MeasurementRow> rows;

  /// Cyclic adjacent-pair differences over the given electrodes:
  /// U[active[k]] - U[active[k+1 mod]].
  static MeasurementPattern adjacent(const std::vector<int>& active);

  int rows_per_injection() const { return static_cast<int>(rows.size()); }
  void validate(int n_electrodes) const;
  /// Stack the rows applied to each injection's voltage column.
  Eigen::VectorXd apply(const Eigen::MatrixXd& voltages) const;
  /// Row functional as a dense L-vector.
  Eigen::VectorXd functional(int row, int n_electrodes) const;
};

/// Assembled and factorized FEM system for the complete electrode model at
/// a fixed conductivity. The unknowns are the nodal potential plus the
/// electrode voltage coefficients in the zero-sum basis E_k = e_0 - e_{k+1}.
/// Immutable after assembly; concurrent solves against the shared
/// factorization are safe.
class CemSystem {
 public:
  static CemSystem assemble(const Mesh& mesh, const Conductivity& cond,
                            const Eigen::VectorXd& contact_impedance);

  struct Solution {
    Eigen::VectorXd potential;  // nodal, length n_nodes
    Eigen::VectorXd voltages;   // electrode, length L, sums to zero
  };

  Solution solve(const Eigen::VectorXd& currents) const;
  /// Electrode voltages for every column of the frame (L x n_inj).
  Eigen::MatrixXd solve_voltages(const CurrentFrame& currents) const;
  /// Nodal adjoint potential for a measurement functional on the voltages.
  Eigen::VectorXd solve_adjoint(const Eigen::VectorXd& meas_functional) const;
  /// Solve the assembled system for an arbitrary right-hand side.
  Eigen::VectorXd solve_raw(const Eigen::VectorXd& rhs) const;
  const Eigen::MatrixXd& voltage_basis() const { return basis_; }

  const Mesh& mesh() const { return *mesh_; }
  int n_electrodes() const { return n_electrodes_; }
  /// Number of nodes whose conductivity was clamped at the positivity floor.
  int clamped_nodes() const { return static_cast<int>(clamped_.size()); }
  const std::vector<int>& clamped_node_list() const { return clamped_; }
  double assembly_seconds() const { return assembly_seconds_; }
  double factorization_seconds() const { return factorization_seconds_; }

  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }

 private:
  CemSystem() = default;

  const Mesh* mesh_ = nullptr;
  int n_electrodes_ = 0;
  Eigen::SparseMatrix<double> matrix_;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> factor_;
  Eigen::MatrixXd basis_;  // L x (L-1), zero-sum voltage basis
  std::vector<int> clamped_;
  double assembly_seconds_ = 0.0;
  double factorization_seconds_ = 0.0;
};

/// U = R I column by column; symmetric by reciprocity. Currents that do not
/// sum to zero are projected onto the zero-sum subspace first.
Eigen::MatrixXd resistance_matrix(const CemSystem& system);

struct ForwardResult {
  Eigen::VectorXd voltages;  // stacked measured values, length m
  Eigen::MatrixXd jacobian;  // m x n_interior
  int clamped_nodes = 0;
};

enum class JacobianMethod {
  /// One factorization; one solve per injection and per measurement
  /// functional, then element-wise gradient inner products.
  adjoint,
  /// One factorization; one extra solve per (interior node, injection)
  /// pair. Quadratic cost, used as the independent route in tests.
  factor_reuse,
};

/// Measured voltages and their Jacobian with respect to xi.
ForwardResult forward_with_jacobian(const Mesh& mesh, const Conductivity& cond,
                                    const Eigen::VectorXd& contact_impedance,
                                    const CurrentFrame& currents,
                                    const MeasurementPattern& meas,
                                    JacobianMethod method = JacobianMethod::adjoint);

/// Measured voltages only.
Eigen::VectorXd forward_voltages(const Mesh& mesh, const Conductivity& cond,
                                 const Eigen::VectorXd& contact_impedance,
                                 const CurrentFrame& currents,
                                 const MeasurementPattern& meas);

}  // namespace spias
