#include "spias/cem.hpp"

#include "spias/errors.hpp"

#include <chrono>
#include <cmath>
#include <vector>

namespace spias {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Nodal conductivity values with the positivity floor applied.
Eigen::VectorXd nodal_sigma(const Mesh& mesh, const Conductivity& cond,
                            std::vector<int>& clamped) {
  if (cond.sigma0 <= 0.0) {
    throw config_error("cem: background conductivity must be positive");
  }
  if (cond.xi.size() != mesh.n_interior()) {
    throw config_error("cem: xi has wrong dimension");
  }
  const double floor = 1e-4 * cond.sigma0;
  Eigen::VectorXd sigma(mesh.n_nodes());
  for (int v = 0; v < mesh.n_nodes(); ++v) {
    const int col = mesh.interior_index(v);
    double s = cond.sigma0 + (col >= 0 ? cond.xi[col] : 0.0);
    if (s < floor) {
      s = floor;
      clamped.push_back(v);
    }
    sigma[v] = s;
  }
  return sigma;
}

double edge_length(const Mesh& mesh, int u, int v) {
  const Node& a = mesh.nodes()[u];
  const Node& b = mesh.nodes()[v];
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Element gradient of a nodal field, one 2-vector per triangle.
Eigen::Matrix2Xd element_gradients(const Mesh& mesh, const Eigen::VectorXd& p) {
  Eigen::Matrix2Xd g(2, mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (int v = 0; v < 3; ++v) {
      sum += p[mesh.triangles()[t][v]] * mesh.basis_gradient(t, v);
    }
    g.col(t) = sum;
  }
  return g;
}

}  // namespace

void CurrentFrame::validate(int n_electrodes) const {
  if (patterns.rows() != n_electrodes) {
    throw config_error("current frame: row count does not match electrodes");
  }
  if (patterns.cols() < 1) {
    throw config_error("current frame: needs at least one injection");
  }
  for (int j = 0; j < patterns.cols(); ++j) {
    const double scale = patterns.col(j).cwiseAbs().maxCoeff();
    if (std::fabs(patterns.col(j).sum()) > 1e-12 * std::max(scale, 1.0)) {
      throw config_error("current frame: injection " + std::to_string(j) +
                         " does not sum to zero");
    }
  }
}

MeasurementPattern MeasurementPattern::adjacent(const std::vector<int>& active) {
  if (active.size() < 2) {
    throw config_error("measurement pattern: need at least two electrodes");
  }
  MeasurementPattern p;
  const int n = static_cast<int>(active.size());
  p.rows.reserve(n);
  for (int k = 0; k < n; ++k) {
    p.rows.push_back({active[k], active[(k + 1) % n]});
  }
  return p;
}

void MeasurementPattern::validate(int n_electrodes) const {
  if (rows.empty()) throw config_error("measurement pattern: no rows");
  for (const auto& r : rows) {
    if (r.pos < 0 || r.pos >= n_electrodes || r.neg >= n_electrodes) {
      throw config_error("measurement pattern: electrode index out of range");
    }
    if (r.neg == r.pos) {
      throw config_error("measurement pattern: row with identical electrodes");
    }
  }
}

Eigen::VectorXd MeasurementPattern::apply(const Eigen::MatrixXd& voltages) const {
  const int nr = rows_per_injection();
  Eigen::VectorXd out(nr * voltages.cols());
  for (int j = 0; j < voltages.cols(); ++j) {
    for (int r = 0; r < nr; ++r) {
      double v = voltages(rows[r].pos, j);
      if (rows[r].neg >= 0) v -= voltages(rows[r].neg, j);
      out[j * nr + r] = v;
    }
  }
  return out;
}

Eigen::VectorXd MeasurementPattern::functional(int row, int n_electrodes) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n_electrodes);
  g[rows[row].pos] = 1.0;
  if (rows[row].neg >= 0) g[rows[row].neg] = -1.0;
  return g;
}

CemSystem CemSystem::assemble(const Mesh& mesh, const Conductivity& cond,
                              const Eigen::VectorXd& contact_impedance) {
  const int L = mesh.n_electrodes();
  if (L < 2) throw config_error("cem: mesh must carry at least two electrodes");
  if (contact_impedance.size() != L) {
    throw config_error("cem: contact impedance vector has wrong length");
  }
  if (contact_impedance.minCoeff() <= 0.0) {
    throw config_error("cem: contact impedances must be positive");
  }

  const auto t0 = Clock::now();
  CemSystem sys;
  sys.mesh_ = &mesh;
  sys.n_electrodes_ = L;

  Eigen::VectorXd sigma = nodal_sigma(mesh, cond, sys.clamped_);

  const int nn = mesh.n_nodes();
  const int nd = nn + L - 1;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(9 * mesh.n_triangles() + 16 * L);

  // Volume stiffness: sigma is linear per element, so the element mean of
  // the vertex values integrates it exactly against constant gradients.
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const Triangle& tri = mesh.triangles()[t];
    const double smean =
        (sigma[tri[0]] + sigma[tri[1]] + sigma[tri[2]]) / 3.0;
    const double w = smean * mesh.area(t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trip.emplace_back(
            tri[i], tri[j],
            w * mesh.basis_gradient(t, i).dot(mesh.basis_gradient(t, j)));
      }
    }
  }

  // Zero-sum voltage basis E_k = e_0 - e_{k+1}.
  sys.basis_ = Eigen::MatrixXd::Zero(L, L - 1);
  for (int k = 0; k < L - 1; ++k) {
    sys.basis_(0, k) = 1.0;
    sys.basis_(k + 1, k) = -1.0;
  }

  Eigen::MatrixXd electrode_block = Eigen::MatrixXd::Zero(L - 1, L - 1);
  for (int l = 0; l < L; ++l) {
    const double inv_z = 1.0 / contact_impedance[l];
    const auto& arc = mesh.electrode_arcs()[l];
    double arc_length = 0.0;
    for (std::size_t s = 0; s + 1 < arc.size(); ++s) {
      const int u = arc[s], v = arc[s + 1];
      const double le = edge_length(mesh, u, v);
      arc_length += le;
      // Boundary mass on a straight edge with linear basis functions.
      trip.emplace_back(u, u, inv_z * le / 3.0);
      trip.emplace_back(v, v, inv_z * le / 3.0);
      trip.emplace_back(u, v, inv_z * le / 6.0);
      trip.emplace_back(v, u, inv_z * le / 6.0);
      // Coupling -1/z * int(phi_i) * (E_k)_l.
      for (int k = 0; k < L - 1; ++k) {
        const double c = -inv_z * (le / 2.0) * sys.basis_(l, k);
        if (c != 0.0) {
          trip.emplace_back(u, nn + k, c);
          trip.emplace_back(nn + k, u, c);
          trip.emplace_back(v, nn + k, c);
          trip.emplace_back(nn + k, v, c);
        }
      }
    }
    electrode_block += (inv_z * arc_length) * sys.basis_.row(l).transpose() *
                       sys.basis_.row(l);
  }
  for (int k = 0; k < L - 1; ++k) {
    for (int k2 = 0; k2 < L - 1; ++k2) {
      if (electrode_block(k, k2) != 0.0) {
        trip.emplace_back(nn + k, nn + k2, electrode_block(k, k2));
      }
    }
  }

  sys.matrix_.resize(nd, nd);
  sys.matrix_.setFromTriplets(trip.begin(), trip.end());
  sys.matrix_.makeCompressed();
  sys.assembly_seconds_ = seconds_since(t0);

  const auto t1 = Clock::now();
  sys.factor_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
  sys.factor_->compute(sys.matrix_);
  if (sys.factor_->info() != Eigen::Success ||
      sys.factor_->vectorD().minCoeff() <= 0.0) {
    throw numerical_error(
        "cem: factorization of the assembled system failed (nodes=" +
        std::to_string(nn) + ", electrodes=" + std::to_string(L) + ")");
  }
  sys.factorization_seconds_ = seconds_since(t1);
  return sys;
}

CemSystem::Solution CemSystem::solve(const Eigen::VectorXd& currents) const {
  if (currents.size() != n_electrodes_) {
    throw config_error("cem: current vector has wrong length");
  }
  const int nn = mesh_->n_nodes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nn + n_electrodes_ - 1);
  rhs.tail(n_electrodes_ - 1) = basis_.transpose() * currents;
  Eigen::VectorXd x = factor_->solve(rhs);
  Solution sol;
  sol.potential = x.head(nn);
  sol.voltages = basis_ * x.tail(n_electrodes_ - 1);
  return sol;
}

Eigen::MatrixXd CemSystem::solve_voltages(const CurrentFrame& currents) const {
  currents.validate(n_electrodes_);
  Eigen::MatrixXd U(n_electrodes_, currents.n_injections());
  for (int j = 0; j < currents.n_injections(); ++j) {
    U.col(j) = solve(currents.patterns.col(j)).voltages;
  }
  return U;
}

Eigen::VectorXd CemSystem::solve_adjoint(
    const Eigen::VectorXd& meas_functional) const {
  if (meas_functional.size() != n_electrodes_) {
    throw config_error("cem: measurement functional has wrong length");
  }
  const int nn = mesh_->n_nodes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nn + n_electrodes_ - 1);
  rhs.tail(n_electrodes_ - 1) = basis_.transpose() * meas_functional;
  return factor_->solve(rhs).head(nn);
}

Eigen::VectorXd CemSystem::solve_raw(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != matrix_.rows()) {
    throw config_error("cem: raw right-hand side has wrong length");
  }
  return factor_->solve(rhs);
}

Eigen::MatrixXd resistance_matrix(const CemSystem& system) {
  const int L = system.n_electrodes();
  Eigen::MatrixXd R(L, L);
  for (int j = 0; j < L; ++j) {
    Eigen::VectorXd current = Eigen::VectorXd::Constant(L, -1.0 / L);
    current[j] += 1.0;
    R.col(j) = system.solve(current).voltages;
  }
  return R;
}

namespace {

ForwardResult jacobian_adjoint(const CemSystem& sys, const CurrentFrame& currents,
                               const MeasurementPattern& meas) {
  const Mesh& mesh = sys.mesh();
  const int L = sys.n_electrodes();
  const int n_inj = currents.n_injections();
  const int nr = meas.rows_per_injection();
  const int nt = mesh.n_triangles();

  Eigen::MatrixXd U(L, n_inj);
  std::vector<Eigen::Matrix2Xd> grad_u(n_inj);
  for (int j = 0; j < n_inj; ++j) {
    auto sol = sys.solve(currents.patterns.col(j));
    U.col(j) = sol.voltages;
    grad_u[j] = element_gradients(mesh, sol.potential);
  }
  std::vector<Eigen::Matrix2Xd> grad_w(nr);
  for (int r = 0; r < nr; ++r) {
    grad_w[r] = element_gradients(mesh, sys.solve_adjoint(meas.functional(r, L)));
  }

  std::vector<bool> clamped(mesh.n_nodes(), false);
  for (int v : sys.clamped_node_list()) clamped[v] = true;

  ForwardResult out;
  out.voltages = meas.apply(U);
  out.clamped_nodes = sys.clamped_nodes();
  out.jacobian = Eigen::MatrixXd::Zero(n_inj * nr, mesh.n_interior());
  for (int j = 0; j < n_inj; ++j) {
    for (int r = 0; r < nr; ++r) {
      auto row = out.jacobian.row(j * nr + r);
      const auto& gu = grad_u[j];
      const auto& gw = grad_w[r];
      for (int t = 0; t < nt; ++t) {
        const double s = (mesh.area(t) / 3.0) * gu.col(t).dot(gw.col(t));
        if (s == 0.0) continue;
        for (int v = 0; v < 3; ++v) {
          const int node = mesh.triangles()[t][v];
          const int col = mesh.interior_index(node);
          if (col >= 0 && !clamped[node]) row[col] -= s;
        }
      }
    }
  }
  return out;
}

ForwardResult jacobian_factor_reuse(const CemSystem& sys,
                                    const CurrentFrame& currents,
                                    const MeasurementPattern& meas) {
  const Mesh& mesh = sys.mesh();
  const int L = sys.n_electrodes();
  const int n_inj = currents.n_injections();
  const int nr = meas.rows_per_injection();
  const int nn = mesh.n_nodes();

  std::vector<std::vector<int>> node_tris(nn);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    for (int v : mesh.triangles()[t]) node_tris[v].push_back(t);
  }

  Eigen::MatrixXd U(L, n_inj);
  std::vector<Eigen::Matrix2Xd> grad_u(n_inj);
  for (int j = 0; j < n_inj; ++j) {
    auto sol = sys.solve(currents.patterns.col(j));
    U.col(j) = sol.voltages;
    grad_u[j] = element_gradients(mesh, sol.potential);
  }

  std::vector<bool> clamped(nn, false);
  for (int v : sys.clamped_node_list()) clamped[v] = true;

  Eigen::MatrixXd meas_rows(nr, L);
  for (int r = 0; r < nr; ++r) meas_rows.row(r) = meas.functional(r, L);

  ForwardResult out;
  out.voltages = meas.apply(U);
  out.clamped_nodes = sys.clamped_nodes();
  out.jacobian = Eigen::MatrixXd::Zero(n_inj * nr, mesh.n_interior());

  const int nd = nn + L - 1;
  for (int node = 0; node < nn; ++node) {
    const int col = mesh.interior_index(node);
    if (col < 0 || clamped[node]) continue;
    for (int j = 0; j < n_inj; ++j) {
      // (dK/dxi_nu) x: stiffness derivative applied to the potential.
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nd);
      for (int t : node_tris[node]) {
        const double s = mesh.area(t) / 3.0;
        for (int v = 0; v < 3; ++v) {
          rhs[mesh.triangles()[t][v]] +=
              s * mesh.basis_gradient(t, v).dot(grad_u[j].col(t));
        }
      }
      // dU = -E * (K^{-1} rhs)_tail
      Eigen::VectorXd full = sys.solve_raw(rhs);
      Eigen::VectorXd dU = -(meas_rows * sys.voltage_basis() * full.tail(L - 1));
      for (int r = 0; r < nr; ++r) {
        out.jacobian(j * nr + r, col) = dU[r];
      }
    }
  }
  return out;
}

}  // namespace

ForwardResult forward_with_jacobian(const Mesh& mesh, const Conductivity& cond,
                                    const Eigen::VectorXd& contact_impedance,
                                    const CurrentFrame& currents,
                                    const MeasurementPattern& meas,
                                    JacobianMethod method) {
  currents.validate(mesh.n_electrodes());
  meas.validate(mesh.n_electrodes());
  CemSystem sys = CemSystem::assemble(mesh, cond, contact_impedance);
  return method == JacobianMethod::adjoint
             ? jacobian_adjoint(sys, currents, meas)
             : jacobian_factor_reuse(sys, currents, meas);
}

Eigen::VectorXd forward_voltages(const Mesh& mesh, const Conductivity& cond,
                                 const Eigen::VectorXd& contact_impedance,
                                 const CurrentFrame& currents,
                                 const MeasurementPattern& meas) {
  currents.validate(mesh.n_electrodes());
  meas.validate(mesh.n_electrodes());
  CemSystem sys = CemSystem::assemble(mesh, cond, contact_impedance);
  return meas.apply(sys.solve_voltages(currents));
}

}  // namespace spias
