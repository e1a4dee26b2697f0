#pragma once

#include <Eigen/Core>

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace spias {

struct Node {
  double x = 0.0;
  double y = 0.0;
  bool is_boundary = false;
};

using Triangle = std::array<int, 3>;
/// Unordered node pair stored as (min, max).
using Edge = std::pair<int, int>;

/// Placement of L electrode arcs on the boundary circle.
struct ElectrodeLayout {
  int count = 32;
  double arc_half_angle = 0.0;   // radians
  std::vector<double> centers;   // radians, one per electrode

  /// Evenly spaced electrodes, each spanning `arc_angle_deg` degrees.
  /// With 32 electrodes at 5.625 degrees the gaps are 5.625 degrees as well.
  static ElectrodeLayout uniform(int count, double arc_angle_deg);

  /// Throws config_error if arcs overlap or parameters are out of range.
  void validate() const;
};

/// Conforming triangulation of a planar domain with electrode arcs on the
/// boundary. Immutable after construction; construction validates:
///   - triangles positively oriented with area > 0,
///   - each edge shared by at most two triangles,
///   - boundary flags equal to the topological boundary,
///   - electrode arcs are node-disjoint chains of boundary edges.
class Mesh {
 public:
  Mesh(std::vector<Node> nodes, std::vector<Triangle> triangles,
       std::vector<std::vector<int>> electrode_arcs);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  /// All unique edges, sorted by (min index, max index).
  const std::vector<Edge>& edges() const { return edges_; }
  /// Per electrode, the boundary node indices along the arc.
  const std::vector<std::vector<int>>& electrode_arcs() const { return arcs_; }

  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int n_triangles() const { return static_cast<int>(triangles_.size()); }
  int n_electrodes() const { return static_cast<int>(arcs_.size()); }
  int n_interior() const { return n_interior_; }

  /// Column index of a node in the interior-node enumeration, -1 for
  /// boundary nodes. Interior nodes are numbered in node-index order.
  int interior_index(int node) const { return interior_index_[node]; }
  /// Node index of each interior column.
  const std::vector<int>& interior_nodes() const { return interior_nodes_; }

  double area(int triangle) const { return areas_[triangle]; }
  double total_area() const;
  /// Gradient of the P1 basis function of vertex `v` (0..2) on `triangle`;
  /// constant per element.
  Eigen::Vector2d basis_gradient(int triangle, int v) const {
    return grads_[3 * triangle + v];
  }

  void save(const std::string& path) const;
  static Mesh load(const std::string& path);

 private:
  std::vector<Node> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> arcs_;
  std::vector<int> interior_index_;
  std::vector<int> interior_nodes_;
  std::vector<double> areas_;
  std::vector<Eigen::Vector2d> grads_;
  int n_interior_ = 0;

  void validate_and_index();
};

/// Structured polar triangulation of a disk followed by Lawson edge flips.
/// Electrode arc endpoints are forced to be mesh nodes, so every boundary
/// edge lies entirely inside or outside an electrode. Deterministic.
Mesh generate_disk_mesh(double radius, double target_h,
                        const ElectrodeLayout& layout);

/// Edges with at least one interior endpoint, sorted by (min, max).
std::vector<Edge> interior_edges(const Mesh& mesh);

}  // namespace spias
