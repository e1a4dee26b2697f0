#include "spias/mesh.hpp"

#include "spias/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace spias {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double normalize_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

double signed_area2(const Node& a, const Node& b, const Node& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

/// Positive when d lies strictly inside the circumcircle of CCW (a, b, c).
double incircle(const Node& a, const Node& b, const Node& c, const Node& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad2 = adx * adx + ady * ady;
  const double bd2 = bdx * bdx + bdy * bdy;
  const double cd2 = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2) +
         ad2 * (bdx * cdy - cdx * bdy);
}

struct Ring {
  std::vector<int> idx;
  std::vector<double> ang;  // ascending, in [0, 2pi)
};

void sort_ring(Ring& r) {
  std::vector<int> order(r.idx.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return r.ang[i] < r.ang[j]; });
  Ring s;
  s.idx.reserve(r.idx.size());
  s.ang.reserve(r.ang.size());
  for (int i : order) {
    s.idx.push_back(r.idx[i]);
    s.ang.push_back(r.ang[i]);
  }
  r = std::move(s);
}

double cyclic_gap(const Ring& r, std::size_t i) {
  const std::size_t n = r.ang.size();
  double g = r.ang[(i + 1) % n] - r.ang[i];
  if (g <= 0.0) g += kTwoPi;
  return g;
}

/// Triangulate the annulus between two concentric rings by walking both
/// node sequences in angular order and always advancing the side whose next
/// node comes first. Produces |outer| + |inner| triangles.
void zipper(const Ring& outer, const Ring& inner, std::vector<Triangle>& out) {
  const std::size_t no = outer.idx.size();
  const std::size_t ni = inner.idx.size();
  std::size_t j0 = 0;
  double best = 1e30;
  for (std::size_t j = 0; j < ni; ++j) {
    double d = std::fabs(inner.ang[j] - outer.ang[0]);
    d = std::min(d, kTwoPi - d);
    if (d < best) {
      best = d;
      j0 = j;
    }
  }
  std::size_t i = 0, j = j0, ci = 0, co = 0;
  double oa = outer.ang[0];
  double ia = inner.ang[j0];
  while (ia < oa - std::numbers::pi) ia += kTwoPi;
  while (ia >= oa + std::numbers::pi) ia -= kTwoPi;
  while (co < no || ci < ni) {
    const double next_oa = oa + cyclic_gap(outer, i);
    const double next_ia = ia + cyclic_gap(inner, j);
    bool advance_outer;
    if (co == no) {
      advance_outer = false;
    } else if (ci == ni) {
      advance_outer = true;
    } else {
      advance_outer = next_oa <= next_ia;
    }
    if (advance_outer) {
      out.push_back({outer.idx[i], outer.idx[(i + 1) % no], inner.idx[j]});
      i = (i + 1) % no;
      oa = next_oa;
      ++co;
    } else {
      out.push_back({outer.idx[i], inner.idx[(j + 1) % ni], inner.idx[j]});
      j = (j + 1) % ni;
      ia = next_ia;
      ++ci;
    }
  }
}

void orient_ccw(std::vector<Node>& nodes, Triangle& t) {
  if (signed_area2(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0) {
    std::swap(t[1], t[2]);
  }
}

int third_vertex(const Triangle& t, int a, int b) {
  for (int v : t) {
    if (v != a && v != b) return v;
  }
  return -1;
}

/// Lawson edge flips toward the Delaunay triangulation. Flips only when the
/// incircle test passes a scaled margin, so near-cocircular configurations
/// stay put and the pass order makes the result deterministic.
void lawson_flips(std::vector<Node>& nodes, std::vector<Triangle>& tris) {
  for (auto& t : tris) orient_ccw(nodes, t);
  for (int pass = 0; pass < 100; ++pass) {
    std::map<Edge, std::array<int, 2>> adj;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
      for (int e = 0; e < 3; ++e) {
        int u = tris[t][e], v = tris[t][(e + 1) % 3];
        Edge key{std::min(u, v), std::max(u, v)};
        auto [it, inserted] = adj.try_emplace(key, std::array<int, 2>{t, -1});
        if (!inserted) it->second[1] = t;
      }
    }
    std::vector<bool> touched(tris.size(), false);
    int flips = 0;
    for (const auto& [edge, ts] : adj) {
      if (ts[1] < 0 || touched[ts[0]] || touched[ts[1]]) continue;
      Triangle& t1 = tris[ts[0]];
      Triangle& t2 = tris[ts[1]];
      // a -> b is the directed shared edge as traversed by t1.
      int a = edge.first, b = edge.second;
      bool directed = false;
      for (int e = 0; e < 3; ++e) {
        if (t1[e] == a && t1[(e + 1) % 3] == b) directed = true;
      }
      if (!directed) std::swap(a, b);
      const int c = third_vertex(t1, a, b);
      const int d = third_vertex(t2, a, b);
      if (c < 0 || d < 0 || c == d) continue;
      const double ad2 = std::pow(nodes[a].x - nodes[d].x, 2) +
                         std::pow(nodes[a].y - nodes[d].y, 2);
      const double bd2 = std::pow(nodes[b].x - nodes[d].x, 2) +
                         std::pow(nodes[b].y - nodes[d].y, 2);
      const double cd2 = std::pow(nodes[c].x - nodes[d].x, 2) +
                         std::pow(nodes[c].y - nodes[d].y, 2);
      const double scale = std::max({ad2, bd2, cd2});
      if (incircle(nodes[t1[0]], nodes[t1[1]], nodes[t1[2]], nodes[d]) <=
          1e-12 * scale * scale) {
        continue;
      }
      Triangle n1{a, d, c};
      Triangle n2{d, b, c};
      if (signed_area2(nodes[a], nodes[d], nodes[c]) <= 0.0 ||
          signed_area2(nodes[d], nodes[b], nodes[c]) <= 0.0) {
        continue;
      }
      t1 = n1;
      t2 = n2;
      touched[ts[0]] = touched[ts[1]] = true;
      ++flips;
    }
    if (flips == 0) break;
  }
}

}  // namespace

ElectrodeLayout ElectrodeLayout::uniform(int count, double arc_angle_deg) {
  ElectrodeLayout layout;
  layout.count = count;
  layout.arc_half_angle = 0.5 * arc_angle_deg * std::numbers::pi / 180.0;
  layout.centers.resize(count);
  for (int l = 0; l < count; ++l) {
    layout.centers[l] = (l + 0.5) * kTwoPi / count;
  }
  return layout;
}

void ElectrodeLayout::validate() const {
  if (count < 2) throw config_error("electrode layout: need at least 2 electrodes");
  if (static_cast<int>(centers.size()) != count) {
    throw config_error("electrode layout: centers size does not match count");
  }
  if (arc_half_angle <= 0.0) {
    throw config_error("electrode layout: arc angle must be positive");
  }
  std::vector<double> c(centers);
  for (double& a : c) a = normalize_angle(a);
  std::sort(c.begin(), c.end());
  for (int i = 0; i < count; ++i) {
    const double next = (i + 1 < count) ? c[i + 1] : c[0] + kTwoPi;
    const double gap = next - c[i] - 2.0 * arc_half_angle;
    if (gap <= 1e-12) {
      throw config_error("electrode layout: arcs overlap or touch");
    }
  }
}

Mesh::Mesh(std::vector<Node> nodes, std::vector<Triangle> triangles,
           std::vector<std::vector<int>> electrode_arcs)
    : nodes_(std::move(nodes)),
      triangles_(std::move(triangles)),
      arcs_(std::move(electrode_arcs)) {
  validate_and_index();
}

void Mesh::validate_and_index() {
  const int nn = n_nodes();
  if (nn < 3 || triangles_.empty()) {
    throw config_error("mesh: needs at least 3 nodes and 1 triangle");
  }
  std::set<std::array<int, 3>> seen;
  for (auto& t : triangles_) {
    for (int v : t) {
      if (v < 0 || v >= nn) {
        throw config_error("mesh: triangle references node index out of range");
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw config_error("mesh: triangle with repeated vertex");
    }
    const double a2 = signed_area2(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
    if (a2 < 0.0) std::swap(t[1], t[2]);
    if (std::fabs(a2) <= 0.0) {
      throw config_error("mesh: degenerate (zero-area) triangle");
    }
    std::array<int, 3> key = t;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) {
      throw config_error("mesh: duplicate triangle");
    }
  }

  std::map<Edge, int> edge_count;
  for (const auto& t : triangles_) {
    for (int e = 0; e < 3; ++e) {
      int u = t[e], v = t[(e + 1) % 3];
      ++edge_count[Edge{std::min(u, v), std::max(u, v)}];
    }
  }
  edges_.clear();
  edges_.reserve(edge_count.size());
  std::vector<bool> on_hull(nn, false);
  std::vector<bool> referenced(nn, false);
  for (const auto& [e, cnt] : edge_count) {
    if (cnt > 2) throw config_error("mesh: non-conforming edge shared by >2 triangles");
    edges_.push_back(e);
    referenced[e.first] = referenced[e.second] = true;
    if (cnt == 1) on_hull[e.first] = on_hull[e.second] = true;
  }
  for (int v = 0; v < nn; ++v) {
    if (!referenced[v]) throw config_error("mesh: unreferenced node");
    if (on_hull[v] != nodes_[v].is_boundary) {
      throw config_error("mesh: boundary flags inconsistent with topology");
    }
  }

  std::set<int> arc_nodes;
  for (const auto& arc : arcs_) {
    if (arc.size() < 2) throw config_error("mesh: electrode arc with fewer than 2 nodes");
    for (int v : arc) {
      if (v < 0 || v >= nn) throw config_error("mesh: electrode arc node out of range");
      if (!nodes_[v].is_boundary) {
        throw config_error("mesh: electrode arc contains an interior node");
      }
      if (!arc_nodes.insert(v).second) {
        throw config_error("mesh: electrode arcs are not disjoint");
      }
    }
    for (std::size_t i = 0; i + 1 < arc.size(); ++i) {
      Edge e{std::min(arc[i], arc[i + 1]), std::max(arc[i], arc[i + 1])};
      auto it = edge_count.find(e);
      if (it == edge_count.end() || it->second != 1) {
        throw config_error("mesh: electrode arc segment is not a boundary edge");
      }
    }
  }

  interior_index_.assign(nn, -1);
  interior_nodes_.clear();
  for (int v = 0; v < nn; ++v) {
    if (!nodes_[v].is_boundary) {
      interior_index_[v] = static_cast<int>(interior_nodes_.size());
      interior_nodes_.push_back(v);
    }
  }
  n_interior_ = static_cast<int>(interior_nodes_.size());

  areas_.resize(triangles_.size());
  grads_.resize(3 * triangles_.size());
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const Node& a = nodes_[triangles_[t][0]];
    const Node& b = nodes_[triangles_[t][1]];
    const Node& c = nodes_[triangles_[t][2]];
    const double a2 = signed_area2(a, b, c);
    areas_[t] = 0.5 * a2;
    grads_[3 * t + 0] = Eigen::Vector2d(b.y - c.y, c.x - b.x) / a2;
    grads_[3 * t + 1] = Eigen::Vector2d(c.y - a.y, a.x - c.x) / a2;
    grads_[3 * t + 2] = Eigen::Vector2d(a.y - b.y, b.x - a.x) / a2;
  }
}

double Mesh::total_area() const {
  return std::accumulate(areas_.begin(), areas_.end(), 0.0);
}

void Mesh::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw config_error("mesh: cannot open '" + path + "' for writing");
  out << "MESH v1\n";
  out << "NODES " << n_nodes() << "\n";
  char buf[80];
  for (const Node& nd : nodes_) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %d\n", nd.x, nd.y,
                  nd.is_boundary ? 1 : 0);
    out << buf;
  }
  out << "TRIANGLES " << n_triangles() << "\n";
  for (const auto& t : triangles_) {
    out << t[0] << ' ' << t[1] << ' ' << t[2] << "\n";
  }
  out << "ELECTRODES " << n_electrodes() << "\n";
  for (const auto& arc : arcs_) {
    for (std::size_t i = 0; i < arc.size(); ++i) {
      out << arc[i] << (i + 1 < arc.size() ? ' ' : '\n');
    }
  }
  if (!out) throw config_error("mesh: write to '" + path + "' failed");
}

namespace {

class LineReader {
 public:
  LineReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  /// Next non-empty line with comments stripped, tokenized. Throws at EOF.
  std::vector<std::string> next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return tokens;
    }
    throw config_error(path_ + ": unexpected end of file, expected " +
                       std::string(what));
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw config_error(path_ + ":" + std::to_string(lineno_) + ": " + msg);
  }

  int lineno() const { return lineno_; }

 private:
  std::istream& in_;
  std::string path_;
  int lineno_ = 0;
};

int parse_int(LineReader& r, const std::string& s) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) r.fail("trailing characters in integer '" + s + "'");
    return v;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    r.fail("expected integer, got '" + s + "'");
  }
}

double parse_double(LineReader& r, const std::string& s) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) r.fail("trailing characters in number '" + s + "'");
    return v;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    r.fail("expected number, got '" + s + "'");
  }
}

}  // namespace

Mesh Mesh::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("mesh: cannot open '" + path + "'");
  LineReader r(in, path);

  auto header = r.next("MESH v1");
  if (header.size() != 2 || header[0] != "MESH" || header[1] != "v1") {
    r.fail("expected header 'MESH v1'");
  }
  auto nodes_hdr = r.next("NODES <count>");
  if (nodes_hdr.size() != 2 || nodes_hdr[0] != "NODES") r.fail("expected 'NODES <count>'");
  const int nn = parse_int(r, nodes_hdr[1]);
  if (nn < 3) r.fail("node count must be at least 3");
  std::vector<Node> nodes(nn);
  for (int i = 0; i < nn; ++i) {
    auto t = r.next("node line 'x y flag'");
    if (t.size() != 3) r.fail("expected 'x y flag'");
    nodes[i].x = parse_double(r, t[0]);
    nodes[i].y = parse_double(r, t[1]);
    const int flag = parse_int(r, t[2]);
    if (flag != 0 && flag != 1) r.fail("boundary flag must be 0 or 1");
    nodes[i].is_boundary = flag == 1;
  }

  auto tri_hdr = r.next("TRIANGLES <count>");
  if (tri_hdr.size() != 2 || tri_hdr[0] != "TRIANGLES") r.fail("expected 'TRIANGLES <count>'");
  const int nt = parse_int(r, tri_hdr[1]);
  if (nt < 1) r.fail("triangle count must be at least 1");
  std::vector<Triangle> tris(nt);
  for (int i = 0; i < nt; ++i) {
    auto t = r.next("triangle line 'a b c'");
    if (t.size() != 3) r.fail("expected three node indices");
    for (int k = 0; k < 3; ++k) {
      tris[i][k] = parse_int(r, t[k]);
      if (tris[i][k] < 0 || tris[i][k] >= nn) r.fail("triangle node index out of range");
    }
  }

  auto el_hdr = r.next("ELECTRODES <count>");
  if (el_hdr.size() != 2 || el_hdr[0] != "ELECTRODES") r.fail("expected 'ELECTRODES <count>'");
  const int ne = parse_int(r, el_hdr[1]);
  if (ne < 0) r.fail("electrode count must be non-negative");
  std::vector<std::vector<int>> arcs(ne);
  for (int i = 0; i < ne; ++i) {
    auto t = r.next("electrode arc node list");
    arcs[i].reserve(t.size());
    for (const auto& s : t) {
      const int v = parse_int(r, s);
      if (v < 0 || v >= nn) r.fail("electrode node index out of range");
      arcs[i].push_back(v);
    }
  }

  try {
    return Mesh(std::move(nodes), std::move(tris), std::move(arcs));
  } catch (const config_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

Mesh generate_disk_mesh(double radius, double target_h,
                        const ElectrodeLayout& layout) {
  if (radius <= 0.0) throw config_error("mesh generation: radius must be positive");
  if (target_h <= 0.0) throw config_error("mesh generation: target_h must be positive");
  layout.validate();

  const double w = layout.arc_half_angle;
  std::vector<int> order(layout.count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return normalize_angle(layout.centers[i]) < normalize_angle(layout.centers[j]);
  });
  // Rotate so the first arc starts at local angle 0; avoids seam handling.
  const double shift = normalize_angle(layout.centers[order[0]]) - w;

  std::vector<Node> nodes;
  std::vector<std::vector<int>> arcs(layout.count);
  auto push_boundary = [&](double local_angle) {
    const double a = shift + local_angle;
    nodes.push_back({radius * std::cos(a), radius * std::sin(a), true});
    return static_cast<int>(nodes.size()) - 1;
  };

  for (int i = 0; i < layout.count; ++i) {
    const double c = normalize_angle(layout.centers[order[i]] - shift);
    const double arc_start = c - w;
    const int sa = std::max<int>(1, std::lround(2.0 * w * radius / target_h));
    auto& arc = arcs[order[i]];
    for (int j = 0; j <= sa; ++j) {
      arc.push_back(push_boundary(arc_start + 2.0 * w * j / sa));
    }
    const double gap_end =
        (i + 1 < layout.count)
            ? normalize_angle(layout.centers[order[i + 1]] - shift) - w
            : kTwoPi;
    const double gap = gap_end - (c + w);
    const int sg = std::max<int>(1, std::lround(gap * radius / target_h));
    for (int j = 1; j < sg; ++j) {
      push_boundary(c + w + gap * j / sg);
    }
  }

  std::vector<Ring> rings;  // outermost first
  {
    Ring boundary;
    boundary.idx.resize(nodes.size());
    std::iota(boundary.idx.begin(), boundary.idx.end(), 0);
    boundary.ang.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      boundary.ang[i] = normalize_angle(std::atan2(nodes[i].y, nodes[i].x));
    }
    sort_ring(boundary);
    rings.push_back(std::move(boundary));
  }

  const int n_rings = std::max<int>(2, std::lround(radius / target_h));
  for (int k = n_rings - 1; k >= 1; --k) {
    const double r = radius * k / n_rings;
    const int nk = std::max<int>(8, std::lround(kTwoPi * r / target_h));
    Ring ring;
    const double offset = (k % 2 == 1) ? std::numbers::pi / nk : 0.0;
    for (int j = 0; j < nk; ++j) {
      const double a = kTwoPi * j / nk + offset;
      nodes.push_back({r * std::cos(a), r * std::sin(a), false});
      ring.idx.push_back(static_cast<int>(nodes.size()) - 1);
      ring.ang.push_back(normalize_angle(a));
    }
    sort_ring(ring);
    rings.push_back(std::move(ring));
  }
  nodes.push_back({0.0, 0.0, false});
  const int center = static_cast<int>(nodes.size()) - 1;

  std::vector<Triangle> tris;
  for (std::size_t k = 0; k + 1 < rings.size(); ++k) {
    zipper(rings[k], rings[k + 1], tris);
  }
  const Ring& innermost = rings.back();
  for (std::size_t j = 0; j < innermost.idx.size(); ++j) {
    tris.push_back({center, innermost.idx[j],
                    innermost.idx[(j + 1) % innermost.idx.size()]});
  }

  lawson_flips(nodes, tris);
  return Mesh(std::move(nodes), std::move(tris), std::move(arcs));
}

std::vector<Edge> interior_edges(const Mesh& mesh) {
  std::vector<Edge> out;
  const auto& nodes = mesh.nodes();
  for (const Edge& e : mesh.edges()) {
    if (!nodes[e.first].is_boundary || !nodes[e.second].is_boundary) {
      out.push_back(e);
    }
  }
  return out;
}

}  // namespace spias
