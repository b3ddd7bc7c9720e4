#include "sharpfield/geom.hpp"

#include <algorithm>
#include <set>

namespace sharpfield {

void FeatureGraph::check() const {
  std::set<std::pair<int, int>> seen;
  for (const auto& e : edges) {
    if (e[0] < 0 || e[1] < 0 || e[0] >= n_vertices() || e[1] >= n_vertices())
      throw Error("feature graph edge index out of range");
    if (e[0] == e[1]) throw Error("feature graph has a self-loop");
    auto key = std::minmax(e[0], e[1]);
    if (!seen.insert({key.first, key.second}).second)
      throw Error("feature graph has a duplicate edge");
  }
  if (!color.empty() && color.size() != edges.size())
    throw Error("feature graph color count mismatch");
}

std::vector<int> vertex_degrees(const FeatureGraph& g) {
  std::vector<int> deg(g.n_vertices(), 0);
  for (const auto& e : g.edges) {
    deg[e[0]]++;
    deg[e[1]]++;
  }
  return deg;
}

Eigen::VectorXd element_centroid(const FeatureGraph& g, int edge) {
  const auto& e = g.edges.at(edge);
  return 0.5 * (g.V.col(e[0]) + g.V.col(e[1]));
}

Point2 element_centroid(const Segment& s) { return 0.5 * (s.a + s.b); }

Point3 element_centroid(const Triangle& t) { return (t.a + t.b + t.c) / 3.0; }

const TriMesh::Adjacency& TriMesh::adjacency() const {
  std::lock_guard<std::mutex> lock(adj_mutex_);
  if (!adj_) {
    auto adj = std::make_shared<Adjacency>();
    for (int fi = 0; fi < static_cast<int>(f.size()); ++fi) {
      for (int k = 0; k < 3; ++k) {
        int a = f[fi][k], b = f[fi][(k + 1) % 3];
        if (a < 0 || b < 0 || a >= static_cast<int>(v.size()) || b >= static_cast<int>(v.size()))
          throw Error("face vertex index out of range");
        auto key = std::minmax(a, b);
        auto it = adj->index.find(key);
        if (it == adj->index.end()) {
          adj->index[key] = static_cast<int>(adj->edges.size());
          adj->edges.push_back({key.first, key.second, fi, -1});
        } else {
          Edge& e = adj->edges[it->second];
          if (e.f1 != -1) throw Error("non-manifold edge (more than two incident faces)");
          e.f1 = fi;
        }
      }
    }
    adj_ = adj;
  }
  return *adj_;
}

const std::vector<TriMesh::Edge>& TriMesh::edges() const { return adjacency().edges; }

int TriMesh::edge_index(int a, int b) const {
  auto key = std::minmax(a, b);
  const auto& idx = adjacency().index;
  auto it = idx.find({key.first, key.second});
  return it == idx.end() ? -1 : it->second;
}

Point3 TriMesh::face_normal(int face) const {
  const auto& t = f.at(face);
  Point3 n = (v[t[1]] - v[t[0]]).cross(v[t[2]] - v[t[0]]);
  double len = n.norm();
  if (len < 1e-300) throw Error("degenerate face has no normal");
  return n / len;
}

double TriMesh::face_area(int face) const {
  const auto& t = f.at(face);
  return 0.5 * (v[t[1]] - v[t[0]]).cross(v[t[2]] - v[t[0]]).norm();
}

Point3 TriMesh::face_centroid(int face) const {
  const auto& t = f.at(face);
  return (v[t[0]] + v[t[1]] + v[t[2]]) / 3.0;
}

double dihedral_angle(const TriMesh& m, int edge_index) {
  const auto& e = m.edges().at(edge_index);
  if (e.f1 == -1) throw Error("boundary edge has no dihedral angle");
  Point3 n0 = m.face_normal(e.f0), n1 = m.face_normal(e.f1);
  double c = std::clamp(n0.dot(n1), -1.0, 1.0);
  // angle between planes: pi when coplanar (normals parallel), down to 0.
  return kPi - std::acos(c);
}

double dihedral_angle(const TriMesh& m, int va, int vb) {
  int ei = m.edge_index(va, vb);
  if (ei < 0) throw Error("no such mesh edge");
  return dihedral_angle(m, ei);
}

}  // namespace sharpfield
