#pragma once
#include <Eigen/Dense>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sharpfield/common.hpp"

namespace sharpfield {

using Point2 = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;

struct Segment {
  Point2 a, b;
};
struct Triangle {
  Point3 a, b, c;
};

/// Polyline/graph of feature elements.  dim selects whether vertex columns are
/// 2D (edges are the integration elements) or 3D (edges describe sharp curves;
/// the integration elements are then strip triangles, see featgen).
struct FeatureGraph {
  int dim = 2;
  Eigen::MatrixXd V;                       // dim x n_vertices
  std::vector<std::array<int, 2>> edges;   // vertex index pairs
  std::vector<int> color;                  // per-edge channel, -1 = unassigned

  int n_vertices() const { return static_cast<int>(V.cols()); }
  int n_edges() const { return static_cast<int>(edges.size()); }
  void check() const;  // throws on out-of-range indices, self-loops, duplicates
};

std::vector<int> vertex_degrees(const FeatureGraph& g);

/// Midpoint of a graph edge.
Eigen::VectorXd element_centroid(const FeatureGraph& g, int edge);

/// Mean of the element vertices (the mollifier anchor point).
Point2 element_centroid(const Segment& s);
Point3 element_centroid(const Triangle& t);

struct PointCloud {
  std::vector<Point3> p;
  std::vector<Point3> n;  // empty or same size as p
  bool has_normals() const { return !n.empty(); }
};

/// Immutable triangle mesh.  Edge adjacency is derived lazily on first use and
/// cached; concurrent readers are safe.  Meshes with an edge shared by more
/// than two faces are rejected when the adjacency is built.
class TriMesh {
 public:
  std::vector<Point3> v;
  std::vector<std::array<int, 3>> f;
  std::vector<Point3> vn;           // optional per-vertex normals (OBJ vn)
  std::vector<int> face_group;      // optional per-face group id (OBJ g)
  std::vector<std::string> group_names;

  struct Edge {
    int v0, v1;    // v0 < v1
    int f0, f1;    // f1 == -1 for boundary edges
  };

  TriMesh() = default;
  TriMesh(std::vector<Point3> verts, std::vector<std::array<int, 3>> faces)
      : v(std::move(verts)), f(std::move(faces)) {}
  TriMesh(const TriMesh& o) : v(o.v), f(o.f), vn(o.vn), face_group(o.face_group), group_names(o.group_names) {}
  TriMesh& operator=(const TriMesh& o) {
    v = o.v; f = o.f; vn = o.vn; face_group = o.face_group; group_names = o.group_names;
    adj_.reset();
    return *this;
  }

  const std::vector<Edge>& edges() const;
  /// Index into edges() or -1.
  int edge_index(int a, int b) const;

  Point3 face_normal(int face) const;  // unit normal, CCW orientation
  double face_area(int face) const;
  Point3 face_centroid(int face) const;

 private:
  struct Adjacency {
    std::vector<Edge> edges;
    std::map<std::pair<int, int>, int> index;
  };
  const Adjacency& adjacency() const;
  mutable std::shared_ptr<const Adjacency> adj_;
  mutable std::mutex adj_mutex_;
};

/// Angle between the two face planes across an interior edge, in [0, pi];
/// coplanar faces give pi.  Boundary edges have no dihedral (throws).
double dihedral_angle(const TriMesh& m, int edge_index);
double dihedral_angle(const TriMesh& m, int va, int vb);

}  // namespace sharpfield
