#pragma once
#include <array>
#include <vector>

#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"

namespace sharpfield::featgen {

struct FeatGenConfig {
  /// An interior mesh edge is sharp when the angle between its two face
  /// normals exceeds this (radians).  30 degrees default.
  double dihedral_threshold = 0.5235987755982988;
  double strip_half_width = 0.04;  // vertex offset w along the guiding dir
  double energy_lambda = 0.1;      // weight of the mean-attraction term
  int knn = 32;                    // neighborhood size for cloud estimates
  int opt_steps = 200;             // sphere-descent iterations
  double opt_step_size = 0.05;
};

/// Sharp-edge graph with provenance back into the source mesh.
struct SharpEdgeGraph {
  FeatureGraph graph;                     // dim 3, vertices compacted
  std::vector<int> mesh_vertex;           // graph vertex -> mesh vertex index
  std::vector<std::array<int, 2>> faces;  // per graph edge: incident faces
};

/// Interior edges whose face normals differ by more than the threshold,
/// as an undirected graph over the incident vertices.
SharpEdgeGraph detect_sharp_edges(const TriMesh& m, const FeatGenConfig& cfg = {});

/// Unit vector orthogonal to the edge (va, vb), lying in the angular-bisector
/// plane of its two faces, pointing away from the solid (positive dot with
/// the mean face normal).  Throws for missing, boundary, flat (normals within
/// flat_tol) or knife (opposite-normal) edges.
Point3 edge_guiding_dir(const TriMesh& m, int va, int vb, double flat_tol = 1e-9);

/// Energy a candidate vertex direction g is scored by: sum of |g . n_i| over
/// the incident bisector-plane normals n_i = g_e x unit(e), plus
/// lambda * |g - mean(g_e)|.  Zero first term means g lies in every incident
/// bisector plane (their common intersection line).
double guiding_energy(const Point3& g, const std::vector<Point3>& plane_normals,
                      const Point3& mean, double lambda);

/// Per-vertex guiding directions for the sharp graph.  Degree-1 vertices copy
/// their single edge direction; others minimize guiding_energy over the unit
/// sphere by projected (sub)gradient descent from the normalized mean,
/// keeping the best iterate.  If descent cannot beat the normalized mean, the
/// mean is returned for that vertex and a warning is printed.
std::vector<Point3> vertex_guiding_dirs(const FeatureGraph& S,
                                        const std::vector<Point3>& edge_dirs,
                                        const FeatGenConfig& cfg = {});

/// Coarse per-vertex directions when only a point cloud is available: from the
/// centroid of the vertex's knn cloud neighbors to the vertex, normalized.
/// Orientation is arbitrary per vertex.  A vertex sitting on the centroid
/// falls back to +z with a warning.
std::vector<Point3> cloud_guiding_dirs(const FeatureGraph& S, const PointCloud& cloud,
                                       const FeatGenConfig& cfg = {});

struct StripResult {
  /// Offset vertices 2p = V_p - w*d_p and 2p+1 = V_p + w*d_p; two triangles
  /// per sharp edge; face_group = source edge index.
  TriMesh mesh;
  std::vector<int> src_edge;  // per triangle, same as face_group
  /// The two offset rails per edge as a graph over the strip vertices (the
  /// strip boundary, used by the boundary regularizer during training).
  FeatureGraph rails;
};

/// Expand each sharp edge into a quad between the bidirectionally offset
/// endpoints.  Both ways of pairing the four offset points are scored by how
/// parallel the two resulting rails are, and the more parallel pairing wins;
/// this unfolds strips when neighboring directions point opposite ways.
StripResult build_strips(const FeatureGraph& S, const std::vector<Point3>& dirs,
                         double half_width);

/// Convenience sharp-curve guess for clouds without an input polyline: points
/// whose knn neighborhood is far from flat (large smallest-eigenvalue share
/// of the covariance) are chained to nearby candidates.  Heuristic quality
/// only; the training pipelines take a curated polyline instead.
FeatureGraph sharp_polyline_heuristic(const PointCloud& cloud,
                                      const FeatGenConfig& cfg = {});

/// Relabel strip faces from source-edge provenance to feature channels:
/// face_group becomes the source edge's color, group_names become
/// `channel_<k>`, and the rails graph gets the same color per edge pair.
/// This is the form the strip artifacts are exchanged in (OBJ with channel
/// groups + colored FG).
void assign_strip_channels(StripResult& strips, const std::vector<int>& edge_color,
                           int n_channels);

/// Feature set from a channel-grouped strip mesh (the inverse of
/// assign_strip_channels + OBJ round trip).  The mesh vertex buffer is kept
/// index-for-index as fs.V so rail vertex indices remain valid.  Every face
/// must belong to a group named `channel_<k>`; n_channels = max k + 1.
feature::FeatureSet feature_set_from_strip_mesh(const TriMesh& strips,
                                                const feature::MollifierConfig& mc);

}  // namespace sharpfield::featgen
