#include "sharpfield/featgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "sharpfield/kdtree.hpp"

namespace sharpfield::featgen {

namespace {

double clamp1(double t) { return std::max(-1.0, std::min(1.0, t)); }

double normal_angle(const Point3& n0, const Point3& n1) {
  return std::acos(clamp1(n0.dot(n1)));
}

}  // namespace

SharpEdgeGraph detect_sharp_edges(const TriMesh& m, const FeatGenConfig& cfg) {
  if (!(cfg.dihedral_threshold > 0) || !(cfg.dihedral_threshold < kPi))
    throw Error("sharp-edge threshold must lie in (0, pi)");
  SharpEdgeGraph out;
  out.graph.dim = 3;
  std::map<int, int> vmap;  // mesh vertex -> graph vertex, ascending
  std::vector<std::array<int, 2>> mesh_edges;
  for (const TriMesh::Edge& e : m.edges()) {
    if (e.f1 < 0) continue;  // boundary edge: no dihedral
    const double ang = normal_angle(m.face_normal(e.f0), m.face_normal(e.f1));
    if (ang <= cfg.dihedral_threshold) continue;
    vmap.emplace(e.v0, 0);
    vmap.emplace(e.v1, 0);
    mesh_edges.push_back({e.v0, e.v1});
    out.faces.push_back({e.f0, e.f1});
  }
  int next = 0;
  for (auto& [mv, gv] : vmap) gv = next++;
  out.graph.V.resize(3, next);
  out.mesh_vertex.resize(next);
  for (const auto& [mv, gv] : vmap) {
    out.graph.V.col(gv) = m.v[mv];
    out.mesh_vertex[gv] = mv;
  }
  for (const auto& e : mesh_edges)
    out.graph.edges.push_back({vmap.at(e[0]), vmap.at(e[1])});
  out.graph.check();
  return out;
}

Point3 edge_guiding_dir(const TriMesh& m, int va, int vb, double flat_tol) {
  const int ei = m.edge_index(va, vb);
  if (ei < 0) throw Error("edge_guiding_dir: no such mesh edge");
  const TriMesh::Edge& e = m.edges()[ei];
  if (e.f1 < 0) throw Error("edge_guiding_dir: boundary edge");
  const Point3 n0 = m.face_normal(e.f0);
  const Point3 n1 = m.face_normal(e.f1);
  if (normal_angle(n0, n1) <= flat_tol)
    throw Error("edge_guiding_dir: flat edge (should have been filtered)");
  Point3 s = n0 + n1;
  if (s.norm() < 1e-12)
    throw Error("edge_guiding_dir: opposite face normals leave the bisector "
                "direction undefined");
  // The normal sum is already orthogonal to the edge for exactly planar
  // faces; project the residual out so the result is orthogonal to rounding.
  const Point3 t = (m.v[e.v1] - m.v[e.v0]).normalized();
  s -= s.dot(t) * t;
  if (s.norm() < 1e-12)
    throw Error("edge_guiding_dir: degenerate bisector direction");
  return s.normalized();
}

double guiding_energy(const Point3& g, const std::vector<Point3>& plane_normals,
                      const Point3& mean, double lambda) {
  double e = 0;
  for (const Point3& n : plane_normals) e += std::abs(g.dot(n));
  return e + lambda * (g - mean).norm();
}

std::vector<Point3> vertex_guiding_dirs(const FeatureGraph& S,
                                        const std::vector<Point3>& edge_dirs,
                                        const FeatGenConfig& cfg) {
  S.check();
  if (edge_dirs.size() != S.edges.size())
    throw Error("vertex_guiding_dirs: one direction per edge required");
  const int n = S.n_vertices();
  std::vector<std::vector<int>> incident(n);
  for (int e = 0; e < S.n_edges(); ++e) {
    incident[S.edges[e][0]].push_back(e);
    incident[S.edges[e][1]].push_back(e);
  }

  std::vector<Point3> out(n);
  int fallbacks = 0;
  for (int vi = 0; vi < n; ++vi) {
    const auto& inc = incident[vi];
    if (inc.empty())
      throw Error("vertex_guiding_dirs: vertex without incident sharp edge");
    if (inc.size() == 1) {
      out[vi] = edge_dirs[inc[0]];
      continue;
    }
    Point3 mean = Point3::Zero();
    std::vector<Point3> normals;
    for (int e : inc) {
      mean += edge_dirs[e];
      const Point3 ev = S.V.col(S.edges[e][1]) - S.V.col(S.edges[e][0]);
      if (ev.norm() < 1e-12) continue;  // degenerate edge: no plane constraint
      normals.push_back(edge_dirs[e].cross(ev.normalized()));
    }
    mean /= static_cast<double>(inc.size());

    Point3 g;
    if (mean.norm() >= 1e-12) {
      g = mean.normalized();
    } else {
      // Opposing edge directions cancel the mean; start from the common
      // bisector-plane intersection line instead (smallest eigenvector of
      // the plane-normal scatter), signed toward the first edge direction.
      Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
      for (const Point3& nrm : normals) scatter += nrm * nrm.transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
      g = eig.eigenvectors().col(0);
      const double d0 = g.dot(edge_dirs[inc[0]]);
      if (d0 < 0) g = -g;
      if (d0 == 0 && g.z() < 0) g = -g;
    }
    const Point3 start = g;
    Point3 best = g;
    double best_e = guiding_energy(g, normals, mean, cfg.energy_lambda);
    for (int it = 0; it < cfg.opt_steps; ++it) {
      Point3 grad = Point3::Zero();
      for (const Point3& nrm : normals) {
        const double d = g.dot(nrm);
        if (d > 0)
          grad += nrm;
        else if (d < 0)
          grad -= nrm;
      }
      const Point3 dm = g - mean;
      if (dm.norm() > 1e-15) grad += cfg.energy_lambda * dm.normalized();
      g = (g - cfg.opt_step_size * grad).normalized();
      const double e = guiding_energy(g, normals, mean, cfg.energy_lambda);
      if (e < best_e) {
        best_e = e;
        best = g;
      }
    }
    if (best_e >
        guiding_energy(start, normals, mean, cfg.energy_lambda) + 1e-15) {
      ++fallbacks;
      best = start;
    }
    out[vi] = best;
  }
  if (fallbacks > 0)
    std::fprintf(stderr,
                 "[featgen] warning: sphere descent fell back to the mean "
                 "direction at %d vertices\n",
                 fallbacks);
  return out;
}

std::vector<Point3> cloud_guiding_dirs(const FeatureGraph& S, const PointCloud& cloud,
                                       const FeatGenConfig& cfg) {
  if (cloud.p.empty()) throw Error("cloud_guiding_dirs: empty cloud");
  KdTree<3> tree(cloud.p);
  std::vector<Point3> out(S.n_vertices());
  std::vector<int> idx;
  std::vector<double> d2;
  int degenerate = 0;
  for (int vi = 0; vi < S.n_vertices(); ++vi) {
    const Point3 v = S.V.col(vi);
    tree.knearest(v, cfg.knn, idx, d2);
    Point3 c = Point3::Zero();
    for (int i : idx) c += cloud.p[i];
    c /= static_cast<double>(idx.size());
    Point3 d = v - c;
    if (d.norm() < 1e-12) {
      d = Point3(0, 0, 1);
      ++degenerate;
    }
    out[vi] = d.normalized();
  }
  if (degenerate > 0)
    std::fprintf(stderr,
                 "[featgen] warning: %d vertices sit on their neighborhood "
                 "centroid; using +z for them\n",
                 degenerate);
  return out;
}

StripResult build_strips(const FeatureGraph& S, const std::vector<Point3>& dirs,
                         double half_width) {
  S.check();
  if (!(half_width > 0)) throw Error("build_strips: half width must be positive");
  if (static_cast<int>(dirs.size()) != S.n_vertices())
    throw Error("build_strips: one direction per vertex required");
  for (const Point3& d : dirs)
    if (std::abs(d.norm() - 1.0) > 1e-6)
      throw Error("build_strips: directions must be unit length");

  StripResult out;
  const int n = S.n_vertices();
  out.mesh.v.resize(2 * n);
  for (int p = 0; p < n; ++p) {
    const Point3 v = S.V.col(p);
    out.mesh.v[2 * p] = v - half_width * dirs[p];
    out.mesh.v[2 * p + 1] = v + half_width * dirs[p];
  }
  out.rails.dim = 3;
  out.rails.V.resize(3, 2 * n);
  for (int p = 0; p < 2 * n; ++p) out.rails.V.col(p) = out.mesh.v[p];

  auto cosine = [&](int a, int b, int c, int d) {
    // Parallelism of the two rails a->b and c->d.
    const Point3 r1 = out.mesh.v[b] - out.mesh.v[a];
    const Point3 r2 = out.mesh.v[d] - out.mesh.v[c];
    const double n1 = r1.norm(), n2 = r2.norm();
    if (n1 < 1e-300 || n2 < 1e-300) return -2.0;
    return r1.dot(r2) / (n1 * n2);
  };

  for (int e = 0; e < S.n_edges(); ++e) {
    const int i = S.edges[e][0], j = S.edges[e][1];
    const int am = 2 * i, ap = 2 * i + 1, bm = 2 * j, bp = 2 * j + 1;
    // Pairing 1 joins like offsets (+ with +), pairing 2 joins opposite ones.
    const double score1 = cosine(ap, bp, am, bm);
    const double score2 = cosine(ap, bm, am, bp);
    if (score1 >= score2) {
      out.mesh.f.push_back({am, bm, bp});
      out.mesh.f.push_back({am, bp, ap});
      out.rails.edges.push_back({am, bm});
      out.rails.edges.push_back({ap, bp});
    } else {
      out.mesh.f.push_back({am, ap, bm});
      out.mesh.f.push_back({am, bm, bp});
      out.rails.edges.push_back({am, bp});
      out.rails.edges.push_back({ap, bm});
    }
    out.src_edge.push_back(e);
    out.src_edge.push_back(e);
  }
  out.mesh.face_group = out.src_edge;
  return out;
}

FeatureGraph sharp_polyline_heuristic(const PointCloud& cloud,
                                      const FeatGenConfig& cfg) {
  FeatureGraph g;
  g.dim = 3;
  const int n = static_cast<int>(cloud.p.size());
  if (n < cfg.knn + 1) {
    g.V.resize(3, 0);
    return g;
  }
  KdTree<3> tree(cloud.p);
  std::vector<int> idx;
  std::vector<double> d2;

  // Non-flatness score: share of covariance variance off the best-fit plane.
  std::vector<int> candidates;
  std::vector<double> spacing(n);
  for (int i = 0; i < n; ++i) {
    tree.knearest(cloud.p[i], cfg.knn, idx, d2);
    spacing[i] = std::sqrt(d2.size() > 1 ? d2[1] : d2[0]);
    Point3 c = Point3::Zero();
    for (int k : idx) c += cloud.p[k];
    c /= static_cast<double>(idx.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int k : idx) {
      const Point3 q = cloud.p[k] - c;
      cov += q * q.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const double tr = eig.eigenvalues().sum();
    if (tr <= 0) continue;
    if (eig.eigenvalues()(0) / tr > 0.02) candidates.push_back(i);
  }
  if (candidates.empty()) {
    g.V.resize(3, 0);
    return g;
  }
  std::vector<double> sp = spacing;
  std::nth_element(sp.begin(), sp.begin() + sp.size() / 2, sp.end());
  const double link_radius = 2.0 * sp[sp.size() / 2];

  // Chain each candidate to its two nearest candidates within the radius.
  std::vector<Point3> cpts;
  cpts.reserve(candidates.size());
  for (int i : candidates) cpts.push_back(cloud.p[i]);
  KdTree<3> ctree(cpts);
  std::vector<std::array<int, 2>> edges;
  for (int a = 0; a < static_cast<int>(cpts.size()); ++a) {
    ctree.knearest(cpts[a], 3, idx, d2);  // self + two neighbors
    for (size_t k = 0; k < idx.size(); ++k) {
      const int b = idx[k];
      if (b == a || d2[k] > link_radius * link_radius) continue;
      edges.push_back({std::min(a, b), std::max(a, b)});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  g.V.resize(3, static_cast<int>(cpts.size()));
  for (int i = 0; i < static_cast<int>(cpts.size()); ++i) g.V.col(i) = cpts[i];
  g.edges = std::move(edges);
  return g;
}

void assign_strip_channels(StripResult& strips, const std::vector<int>& edge_color,
                           int n_channels) {
  if (n_channels <= 0)
    throw Error("assign_strip_channels: channel count must be positive");
  const size_t nf = strips.mesh.f.size();
  if (strips.src_edge.size() != nf)
    throw Error("assign_strip_channels: src_edge does not cover the faces");
  strips.mesh.face_group.resize(nf);
  for (size_t t = 0; t < nf; ++t) {
    const int e = strips.src_edge[t];
    if (e < 0 || e >= static_cast<int>(edge_color.size()))
      throw Error("assign_strip_channels: face refers to an uncolored edge");
    const int c = edge_color[e];
    if (c < 0 || c >= n_channels)
      throw Error("assign_strip_channels: color out of range");
    strips.mesh.face_group[t] = c;
  }
  strips.mesh.group_names.resize(n_channels);
  for (int k = 0; k < n_channels; ++k)
    strips.mesh.group_names[k] = "channel_" + std::to_string(k);
  // Rails were emitted two per source edge, in source-edge order.
  strips.rails.color.resize(strips.rails.edges.size());
  for (size_t r = 0; r < strips.rails.edges.size(); ++r)
    strips.rails.color[r] = edge_color[r / 2];
}

feature::FeatureSet feature_set_from_strip_mesh(const TriMesh& strips,
                                                const feature::MollifierConfig& mc) {
  if (strips.f.empty())
    throw Error("feature_set_from_strip_mesh: strip mesh has no faces");
  if (strips.face_group.size() != strips.f.size())
    throw Error("feature_set_from_strip_mesh: faces are not grouped");

  // group id -> channel index parsed from the `channel_<k>` group name
  std::vector<int> group_channel(strips.group_names.size(), -1);
  for (size_t g = 0; g < strips.group_names.size(); ++g) {
    const std::string& name = strips.group_names[g];
    const std::string prefix = "channel_";
    if (name.rfind(prefix, 0) != 0)
      throw Error("feature_set_from_strip_mesh: group '" + name +
                  "' is not a channel_<k> group");
    size_t pos = 0;
    int k = -1;
    try {
      k = std::stoi(name.substr(prefix.size()), &pos);
    } catch (const std::exception&) {
      throw Error("feature_set_from_strip_mesh: malformed group name '" + name + "'");
    }
    if (k < 0 || pos != name.size() - prefix.size())
      throw Error("feature_set_from_strip_mesh: malformed group name '" + name + "'");
    group_channel[g] = k;
  }

  feature::FeatureSet fs;
  fs.dim = 3;
  fs.V.resize(3, static_cast<int>(strips.v.size()));
  for (size_t i = 0; i < strips.v.size(); ++i) fs.V.col(static_cast<int>(i)) = strips.v[i];
  fs.elems.reserve(strips.f.size());
  fs.channel.reserve(strips.f.size());
  int max_channel = -1;
  for (size_t t = 0; t < strips.f.size(); ++t) {
    const int g = strips.face_group[t];
    if (g < 0 || g >= static_cast<int>(group_channel.size()))
      throw Error("feature_set_from_strip_mesh: face with out-of-range group id");
    fs.elems.push_back(strips.f[t]);
    fs.channel.push_back(group_channel[g]);
    max_channel = std::max(max_channel, group_channel[g]);
  }
  fs.n_channels = max_channel + 1;
  fs.mollifier = mc;
  fs.rebuild_acceleration();
  fs.check();
  return fs;
}

}  // namespace sharpfield::featgen
