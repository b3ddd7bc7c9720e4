#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <vector>

#include <filesystem>

#include "sharpfield/featgen.hpp"
#include "sharpfield/green.hpp"
#include "sharpfield/io.hpp"
#include "sharpfield/partition.hpp"
#include "sharpfield/rng.hpp"
#include "test_meshes.hpp"

using namespace sharpfield;

namespace {

double angle_between(const Point3& a, const Point3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

// Unordered position-pair match within tolerance.
bool same_edge(const Point3& a0, const Point3& a1, const Point3& b0,
               const Point3& b1, double tol = 1e-12) {
  return ((a0 - b0).norm() < tol && (a1 - b1).norm() < tol) ||
         ((a0 - b1).norm() < tol && (a1 - b0).norm() < tol);
}

int count_components(int n_vertices, const std::vector<std::array<int, 2>>& edges) {
  std::vector<int> parent(n_vertices);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) parent[find(e[0])] = find(e[1]);
  std::set<int> roots;
  for (int i = 0; i < n_vertices; ++i) roots.insert(find(i));
  return static_cast<int>(roots.size());
}

}  // namespace

TEST_CASE("sharp edge detection") {
  SUBCASE("unit cube: all 12 boundary edges, none of the face diagonals") {
    const TriMesh cube = testmesh::make_cube();
    const featgen::SharpEdgeGraph s = featgen::detect_sharp_edges(cube);
    CHECK(s.graph.n_edges() == 12);
    CHECK(s.graph.n_vertices() == 8);
    const std::vector<int> deg = vertex_degrees(s.graph);
    for (int d : deg) CHECK(d == 3);
    // Provenance: graph vertices carry the mesh positions.
    for (int i = 0; i < 8; ++i)
      CHECK((s.graph.V.col(i) - cube.v[s.mesh_vertex[i]]).norm() == 0.0);
    REQUIRE(s.faces.size() == 12u);
    for (const auto& fp : s.faces)
      CHECK(angle_between(cube.face_normal(fp[0]), cube.face_normal(fp[1])) ==
            doctest::Approx(kPi / 2).epsilon(1e-12));
  }
  SUBCASE("smooth icosphere has no sharp edges at the default threshold") {
    const featgen::SharpEdgeGraph s =
        featgen::detect_sharp_edges(testmesh::make_icosphere(2));
    CHECK(s.graph.n_edges() == 0);
    CHECK(s.graph.n_vertices() == 0);
  }
  SUBCASE("chamfering one edge removes it from the sharp set") {
    // At a 55 degree threshold the two 45 degree chamfer boundary edges are
    // smooth; what remains are 11 of the 12 original cube edges plus the two
    // short 90 degree edges where the chamfer meets the y-faces.
    featgen::FeatGenConfig cfg;
    cfg.dihedral_threshold = 55.0 * kPi / 180.0;
    const TriMesh bev = testmesh::make_beveled_cube();
    const featgen::SharpEdgeGraph s = featgen::detect_sharp_edges(bev, cfg);
    CHECK(s.graph.n_edges() == 13);

    // Chamfering shortens some neighbors, so match sharp edges to original
    // cube edges by segment containment, not by endpoint identity.
    auto on_segment = [](const Point3& p, const Point3& a, const Point3& b) {
      const Point3 ab = b - a;
      const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
      return (p - (a + t * ab)).norm() < 1e-9;
    };
    const TriMesh cube = testmesh::make_cube();
    int covered = 0;
    for (const TriMesh::Edge& ce : cube.edges()) {
      if (ce.f1 < 0) continue;
      if (angle_between(cube.face_normal(ce.f0), cube.face_normal(ce.f1)) < 0.1)
        continue;  // triangulation diagonal
      bool hit = false;
      for (const auto& e : s.graph.edges)
        hit = hit || (on_segment(s.graph.V.col(e[0]), cube.v[ce.v0], cube.v[ce.v1]) &&
                      on_segment(s.graph.V.col(e[1]), cube.v[ce.v0], cube.v[ce.v1]));
      if (hit) ++covered;
      if (same_edge(cube.v[ce.v0], cube.v[ce.v1], Point3(1, 0, 1), Point3(1, 1, 1)))
        CHECK(!hit);  // the chamfered edge itself is gone
    }
    CHECK(covered == 11);
  }
  SUBCASE("threshold bounds are validated") {
    featgen::FeatGenConfig cfg;
    cfg.dihedral_threshold = 0.0;
    CHECK_THROWS_AS(featgen::detect_sharp_edges(testmesh::make_cube(), cfg), Error);
    cfg.dihedral_threshold = kPi;
    CHECK_THROWS_AS(featgen::detect_sharp_edges(testmesh::make_cube(), cfg), Error);
  }
}

TEST_CASE("edge guiding directions") {
  SUBCASE("cube edges get the outward 45 degree diagonals") {
    const TriMesh cube = testmesh::make_cube();
    const Point3 center(0.5, 0.5, 0.5);
    const featgen::SharpEdgeGraph s = featgen::detect_sharp_edges(cube);
    for (int e = 0; e < s.graph.n_edges(); ++e) {
      const int ma = s.mesh_vertex[s.graph.edges[e][0]];
      const int mb = s.mesh_vertex[s.graph.edges[e][1]];
      const Point3 g = featgen::edge_guiding_dir(cube, ma, mb);
      CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-14));
      // Component pattern (0, +-1/sqrt2, +-1/sqrt2) in some axis order.
      Eigen::Vector3d a = g.cwiseAbs();
      std::sort(a.data(), a.data() + 3);
      CHECK(a(0) == doctest::Approx(0.0).scale(1.0));
      CHECK(a(1) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-12));
      CHECK(a(2) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-12));
      // Outward: along the diagonal from the cube center through the edge.
      const Point3 mid = 0.5 * (cube.v[ma] + cube.v[mb]);
      CHECK(g.dot(mid - center) > 0.5);
      // Orthogonal to the edge.
      CHECK(std::abs(g.dot((cube.v[mb] - cube.v[ma]).normalized())) < 1e-12);
    }
  }
  SUBCASE("symmetric roof ridge points straight up") {
    std::vector<Point3> v = {{0, 0, 1}, {1, 0, 1},  {0, -1, 0},
                             {1, -1, 0}, {0, 1, 0}, {1, 1, 0}};
    std::vector<std::array<int, 3>> f = {
        {0, 2, 3}, {0, 3, 1},  // front slope, normal (0,-1,1)/sqrt2
        {1, 5, 4}, {1, 4, 0},  // back slope, normal (0,1,1)/sqrt2
    };
    const TriMesh roof(v, f);
    const Point3 g = featgen::edge_guiding_dir(roof, 0, 1);
    CHECK((g - Point3(0, 0, 1)).norm() < 1e-12);
  }
  SUBCASE("random wedges: in the bisector plane, orthogonal, outward") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      const Point3 a(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      Point3 b, c, d;
      do {
        b = Point3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      } while ((b - a).norm() < 0.3);
      do {
        c = Point3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        d = Point3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      } while (((b - a).cross(c - a)).norm() < 0.1 ||
               ((b - a).cross(d - a)).norm() < 0.1);
      const TriMesh wedge({a, b, c, d}, {{0, 1, 2}, {1, 0, 3}});
      const Point3 n0 = wedge.face_normal(0), n1 = wedge.face_normal(1);
      if (angle_between(n0, n1) < 1e-3 || (n0 + n1).norm() < 1e-3) continue;
      const Point3 g = featgen::edge_guiding_dir(wedge, 0, 1);
      CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(g.dot((b - a).normalized())) < 1e-9);
      CHECK(std::abs(g.dot((n0 - n1).normalized())) < 1e-9);  // bisector plane
      CHECK(g.dot(n0 + n1) > 0);                              // outward
    }
  }
  SUBCASE("boundary, flat, and missing edges are rejected") {
    const TriMesh single({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
    CHECK_THROWS_AS(featgen::edge_guiding_dir(single, 0, 1), Error);
    const TriMesh flat({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, -1, 0}},
                       {{0, 1, 2}, {1, 0, 3}});
    CHECK_THROWS_AS(featgen::edge_guiding_dir(flat, 0, 1), Error);
    CHECK_THROWS_AS(featgen::edge_guiding_dir(flat, 0, 5), Error);
  }
}

TEST_CASE("vertex guiding directions") {
  SUBCASE("cube corners land on the outward space diagonals") {
    const TriMesh cube = testmesh::make_cube();
    const featgen::SharpEdgeGraph s = featgen::detect_sharp_edges(cube);
    std::vector<Point3> edge_dirs(s.graph.n_edges());
    for (int e = 0; e < s.graph.n_edges(); ++e)
      edge_dirs[e] = featgen::edge_guiding_dir(
          cube, s.mesh_vertex[s.graph.edges[e][0]],
          s.mesh_vertex[s.graph.edges[e][1]]);
    const std::vector<Point3> dirs =
        featgen::vertex_guiding_dirs(s.graph, edge_dirs);
    const Point3 center(0.5, 0.5, 0.5);
    for (int vi = 0; vi < s.graph.n_vertices(); ++vi) {
      const Point3 expect = (s.graph.V.col(vi) - center).normalized();
      CHECK((dirs[vi] - expect).norm() < 1e-6);
      // The corner diagonal lies in all three incident bisector planes.
      std::vector<Point3> normals;
      for (int e = 0; e < s.graph.n_edges(); ++e) {
        if (s.graph.edges[e][0] != vi && s.graph.edges[e][1] != vi) continue;
        const Point3 ev =
            s.graph.V.col(s.graph.edges[e][1]) - s.graph.V.col(s.graph.edges[e][0]);
        normals.push_back(edge_dirs[e].cross(ev.normalized()));
      }
      CHECK(featgen::guiding_energy(dirs[vi], normals, Point3::Zero(), 0.0) <
            1e-6);
    }
  }
  SUBCASE("degree-1 vertices copy their edge direction exactly") {
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 2);
    g.V.col(0) = Point3(0, 0, 0);
    g.V.col(1) = Point3(1, 0, 0);
    g.edges = {{0, 1}};
    const Point3 d(0.6, 0.8, 0.0);
    const auto dirs = featgen::vertex_guiding_dirs(g, {d});
    CHECK(dirs[0] == d);
    CHECK(dirs[1] == d);
  }
  SUBCASE("collinear chain with equal edge dirs keeps that direction") {
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 3);
    g.V.col(0) = Point3(0, 0, 0);
    g.V.col(1) = Point3(1, 0, 0);
    g.V.col(2) = Point3(2, 0, 0);
    g.edges = {{0, 1}, {1, 2}};
    const Point3 up(0, 0, 1);
    const auto dirs = featgen::vertex_guiding_dirs(g, {up, up});
    CHECK((dirs[1] - up).norm() < 1e-12);
  }
  SUBCASE("outputs are unit length and deterministic") {
    Rng rng(8);
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 5);
    g.V.col(0) = Point3(0, 0, 0);
    for (int i = 1; i < 5; ++i)
      g.V.col(i) =
          Point3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    g.edges = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
    std::vector<Point3> edge_dirs;
    for (int e = 0; e < 4; ++e) {
      Point3 d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      edge_dirs.push_back(d.normalized());
    }
    const auto d1 = featgen::vertex_guiding_dirs(g, edge_dirs);
    const auto d2 = featgen::vertex_guiding_dirs(g, edge_dirs);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(d1[i].norm() - 1.0) < 1e-12);
      CHECK(d1[i] == d2[i]);
    }
  }
  SUBCASE("isolated vertices and size mismatches are rejected") {
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 3);
    g.V.setZero();
    g.V.col(1) = Point3(1, 0, 0);
    g.V.col(2) = Point3(2, 0, 0);
    g.edges = {{0, 1}};
    CHECK_THROWS_AS(featgen::vertex_guiding_dirs(g, {Point3(0, 0, 1)}), Error);
    g.edges = {{0, 1}, {1, 2}};
    CHECK_THROWS_AS(featgen::vertex_guiding_dirs(g, {Point3(0, 0, 1)}), Error);
  }
}

TEST_CASE("strip construction") {
  SUBCASE("single edge with parallel dirs gives a flat 2w-by-len rectangle") {
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 2);
    g.V.col(0) = Point3(0, 0, 0);
    g.V.col(1) = Point3(1, 0, 0);
    g.edges = {{0, 1}};
    const Point3 up(0, 0, 1);
    const featgen::StripResult sr = featgen::build_strips(g, {up, up}, 0.04);
    REQUIRE(sr.mesh.f.size() == 2u);
    CHECK(sr.mesh.v.size() == 4u);
    const double area = sr.mesh.face_area(0) + sr.mesh.face_area(1);
    CHECK(area == doctest::Approx(2 * 0.04 * 1.0).epsilon(1e-12));
    CHECK(sr.src_edge == std::vector<int>{0, 0});
    // Like-sign pairing: rails connect matching offsets.
    REQUIRE(sr.rails.edges.size() == 2u);
    CHECK(sr.rails.edges[0] == std::array<int, 2>{0, 2});
    CHECK(sr.rails.edges[1] == std::array<int, 2>{1, 3});
  }
  SUBCASE("cube strips: 24 triangles, each containing its edge midpoint") {
    const TriMesh cube = testmesh::make_cube();
    const featgen::SharpEdgeGraph s = featgen::detect_sharp_edges(cube);
    std::vector<Point3> edge_dirs(s.graph.n_edges());
    for (int e = 0; e < s.graph.n_edges(); ++e)
      edge_dirs[e] = featgen::edge_guiding_dir(
          cube, s.mesh_vertex[s.graph.edges[e][0]],
          s.mesh_vertex[s.graph.edges[e][1]]);
    const auto dirs = featgen::vertex_guiding_dirs(s.graph, edge_dirs);
    const double w = 0.04;
    const featgen::StripResult sr = featgen::build_strips(s.graph, dirs, w);
    CHECK(sr.mesh.f.size() == 24u);
    CHECK(sr.mesh.v.size() == 16u);
    CHECK(sr.mesh.face_group == sr.src_edge);
    for (size_t t = 0; t < sr.mesh.f.size(); ++t) {
      const auto& se = s.graph.edges[sr.src_edge[t]];
      const Point3 mid = 0.5 * (s.graph.V.col(se[0]) + s.graph.V.col(se[1]));
      const Triangle tri{sr.mesh.v[sr.mesh.f[t][0]], sr.mesh.v[sr.mesh.f[t][1]],
                         sr.mesh.v[sr.mesh.f[t][2]]};
      CHECK(green::distance_to_triangle(mid, tri) <= w + 1e-9);
    }
    // Rails mirror the sharp-graph topology: corner rail vertices keep the
    // degree-3 junctions and each source vertex splits its degree across its
    // two offsets evenly here (consistent outward dirs, no flips).
    sr.rails.check();
    const std::vector<int> rd = vertex_degrees(sr.rails);
    const std::vector<int> sd = vertex_degrees(s.graph);
    for (int p = 0; p < s.graph.n_vertices(); ++p)
      CHECK(rd[2 * p] + rd[2 * p + 1] == 2 * sd[p]);
    CHECK(*std::max_element(rd.begin(), rd.end()) == 3);
  }
  SUBCASE("anti-parallel dirs trigger the crosswise pairing and unfold") {
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 2);
    g.V.col(0) = Point3(0, 0, 0);
    g.V.col(1) = Point3(1, 0, 0);
    g.edges = {{0, 1}};
    const featgen::StripResult sr =
        featgen::build_strips(g, {Point3(0, 0, 1), Point3(0, 0, -1)}, 0.04);
    REQUIRE(sr.rails.edges.size() == 2u);
    CHECK(sr.rails.edges[0] == std::array<int, 2>{0, 3});
    CHECK(sr.rails.edges[1] == std::array<int, 2>{1, 2});
    // Both rails run parallel to the source edge: the strip is a flat
    // rectangle again rather than a bowtie.
    for (const auto& re : sr.rails.edges) {
      const Point3 r = sr.rails.V.col(re[1]) - sr.rails.V.col(re[0]);
      CHECK(std::abs(r.normalized().dot(Point3(1, 0, 0))) ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("random flips along a smooth chain never fold a quad") {
    Rng rng(31);
    const int n = 101;
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, n);
    std::vector<Point3> dirs(n);
    for (int i = 0; i < n; ++i) {
      const double t = 0.1 * i;
      g.V.col(i) = Point3(t, 0.3 * std::sin(t), 0.2 * std::cos(1.3 * t));
      Point3 d(std::sin(0.2 * t), 0.3, std::cos(0.2 * t));
      d.normalize();
      if (rng.uniform(0, 1) < 0.5) d = -d;  // inconsistent orientation
      dirs[i] = d;
    }
    for (int i = 0; i + 1 < n; ++i) g.edges.push_back({i, i + 1});
    const featgen::StripResult sr = featgen::build_strips(g, dirs, 0.04);
    REQUIRE(sr.rails.edges.size() == 2u * (n - 1));
    for (int e = 0; e < n - 1; ++e) {
      const auto& r1 = sr.rails.edges[2 * e];
      const auto& r2 = sr.rails.edges[2 * e + 1];
      const Point3 a = sr.rails.V.col(r1[1]) - sr.rails.V.col(r1[0]);
      const Point3 b = sr.rails.V.col(r2[1]) - sr.rails.V.col(r2[0]);
      const double cos_chosen = a.normalized().dot(b.normalized());
      CHECK(cos_chosen > 0.5);  // never the folded bowtie
    }
    // The rails stay two disjoint polylines from end to end.
    CHECK(count_components(sr.rails.n_vertices(), sr.rails.edges) == 2);
  }
  SUBCASE("input validation") {
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 2);
    g.V.col(0) = Point3(0, 0, 0);
    g.V.col(1) = Point3(1, 0, 0);
    g.edges = {{0, 1}};
    CHECK_THROWS_AS(featgen::build_strips(g, {Point3(0, 0, 1)}, 0.04), Error);
    CHECK_THROWS_AS(
        featgen::build_strips(g, {Point3(0, 0, 2), Point3(0, 0, 1)}, 0.04),
        Error);
    CHECK_THROWS_AS(
        featgen::build_strips(g, {Point3(0, 0, 1), Point3(0, 0, 1)}, 0.0),
        Error);
  }
}

TEST_CASE("cloud guiding directions") {
  SUBCASE("vertex above a dense plane points along the plane normal") {
    PointCloud cloud;
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j)
        cloud.p.push_back(Point3(0.025 * i, 0.025 * j, 0.0));
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 1);
    g.V.col(0) = Point3(0.5, 0.5, 0.03);
    // 21 = complete symmetric grid shells around the node under the vertex;
    // cutting a tied shell in half would skew the centroid sideways.
    featgen::FeatGenConfig cfg;
    cfg.knn = 21;
    const auto dirs = featgen::cloud_guiding_dirs(g, cloud, cfg);
    CHECK(angle_between(dirs[0], Point3(0, 0, 1)) < 5.0 * kPi / 180.0);
  }
  SUBCASE("vertex on a two-plane crease points along the outward diagonal") {
    PointCloud cloud;
    for (int i = 0; i <= 50; ++i) {
      for (int j = 1; j <= 20; ++j) {
        cloud.p.push_back(Point3(0.02 * i, 0.02 * j, 0.0));
        cloud.p.push_back(Point3(0.02 * i, 0.0, 0.02 * j));
      }
    }
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 1);
    g.V.col(0) = Point3(0.5, 0, 0);
    const auto dirs = featgen::cloud_guiding_dirs(g, cloud);
    const Point3 expect = Point3(0, -1, -1).normalized();
    CHECK(angle_between(dirs[0], expect) < 30.0 * kPi / 180.0);
  }
  SUBCASE("perfectly symmetric neighborhood falls back to +z") {
    PointCloud cloud;
    const double a = 0.1;
    cloud.p = {{a, 0, 0}, {-a, 0, 0}, {0, a, 0}, {0, -a, 0}, {0, 0, a}, {0, 0, -a}};
    FeatureGraph g;
    g.dim = 3;
    g.V.resize(3, 1);
    g.V.col(0) = Point3(0, 0, 0);
    featgen::FeatGenConfig cfg;
    cfg.knn = 6;
    const auto dirs = featgen::cloud_guiding_dirs(g, cloud, cfg);
    CHECK(dirs[0] == Point3(0, 0, 1));
  }
}

TEST_CASE("sharp polyline heuristic") {
  featgen::FeatGenConfig cfg;
  SUBCASE("flat cloud yields nothing") {
    PointCloud cloud;
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j)
        cloud.p.push_back(Point3(0.025 * i, 0.025 * j, 0.0));
    const FeatureGraph g = featgen::sharp_polyline_heuristic(cloud, cfg);
    CHECK(g.n_edges() == 0);
  }
  SUBCASE("roof cloud yields candidates hugging the crease") {
    PointCloud cloud;
    for (int i = 0; i <= 60; ++i) {
      cloud.p.push_back(Point3(0.02 * i, 0, 0));  // points on the crease
      for (int j = 1; j <= 25; ++j) {
        cloud.p.push_back(Point3(0.02 * i, 0.02 * j, -0.01 * j));
        cloud.p.push_back(Point3(0.02 * i, -0.02 * j, -0.01 * j));
      }
    }
    const FeatureGraph g = featgen::sharp_polyline_heuristic(cloud, cfg);
    CHECK(g.n_vertices() > 10);
    CHECK(g.n_edges() > 5);
    for (int i = 0; i < g.n_vertices(); ++i)
      CHECK(std::hypot(g.V(1, i), g.V(2, i)) < 0.15);
  }
}

TEST_CASE("strip channels: relabel, OBJ round trip, feature set recovery") {
  const TriMesh cube = testmesh::make_cube();
  const featgen::SharpEdgeGraph s = featgen::detect_sharp_edges(cube);
  const partition::EdgeColoring col = partition::color_edges(s.graph);

  std::vector<Point3> edge_dirs(s.graph.n_edges());
  for (int e = 0; e < s.graph.n_edges(); ++e)
    edge_dirs[e] = featgen::edge_guiding_dir(cube, s.mesh_vertex[s.graph.edges[e][0]],
                                             s.mesh_vertex[s.graph.edges[e][1]]);
  const std::vector<Point3> dirs = featgen::vertex_guiding_dirs(s.graph, edge_dirs);
  featgen::StripResult strips = featgen::build_strips(s.graph, dirs, 0.04);

  featgen::assign_strip_channels(strips, col.color, col.n_colors);
  REQUIRE(strips.mesh.group_names.size() == static_cast<size_t>(col.n_colors));
  for (size_t t = 0; t < strips.mesh.f.size(); ++t)
    CHECK(strips.mesh.face_group[t] == col.color[strips.src_edge[t]]);
  REQUIRE(strips.rails.color.size() == strips.rails.edges.size());
  for (size_t r = 0; r < strips.rails.edges.size(); ++r)
    CHECK(strips.rails.color[r] == col.color[r / 2]);

  // Artifact round trip: strip OBJ with channel groups -> feature set.
  namespace fs_ns = std::filesystem;
  const std::string obj_path =
      (fs_ns::temp_directory_path() / "sharpfield_test_strips.obj").string();
  save_obj(obj_path, strips.mesh);
  const TriMesh loaded = load_obj(obj_path);
  fs_ns::remove(obj_path);

  feature::MollifierConfig mc;
  mc.radius = 0.1;
  const feature::FeatureSet fs = featgen::feature_set_from_strip_mesh(loaded, mc);
  CHECK(fs.dim == 3);
  CHECK(fs.n_channels == col.n_colors);
  REQUIRE(fs.V.cols() == static_cast<int>(strips.mesh.v.size()));
  for (int i = 0; i < fs.V.cols(); ++i)
    CHECK((fs.V.col(i) - strips.mesh.v[i]).norm() == 0.0);  // exact round trip
  REQUIRE(fs.elems.size() == strips.mesh.f.size());
  for (size_t t = 0; t < fs.elems.size(); ++t) {
    CHECK(fs.elems[t] == strips.mesh.f[t]);
    CHECK(fs.channel[t] == strips.mesh.face_group[t]);
  }

  // Same geometry built directly must evaluate identically.
  feature::FeatureSet direct;
  direct.dim = 3;
  direct.V = fs.V;
  direct.elems = fs.elems;
  direct.channel = fs.channel;
  direct.n_channels = fs.n_channels;
  direct.mollifier = mc;
  direct.rebuild_acceleration();
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(3);
    for (int a = 0; a < 3; ++a) x(a) = rng.uniform(-1.2, 1.2);
    const Eigen::VectorXd va = feature::eval_values(x, fs);
    const Eigen::VectorXd vb = feature::eval_values(x, direct);
    CHECK((va - vb).norm() == 0.0);
  }

  SUBCASE("malformed inputs are rejected") {
    TriMesh empty;
    CHECK_THROWS_AS(featgen::feature_set_from_strip_mesh(empty, mc), Error);

    TriMesh ungrouped = loaded;
    ungrouped.face_group.clear();
    CHECK_THROWS_AS(featgen::feature_set_from_strip_mesh(ungrouped, mc), Error);

    TriMesh badname = loaded;
    badname.group_names[0] = "stripe_0";
    CHECK_THROWS_AS(featgen::feature_set_from_strip_mesh(badname, mc), Error);

    featgen::StripResult broken = strips;
    broken.src_edge.pop_back();
    CHECK_THROWS_AS(featgen::assign_strip_channels(broken, col.color, col.n_colors),
                    Error);
    CHECK_THROWS_AS(featgen::assign_strip_channels(strips, col.color, 0), Error);
  }
}
