#include <doctest.h>

#include <set>

#include "sharpfield/partition.hpp"
#include "sharpfield/rng.hpp"

using namespace sharpfield;
using namespace sharpfield::partition;

namespace {

FeatureGraph make_graph(int nv, std::vector<std::array<int, 2>> edges) {
  FeatureGraph g;
  g.dim = 2;
  g.V.resize(2, nv);
  for (int i = 0; i < nv; ++i) g.V.col(i) = Eigen::Vector2d(i * 0.1, (i % 3) * 0.1);
  g.edges = std::move(edges);
  return g;
}

/// Brute-force oracle: at every junction all incident edge colors differ.
bool junctions_distinct(const FeatureGraph& g, const EdgeColoring& c) {
  std::vector<int> deg = vertex_degrees(g);
  for (int v = 0; v < static_cast<int>(g.V.cols()); ++v) {
    if (deg[v] < 3) continue;
    std::set<int> seen;
    int count = 0;
    for (size_t e = 0; e < g.edges.size(); ++e)
      if (g.edges[e][0] == v || g.edges[e][1] == v) {
        seen.insert(c.color[e]);
        ++count;
      }
    if (static_cast<int>(seen.size()) != count) return false;
  }
  return true;
}

FeatureGraph random_graph(Rng& rng, int max_edges) {
  int nv = 4 + static_cast<int>(rng.bounded(28));
  std::set<std::pair<int, int>> used;
  std::vector<std::array<int, 2>> edges;
  int want = 1 + static_cast<int>(rng.bounded(max_edges));
  for (int attempts = 0; attempts < want * 6 && static_cast<int>(edges.size()) < want;
       ++attempts) {
    int a = static_cast<int>(rng.bounded(nv));
    int b = static_cast<int>(rng.bounded(nv));
    if (a == b) continue;
    auto key = std::minmax(a, b);
    if (!used.insert({key.first, key.second}).second) continue;
    edges.push_back({a, b});
  }
  return make_graph(nv, std::move(edges));
}

}  // namespace

TEST_CASE("color_edges: path graph uses a single color") {
  FeatureGraph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  EdgeColoring c = color_edges(g);
  CHECK(c.n_colors == 1);
  for (int col : c.color) CHECK(col == 0);
}

TEST_CASE("color_edges: Y junction gets one color per arm") {
  FeatureGraph g = make_graph(7, {{0, 1}, {1, 2},    // arm A
                                  {0, 3}, {3, 4},    // arm B
                                  {0, 5}, {5, 6}});  // arm C
  EdgeColoring c = color_edges(g);
  CHECK(c.n_colors == 3);
  CHECK(junctions_distinct(g, c));
  // each arm is uniform
  CHECK(c.color[0] == c.color[1]);
  CHECK(c.color[2] == c.color[3]);
  CHECK(c.color[4] == c.color[5]);
}

TEST_CASE("color_edges: five-arm star needs five colors") {
  FeatureGraph g = make_graph(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}});
  EdgeColoring c = color_edges(g);
  CHECK(c.n_colors == 5);
  CHECK(junctions_distinct(g, c));
}

TEST_CASE("color_edges: cube edge graph colors with three channels") {
  // vertices = corners of the unit cube (every corner has degree 3)
  FeatureGraph g;
  g.dim = 3;
  g.V.resize(3, 8);
  std::vector<std::array<int, 2>> edges;
  for (int i = 0; i < 8; ++i) {
    g.V.col(i) = Eigen::Vector3d(i & 1, (i >> 1) & 1, (i >> 2) & 1);
    for (int bit = 0; bit < 3; ++bit) {
      int j = i ^ (1 << bit);
      if (j > i) edges.push_back({i, j});
    }
  }
  g.edges = edges;
  EdgeColoring c = color_edges(g);
  CHECK(junctions_distinct(g, c));
  CHECK(c.n_colors == 3);
}

TEST_CASE("color_edges: chains through degree-2 vertices stay uniform") {
  // theta graph: junctions 0 and 4 joined by three chains of length 2/2/3
  FeatureGraph g = make_graph(9, {{0, 1}, {1, 4},            // chain A
                                  {0, 2}, {2, 4},            // chain B
                                  {0, 3}, {3, 5}, {5, 4}});  // chain C
  EdgeColoring c = color_edges(g);
  CHECK(junctions_distinct(g, c));
  CHECK(c.n_colors == 3);
  CHECK(c.color[0] == c.color[1]);
  CHECK(c.color[2] == c.color[3]);
  CHECK(c.color[4] == c.color[5]);
  CHECK(c.color[5] == c.color[6]);
}

TEST_CASE("color_edges: lasso chain splits once and stays legal") {
  // junction 0 with an arm and a loop 0-1-2-3-0 back to itself
  FeatureGraph g = make_graph(6, {{0, 5},                          // arm
                                  {0, 1}, {1, 2}, {2, 3}, {3, 0},  // loop
                                  {0, 4}});                        // second arm
  EdgeColoring c = color_edges(g);
  CHECK(junctions_distinct(g, c));
  // the loop contributes two incident edges at vertex 0 with distinct colors
  CHECK(c.color[1] != c.color[4]);
  // loop interior: exactly one color change (the split point)
  int changes = 0;
  int loop_edges[4] = {1, 2, 3, 4};
  for (int i = 0; i + 1 < 4; ++i)
    if (c.color[loop_edges[i]] != c.color[loop_edges[i + 1]]) ++changes;
  CHECK(changes == 1);
}

TEST_CASE("color_edges: pure cycle takes one color") {
  FeatureGraph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  EdgeColoring c = color_edges(g);
  CHECK(c.n_colors == 1);
}

TEST_CASE("color_edges: constraint verified exhaustively on random graphs") {
  Rng rng(1234);
  for (int trial = 0; trial < 120; ++trial) {
    FeatureGraph g = random_graph(rng, 200);
    EdgeColoring c = color_edges(g);
    REQUIRE(c.color.size() == g.edges.size());
    for (int col : c.color) CHECK(col >= 0);
    CHECK(junctions_distinct(g, c));

    // loose bound: greedy can use at most the sum of the two junction degrees
    std::vector<int> deg = vertex_degrees(g);
    int maxdeg = 0;
    for (int v = 0; v < static_cast<int>(g.V.cols()); ++v)
      if (deg[v] >= 3) maxdeg = std::max(maxdeg, deg[v]);
    if (maxdeg > 0) CHECK(c.n_colors <= 2 * maxdeg);

    // determinism
    EdgeColoring again = color_edges(g);
    CHECK(again.color == c.color);
  }
}

TEST_CASE("split_strips: channels follow source-edge colors") {
  EdgeColoring c;
  c.color = {0, 1, 0};
  c.n_colors = 2;

  TriMesh strips;
  strips.v = {Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0), Point3(1, 1, 0)};
  strips.f = {{0, 1, 2}, {1, 3, 2}, {0, 2, 3}, {0, 3, 1}};
  strips.face_group = {0, 0, 2, 1};

  feature::FeatureSet fs = split_strips(strips, c);
  CHECK(fs.dim == 3);
  CHECK(fs.n_channels == 2);
  REQUIRE(fs.elems.size() == 4);
  CHECK(fs.channel[0] == 0);
  CHECK(fs.channel[1] == 0);
  CHECK(fs.channel[2] == 0);
  CHECK(fs.channel[3] == 1);

  // untagged triangle
  TriMesh bad = strips;
  bad.face_group[2] = -1;
  CHECK_THROWS_AS(split_strips(bad, c), Error);
  TriMesh missing = strips;
  missing.face_group.clear();
  CHECK_THROWS_AS(split_strips(missing, c), Error);

  // empty strip set
  TriMesh empty;
  feature::FeatureSet none = split_strips(empty, c);
  CHECK(none.elems.empty());
  CHECK(none.n_channels == 2);
}
