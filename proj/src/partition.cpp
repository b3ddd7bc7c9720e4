#include "sharpfield/partition.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "sharpfield/common.hpp"

namespace sharpfield::partition {

namespace {

struct Chain {
  std::vector<int> edges;
  std::array<int, 2> junction_ends{-1, -1};  // -1: dangling or cycle end
};

}  // namespace

EdgeColoring color_edges(const FeatureGraph& g) {
  g.check();
  const int ne = static_cast<int>(g.edges.size());
  const int nv = static_cast<int>(g.V.cols());
  std::vector<int> deg = vertex_degrees(g);

  // incidence lists, ascending edge index by construction
  std::vector<std::vector<std::array<int, 2>>> inc(nv);  // {edge, other vertex}
  for (int e = 0; e < ne; ++e) {
    inc[g.edges[e][0]].push_back({e, g.edges[e][1]});
    inc[g.edges[e][1]].push_back({e, g.edges[e][0]});
  }
  auto is_junction = [&](int v) { return deg[v] >= 3; };

  std::vector<int> chain_of_edge(ne, -1);
  std::vector<Chain> chains;

  // Walks an unclaimed chain starting at vertex v through edge e0 until it
  // hits a junction or a dead end.
  auto walk = [&](int v, int e0, int to) {
    Chain c;
    c.junction_ends[0] = is_junction(v) ? v : -1;
    int cur_edge = e0, cur = to;
    c.edges.push_back(e0);
    chain_of_edge[e0] = static_cast<int>(chains.size());
    while (!is_junction(cur) && deg[cur] == 2) {
      int next_edge = -1, next_v = -1;
      for (const auto& [e, w] : inc[cur])
        if (e != cur_edge) {
          next_edge = e;
          next_v = w;
        }
      if (chain_of_edge[next_edge] != -1) break;  // closed the loop of a pure cycle
      c.edges.push_back(next_edge);
      chain_of_edge[next_edge] = static_cast<int>(chains.size());
      cur_edge = next_edge;
      cur = next_v;
    }
    c.junction_ends[1] = is_junction(cur) ? cur : -1;
    chains.push_back(std::move(c));
  };

  for (int v = 0; v < nv; ++v)
    if (is_junction(v))
      for (const auto& [e, w] : inc[v])
        if (chain_of_edge[e] == -1) walk(v, e, w);
  for (int v = 0; v < nv; ++v)
    if (deg[v] == 1)
      for (const auto& [e, w] : inc[v])
        if (chain_of_edge[e] == -1) walk(v, e, w);
  for (int e = 0; e < ne; ++e)  // leftovers are pure degree-2 cycles
    if (chain_of_edge[e] == -1) walk(g.edges[e][0], e, g.edges[e][1]);

  // A chain with both ends on the same junction collides with itself; split
  // it at the middle so its two halves can take different colors.
  const size_t original = chains.size();
  for (size_t ci = 0; ci < original; ++ci) {
    Chain& c = chains[ci];
    if (c.junction_ends[0] < 0 || c.junction_ends[0] != c.junction_ends[1]) continue;
    if (c.edges.size() < 2) continue;  // unreachable: self-loop edges are rejected
    size_t half = c.edges.size() / 2;
    Chain tail;
    tail.edges.assign(c.edges.begin() + static_cast<long>(half), c.edges.end());
    tail.junction_ends = {c.junction_ends[1], -1};
    c.edges.resize(half);
    c.junction_ends[1] = -1;
    for (int e : tail.edges) chain_of_edge[e] = static_cast<int>(chains.size());
    chains.push_back(std::move(tail));
  }

  // Greedy first-fit, hardest chains (highest junction degree) first.
  std::vector<int> order(chains.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  auto key_deg = [&](int ci) {
    int d = 0;
    for (int v : chains[ci].junction_ends)
      if (v >= 0) d = std::max(d, deg[v]);
    return d;
  };
  auto min_edge = [&](int ci) {
    return *std::min_element(chains[ci].edges.begin(), chains[ci].edges.end());
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    int da = key_deg(a), db = key_deg(b);
    if (da != db) return da > db;
    return min_edge(a) < min_edge(b);
  });

  std::vector<std::set<int>> used(nv);
  std::vector<int> chain_color(chains.size(), -1);
  int max_color = -1;
  for (int ci : order) {
    int c = 0;
    auto forbidden = [&](int col) {
      for (int v : chains[ci].junction_ends)
        if (v >= 0 && used[v].count(col)) return true;
      return false;
    };
    while (forbidden(c)) ++c;
    chain_color[ci] = c;
    max_color = std::max(max_color, c);
    for (int v : chains[ci].junction_ends)
      if (v >= 0) used[v].insert(c);
  }

  EdgeColoring out;
  out.color.resize(ne);
  for (int e = 0; e < ne; ++e) out.color[e] = chain_color[chain_of_edge[e]];
  out.n_colors = ne == 0 ? 0 : max_color + 1;
  return out;
}

feature::FeatureSet split_strips(const TriMesh& strips, const EdgeColoring& coloring,
                                 const feature::MollifierConfig& cfg) {
  feature::FeatureSet fs;
  fs.dim = 3;
  fs.mollifier = cfg;
  fs.n_channels = std::max(1, coloring.n_colors);
  const size_t nf = strips.f.size();
  if (nf != 0 && strips.face_group.size() != nf)
    throw Error("split_strips: strip triangles carry no edge provenance");
  fs.V.resize(3, static_cast<int>(strips.v.size()));
  for (size_t i = 0; i < strips.v.size(); ++i) fs.V.col(static_cast<long>(i)) = strips.v[i];
  for (size_t f = 0; f < nf; ++f) {
    int src = strips.face_group[f];
    if (src < 0 || src >= static_cast<int>(coloring.color.size()))
      throw Error("split_strips: triangle with missing/invalid source edge tag");
    fs.elems.push_back({strips.f[f][0], strips.f[f][1], strips.f[f][2]});
    fs.channel.push_back(coloring.color[src]);
  }
  fs.check();
  fs.rebuild_acceleration();
  return fs;
}

}  // namespace sharpfield::partition
