#pragma once
#include <vector>

#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"

namespace sharpfield::partition {

struct EdgeColoring {
  std::vector<int> color;  // per graph edge, >= 0
  int n_colors = 0;
};

/// Assign channel colors to feature-graph edges so that edges meeting at a
/// junction (vertex of degree >= 3) get pairwise distinct colors, while
/// maximal chains through degree-<=2 vertices keep a single color wherever
/// possible.  A chain that starts and ends at the same junction cannot be
/// uniform (it would collide with itself), so it is split at its middle
/// vertex — the one case where a color change happens away from a junction.
///
/// Algorithm: contract chains into super-edges, then greedy first-fit in
/// descending junction-degree order; ties broken by lowest edge index.
/// Deterministic for a fixed input edge order.
EdgeColoring color_edges(const FeatureGraph& g);

/// Lift an edge coloring onto strip geometry: every strip triangle carries the
/// channel of the sharp edge it was grown from.  Provenance rides in
/// TriMesh::face_group (entry = source edge index; -1 = untagged -> error).
feature::FeatureSet split_strips(const TriMesh& strips, const EdgeColoring& coloring,
                                 const feature::MollifierConfig& cfg = {});

}  // namespace sharpfield::partition
