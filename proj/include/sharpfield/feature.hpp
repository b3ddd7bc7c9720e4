#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

#include "sharpfield/geom.hpp"

namespace sharpfield::feature {

/// Compactly supported bump used to localize the boundary integrals:
/// phi(r) = (1/I_n) * exp(-1/(1-r^2)) on |r| < 1, 0 outside.  With the
/// default I_n = 1/e this gives phi(0) = 1.
struct MollifierConfig {
  double radius = 0.08;                       // Euclidean support radius rho
  double normalizer = 0.36787944117144233;    // I_n, default 1/e
};

double mollifier(double r, const MollifierConfig& cfg);

/// Weight an element contributes at query x: phi(||x - c(e)||^2 / rho^2).
/// The squared argument keeps the weight smooth in both x and the vertices.
double local_weight(const Eigen::VectorXd& x, const Eigen::VectorXd& centroid,
                    const MollifierConfig& cfg);

/// Uniform grid over element centroids, cell size = support radius, so a
/// query only has to look at its 3^d neighborhood.  Exactness is unaffected:
/// the hash yields a superset that is then filtered by the true distance.
struct SpatialHash {
  double cell = 1.0;
  std::unordered_map<std::uint64_t, std::vector<int>> buckets;

  static std::uint64_t key(const Eigen::VectorXd& p, double cell);
  void build(const Eigen::MatrixXd& centroids, double cell_size);
  /// Candidate element ids near x, sorted ascending (summation order is part
  /// of the eval contract: results must be bit-identical across rebuilds).
  void query(const Eigen::VectorXd& x, std::vector<int>& out) const;
};

/// The multi-channel feature geometry: elements (segments in 2D, triangles in
/// 3D) sharing a vertex buffer, each assigned to one channel.  `scale` is a
/// run constant applied to every channel value (and hence every gradient);
/// it is chosen once so the values have RMS 1 over the initial training batch
/// and travels with the set in checkpoints.
struct FeatureSet {
  int dim = 2;
  Eigen::MatrixXd V;                      // dim x n_vertices
  std::vector<std::array<int, 3>> elems;  // segments use {a, b, -1}
  std::vector<int> channel;               // per element, in [0, n_channels)
  int n_channels = 1;
  MollifierConfig mollifier;
  double scale = 1.0;

  SpatialHash hash;

  void check() const;
  Eigen::VectorXd centroid(int e) const;
  void rebuild_acceleration();
  /// Replace vertex positions (same count) and rebuild the hash; this is the
  /// one mutation training performs between snapshots.
  void set_vertices(const Eigen::MatrixXd& positions);
};

/// Build a 2D feature set from a colored feature graph (every edge becomes a
/// segment element; channel = edge color).
FeatureSet feature_set_from_graph(const FeatureGraph& g, const MollifierConfig& cfg);

struct FeatureEval {
  Eigen::VectorXd values;                        // n_channels
  Eigen::MatrixXd grad_query;                    // n_channels x dim
  std::map<int, Eigen::MatrixXd> grad_vertices;  // vertex -> n_channels x dim
  bool one_sided = false;  // query sat on an element; grads are principal values
};

/// Full first-order evaluation (value + query gradient + vertex gradients).
/// Channels with no element inside the support ball are exactly zero.
FeatureEval eval_feature(const Eigen::VectorXd& x, const FeatureSet& fs);

/// Value-only fast path.
Eigen::VectorXd eval_values(const Eigen::VectorXd& x, const FeatureSet& fs);

/// Values + query Jacobian only (the pair the field network consumes).
void eval_jet(const Eigen::VectorXd& x, const FeatureSet& fs, Eigen::VectorXd& f,
              Eigen::MatrixXd& J, bool* one_sided = nullptr);

/// Reverse-mode hook for vertex optimization.  Given cotangents fbar for the
/// channel values and Jbar for the query Jacobian (pass an empty matrix when
/// no gradient-of-gradient term is needed), accumulates vertex cotangents
/// into vertex_bar and, when x_bar is non-null, the query-point cotangent.
/// Uses nested forward duals, so the mixed d^2 f / dx dv terms are exact;
/// this is an independent route from eval_feature's product-rule gradients
/// and the two are cross-checked in the tests.
void feature_backward(const Eigen::VectorXd& x, const FeatureSet& fs,
                      const Eigen::VectorXd& fbar, const Eigen::MatrixXd& Jbar,
                      std::map<int, Eigen::VectorXd>& vertex_bar,
                      Eigen::VectorXd* x_bar = nullptr);

/// Symmetric-difference estimate of the normal-derivative jump of the summed
/// channels at a point on the feature: n.grad f(x0 + eps n) - n.grad f(x0 - eps n).
/// Exactly even in n by construction.  Throws if x0 does not lie on any element.
double jump_probe(const FeatureSet& fs, const Eigen::VectorXd& x0,
                  const Eigen::VectorXd& n, double eps);

/// Scale constant making the raw channel values RMS-1 over the given batch
/// (all sample x channel entries, zeros included).  Returns 1 for an all-zero
/// batch.  Does not modify fs; assign the result to fs.scale.
double compute_feature_scale(const FeatureSet& fs,
                             const std::vector<Eigen::VectorXd>& batch);

}  // namespace sharpfield::feature
