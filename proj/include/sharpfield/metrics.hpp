#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

#include "sharpfield/common.hpp"
#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"
#include "sharpfield/nnet.hpp"
#include "sharpfield/rng.hpp"

namespace sharpfield::metrics {

/// Sampling/matching configuration for surface-to-surface comparison.
struct MetricsConfig {
  int samples = 100000;        ///< points sampled per surface
  double fc_threshold = 0.005; ///< match radius r for the F-score, in model units
  std::uint64_t seed = 1;      ///< surface-sampling seed (recorded in the report)
  void check() const;
};

/// One comparison result.  The sampling parameters are echoed back so a
/// report is reproducible on its own.
struct MetricReport {
  double cd = 0.0;          ///< Chamfer distance (symmetric mean-NN halves)
  double hd = 0.0;          ///< Hausdorff distance (max of one-sided maxima)
  double ne_degrees = 0.0;  ///< normal error, arccos|n·n| averaged symmetrically
  double fc_percent = 0.0;  ///< F-score 2*R1*R2/(R1+R2) in percent
  bool has_feature_metrics = false;
  double fcd = 0.0;         ///< crease-curve Chamfer distance
  double fne_degrees = 0.0; ///< crease-normal error in degrees
  int samples = 0;
  double fc_threshold = 0.0;
  std::uint64_t seed = 0;
};

/// Point sets are columns of 3xN matrices; normal sets must have unit columns
/// aligned index-for-index with their point set.

/// Symmetric Chamfer distance: mean nearest-neighbor distance, each direction
/// weighted one half.  Throws on empty sets.
double chamfer(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& P2);

/// Hausdorff distance: the larger of the two one-sided maxima.
double hausdorff(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& P2);

/// Normal error in degrees: arccos|n_p · n_NN(p)| averaged over both sets,
/// each direction weighted one half.
double normal_error(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& N1,
                    const Eigen::Matrix3Xd& P2, const Eigen::Matrix3Xd& N2);

/// Harmonic mean of the two match rates, as used by the F-score (0 when both
/// rates vanish).
double harmonic_fscore(double r1, double r2);

/// F-score in percent: match rate = fraction of points whose nearest neighbor
/// in the other set lies strictly within r.
double fscore(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& P2, double r);

/// Area-weighted uniform surface samples with per-sample face normals.
void sample_surface(const TriMesh& m, int n, Rng& rng, Eigen::Matrix3Xd& P,
                    Eigen::Matrix3Xd& N);

/// Sample both meshes and evaluate all four point-set metrics.
MetricReport compare_meshes(const TriMesh& a, const TriMesh& b,
                            const MetricsConfig& cfg = {});

/// Crease-accuracy metrics.  The zero-level curve of the field restricted to
/// the feature strips is sampled by root-finding along dense cross-sections
/// of each strip element; FCD is the Chamfer distance between those samples
/// and the ground-truth crease points, FNE the mean angle (degrees) between
/// the strip normal at each sample and the ground-truth normal at its nearest
/// crease point.
struct FeatureMetricsResult {
  double fcd = 0.0;
  double fne_degrees = 0.0;
  int elements_skipped = 0;  ///< strip elements with no zero crossing
  int n_samples = 0;         ///< collected zero-curve samples
};

FeatureMetricsResult feature_metrics_fn(
    const std::function<double(const Point3&)>& phi, const feature::FeatureSet& fs,
    const Eigen::Matrix3Xd& gt_points, const Eigen::Matrix3Xd& gt_normals,
    int sections_per_element = 64);

/// Model variant: phi(x) = field value with the feature channels applied.
FeatureMetricsResult feature_metrics(const nnet::MlpModel& m,
                                     const feature::FeatureSet& fs,
                                     const Eigen::Matrix3Xd& gt_points,
                                     const Eigen::Matrix3Xd& gt_normals,
                                     int sections_per_element = 64);

/// One-line CSV (header + row) and a human-readable block for CLI output.
std::string report_csv(const MetricReport& r);
std::string report_text(const MetricReport& r);

}  // namespace sharpfield::metrics
