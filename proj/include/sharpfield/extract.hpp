#pragma once
#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"
#include "sharpfield/io.hpp"
#include "sharpfield/nnet.hpp"

namespace sharpfield::extract {

/// Regular sampling of a field over an axis-aligned box.  values are stored
/// row-major with x fastest: index = i + res[0]*(j + res[1]*k) (2D grids have
/// res[2] = 1 and k = 0).
struct FieldGrid {
  int dim = 3;  // 2 or 3
  Eigen::Vector3d bbox_min{0, 0, 0};
  Eigen::Vector3d bbox_max{1, 1, 1};  // unused axis carries [0, 1]
  std::array<int, 3> res{0, 0, 1};
  std::vector<double> values;

  std::size_t index(int i, int j, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(res[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(res[1]) * k);
  }
  double at(int i, int j, int k = 0) const { return values[index(i, j, k)]; }
  /// Node position along one axis (nodes include both box faces).
  double coord(int axis, int i) const {
    return bbox_min[axis] +
           (bbox_max[axis] - bbox_min[axis]) * i / double(res[axis] - 1);
  }
  /// Cell edge length along one axis.
  double spacing(int axis) const {
    return (bbox_max[axis] - bbox_min[axis]) / double(res[axis] - 1);
  }

  void check() const;  // dim 2/3, every active res >= 2, value count
};

/// Evaluate Phi(x, f(x)) on every node of a regular grid.  The model's spatial
/// dimension picks 2D or 3D; a model with n_feat = 0 ignores fs.
FieldGrid sample_grid(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                      const Eigen::VectorXd& bbox_min, const Eigen::VectorXd& bbox_max,
                      const std::vector<int>& res);

/// Iso-contour of a 2D grid as chained polylines (loops close by repeating
/// the first point).  Cell crossings are linearly interpolated; ambiguous
/// saddle cells are split by the cell-midpoint value (the documented rule).
std::vector<std::vector<Point2>> marching_squares(const FieldGrid& grid, double iso);

struct DualContourConfig {
  double bisection_tol = 1e-6;  // edge zero-crossing tolerance (in box units)
  double qef_regularization = 1e-2;  // Tikhonov pull toward the cell mass point
};

/// Dual contouring of the zero level set over a res^3 node grid.  Each
/// sign-change cell gets one vertex (QEF over Hermite planes from bisected
/// edge crossings, gradients through the feature chain rule); each
/// sign-change grid edge links its four cells into a quad, split into two
/// triangles oriented by the edge's field direction.  Empty sign set gives an
/// empty mesh.
TriMesh dual_contouring(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                        const Point3& bbox_min, const Point3& bbox_max,
                        const std::array<int, 3>& res,
                        const DualContourConfig& cfg = {});

/// Same extraction driven by an arbitrary field jet (phi + gradient at x);
/// the model overload wraps this.
struct FieldJet {
  double phi = 0.0;
  Point3 grad{0, 0, 0};
};
TriMesh dual_contouring_fn(const std::function<FieldJet(const Point3&)>& field,
                           const Point3& bbox_min, const Point3& bbox_max,
                           const std::array<int, 3>& res,
                           const DualContourConfig& cfg = {});

/// Binary grid file: magic "SFG1", u8 dim, u32 res per active axis, f64 bbox
/// min/max per active axis, f32 values row-major (x fastest), all
/// little-endian, then a fixed 16-byte trailer with the artifact stamp
/// (u64 seed, u64 config hash).  Values round-trip at f32 precision.
void write_field_grid(const std::string& path, const FieldGrid& grid,
                      const ArtifactStamp& stamp);
FieldGrid read_field_grid(const std::string& path, ArtifactStamp* stamp = nullptr);

}  // namespace sharpfield::extract
