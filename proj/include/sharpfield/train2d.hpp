#pragma once
#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"
#include "sharpfield/nnet.hpp"
#include "sharpfield/rng.hpp"

namespace sharpfield::train2d {

// ---- scenes and ground truth ----------------------------------------------

/// Geodesic-distance scene: point source at the origin, a circular obstacle,
/// and a feature ray along the kink locus behind the obstacle.  The training
/// domain is the axis-aligned box minus the open disk.
struct GeodesicScene {
  Point2 source{0.0, 0.0};
  Point2 center{1.0, 0.0};
  double radius = 0.5;
  double ray_x0 = 1.5;  // feature ray: y = 0, x >= ray_x0, truncated at xmax
  double xmin = -0.2, xmax = 2.2, ymin = -1.2, ymax = 1.2;
};

/// True when the straight segment from the source to x crosses the open disk
/// (x lies in the obstacle's shadow).
bool disk_shadowed(const Point2& x, const GeodesicScene& sc = {});

/// Shortest-path length from the source around the disk: straight-line
/// distance with line of sight, tangent-arc-tangent length otherwise.
/// Throws Error for points strictly inside the disk.
double geodesic_gt(const Point2& x, const GeodesicScene& sc = {});

/// Gradient of geodesic_gt (the unit arrival direction of the shortest
/// path).  Undefined exactly on the shadow axis y = 0 behind the disk (the
/// field kink); callers must stay off it.
Point2 geodesic_gt_grad(const Point2& x, const GeodesicScene& sc = {});

/// Polyline discretization of the feature ray with segments of about seg_len.
FeatureGraph geodesic_ray_graph(const GeodesicScene& sc = {}, double seg_len = 0.02);

/// Axis-aligned rectangle centered at the origin with half-extents hx > hy;
/// its interior distance-to-boundary field kinks on the 5-segment medial axis.
struct MedialScene {
  double hx = 0.6, hy = 0.2;
};

/// Distance to the rectangle boundary: min(hx-|x|, hy-|y|) inside, Euclidean
/// distance outside.
double rect_distance_gt(const Point2& x, const MedialScene& sc = {});

/// Gradient of the interior distance field (unit, axis-aligned); undefined on
/// the medial axis where the two sides tie.
Point2 rect_distance_grad(const Point2& x, const MedialScene& sc = {});

/// The exact 5-segment medial axis: central segment between the two
/// junctions plus four diagonals to the corners.
FeatureGraph medial_axis_gt(const MedialScene& sc = {});

/// Split every edge into contiguous pieces so the total segment count is
/// exactly n_segments, allocated proportionally to edge length.
FeatureGraph subdivide_axis(const FeatureGraph& g, int n_segments);

/// Uniform per-coordinate jitter in [-amplitude, amplitude] applied to every
/// vertex of degree >= 2 (chain interiors and junctions); degree-1 endpoints
/// stay exact.
void perturb_vertices(FeatureGraph& g, double amplitude, Rng& rng);

// ---- losses ----------------------------------------------------------------

struct Loss2DWeights {
  double alpha = 0.5;   // weight of the vertex regularizer
  double lambda = 0.3;  // balance inside the regularizer
};

/// Mean absolute error (1/k) sum |F(x_i) - Phi(x_i, f(x_i))|; features are
/// evaluated per sample from fs.
double loss_field_fit(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                      const Eigen::MatrixXd& X, const Eigen::VectorXd& gt);

/// Vertex regularizer over degree-2 vertices a_i with neighbors a_l, a_r:
/// v_i = (a_l+a_r)/2 - a_i, u_i = (a_r-a_l)/|a_r-a_l|;
/// (lambda/m) sum |v_i| + ((1-lambda)/m) sum |v_i . u_i|.
/// Vertices with coincident neighbors are skipped and counted in *excluded.
double loss_regularizer(const feature::FeatureSet& fs, double lambda,
                        int* excluded = nullptr);

/// Accumulates weight * d(loss_regularizer)/d(vertex) into grad (keyed by
/// vertex index; missing keys are created zero-initialized).
void loss_regularizer_grad(const feature::FeatureSet& fs, double lambda,
                           double weight, std::map<int, Point2>& grad,
                           int* excluded = nullptr);

/// Dimension-generic core of the same regularizer over an explicit polyline
/// graph (V columns are vertices of any dimension); the 3D trainer applies it
/// to strip boundary rails.
double polyline_regularizer(const Eigen::MatrixXd& V,
                            const std::vector<std::array<int, 2>>& edges,
                            double lambda, int* excluded = nullptr);
void polyline_regularizer_grad(const Eigen::MatrixXd& V,
                               const std::vector<std::array<int, 2>>& edges,
                               double lambda, double weight,
                               std::map<int, Eigen::VectorXd>& grad,
                               int* excluded = nullptr);

// ---- evaluation helpers ----------------------------------------------------

struct BandPoint {
  Point2 x;
  double gt = 0.0;
  Point2 gt_grad{0.0, 0.0};
  bool has_grad = false;  // gradient rows skip points on the field kink
};

/// The tight evaluation band behind the obstacle: 1.55 <= x <= 1.95,
/// |y| <= 0.005.  Value rows include y = 0; gradient rows keep off the kink.
std::vector<BandPoint> geodesic_band(const GeodesicScene& sc = {});

/// Near-axis band for the rectangle task: points offset from the exact
/// medial axis by small perpendicular steps (never on the axis itself).
std::vector<BandPoint> medial_band(const MedialScene& sc = {});

struct BandErrors {
  double value_err = 0.0;
  double grad_err = 0.0;
};

/// Mean |Phi - F| over all band points and mean |grad Phi_total - grad F|
/// over the points carrying gradients; the field gradient is the composed
/// one, grad_x Phi + J^T dPhi/df.
BandErrors band_errors(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                       const std::vector<BandPoint>& band);

/// Symmetric Chamfer distance between two polylines, via dense arclength
/// sampling (about `step` spacing) of both and nearest-neighbor queries.
double axis_chamfer(const FeatureGraph& a, const FeatureGraph& b, double step = 0.002);

/// Number of crossing pairs among non-adjacent segments (a folded polyline
/// self-intersects).
int count_fold_crossings(const feature::FeatureSet& fs);

// ---- training --------------------------------------------------------------

struct GeodesicConfig {
  int k_samples = 65536;  // fixed training set size (256^2)
  int iters = 20000;
  int batch = 4096;  // single-core runs usually pass something smaller
  int width = 256;
  int hidden_layers = 4;
  int pe = 4;
  nnet::Activation act = nnet::Activation::softplus;
  bool use_features = true;  // false = raw MLP baseline
  double lr = 1e-4;
  /// Exponential schedule: step lr = lr * lr_decay^(iter/(iters-1)), so the
  /// final step runs at lr * lr_decay.  1.0 = constant rate.  Late-stage rate
  /// reduction sets the Adam noise floor, which is what band accuracy near
  /// the feature is limited by once the crease coefficient is learned.
  double lr_decay = 1e-2;
  double rho = 0.08;
  double seg_len = 0.02;
  std::uint64_t seed = 1;
  int log_every = 500;
  std::string csv_path;  // empty = keep rows in memory only
  GeodesicScene scene{};

  std::uint64_t config_hash() const;
};

struct TrainRow {
  long iter = 0;
  double loss = 0.0;
  BandErrors band;
  double axis_chamfer = -1.0;  // < 0 when the task has no learned axis
};

struct GeodesicResult {
  nnet::MlpModel model;
  feature::FeatureSet fs;
  BandErrors band;
  double final_loss = 0.0;
  std::vector<TrainRow> log;
  ArtifactStamp stamp;
};

/// Fixed-feature training of the geodesic field.  Deterministic for a fixed
/// seed.  Throws NumericError if the loss becomes non-finite.
GeodesicResult train_geodesic(const GeodesicConfig& cfg);

struct MedialConfig {
  FeatureGraph initial_axis;  // perturbed polyline; colored or not (colored here)
  int k_samples = 65536;
  int iters = 100000;
  int freeze_iters = 10000;  // vertex positions fixed for the first window
  int batch = 4096;  // single-core runs usually pass something smaller
  int width = 256;
  int hidden_layers = 4;
  int pe = 8;
  nnet::Activation act = nnet::Activation::softplus;
  double lr_theta = 1e-4;
  double lr_vertices = 1e-4;
  double lr_decay = 1e-2;  // same schedule semantics as GeodesicConfig
  double rho = 0.08;
  Loss2DWeights weights{};
  std::uint64_t seed = 1;
  int log_every = 1000;
  std::string csv_path;
  MedialScene scene{};

  std::uint64_t config_hash() const;
};

struct MedialResult {
  nnet::MlpModel model;
  feature::FeatureSet fs;  // final learned axis geometry
  double initial_chamfer = 0.0;
  double final_chamfer = 0.0;
  std::vector<TrainRow> log;
  ArtifactStamp stamp;
};

/// Joint field + axis optimization: theta-only during the freeze window, then
/// degree->=2 vertices move under the field-fit and regularizer gradients.
/// Degree-1 endpoints never move.  Fold crossings produce a warning, not an
/// abort.  Throws NumericError if the loss becomes non-finite.
MedialResult train_medial(const MedialConfig& cfg);

/// Writes `iter,loss,band_value_err,band_grad_err[,axis_chamfer]` rows with
/// `# seed=... config=...` stamp comments.
void write_train_csv(const std::string& path, const std::vector<TrainRow>& rows,
                     const ArtifactStamp& stamp, bool with_chamfer);

}  // namespace sharpfield::train2d
