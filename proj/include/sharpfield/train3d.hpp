#pragma once
#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"
#include "sharpfield/nnet.hpp"
#include "sharpfield/rng.hpp"

namespace sharpfield::train3d {

// ---- loss weights ----------------------------------------------------------

/// Weighted-sum coefficients of the 3D SDF loss
///   alpha_sur * mean|Phi|                   (surface points)
/// + alpha_ext * mean exp(-alpha_exp |Phi|)  (ambient points)
/// + alpha_ekl * mean |1 - |grad Phi||       (surface + near points)
/// + alpha_nor * mean |grad Phi - n|         (surface points, oriented normals)
/// + alpha_reg * rail regularizer            (strip boundary polylines)
/// where grad Phi is the composed spatial gradient (through the feature
/// channels as well as the coordinates).
struct Loss3DWeights {
  double alpha_sur = 7000.0;
  double alpha_ext = 600.0;
  double alpha_ekl = 50.0;
  double alpha_nor = 0.0;   // 0 disables the normal term
  double alpha_reg = 0.0;   // 0 disables the rail regularizer
  double alpha_exp = 100.0; // exponent inside the exterior term
  double lambda = 0.3;      // balance inside the rail regularizer

  /// Fixed-feature fitting of a mesh (surface samples carry mesh normals).
  static Loss3DWeights mesh_preset();
  /// Learnable features from an oriented point cloud.
  static Loss3DWeights points_normals_preset();
  /// Learnable features from a bare point cloud (no normal term).
  static Loss3DWeights points_preset();

  void check() const;  // throws on negative weights or alpha_exp <= 0
};

enum class Mode { mesh, points_normals, points };

/// Preset matching the mode (the table above).
Loss3DWeights preset_for(Mode mode);

// ---- domain normalization --------------------------------------------------

/// Isotropic map x_norm = scale * (x - center) taking the input's bounding box
/// into [-1,1]^3 with a 5% margin (largest half-extent maps to 0.95).
/// Normals are direction-invariant under it.
struct NormalizeTransform {
  Point3 center{0.0, 0.0, 0.0};
  double scale = 1.0;

  Point3 to_normalized(const Point3& x) const { return scale * (x - center); }
  Point3 to_original(const Point3& x) const { return x / scale + center; }
  double distance_to_original(double d) const { return d / scale; }
};

/// Transform from a set of points (columns); throws on an empty or degenerate
/// (zero-extent) set.
NormalizeTransform normalize_transform(const Eigen::MatrixXd& P, double margin = 0.05);

void apply_transform(const NormalizeTransform& t, PointCloud& cloud);
void apply_transform(const NormalizeTransform& t, TriMesh& mesh);
void apply_transform(const NormalizeTransform& t, FeatureGraph& graph);

// ---- sampling protocol -----------------------------------------------------

struct SamplingConfig {
  int surface_total = 50000;     // size of the fixed surface pool
  int per_epoch_surface = 20000; // drawn from the pool without replacement
  int per_epoch_near = 20000;    // Gaussian perturbations of the drawn points
  int per_epoch_ambient = 10000; // uniform in the extended domain
  int knn = 50;                  // neighbor rank defining the Gaussian sigma
  int epochs = 15000;
  double ambient_halfwidth = 1.1;

  void check() const;  // positive counts
};

/// Fixed sampling pool: surface points (normalized frame), optional unit
/// normals, and the per-point Gaussian radius sigma = distance to the knn-th
/// nearest neighbor (self excluded).
struct SurfacePool {
  Eigen::MatrixXd P;      // 3 x n
  Eigen::MatrixXd N;      // 3 x n, or 0 x 0 when normals are unavailable
  Eigen::VectorXd sigma;  // n

  int size() const { return static_cast<int>(P.cols()); }
  bool has_normals() const { return N.cols() > 0; }
};

/// Area-weighted uniform sampling of cfg.surface_total points (with face
/// normals) from a mesh already in the normalized frame.  sigma comes from
/// k-nearest neighbors within the pool itself.
SurfacePool pool_from_mesh(const TriMesh& mesh, const SamplingConfig& cfg, Rng& rng);

/// Pool from a point cloud in the normalized frame: a without-replacement
/// subsample of cfg.surface_total points (the whole cloud when smaller), with
/// sigma measured against the full cloud.  Normals ride along when present.
SurfacePool pool_from_cloud(const PointCloud& cloud, const SamplingConfig& cfg, Rng& rng);

struct SampleBatch {
  Eigen::MatrixXd surface;   // 3 x ns
  Eigen::MatrixXd normals;   // 3 x ns, or 0 x 0
  Eigen::MatrixXd near_pts;  // 3 x nn
  Eigen::MatrixXd ambient;   // 3 x na
};

/// One epoch's samples: a without-replacement draw of per_epoch_surface pool
/// points (with replacement and a one-time warning when the pool is smaller),
/// one N(0, sigma_i^2 I) perturbation per drawn point as the near set, and
/// fresh uniform ambient points in [-h, h]^3.
void sample_batch(const SurfacePool& pool, const SamplingConfig& cfg, Rng& rng,
                  SampleBatch& out);

// ---- loss ------------------------------------------------------------------

/// Individually exposed terms (unweighted means); total is the weighted sum.
struct LossTerms {
  double sur = 0.0, ext = 0.0, ekl = 0.0, nor = 0.0, reg = 0.0;
  double total = 0.0;
};

/// Evaluates the full loss; rails (vertex-index pairs into fs.V) feed the
/// regularizer term and may be empty.  Modes using normals throw when the
/// batch carries none.  A model with n_feat = 0 (ablation baseline) skips
/// feature evaluation entirely.
LossTerms loss_sdf(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                   const SampleBatch& batch, const Loss3DWeights& w, Mode mode,
                   const std::vector<std::array<int, 2>>& rails = {});

/// Analytic gradient of the weighted loss with respect to the strip vertex
/// positions — the same values-path + Jacobian-path composition the trainer
/// steps on in learnable modes, exposed so it can be checked against finite
/// differences.  Only vertices with a nonzero contribution appear in the map.
std::map<int, Point3> loss_sdf_vertex_grads(const nnet::MlpModel& m,
                                            const feature::FeatureSet& fs,
                                            const SampleBatch& batch,
                                            const Loss3DWeights& w, Mode mode,
                                            const std::vector<std::array<int, 2>>& rails = {});

// ---- training --------------------------------------------------------------

struct Train3DConfig {
  SamplingConfig sampling;
  Loss3DWeights weights;  // start from preset_for(mode) and adjust
  int width = 256;
  int hidden_layers = 4;
  nnet::Activation act = nnet::Activation::sine;
  int pe = 0;  // sine nets encode raw coordinates
  bool use_features = true;  // false = plain-MLP ablation (fs ignored)
  double lr = 1e-4;
  /// Same exponential schedule as the 2D trainers: step lr multiplies
  /// lr_decay^(epoch/(epochs-1)); 1.0 = constant rate.
  double lr_decay = 1e-2;
  double lr_vertices = 1e-4;  // learnable-feature modes
  std::uint64_t seed = 1;
  int log_every = 100;
  std::string csv_path;

  std::uint64_t config_hash() const;
};

struct TrainRow3D {
  long epoch = 0;
  LossTerms terms;
};

struct Train3DResult {
  nnet::MlpModel model;
  feature::FeatureSet fs;  // vertex positions updated in learnable modes
  LossTerms final_terms;
  std::vector<TrainRow3D> log;
  /// Loss went non-finite: training stopped and model/fs hold the last state
  /// that produced a finite loss.
  bool aborted = false;
  long aborted_at_epoch = -1;
  ArtifactStamp stamp;
};

/// SDF training over a fixed pool.  mesh mode keeps fs fixed; the other modes
/// also move every strip vertex with the exact feature gradients (values and
/// spatial-Jacobian paths) plus the rail regularizer.  Deterministic for a
/// fixed seed; batch draws use a stream independent of weight initialization,
/// so ablations with a different architecture still see identical data.
Train3DResult train_sdf(const SurfacePool& pool, const feature::FeatureSet& fs0,
                        const std::vector<std::array<int, 2>>& rails,
                        const Train3DConfig& cfg, Mode mode);

/// Writes `epoch,loss,sur,ext,ekl,nor,reg` rows under a `# seed=.. config=..`
/// stamp comment.
void write_train3d_csv(const std::string& path, const std::vector<TrainRow3D>& rows,
                       const ArtifactStamp& stamp);

// ---- composed fields and Booleans ------------------------------------------

using FieldFn = std::function<double(const Point3&)>;

struct FieldSample {
  double phi = 0.0;
  Point3 grad{0.0, 0.0, 0.0};  // composed spatial gradient
};
using FieldJetFn = std::function<FieldSample(const Point3&)>;

/// Self-contained evaluators Phi(x, f(x)) of a trained model (copies captured).
/// A model with n_feat = 0 ignores fs.
FieldFn field_function(const nnet::MlpModel& m, const feature::FeatureSet& fs);
FieldJetFn field_jet_function(const nnet::MlpModel& m, const feature::FeatureSet& fs);

enum class BoolOp { unite, intersect, diff_ab, diff_ba };

/// min/max composition of two signed fields (negative inside):
/// union = min, intersection = max, A\B = max(F_A, -F_B), B\A = max(-F_A, F_B).
FieldFn boolean_combine(FieldFn a, FieldFn b, BoolOp op);

}  // namespace sharpfield::train3d
