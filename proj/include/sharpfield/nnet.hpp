#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sharpfield/io.hpp"
#include "sharpfield/rng.hpp"

namespace sharpfield::nnet {

enum class Activation : std::uint32_t { softplus = 0, relu = 1, sine = 2 };

/// Network shape.  The MLP consumes [PE(x), feature_scale * f] where PE is the
/// sin/cos positional encoding with `pe` frequency octaves (0 = raw coords).
struct MlpArch {
  int d = 2;          // spatial input dimension
  int n_feat = 0;     // feature channels appended after encoding
  int hidden_layers = 4;
  int width = 256;
  Activation act = Activation::softplus;
  double beta = 100.0;    // softplus sharpness
  double omega0 = 30.0;   // sine frequency factor
  int pe = 0;             // positional-encoding octaves L

  int encoded_dim() const { return d * (1 + 2 * pe); }
  int input_dim() const { return encoded_dim() + n_feat; }
  int layer_count() const { return hidden_layers + 1; }  // + output layer
  /// rows/cols of W_k for k in [0, layer_count)
  std::pair<int, int> layer_shape(int k) const;
  int param_count() const;
  void check() const;
};

struct MlpModel {
  MlpArch arch;
  Eigen::VectorXd theta;       // [W_0 col-major, b_0, W_1, b_1, ...]
  double feature_scale = 1.0;  // applied to raw feature values at the input

  Eigen::Map<const Eigen::MatrixXd> W(int k) const;
  Eigen::Map<const Eigen::VectorXd> b(int k) const;
  Eigen::Map<Eigen::MatrixXd> W(int k);
  Eigen::Map<Eigen::VectorXd> b(int k);
};

/// Weight init: Glorot uniform for softplus/relu; the sine net uses the
/// standard stable scheme for sin(omega0 z) activations (first layer
/// U(+-1/in), deeper layers U(+-sqrt(6/in)/omega0), biases drawn like their
/// layer's weights).  Draws happen in a fixed order so a seed pins the model.
MlpModel init_model(const MlpArch& arch, Rng& rng);

Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, int L);
Eigen::MatrixXd positional_encode_batch(const Eigen::MatrixXd& X, int L);

/// Activation caches from one batched forward pass (columns = samples).
struct BatchTrace {
  Eigen::MatrixXd u;                  // network input (input_dim x B)
  std::vector<Eigen::MatrixXd> z, a;  // hidden pre/post activations
  std::vector<Eigen::MatrixXd> s;     // sigma'(z)
  Eigen::RowVectorXd y;               // outputs (1 x B)
  std::vector<Eigen::MatrixXd> delta, e;  // input-grad pass caches
  Eigen::MatrixXd gamma;              // d y / d u (input_dim x B)
  bool has_gamma = false;
};

void forward_batch(const MlpModel& m, const Eigen::MatrixXd& U, BatchTrace& tr);
/// Reverse sweep computing gamma = d y/d u per sample; requires forward_batch
/// to have filled `tr` first.
void input_grad_batch(const MlpModel& m, BatchTrace& tr);

/// Extended backward pass ("double backward").  Given cotangents ybar for the
/// outputs and gammabar for the per-sample input gradients (pass an empty
/// matrix when the loss does not look at gradients), accumulates dL/dtheta
/// into theta_grad (must be pre-sized and may carry prior accumulation) and,
/// when ubar is non-null, writes dL/du.  The gammabar path needs sigma'' and
/// is exact for softplus and sine; with relu it is almost-everywhere zero and
/// a one-time warning is emitted.
void extended_backward(const MlpModel& m, const BatchTrace& tr,
                       const Eigen::RowVectorXd& ybar, const Eigen::MatrixXd& gammabar,
                       Eigen::VectorXd& theta_grad, Eigen::MatrixXd* ubar = nullptr);

// ---- spatial-field layer (PE chain + feature scaling) ---------------------

/// Per-batch bundle of the quantities the field losses consume:
/// phi          field values
/// grad_x       spatial gradient dphi/dx (PE chain applied)
/// q            sensitivity dphi/df_raw (feature_scale chain applied)
struct FieldBatch {
  BatchTrace tr;
  Eigen::MatrixXd X;     // d x B raw coordinates
  Eigen::RowVectorXd phi;
  Eigen::MatrixXd grad_x;  // d x B (only when need_grads)
  Eigen::MatrixXd q;       // n_feat x B (only when need_grads)
};

void field_forward(const MlpModel& m, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& Fraw, bool need_grads, FieldBatch& out);

/// Backward through field_forward: cotangents for phi / grad_x / q (either of
/// the last two may be empty), parameter gradients accumulated into
/// theta_grad; optional cotangents for the raw coordinates (includes the
/// second-order PE curvature term) and the raw feature values.
void field_backward(const MlpModel& m, const FieldBatch& fb,
                    const Eigen::RowVectorXd& phibar, const Eigen::MatrixXd& gxbar,
                    const Eigen::MatrixXd& qbar, Eigen::VectorXd& theta_grad,
                    Eigen::MatrixXd* xbar = nullptr, Eigen::MatrixXd* fbar = nullptr);

// ---- single-sample conveniences -------------------------------------------

double forward(const MlpModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& feat);
void grad_wrt_input(const MlpModel& m, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& feat, Eigen::VectorXd* dphi_dx,
                    Eigen::VectorXd* dphi_dfeat);

// ---- optimizer ------------------------------------------------------------

struct AdamState {
  long t = 0;
  Eigen::VectorXd m, v;
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  bool last_step_skipped = false;  // set when non-finite grads arrive
};

/// Standard Adam with bias correction.  Steps with any non-finite gradient
/// entry are skipped and flagged rather than poisoning the parameters.
void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& st);

// ---- checkpoints ----------------------------------------------------------

/// Binary checkpoint: magic "SNM1"; little-endian u32 fields d, n_feat,
/// hidden_layers, width, activation, pe, fp_bits (=64); then the f64
/// parameters, feature_scale (f64), and a 16-byte seed/config-hash trailer.
/// Non-default beta/omega0 are not persisted (they are fixed constants in all
/// shipped configurations).
void save_model(const std::string& path, const MlpModel& m,
                const ArtifactStamp* stamp = nullptr);
MlpModel load_model(const std::string& path, ArtifactStamp* stamp = nullptr);

}  // namespace sharpfield::nnet
