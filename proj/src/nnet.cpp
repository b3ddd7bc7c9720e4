#include "sharpfield/nnet.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "sharpfield/common.hpp"

namespace sharpfield::nnet {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

// Layer k parameter offsets inside the flat theta vector.
int w_offset(const MlpArch& a, int k) {
  int off = 0;
  for (int i = 0; i < k; ++i) {
    auto [r, c] = a.layer_shape(i);
    off += r * c + r;
  }
  return off;
}
int b_offset(const MlpArch& a, int k) {
  auto [r, c] = a.layer_shape(k);
  return w_offset(a, k) + r * c;
}

// Activation value / first / second derivative with overflow-safe branches.
struct ActFns {
  Activation act;
  double beta, omega0;

  double value(double z) const {
    switch (act) {
      case Activation::softplus: {
        const double t = beta * z;
        if (t > 20.0) return z;
        if (t < -20.0) return std::exp(t) / beta;
        return std::log1p(std::exp(t)) / beta;
      }
      case Activation::relu:
        return z > 0.0 ? z : 0.0;
      case Activation::sine:
        return std::sin(omega0 * z);
    }
    return 0.0;
  }
  double slope(double z) const {
    switch (act) {
      case Activation::softplus: {
        const double t = beta * z;
        if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
        const double et = std::exp(t);
        return et / (1.0 + et);
      }
      case Activation::relu:
        return z > 0.0 ? 1.0 : 0.0;
      case Activation::sine:
        return omega0 * std::cos(omega0 * z);
    }
    return 0.0;
  }
  double curvature(double z) const {
    switch (act) {
      case Activation::softplus: {
        const double s = slope(z);
        return beta * s * (1.0 - s);
      }
      case Activation::relu:
        return 0.0;
      case Activation::sine:
        return -omega0 * omega0 * std::sin(omega0 * z);
    }
    return 0.0;
  }
};

ActFns act_fns(const MlpArch& a) { return ActFns{a.act, a.beta, a.omega0}; }

void warn_relu_second_order() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true))
    std::fprintf(stderr,
                 "warning: relu activation has zero second derivative; "
                 "gradient-based loss terms will not train the network\n");
}

// ---- positional-encoding chain helpers ------------------------------------
//
// Encoded layout per sample: [x_0..x_{d-1}, then for octave k and coord j the
// pair sin(2^k pi x_j), cos(2^k pi x_j)].

// g_x = E'(x)^T v for every column: maps a cotangent/gradient on the encoded
// entries down to the d raw coordinates.
Eigen::MatrixXd pe_chain_down(const Eigen::MatrixXd& X, int L, const Eigen::MatrixXd& V) {
  const int d = static_cast<int>(X.rows());
  const auto B = X.cols();
  Eigen::MatrixXd out = V.topRows(d);
  for (int k = 0; k < L; ++k) {
    const double w = std::ldexp(kPi, k);  // 2^k * pi
    for (int j = 0; j < d; ++j) {
      const int p = d + (k * d + j) * 2;
      for (Eigen::Index bcol = 0; bcol < B; ++bcol) {
        const double wx = w * X(j, bcol);
        out(j, bcol) += w * (V(p, bcol) * std::cos(wx) - V(p + 1, bcol) * std::sin(wx));
      }
    }
  }
  return out;
}

// v_e = E'(x) g for every column: lifts a cotangent on the raw coordinates to
// the encoded entries (the adjoint of pe_chain_down, same coefficients).
Eigen::MatrixXd pe_chain_up(const Eigen::MatrixXd& X, int L, const Eigen::MatrixXd& G) {
  const int d = static_cast<int>(X.rows());
  const auto B = X.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d * (1 + 2 * L), B);
  out.topRows(d) = G;
  for (int k = 0; k < L; ++k) {
    const double w = std::ldexp(kPi, k);
    for (int j = 0; j < d; ++j) {
      const int p = d + (k * d + j) * 2;
      for (Eigen::Index bcol = 0; bcol < B; ++bcol) {
        const double wx = w * X(j, bcol);
        out(p, bcol) = w * std::cos(wx) * G(j, bcol);
        out(p + 1, bcol) = -w * std::sin(wx) * G(j, bcol);
      }
    }
  }
  return out;
}

// Second-order term of the PE chain: grad_x depends on x directly through
// E'(x), so a loss on grad_x feeds  xbar_j += gxbar_j * sum_p E''_p(x_j) gamma_p.
void pe_curvature_accum(const Eigen::MatrixXd& X, int L, const Eigen::MatrixXd& gamma_e,
                        const Eigen::MatrixXd& gxbar, Eigen::MatrixXd& xbar) {
  const int d = static_cast<int>(X.rows());
  const auto B = X.cols();
  for (int k = 0; k < L; ++k) {
    const double w = std::ldexp(kPi, k);
    const double w2 = w * w;
    for (int j = 0; j < d; ++j) {
      const int p = d + (k * d + j) * 2;
      for (Eigen::Index bcol = 0; bcol < B; ++bcol) {
        const double wx = w * X(j, bcol);
        const double second = -w2 * (std::sin(wx) * gamma_e(p, bcol) +
                                     std::cos(wx) * gamma_e(p + 1, bcol));
        xbar(j, bcol) += gxbar(j, bcol) * second;
      }
    }
  }
}

}  // namespace

// ---- MlpArch / MlpModel ----------------------------------------------------

std::pair<int, int> MlpArch::layer_shape(int k) const {
  const int in = (k == 0) ? input_dim() : width;
  const int out = (k == layer_count() - 1) ? 1 : width;
  return {out, in};
}

int MlpArch::param_count() const {
  int n = 0;
  for (int k = 0; k < layer_count(); ++k) {
    auto [r, c] = layer_shape(k);
    n += r * c + r;
  }
  return n;
}

void MlpArch::check() const {
  if (d < 1 || d > 3) throw Error("MlpArch: spatial dimension must be 1..3");
  if (n_feat < 0) throw Error("MlpArch: negative feature count");
  if (hidden_layers < 1) throw Error("MlpArch: need at least one hidden layer");
  if (width < 1) throw Error("MlpArch: width must be positive");
  if (pe < 0) throw Error("MlpArch: negative encoding octaves");
  if (beta <= 0.0 || omega0 <= 0.0) throw Error("MlpArch: beta/omega0 must be positive");
}

Eigen::Map<const Eigen::MatrixXd> MlpModel::W(int k) const {
  auto [r, c] = arch.layer_shape(k);
  return {theta.data() + w_offset(arch, k), r, c};
}
Eigen::Map<const Eigen::VectorXd> MlpModel::b(int k) const {
  auto [r, c] = arch.layer_shape(k);
  (void)c;
  return {theta.data() + b_offset(arch, k), r};
}
Eigen::Map<Eigen::MatrixXd> MlpModel::W(int k) {
  auto [r, c] = arch.layer_shape(k);
  return {theta.data() + w_offset(arch, k), r, c};
}
Eigen::Map<Eigen::VectorXd> MlpModel::b(int k) {
  auto [r, c] = arch.layer_shape(k);
  (void)c;
  return {theta.data() + b_offset(arch, k), r};
}

MlpModel init_model(const MlpArch& arch, Rng& rng) {
  arch.check();
  MlpModel m;
  m.arch = arch;
  m.theta = Eigen::VectorXd::Zero(arch.param_count());
  for (int k = 0; k < arch.layer_count(); ++k) {
    auto [rows, cols] = arch.layer_shape(k);
    auto W = m.W(k);
    auto b = m.b(k);
    if (arch.act == Activation::sine) {
      const double bound =
          (k == 0) ? 1.0 / cols : std::sqrt(6.0 / cols) / arch.omega0;
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) W(r, c) = rng.uniform(-bound, bound);
      for (int r = 0; r < rows; ++r) b(r) = rng.uniform(-bound, bound);
    } else {
      const double bound = std::sqrt(6.0 / (rows + cols));
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) W(r, c) = rng.uniform(-bound, bound);
      b.setZero();
    }
  }
  return m;
}

// ---- encoding --------------------------------------------------------------

Eigen::VectorXd positional_encode(const Eigen::VectorXd& x, int L) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd e(d * (1 + 2 * L));
  e.head(d) = x;
  for (int k = 0; k < L; ++k) {
    const double w = std::ldexp(kPi, k);
    for (int j = 0; j < d; ++j) {
      const int p = d + (k * d + j) * 2;
      e(p) = std::sin(w * x(j));
      e(p + 1) = std::cos(w * x(j));
    }
  }
  return e;
}

Eigen::MatrixXd positional_encode_batch(const Eigen::MatrixXd& X, int L) {
  const int d = static_cast<int>(X.rows());
  Eigen::MatrixXd E(d * (1 + 2 * L), X.cols());
  for (Eigen::Index bcol = 0; bcol < X.cols(); ++bcol)
    E.col(bcol) = positional_encode(X.col(bcol), L);
  return E;
}

// ---- forward / gradient passes ---------------------------------------------

void forward_batch(const MlpModel& m, const Eigen::MatrixXd& U, BatchTrace& tr) {
  const MlpArch& arch = m.arch;
  arch.check();
  if (U.rows() != arch.input_dim()) throw Error("forward_batch: input row count mismatch");
  const int L = arch.hidden_layers;
  const ActFns fns = act_fns(arch);

  tr.u = U;
  tr.z.assign(L, {});
  tr.a.assign(L, {});
  tr.s.assign(L, {});
  tr.delta.clear();
  tr.e.clear();
  tr.has_gamma = false;

  const Eigen::MatrixXd* prev = &tr.u;
  for (int k = 0; k < L; ++k) {
    tr.z[k].noalias() = m.W(k) * (*prev);
    tr.z[k].colwise() += m.b(k);
    tr.a[k] = tr.z[k].unaryExpr([&](double z) { return fns.value(z); });
    tr.s[k] = tr.z[k].unaryExpr([&](double z) { return fns.slope(z); });
    prev = &tr.a[k];
  }
  tr.y.noalias() = m.W(L) * (*prev);
  tr.y.array() += m.b(L)(0);
}

void input_grad_batch(const MlpModel& m, BatchTrace& tr) {
  const MlpArch& arch = m.arch;
  const int L = arch.hidden_layers;
  if (static_cast<int>(tr.z.size()) != L || tr.y.size() == 0)
    throw Error("input_grad_batch: run forward_batch first");

  tr.delta.assign(L, {});
  tr.e.assign(L, {});
  // Seed: d y / d y = 1, so e_{L-1} = W_out^T * 1 broadcast over the batch.
  tr.e[L - 1] = m.W(L).transpose() * Eigen::RowVectorXd::Ones(tr.y.cols());
  for (int k = L - 1; k >= 0; --k) {
    tr.delta[k] = tr.e[k].cwiseProduct(tr.s[k]);
    if (k > 0) tr.e[k - 1].noalias() = m.W(k).transpose() * tr.delta[k];
  }
  tr.gamma.noalias() = m.W(0).transpose() * tr.delta[0];
  tr.has_gamma = true;
}

void extended_backward(const MlpModel& m, const BatchTrace& tr,
                       const Eigen::RowVectorXd& ybar, const Eigen::MatrixXd& gammabar,
                       Eigen::VectorXd& theta_grad, Eigen::MatrixXd* ubar) {
  const MlpArch& arch = m.arch;
  const int L = arch.hidden_layers;
  const auto B = tr.u.cols();
  if (theta_grad.size() != arch.param_count())
    throw Error("extended_backward: theta_grad must be pre-sized");
  if (ybar.size() != B) throw Error("extended_backward: ybar batch mismatch");
  const bool second = gammabar.size() > 0;
  if (second && !tr.has_gamma)
    throw Error("extended_backward: gammabar given but input_grad_batch was not run");
  if (second && (gammabar.rows() != arch.input_dim() || gammabar.cols() != B))
    throw Error("extended_backward: gammabar shape mismatch");
  if (second && arch.act == Activation::relu) warn_relu_second_order();
  const ActFns fns = act_fns(arch);

  auto Wg = [&](int k) {
    auto [r, c] = arch.layer_shape(k);
    return Eigen::Map<Eigen::MatrixXd>(theta_grad.data() + w_offset(arch, k), r, c);
  };
  auto bg = [&](int k) {
    auto [r, c] = arch.layer_shape(k);
    (void)c;
    return Eigen::Map<Eigen::VectorXd>(theta_grad.data() + b_offset(arch, k), r);
  };

  // Phase A: backprop through the input-gradient computation itself.
  // Produces sbar_k (cotangents on sigma'(z_k)) consumed in phase B, and the
  // direct weight contributions from gamma's linear dependence on each W.
  std::vector<Eigen::MatrixXd> sbar;
  if (second) {
    sbar.assign(L, {});
    Eigen::MatrixXd dbar;  // cotangent of delta_k, walked upward
    dbar.noalias() = m.W(0) * gammabar;            // from gamma = W_0^T delta_0
    Wg(0).noalias() += tr.delta[0] * gammabar.transpose();
    for (int k = 0; k < L; ++k) {
      const Eigen::MatrixXd ebar = dbar.cwiseProduct(tr.s[k]);  // delta = e .* s
      sbar[k] = dbar.cwiseProduct(tr.e[k]);
      if (k + 1 < L) {
        dbar.noalias() = m.W(k + 1) * ebar;        // from e_k = W_{k+1}^T delta_{k+1}
        Wg(k + 1).noalias() += tr.delta[k + 1] * ebar.transpose();
      } else {
        // e_{L-1} = W_out^T * 1: the seed is constant, only W_out accumulates.
        Wg(L).noalias() += Eigen::RowVectorXd::Ones(B) * ebar.transpose();
      }
    }
  }

  // Phase B: standard reverse pass over the forward graph, with the sigma''
  // injections from phase A.
  const Eigen::MatrixXd& a_last = (L > 0) ? tr.a[L - 1] : tr.u;
  Wg(L).noalias() += ybar * a_last.transpose();
  bg(L)(0) += ybar.sum();
  Eigen::MatrixXd abar;  // cotangent of a_k
  abar.noalias() = m.W(L).transpose() * ybar;
  for (int k = L - 1; k >= 0; --k) {
    Eigen::MatrixXd zbar = abar.cwiseProduct(tr.s[k]);
    if (second) {
      const Eigen::MatrixXd curv =
          tr.z[k].unaryExpr([&](double z) { return fns.curvature(z); });
      zbar.noalias() += curv.cwiseProduct(sbar[k]);
    }
    const Eigen::MatrixXd& a_prev = (k > 0) ? tr.a[k - 1] : tr.u;
    Wg(k).noalias() += zbar * a_prev.transpose();
    bg(k).noalias() += zbar.rowwise().sum();
    if (k > 0)
      abar.noalias() = m.W(k).transpose() * zbar;
    else if (ubar)
      ubar->noalias() = m.W(0).transpose() * zbar;
  }
}

// ---- field layer -----------------------------------------------------------

void field_forward(const MlpModel& m, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& Fraw, bool need_grads, FieldBatch& out) {
  const MlpArch& arch = m.arch;
  if (X.rows() != arch.d) throw Error("field_forward: coordinate dimension mismatch");
  if (Fraw.rows() != arch.n_feat || (arch.n_feat > 0 && Fraw.cols() != X.cols()))
    throw Error("field_forward: feature block shape mismatch");
  out.X = X;
  Eigen::MatrixXd U(arch.input_dim(), X.cols());
  U.topRows(arch.encoded_dim()) = positional_encode_batch(X, arch.pe);
  if (arch.n_feat > 0) U.bottomRows(arch.n_feat) = m.feature_scale * Fraw;
  forward_batch(m, U, out.tr);
  out.phi = out.tr.y;
  if (need_grads) {
    input_grad_batch(m, out.tr);
    out.grad_x =
        pe_chain_down(X, arch.pe, out.tr.gamma.topRows(arch.encoded_dim()));
    out.q = m.feature_scale * out.tr.gamma.bottomRows(arch.n_feat);
  } else {
    out.grad_x.resize(0, 0);
    out.q.resize(0, 0);
  }
}

void field_backward(const MlpModel& m, const FieldBatch& fb,
                    const Eigen::RowVectorXd& phibar, const Eigen::MatrixXd& gxbar,
                    const Eigen::MatrixXd& qbar, Eigen::VectorXd& theta_grad,
                    Eigen::MatrixXd* xbar, Eigen::MatrixXd* fbar) {
  const MlpArch& arch = m.arch;
  const auto B = fb.X.cols();
  const int enc = arch.encoded_dim();
  const bool has_gx = gxbar.size() > 0;
  const bool has_q = qbar.size() > 0;
  if (has_gx && (gxbar.rows() != arch.d || gxbar.cols() != B))
    throw Error("field_backward: gxbar shape mismatch");
  if (has_q && (qbar.rows() != arch.n_feat || qbar.cols() != B))
    throw Error("field_backward: qbar shape mismatch");

  Eigen::MatrixXd gammabar;
  if (has_gx || has_q) {
    gammabar = Eigen::MatrixXd::Zero(arch.input_dim(), B);
    if (has_gx) gammabar.topRows(enc) = pe_chain_up(fb.X, arch.pe, gxbar);
    if (has_q) gammabar.bottomRows(arch.n_feat) = m.feature_scale * qbar;
  }
  Eigen::MatrixXd ub;
  extended_backward(m, fb.tr, phibar, gammabar, theta_grad,
                    (xbar || fbar) ? &ub : nullptr);
  if (xbar) {
    *xbar = pe_chain_down(fb.X, arch.pe, ub.topRows(enc));
    if (has_gx)
      pe_curvature_accum(fb.X, arch.pe, fb.tr.gamma.topRows(enc), gxbar, *xbar);
  }
  if (fbar) *fbar = m.feature_scale * ub.bottomRows(arch.n_feat);
}

// ---- single-sample wrappers ------------------------------------------------

double forward(const MlpModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& feat) {
  FieldBatch fb;
  Eigen::MatrixXd F(feat.size(), 1);
  F.col(0) = feat;
  field_forward(m, x, F, false, fb);
  return fb.phi(0);
}

void grad_wrt_input(const MlpModel& m, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& feat, Eigen::VectorXd* dphi_dx,
                    Eigen::VectorXd* dphi_dfeat) {
  FieldBatch fb;
  Eigen::MatrixXd F(feat.size(), 1);
  F.col(0) = feat;
  field_forward(m, x, F, true, fb);
  if (dphi_dx) *dphi_dx = fb.grad_x.col(0);
  if (dphi_dfeat) *dphi_dfeat = fb.q.col(0);
}

// ---- Adam ------------------------------------------------------------------

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& st) {
  if (grad.size() != theta.size()) throw Error("adam_step: gradient size mismatch");
  if (st.m.size() != theta.size()) {
    st.m = Eigen::VectorXd::Zero(theta.size());
    st.v = Eigen::VectorXd::Zero(theta.size());
  }
  if (!grad.allFinite()) {
    st.last_step_skipped = true;
    return;
  }
  st.last_step_skipped = false;
  st.t += 1;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  theta.array() -=
      st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

// ---- checkpoints -----------------------------------------------------------

namespace {
void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
}  // namespace

void save_model(const std::string& path, const MlpModel& m, const ArtifactStamp* stamp) {
  m.arch.check();
  if (m.theta.size() != m.arch.param_count())
    throw Error("save_model: parameter vector does not match architecture");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save_model: cannot open " + path);
  os.write("SNM1", 4);
  put_u32(os, static_cast<std::uint32_t>(m.arch.d));
  put_u32(os, static_cast<std::uint32_t>(m.arch.n_feat));
  put_u32(os, static_cast<std::uint32_t>(m.arch.hidden_layers));
  put_u32(os, static_cast<std::uint32_t>(m.arch.width));
  put_u32(os, static_cast<std::uint32_t>(m.arch.act));
  put_u32(os, static_cast<std::uint32_t>(m.arch.pe));
  put_u32(os, 64u);
  os.write(reinterpret_cast<const char*>(m.theta.data()),
           static_cast<std::streamsize>(sizeof(double)) * m.theta.size());
  os.write(reinterpret_cast<const char*>(&m.feature_scale), sizeof(double));
  put_u64(os, stamp ? stamp->seed : 0u);
  put_u64(os, stamp ? stamp->config_hash : 0u);
  if (!os) throw Error("save_model: write failed for " + path);
}

MlpModel load_model(const std::string& path, ArtifactStamp* stamp) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_model: cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SNM1", 4) != 0)
    throw FormatError("load_model: bad magic in " + path);
  MlpModel m;
  m.arch.d = static_cast<int>(get_u32(is));
  m.arch.n_feat = static_cast<int>(get_u32(is));
  m.arch.hidden_layers = static_cast<int>(get_u32(is));
  m.arch.width = static_cast<int>(get_u32(is));
  const std::uint32_t act = get_u32(is);
  if (act > 2) throw FormatError("load_model: unknown activation id");
  m.arch.act = static_cast<Activation>(act);
  m.arch.pe = static_cast<int>(get_u32(is));
  const std::uint32_t fp = get_u32(is);
  if (fp != 64) throw FormatError("load_model: only fp64 checkpoints are supported");
  if (!is) throw FormatError("load_model: truncated header in " + path);
  m.arch.check();
  m.theta.resize(m.arch.param_count());
  is.read(reinterpret_cast<char*>(m.theta.data()),
          static_cast<std::streamsize>(sizeof(double)) * m.theta.size());
  is.read(reinterpret_cast<char*>(&m.feature_scale), sizeof(double));
  if (!is) throw FormatError("load_model: truncated parameters in " + path);
  const std::uint64_t seed = get_u64(is);
  const std::uint64_t cfg = get_u64(is);
  if (!is) throw FormatError("load_model: truncated trailer in " + path);
  if (stamp) *stamp = ArtifactStamp{seed, cfg};
  return m;
}

}  // namespace sharpfield::nnet
