#include "sharpfield/feature.hpp"

#include <algorithm>
#include <cmath>

#include "sharpfield/common.hpp"
#include "sharpfield/green.hpp"
#include "sharpfield/green_forms.hpp"

namespace sharpfield::feature {

namespace {

/// Bump with the cutoff applied where exp() underflows anyway; below that the
/// value (< 1e-300) and every derivative are numerically zero, and an early
/// exact 0 keeps the forward and nested-dual routes bit-consistent.
template <class T>
T mollifier_t(const T& r, double inv_norm) {
  if (std::abs(leading(r)) >= 1.0) return T(0.0);
  T u = -1.0 / (1.0 - r * r);
  if (leading(u) < -700.0) return T(0.0);
  return exp(u) * inv_norm;
}

}  // namespace

double mollifier(double r, const MollifierConfig& cfg) {
  return mollifier_t(r, 1.0 / cfg.normalizer);
}

double local_weight(const Eigen::VectorXd& x, const Eigen::VectorXd& centroid,
                    const MollifierConfig& cfg) {
  double q = (x - centroid).squaredNorm();
  return mollifier(q / (cfg.radius * cfg.radius), cfg);
}

// ---- spatial hash ---------------------------------------------------------

std::uint64_t SpatialHash::key(const Eigen::VectorXd& p, double cell) {
  const std::int64_t kOff = 1 << 20, kMax = (1 << 21) - 1;
  std::uint64_t k = 0;
  for (int i = 0; i < 3; ++i) {
    std::int64_t c = 0;
    if (i < p.size()) c = static_cast<std::int64_t>(std::floor(p[i] / cell)) + kOff;
    c = std::clamp<std::int64_t>(c, 0, kMax);
    k = (k << 21) | static_cast<std::uint64_t>(c);
  }
  return k;
}

void SpatialHash::build(const Eigen::MatrixXd& centroids, double cell_size) {
  cell = cell_size;
  buckets.clear();
  for (int e = 0; e < centroids.cols(); ++e)
    buckets[key(centroids.col(e), cell)].push_back(e);
}

void SpatialHash::query(const Eigen::VectorXd& x, std::vector<int>& out) const {
  out.clear();
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd p = x;
  const int zlo = d > 2 ? -1 : 0, zhi = d > 2 ? 1 : 0;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = zlo; dz <= zhi; ++dz) {
        p = x;
        p[0] += dx * cell;
        p[1] += dy * cell;
        if (d > 2) p[2] += dz * cell;
        auto it = buckets.find(key(p, cell));
        if (it == buckets.end()) continue;
        out.insert(out.end(), it->second.begin(), it->second.end());
      }
  std::sort(out.begin(), out.end());
}

// ---- feature set ----------------------------------------------------------

void FeatureSet::check() const {
  if (dim != 2 && dim != 3) throw Error("FeatureSet: dim must be 2 or 3");
  if (V.rows() != dim) throw Error("FeatureSet: vertex matrix row count != dim");
  if (!V.allFinite()) throw Error("FeatureSet: non-finite vertex position");
  if (n_channels < 1) throw Error("FeatureSet: n_channels must be >= 1");
  if (channel.size() != elems.size())
    throw Error("FeatureSet: channel list length != element count");
  if (mollifier.radius <= 0) throw Error("FeatureSet: mollifier radius must be > 0");
  if (mollifier.normalizer <= 0) throw Error("FeatureSet: mollifier normalizer must be > 0");
  const int nv = static_cast<int>(V.cols());
  for (size_t e = 0; e < elems.size(); ++e) {
    const auto& el = elems[e];
    const int arity = dim == 2 ? 2 : 3;
    for (int i = 0; i < arity; ++i)
      if (el[i] < 0 || el[i] >= nv) throw Error("FeatureSet: element vertex out of range");
    if (dim == 2 && el[2] != -1)
      throw Error("FeatureSet: 2D elements must be segments");
    if (dim == 2 && el[0] == el[1]) throw Error("FeatureSet: degenerate segment");
    if (dim == 3 && (el[0] == el[1] || el[1] == el[2] || el[0] == el[2]))
      throw Error("FeatureSet: degenerate triangle");
    if (channel[e] < 0 || channel[e] >= n_channels)
      throw Error("FeatureSet: element channel out of range");
  }
}

Eigen::VectorXd FeatureSet::centroid(int e) const {
  const auto& el = elems[e];
  if (dim == 2) return 0.5 * (V.col(el[0]) + V.col(el[1]));
  return (V.col(el[0]) + V.col(el[1]) + V.col(el[2])) / 3.0;
}

void FeatureSet::rebuild_acceleration() {
  Eigen::MatrixXd c(dim, static_cast<int>(elems.size()));
  for (int e = 0; e < c.cols(); ++e) c.col(e) = centroid(e);
  hash.build(c, mollifier.radius);
}

void FeatureSet::set_vertices(const Eigen::MatrixXd& positions) {
  if (positions.rows() != V.rows() || positions.cols() != V.cols())
    throw Error("FeatureSet::set_vertices: shape mismatch");
  if (!positions.allFinite())
    throw Error("FeatureSet::set_vertices: non-finite position");
  V = positions;
  rebuild_acceleration();
}

FeatureSet feature_set_from_graph(const FeatureGraph& g, const MollifierConfig& cfg) {
  g.check();
  if (g.dim != 2)
    throw Error("feature_set_from_graph: expects a 2D graph (3D sets come from strips)");
  if (g.color.size() != g.edges.size())
    throw Error("feature_set_from_graph: graph edges must be colored first");
  FeatureSet fs;
  fs.dim = 2;
  fs.V = g.V;
  fs.mollifier = cfg;
  int maxc = -1;
  for (size_t e = 0; e < g.edges.size(); ++e) {
    if (g.color[e] < 0) throw Error("feature_set_from_graph: uncolored edge");
    fs.elems.push_back({g.edges[e][0], g.edges[e][1], -1});
    fs.channel.push_back(g.color[e]);
    maxc = std::max(maxc, g.color[e]);
  }
  fs.n_channels = maxc + 1;
  fs.check();
  fs.rebuild_acceleration();
  return fs;
}

// ---- evaluation -----------------------------------------------------------

namespace {

/// d(phi)/d(arg) at t, given w = phi(t).
inline double mollifier_slope(double t, double w) {
  double om = 1.0 - t * t;
  return w * (-2.0 * t / (om * om));
}

/// Shared forward loop.  `mode` picks how much work per element is done.
enum class EvalMode { kValues, kJet, kFull };

void eval_core(const Eigen::VectorXd& x, const FeatureSet& fs, EvalMode mode,
               FeatureEval& out) {
  const int n = fs.n_channels, d = fs.dim;
  out.values = Eigen::VectorXd::Zero(n);
  if (mode != EvalMode::kValues) out.grad_query = Eigen::MatrixXd::Zero(n, d);
  out.grad_vertices.clear();
  out.one_sided = false;

  std::vector<int> cand;
  fs.hash.query(x, cand);
  const double rho2 = fs.mollifier.radius * fs.mollifier.radius;
  const double inv_norm = 1.0 / fs.mollifier.normalizer;

  for (int e : cand) {
    Eigen::VectorXd c = fs.centroid(e);
    const double q = (x - c).squaredNorm();
    if (q >= rho2) continue;
    const double t = q / rho2;
    const double w = mollifier_t(t, inv_norm);
    if (w == 0.0) continue;
    const int k = fs.channel[e];
    const auto& el = fs.elems[e];

    if (mode == EvalMode::kValues) {
      double F;
      if (d == 2) {
        Segment s{Point2(fs.V(0, el[0]), fs.V(1, el[0])),
                  Point2(fs.V(0, el[1]), fs.V(1, el[1]))};
        F = green::integral_segment(Point2(x[0], x[1]), s);
      } else {
        Triangle tr{fs.V.col(el[0]), fs.V.col(el[1]), fs.V.col(el[2])};
        F = green::integral_triangle(Point3(x[0], x[1], x[2]), tr);
      }
      out.values[k] += fs.scale * w * F;
      continue;
    }

    // Product rule: d(wF) = w dF + F dw, with dw through the centroid.
    const double dwdq = mollifier_slope(t, w) / rho2;
    Eigen::VectorXd gw = 2.0 * dwdq * (x - c);  // dw/dx; dw/dvertex = -gw/arity

    if (d == 2) {
      Segment s{Point2(fs.V(0, el[0]), fs.V(1, el[0])),
                Point2(fs.V(0, el[1]), fs.V(1, el[1]))};
      green::KernelEval2 kv =
          green::integral_with_grads_one_sided(Point2(x[0], x[1]), s);
      if (kv.one_sided) out.one_sided = true;
      out.values[k] += fs.scale * w * kv.value;
      out.grad_query.row(k) +=
          fs.scale * (w * kv.grad_query + kv.value * Eigen::Vector2d(gw)).transpose();
      if (mode == EvalMode::kFull) {
        for (int i = 0; i < 2; ++i) {
          auto& m = out.grad_vertices.try_emplace(el[i], Eigen::MatrixXd::Zero(n, d))
                        .first->second;
          m.row(k) += fs.scale *
                      (w * kv.grad_vertices[i] - 0.5 * kv.value * Eigen::Vector2d(gw))
                          .transpose();
        }
      }
    } else {
      Triangle tr{fs.V.col(el[0]), fs.V.col(el[1]), fs.V.col(el[2])};
      green::KernelEval3 kv =
          green::integral_with_grads_one_sided(Point3(x[0], x[1], x[2]), tr);
      if (kv.one_sided) out.one_sided = true;
      out.values[k] += fs.scale * w * kv.value;
      out.grad_query.row(k) +=
          fs.scale * (w * kv.grad_query + kv.value * Eigen::Vector3d(gw)).transpose();
      if (mode == EvalMode::kFull) {
        for (int i = 0; i < 3; ++i) {
          auto& m = out.grad_vertices.try_emplace(el[i], Eigen::MatrixXd::Zero(n, d))
                        .first->second;
          m.row(k) +=
              fs.scale *
              (w * kv.grad_vertices[i] - kv.value / 3.0 * Eigen::Vector3d(gw))
                  .transpose();
        }
      }
    }
  }
}

}  // namespace

FeatureEval eval_feature(const Eigen::VectorXd& x, const FeatureSet& fs) {
  FeatureEval out;
  eval_core(x, fs, EvalMode::kFull, out);
  return out;
}

Eigen::VectorXd eval_values(const Eigen::VectorXd& x, const FeatureSet& fs) {
  FeatureEval out;
  eval_core(x, fs, EvalMode::kValues, out);
  return std::move(out.values);
}

void eval_jet(const Eigen::VectorXd& x, const FeatureSet& fs, Eigen::VectorXd& f,
              Eigen::MatrixXd& J, bool* one_sided) {
  FeatureEval out;
  eval_core(x, fs, EvalMode::kJet, out);
  f = std::move(out.values);
  J = std::move(out.grad_query);
  if (one_sided) *one_sided = out.one_sided;
}

// ---- reverse-mode with exact second derivatives ---------------------------

namespace {

/// Nested-dual element pass.  Inner duals differentiate in x (D slots), outer
/// duals in x and the element vertices (D + NV*D slots), so one evaluation
/// yields value, both first gradients, the x-Hessian and the mixed
/// d^2 f / dx dv blocks.
template <int D, int NV>
void backward_element(const Eigen::VectorXd& x, const FeatureSet& fs, int e,
                      double fbar_k, const Eigen::MatrixXd& Jbar, int k,
                      std::map<int, Eigen::VectorXd>& vertex_bar,
                      Eigen::VectorXd* x_bar) {
  using In = Dual<double, D>;
  using T = Dual<In, D + NV * D>;
  const auto& el = fs.elems[e];
  const bool want_j = Jbar.size() != 0;

  std::array<T, D> xs;
  for (int i = 0; i < D; ++i) {
    xs[i] = T(In::var(x[i], i));
    xs[i].d[i] = In(1.0);
  }
  std::array<std::array<T, D>, NV> vs;
  for (int t = 0; t < NV; ++t)
    for (int c = 0; c < D; ++c) {
      vs[t][c] = T(In(fs.V(c, el[t])));
      vs[t][c].d[D + t * D + c] = In(1.0);
    }

  // centroid + mollifier weight
  T q = T(0.0);
  std::array<T, D> diff;
  for (int c = 0; c < D; ++c) {
    T cen = vs[0][c];
    for (int t = 1; t < NV; ++t) cen = cen + vs[t][c];
    cen = cen / double(NV);
    diff[c] = xs[c] - cen;
    q = q + diff[c] * diff[c];
  }
  const double rho2 = fs.mollifier.radius * fs.mollifier.radius;
  if (leading(q) >= rho2) return;
  T w = mollifier_t(q / rho2, 1.0 / fs.mollifier.normalizer);
  if (leading(w) == 0.0) return;

  T r;
  if constexpr (D == 2) {
    green_forms::V2<T> xv{xs[0], xs[1]}, av{vs[0][0], vs[0][1]},
        bv{vs[1][0], vs[1][1]};
    r = w * green_forms::segment_potential(xv, av, bv);
  } else {
    green_forms::V3<T> xv{xs[0], xs[1], xs[2]}, av{vs[0][0], vs[0][1], vs[0][2]},
        bv{vs[1][0], vs[1][1], vs[1][2]}, cv{vs[2][0], vs[2][1], vs[2][2]};
    r = w * green_forms::triangle_potential(xv, av, bv, cv);
  }

  const double s = fs.scale;
  for (int t = 0; t < NV; ++t) {
    auto& acc = vertex_bar.try_emplace(el[t], Eigen::VectorXd::Zero(D)).first->second;
    for (int c = 0; c < D; ++c) {
      const In& slot = r.d[D + t * D + c];
      double g = fbar_k * slot.v;
      if (want_j)
        for (int j = 0; j < D; ++j) g += Jbar(k, j) * slot.d[j];
      acc[c] += s * g;
    }
  }
  if (x_bar) {
    for (int i = 0; i < D; ++i) {
      const In& slot = r.d[i];
      double g = fbar_k * slot.v;
      if (want_j)
        for (int j = 0; j < D; ++j) g += Jbar(k, j) * slot.d[j];
      (*x_bar)[i] += s * g;
    }
  }
}

}  // namespace

void feature_backward(const Eigen::VectorXd& x, const FeatureSet& fs,
                      const Eigen::VectorXd& fbar, const Eigen::MatrixXd& Jbar,
                      std::map<int, Eigen::VectorXd>& vertex_bar,
                      Eigen::VectorXd* x_bar) {
  if (fbar.size() != fs.n_channels)
    throw Error("feature_backward: fbar size != n_channels");
  if (Jbar.size() != 0 &&
      (Jbar.rows() != fs.n_channels || Jbar.cols() != fs.dim))
    throw Error("feature_backward: Jbar shape mismatch");
  std::vector<int> cand;
  fs.hash.query(x, cand);
  for (int e : cand) {
    const int k = fs.channel[e];
    if (fbar[k] == 0.0 && (Jbar.size() == 0 || Jbar.row(k).isZero(0.0))) continue;
    if (fs.dim == 2)
      backward_element<2, 2>(x, fs, e, fbar[k], Jbar, k, vertex_bar, x_bar);
    else
      backward_element<3, 3>(x, fs, e, fbar[k], Jbar, k, vertex_bar, x_bar);
  }
}

// ---- probes and calibration ----------------------------------------------

double jump_probe(const FeatureSet& fs, const Eigen::VectorXd& x0,
                  const Eigen::VectorXd& n, double eps) {
  if (eps <= 0) throw Error("jump_probe: eps must be > 0");
  bool on = false;
  for (size_t e = 0; e < fs.elems.size() && !on; ++e) {
    const auto& el = fs.elems[e];
    if (fs.dim == 2) {
      Segment s{Point2(fs.V(0, el[0]), fs.V(1, el[0])),
                Point2(fs.V(0, el[1]), fs.V(1, el[1]))};
      on = green::distance_to_segment(Point2(x0[0], x0[1]), s) < green::kOnElementTol;
    } else {
      Triangle t{fs.V.col(el[0]), fs.V.col(el[1]), fs.V.col(el[2])};
      on = green::distance_to_triangle(Point3(x0[0], x0[1], x0[2]), t) <
           green::kOnElementTol;
    }
  }
  if (!on) throw Error("jump_probe: x0 does not lie on any feature element");

  Eigen::VectorXd nu = n / n.norm();
  Eigen::VectorXd xp = x0 + eps * nu, xm = x0 - eps * nu;
  FeatureEval up = eval_feature(xp, fs), dn = eval_feature(xm, fs);
  double dplus = 0, dminus = 0;
  for (int k = 0; k < fs.n_channels; ++k) {
    dplus += up.grad_query.row(k).dot(nu);
    dminus += dn.grad_query.row(k).dot(nu);
  }
  return dplus - dminus;
}

double compute_feature_scale(const FeatureSet& fs,
                             const std::vector<Eigen::VectorXd>& batch) {
  if (batch.empty()) return 1.0;
  FeatureSet raw = fs;
  raw.scale = 1.0;
  double sq = 0;
  std::int64_t n_entries = 0;
  for (const auto& x : batch) {
    sq += eval_values(x, raw).squaredNorm();
    n_entries += fs.n_channels;
  }
  if (n_entries == 0) return 1.0;
  double rms = std::sqrt(sq / static_cast<double>(n_entries));
  if (!(rms > 1e-300)) return 1.0;
  return 1.0 / rms;
}

}  // namespace sharpfield::feature
