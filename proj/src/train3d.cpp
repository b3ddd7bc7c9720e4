#include "sharpfield/train3d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>

#include "sharpfield/common.hpp"
#include "sharpfield/io.hpp"
#include "sharpfield/kdtree.hpp"
#include "sharpfield/train2d.hpp"

namespace sharpfield::train3d {

// ---- loss weights ----------------------------------------------------------

Loss3DWeights Loss3DWeights::mesh_preset() {
  Loss3DWeights w;
  w.alpha_sur = 7000.0;
  w.alpha_ext = 600.0;
  w.alpha_ekl = 50.0;
  w.alpha_nor = 15.0;
  w.alpha_reg = 0.0;
  return w;
}

Loss3DWeights Loss3DWeights::points_normals_preset() {
  Loss3DWeights w;
  w.alpha_sur = 7000.0;
  w.alpha_ext = 600.0;
  w.alpha_ekl = 35.0;
  w.alpha_nor = 15.0;
  w.alpha_reg = 10.0;
  return w;
}

Loss3DWeights Loss3DWeights::points_preset() {
  Loss3DWeights w;
  w.alpha_sur = 7000.0;
  w.alpha_ext = 600.0;
  w.alpha_ekl = 50.0;
  w.alpha_nor = 0.0;
  w.alpha_reg = 10.0;
  return w;
}

void Loss3DWeights::check() const {
  if (alpha_sur < 0 || alpha_ext < 0 || alpha_ekl < 0 || alpha_nor < 0 ||
      alpha_reg < 0)
    throw Error("Loss3DWeights: negative weight");
  if (!(alpha_exp > 0)) throw Error("Loss3DWeights: alpha_exp must be positive");
  if (lambda < 0 || lambda > 1) throw Error("Loss3DWeights: lambda outside [0,1]");
}

Loss3DWeights preset_for(Mode mode) {
  switch (mode) {
    case Mode::mesh: return Loss3DWeights::mesh_preset();
    case Mode::points_normals: return Loss3DWeights::points_normals_preset();
    case Mode::points: return Loss3DWeights::points_preset();
  }
  throw Error("preset_for: unknown mode");
}

// ---- domain normalization --------------------------------------------------

NormalizeTransform normalize_transform(const Eigen::MatrixXd& P, double margin) {
  if (P.cols() == 0) throw Error("normalize_transform: empty point set");
  if (P.rows() != 3) throw Error("normalize_transform: points must be 3 x n");
  const Eigen::Vector3d lo = P.rowwise().minCoeff();
  const Eigen::Vector3d hi = P.rowwise().maxCoeff();
  const double half = 0.5 * (hi - lo).maxCoeff();
  if (!(half > 0)) throw Error("normalize_transform: degenerate (zero-extent) input");
  NormalizeTransform t;
  t.center = 0.5 * (lo + hi);
  t.scale = (1.0 - margin) / half;
  return t;
}

void apply_transform(const NormalizeTransform& t, PointCloud& cloud) {
  for (auto& p : cloud.p) p = t.to_normalized(p);
}

void apply_transform(const NormalizeTransform& t, TriMesh& mesh) {
  for (auto& p : mesh.v) p = t.to_normalized(p);
}

void apply_transform(const NormalizeTransform& t, FeatureGraph& graph) {
  if (graph.dim != 3) throw Error("apply_transform: graph must be 3D");
  for (int i = 0; i < graph.n_vertices(); ++i)
    graph.V.col(i) = t.to_normalized(Point3(graph.V.col(i)));
}

// ---- sampling protocol -----------------------------------------------------

void SamplingConfig::check() const {
  if (surface_total <= 0 || per_epoch_surface <= 0 || per_epoch_near <= 0 ||
      per_epoch_ambient <= 0 || knn <= 0 || epochs < 0)
    throw Error("SamplingConfig: counts must be positive (epochs >= 0)");
  if (!(ambient_halfwidth > 0)) throw Error("SamplingConfig: bad ambient halfwidth");
}

namespace {

/// sigma(i) = distance from P.col(i) to its rank-th nearest neighbor in the
/// tree, self excluded (queries are tree members, so the 0-distance hit is
/// dropped).
Eigen::VectorXd knn_sigmas(const Eigen::MatrixXd& P, const KdTree<3>& tree, int rank) {
  Eigen::VectorXd sigma(P.cols());
  std::vector<int> idx;
  std::vector<double> d2;
  for (int i = 0; i < P.cols(); ++i) {
    tree.knearest(P.col(i), rank + 1, idx, d2);
    sigma(i) = std::sqrt(d2.back());
  }
  return sigma;
}

}  // namespace

SurfacePool pool_from_mesh(const TriMesh& mesh, const SamplingConfig& cfg, Rng& rng) {
  cfg.check();
  const int nf = static_cast<int>(mesh.f.size());
  if (nf == 0) throw Error("pool_from_mesh: mesh has no faces");
  std::vector<double> cum(nf);
  double total = 0;
  for (int f = 0; f < nf; ++f) {
    total += mesh.face_area(f);
    cum[f] = total;
  }
  if (!(total > 0)) throw Error("pool_from_mesh: zero total area");

  const int n = cfg.surface_total;
  SurfacePool pool;
  pool.P.resize(3, n);
  pool.N.resize(3, n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const int f = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) -
                                   cum.begin());
    const int fc = std::min(f, nf - 1);
    const Point3 a = mesh.v[mesh.f[fc][0]], b = mesh.v[mesh.f[fc][1]],
                 c = mesh.v[mesh.f[fc][2]];
    double r1 = rng.uniform(), r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    pool.P.col(i) = a + r1 * (b - a) + r2 * (c - a);
    pool.N.col(i) = mesh.face_normal(fc);
  }

  std::vector<Point3> pts(n);
  for (int i = 0; i < n; ++i) pts[i] = pool.P.col(i);
  const KdTree<3> tree(std::move(pts));
  pool.sigma = knn_sigmas(pool.P, tree, cfg.knn);
  return pool;
}

SurfacePool pool_from_cloud(const PointCloud& cloud, const SamplingConfig& cfg,
                            Rng& rng) {
  cfg.check();
  const int nc = static_cast<int>(cloud.p.size());
  if (nc == 0) throw Error("pool_from_cloud: empty cloud");
  if (cloud.has_normals() && cloud.n.size() != cloud.p.size())
    throw Error("pool_from_cloud: normal count mismatch");

  std::vector<int> pick(nc);
  std::iota(pick.begin(), pick.end(), 0);
  const int n = std::min(cfg.surface_total, nc);
  // Partial Fisher-Yates: the first n entries become the subsample.
  for (int i = 0; i < n; ++i) {
    const int j = i + rng.index(nc - i);
    std::swap(pick[i], pick[j]);
  }

  SurfacePool pool;
  pool.P.resize(3, n);
  if (cloud.has_normals()) pool.N.resize(3, n);
  for (int i = 0; i < n; ++i) {
    pool.P.col(i) = cloud.p[pick[i]];
    if (cloud.has_normals()) pool.N.col(i) = cloud.n[pick[i]];
  }

  // sigma against the full cloud, not just the subsample.
  std::vector<Point3> pts = cloud.p;
  const KdTree<3> tree(std::move(pts));
  pool.sigma = knn_sigmas(pool.P, tree, cfg.knn);
  return pool;
}

void sample_batch(const SurfacePool& pool, const SamplingConfig& cfg, Rng& rng,
                  SampleBatch& out) {
  cfg.check();
  const int n = pool.size();
  if (n == 0) throw Error("sample_batch: empty pool");
  const int ns = cfg.per_epoch_surface;
  const bool with_replacement = n < ns;
  if (with_replacement) {
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr,
                   "warning: surface pool (%d) smaller than the per-epoch draw "
                   "(%d); sampling with replacement\n",
                   n, ns);
      warned = true;
    }
  }

  std::vector<int> chosen(ns);
  if (with_replacement) {
    for (int i = 0; i < ns; ++i) chosen[i] = rng.index(n);
  } else {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < ns; ++i) {
      const int j = i + rng.index(n - i);
      std::swap(idx[i], idx[j]);
      chosen[i] = idx[i];
    }
  }

  out.surface.resize(3, ns);
  if (pool.has_normals())
    out.normals.resize(3, ns);
  else
    out.normals.resize(3, 0);
  for (int i = 0; i < ns; ++i) {
    out.surface.col(i) = pool.P.col(chosen[i]);
    if (pool.has_normals()) out.normals.col(i) = pool.N.col(chosen[i]);
  }

  // One Gaussian perturbation per drawn surface point, truncated to the first
  // per_epoch_near draws (or cycling when more near points than surface draws
  // are requested).
  const int nn = cfg.per_epoch_near;
  out.near_pts.resize(3, nn);
  for (int i = 0; i < nn; ++i) {
    const int src = chosen[i % ns];
    Point3 g(rng.normal(), rng.normal(), rng.normal());
    out.near_pts.col(i) = pool.P.col(src) + pool.sigma(src) * g;
  }

  const double h = cfg.ambient_halfwidth;
  out.ambient.resize(3, cfg.per_epoch_ambient);
  for (int i = 0; i < cfg.per_epoch_ambient; ++i)
    out.ambient.col(i) =
        Point3(rng.uniform(-h, h), rng.uniform(-h, h), rng.uniform(-h, h));
}

// ---- loss ------------------------------------------------------------------

namespace {

std::uint64_t hash_doubles(std::uint64_t h, std::initializer_list<double> vals) {
  for (double v : vals) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    h ^= bits;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Everything one loss evaluation produces, kept around so the training step
/// can run the backward pass on exactly the quantities the loss used.
struct LossEval {
  LossTerms terms;
  Eigen::MatrixXd X;             // 3 x B, [surface | near | ambient]
  Eigen::MatrixXd F;             // n_feat x B raw feature values
  std::vector<Eigen::MatrixXd> J;  // per sample n_feat x 3 (empty when n_feat=0)
  nnet::FieldBatch fb;
  Eigen::MatrixXd g;             // 3 x B composed gradients (surface+near only)
  int ns = 0, nn = 0, na = 0;
};

void check_loss_inputs(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                       const SampleBatch& batch, const Loss3DWeights& w, Mode mode) {
  w.check();
  const int nf = m.arch.n_feat;
  if (nf != 0 && nf != fs.n_channels)
    throw Error("loss_sdf: model/feature channel mismatch");
  const bool have_n = batch.normals.cols() > 0;
  if (have_n && batch.normals.cols() != batch.surface.cols())
    throw Error("loss_sdf: normal/surface count mismatch");
  if (mode == Mode::points_normals && !have_n)
    throw Error("loss_sdf: points_normals mode requires oriented normals");
  if (w.alpha_nor > 0 && !have_n)
    throw Error("loss_sdf: normal term requires oriented normals");
}

void eval_loss(const nnet::MlpModel& m, const feature::FeatureSet& fs,
               const SampleBatch& batch, const Loss3DWeights& w, Mode mode,
               const std::vector<std::array<int, 2>>& rails, LossEval& ev) {
  check_loss_inputs(m, fs, batch, w, mode);
  const int nf = m.arch.n_feat;
  ev.ns = static_cast<int>(batch.surface.cols());
  ev.nn = static_cast<int>(batch.near_pts.cols());
  ev.na = static_cast<int>(batch.ambient.cols());
  const int B = ev.ns + ev.nn + ev.na;
  if (B == 0) throw Error("loss_sdf: empty batch");

  ev.X.resize(3, B);
  ev.X.leftCols(ev.ns) = batch.surface;
  ev.X.middleCols(ev.ns, ev.nn) = batch.near_pts;
  ev.X.rightCols(ev.na) = batch.ambient;

  ev.F.resize(nf, B);
  ev.J.assign(nf > 0 ? B : 0, Eigen::MatrixXd());
  if (nf > 0) {
    Eigen::VectorXd f;
    for (int i = 0; i < B; ++i) {
      feature::eval_jet(ev.X.col(i), fs, f, ev.J[i], nullptr);
      ev.F.col(i) = f;
    }
  }

  nnet::field_forward(m, ev.X, ev.F, true, ev.fb);

  // Composed spatial gradient on the samples the gradient terms look at.
  const int ng = ev.ns + ev.nn;
  ev.g.resize(3, ng);
  for (int i = 0; i < ng; ++i) {
    Point3 gi = ev.fb.grad_x.col(i);
    if (nf > 0) gi += ev.J[i].transpose() * ev.fb.q.col(i);
    ev.g.col(i) = gi;
  }

  LossTerms& t = ev.terms;
  t = LossTerms();
  for (int i = 0; i < ev.ns; ++i) t.sur += std::abs(ev.fb.phi(i));
  if (ev.ns > 0) t.sur /= ev.ns;

  if (batch.normals.cols() > 0) {
    for (int i = 0; i < ev.ns; ++i)
      t.nor += (ev.g.col(i) - batch.normals.col(i)).norm();
    if (ev.ns > 0) t.nor /= ev.ns;
  }

  for (int i = 0; i < ng; ++i) t.ekl += std::abs(1.0 - ev.g.col(i).norm());
  if (ng > 0) t.ekl /= ng;

  for (int i = 0; i < ev.na; ++i)
    t.ext += std::exp(-w.alpha_exp * std::abs(ev.fb.phi(ev.ns + ev.nn + i)));
  if (ev.na > 0) t.ext /= ev.na;

  if (!rails.empty()) t.reg = train2d::polyline_regularizer(fs.V, rails, w.lambda);

  t.total = w.alpha_sur * t.sur + w.alpha_ext * t.ext + w.alpha_ekl * t.ekl +
            w.alpha_nor * t.nor + w.alpha_reg * t.reg;
}

}  // namespace

LossTerms loss_sdf(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                   const SampleBatch& batch, const Loss3DWeights& w, Mode mode,
                   const std::vector<std::array<int, 2>>& rails) {
  LossEval ev;
  eval_loss(m, fs, batch, w, mode, rails, ev);
  return ev.terms;
}

// ---- training --------------------------------------------------------------

std::uint64_t Train3DConfig::config_hash() const {
  std::uint64_t h = fnv1a("sdf3d");
  h = hash_doubles(
      h, {static_cast<double>(sampling.surface_total),
          static_cast<double>(sampling.per_epoch_surface),
          static_cast<double>(sampling.per_epoch_near),
          static_cast<double>(sampling.per_epoch_ambient),
          static_cast<double>(sampling.knn), static_cast<double>(sampling.epochs),
          sampling.ambient_halfwidth, weights.alpha_sur, weights.alpha_ext,
          weights.alpha_ekl, weights.alpha_nor, weights.alpha_reg, weights.alpha_exp,
          weights.lambda, static_cast<double>(width),
          static_cast<double>(hidden_layers), static_cast<double>(static_cast<int>(act)),
          static_cast<double>(pe), use_features ? 1.0 : 0.0, lr, lr_decay,
          lr_vertices, static_cast<double>(seed)});
  return h;
}

namespace {

double lr_schedule(double decay, long it, long total) {
  if (total <= 1 || decay == 1.0) return 1.0;
  return std::pow(decay, static_cast<double>(it) / static_cast<double>(total - 1));
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Loss cotangents: d total / d phi and d total / d g per sample.
void loss_cotangents(const LossEval& ev, const SampleBatch& batch,
                     const Loss3DWeights& w, Eigen::RowVectorXd& phibar,
                     Eigen::MatrixXd& gbar) {
  const int B = static_cast<int>(ev.X.cols());
  const int ng = ev.ns + ev.nn;
  phibar.setZero(B);
  gbar.setZero(3, ng);

  const double csur = ev.ns > 0 ? w.alpha_sur / ev.ns : 0.0;
  const double cnor = ev.ns > 0 ? w.alpha_nor / ev.ns : 0.0;
  const double cekl = ng > 0 ? w.alpha_ekl / ng : 0.0;
  const double cext = ev.na > 0 ? w.alpha_ext / ev.na : 0.0;

  for (int i = 0; i < ev.ns; ++i) {
    phibar(i) += csur * sgn(ev.fb.phi(i));
    if (cnor != 0.0 && batch.normals.cols() > 0) {
      const Point3 d = ev.g.col(i) - batch.normals.col(i);
      const double dn = d.norm();
      if (dn > 1e-300) gbar.col(i) += cnor * d / dn;
    }
  }
  for (int i = 0; i < ng; ++i) {
    const double gn = ev.g.col(i).norm();
    if (gn > 1e-300) gbar.col(i) += cekl * -sgn(1.0 - gn) * ev.g.col(i) / gn;
  }
  for (int i = 0; i < ev.na; ++i) {
    const int col = ev.ns + ev.nn + i;
    const double phi = ev.fb.phi(col);
    phibar(col) += cext * std::exp(-w.alpha_exp * std::abs(phi)) * -w.alpha_exp *
                   sgn(phi);
  }
}

}  // namespace

Train3DResult train_sdf(const SurfacePool& pool, const feature::FeatureSet& fs0,
                        const std::vector<std::array<int, 2>>& rails,
                        const Train3DConfig& cfg, Mode mode) {
  cfg.sampling.check();
  cfg.weights.check();
  if (pool.size() == 0) throw Error("train_sdf: empty pool");
  if ((mode == Mode::points_normals || mode == Mode::mesh) && !pool.has_normals() &&
      cfg.weights.alpha_nor > 0)
    throw Error("train_sdf: mode requires a pool with normals");

  const bool learnable = mode != Mode::mesh && cfg.use_features;

  Train3DResult res;
  res.fs = fs0;
  res.fs.rebuild_acceleration();

  // Independent streams: ablations with a different parameter count draw the
  // same data sequence.
  Rng rng_init(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  Rng rng_batch(cfg.seed);

  nnet::MlpArch arch;
  arch.d = 3;
  arch.n_feat = cfg.use_features ? res.fs.n_channels : 0;
  arch.hidden_layers = cfg.hidden_layers;
  arch.width = cfg.width;
  arch.act = cfg.act;
  arch.pe = cfg.pe;
  res.model = nnet::init_model(arch, rng_init);
  // RMS-1 feature scaling over the first epoch's sample batch (drawn from a
  // copy of the batch stream so the training sequence is unchanged), frozen
  // for the rest of the run; see train2d::train_geodesic for the rationale.
  if (cfg.use_features) {
    Rng rng_probe = rng_batch;
    SampleBatch probe;
    sample_batch(pool, cfg.sampling, rng_probe, probe);
    std::vector<Eigen::VectorXd> init_batch;
    init_batch.reserve(probe.surface.cols() + probe.near_pts.cols() +
                       probe.ambient.cols());
    for (const auto* M : {&probe.surface, &probe.near_pts, &probe.ambient})
      for (int i = 0; i < M->cols(); ++i) init_batch.push_back(M->col(i));
    res.fs.scale = feature::compute_feature_scale(res.fs, init_batch);
  }

  res.stamp = ArtifactStamp{cfg.seed, cfg.config_hash()};

  nnet::AdamState adam_theta, adam_verts;
  adam_theta.lr = cfg.lr;
  adam_verts.lr = cfg.lr_vertices;

  const int nv = static_cast<int>(res.fs.V.cols());
  Eigen::VectorXd vert_params(3 * nv);
  for (int i = 0; i < nv; ++i) vert_params.segment<3>(3 * i) = res.fs.V.col(i);

  Eigen::VectorXd last_good_theta = res.model.theta;
  Eigen::MatrixXd last_good_V = res.fs.V;
  LossTerms last_terms;

  const std::vector<std::array<int, 2>> reg_rails =
      learnable && cfg.weights.alpha_reg > 0 ? rails
                                             : std::vector<std::array<int, 2>>();

  SampleBatch batch;
  LossEval ev;
  Eigen::VectorXd tg(arch.param_count());
  Eigen::RowVectorXd phibar;
  Eigen::MatrixXd gbar;

  for (long epoch = 0; epoch < cfg.sampling.epochs; ++epoch) {
    const double fac = lr_schedule(cfg.lr_decay, epoch, cfg.sampling.epochs);
    adam_theta.lr = cfg.lr * fac;
    adam_verts.lr = cfg.lr_vertices * fac;

    sample_batch(pool, cfg.sampling, rng_batch, batch);
    eval_loss(res.model, res.fs, batch, cfg.weights, mode, reg_rails, ev);

    if (!std::isfinite(ev.terms.total)) {
      std::fprintf(stderr,
                   "warning: non-finite loss at epoch %ld; stopping with the "
                   "last good state\n",
                   epoch);
      res.model.theta = last_good_theta;
      if (learnable) res.fs.set_vertices(last_good_V);
      res.aborted = true;
      res.aborted_at_epoch = epoch;
      break;
    }
    last_terms = ev.terms;

    loss_cotangents(ev, batch, cfg.weights, phibar, gbar);

    const int nf = arch.n_feat;
    const int ng = ev.ns + ev.nn;
    Eigen::MatrixXd gxbar = Eigen::MatrixXd::Zero(3, ev.X.cols());
    gxbar.leftCols(ng) = gbar;
    Eigen::MatrixXd qbar;
    if (nf > 0) {
      qbar.setZero(nf, ev.X.cols());
      for (int i = 0; i < ng; ++i) qbar.col(i) = ev.J[i] * gbar.col(i);
    }

    tg.setZero();
    Eigen::MatrixXd fbar;
    nnet::field_backward(res.model, ev.fb, phibar, gxbar, qbar, tg, nullptr,
                         learnable ? &fbar : nullptr);
    nnet::adam_step(res.model.theta, tg, adam_theta);

    if (learnable) {
      std::map<int, Eigen::VectorXd> vertex_bar;
      // Values path (fbar) and Jacobian path (q gbar^T) through every sample.
      for (int i = 0; i < static_cast<int>(ev.X.cols()); ++i) {
        Eigen::VectorXd fb_i = fbar.col(i);
        Eigen::MatrixXd Jbar;
        if (i < ng) Jbar = ev.fb.q.col(i) * gbar.col(i).transpose();
        if (fb_i.isZero() && (Jbar.size() == 0 || Jbar.isZero())) continue;
        feature::feature_backward(ev.X.col(i), res.fs, fb_i, Jbar, vertex_bar);
      }
      if (!reg_rails.empty())
        train2d::polyline_regularizer_grad(res.fs.V, reg_rails, cfg.weights.lambda,
                                           cfg.weights.alpha_reg, vertex_bar);

      Eigen::VectorXd vg = Eigen::VectorXd::Zero(vert_params.size());
      for (const auto& [vi, g] : vertex_bar) vg.segment<3>(3 * vi) = g;
      nnet::adam_step(vert_params, vg, adam_verts);
      Eigen::MatrixXd V(3, nv);
      for (int i = 0; i < nv; ++i) V.col(i) = vert_params.segment<3>(3 * i);
      if (!V.allFinite()) {
        std::fprintf(stderr,
                     "warning: non-finite vertex update at epoch %ld; stopping "
                     "with the last good state\n",
                     epoch);
        res.model.theta = last_good_theta;
        res.fs.set_vertices(last_good_V);
        res.aborted = true;
        res.aborted_at_epoch = epoch;
        break;
      }
      res.fs.set_vertices(V);
    }

    last_good_theta = res.model.theta;
    if (learnable) last_good_V = res.fs.V;

    if ((epoch + 1) % cfg.log_every == 0 || epoch + 1 == cfg.sampling.epochs) {
      TrainRow3D row;
      row.epoch = epoch + 1;
      row.terms = ev.terms;
      res.log.push_back(row);
    }
  }

  res.final_terms = last_terms;
  if (!cfg.csv_path.empty()) write_train3d_csv(cfg.csv_path, res.log, res.stamp);
  return res;
}

void write_train3d_csv(const std::string& path, const std::vector<TrainRow3D>& rows,
                       const ArtifactStamp& stamp) {
  std::ofstream os(path);
  if (!os) throw Error("write_train3d_csv: cannot open " + path);
  os << "# seed=" << stamp.seed << " config=" << stamp.config_hash << "\n";
  os << "epoch,loss,sur,ext,ekl,nor,reg\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << format_double(r.terms.total) << ','
       << format_double(r.terms.sur) << ',' << format_double(r.terms.ext) << ','
       << format_double(r.terms.ekl) << ',' << format_double(r.terms.nor) << ','
       << format_double(r.terms.reg) << "\n";
  }
  if (!os) throw Error("write_train3d_csv: write failed for " + path);
}

std::map<int, Point3> loss_sdf_vertex_grads(const nnet::MlpModel& m,
                                            const feature::FeatureSet& fs,
                                            const SampleBatch& batch,
                                            const Loss3DWeights& w, Mode mode,
                                            const std::vector<std::array<int, 2>>& rails) {
  if (m.arch.n_feat != fs.n_channels)
    throw Error("loss_sdf_vertex_grads: model/feature channel mismatch");
  LossEval ev;
  eval_loss(m, fs, batch, w, mode, rails, ev);

  Eigen::RowVectorXd phibar;
  Eigen::MatrixXd gbar;
  loss_cotangents(ev, batch, w, phibar, gbar);

  const int nf = m.arch.n_feat;
  const int ng = ev.ns + ev.nn;
  Eigen::MatrixXd gxbar = Eigen::MatrixXd::Zero(3, ev.X.cols());
  gxbar.leftCols(ng) = gbar;
  Eigen::MatrixXd qbar;
  if (nf > 0) {
    qbar.setZero(nf, ev.X.cols());
    for (int i = 0; i < ng; ++i) qbar.col(i) = ev.J[i] * gbar.col(i);
  }
  Eigen::VectorXd tg = Eigen::VectorXd::Zero(m.theta.size());
  Eigen::MatrixXd fbar;
  nnet::field_backward(m, ev.fb, phibar, gxbar, qbar, tg, nullptr, &fbar);

  std::map<int, Eigen::VectorXd> vertex_bar;
  for (int i = 0; i < static_cast<int>(ev.X.cols()); ++i) {
    Eigen::VectorXd fb_i = fbar.col(i);
    Eigen::MatrixXd Jbar;
    if (i < ng) Jbar = ev.fb.q.col(i) * gbar.col(i).transpose();
    if (fb_i.isZero() && (Jbar.size() == 0 || Jbar.isZero())) continue;
    feature::feature_backward(ev.X.col(i), fs, fb_i, Jbar, vertex_bar);
  }
  if (!rails.empty())
    train2d::polyline_regularizer_grad(fs.V, rails, w.lambda, w.alpha_reg, vertex_bar);

  std::map<int, Point3> out;
  for (const auto& [vi, g] : vertex_bar) out[vi] = Point3(g);
  return out;
}

// ---- composed fields and Booleans ------------------------------------------

namespace {

struct FieldClosure {
  nnet::MlpModel m;
  feature::FeatureSet fs;
};

}  // namespace

FieldFn field_function(const nnet::MlpModel& m, const feature::FeatureSet& fs) {
  auto c = std::make_shared<FieldClosure>(FieldClosure{m, fs});
  c->fs.rebuild_acceleration();
  return [c](const Point3& x) {
    Eigen::VectorXd f(c->m.arch.n_feat);
    if (c->m.arch.n_feat > 0) f = feature::eval_values(x, c->fs);
    return nnet::forward(c->m, x, f);
  };
}

FieldJetFn field_jet_function(const nnet::MlpModel& m, const feature::FeatureSet& fs) {
  auto c = std::make_shared<FieldClosure>(FieldClosure{m, fs});
  c->fs.rebuild_acceleration();
  return [c](const Point3& x) {
    const int nf = c->m.arch.n_feat;
    Eigen::VectorXd f(nf);
    Eigen::MatrixXd J;
    if (nf > 0) feature::eval_jet(x, c->fs, f, J, nullptr);
    FieldSample s;
    s.phi = nnet::forward(c->m, x, f);
    Eigen::VectorXd dx, df;
    nnet::grad_wrt_input(c->m, x, f, &dx, &df);
    s.grad = dx;
    if (nf > 0) s.grad += J.transpose() * df;
    return s;
  };
}

FieldFn boolean_combine(FieldFn a, FieldFn b, BoolOp op) {
  if (!a || !b) throw Error("boolean_combine: empty field function");
  switch (op) {
    case BoolOp::unite:
      return [a, b](const Point3& x) { return std::min(a(x), b(x)); };
    case BoolOp::intersect:
      return [a, b](const Point3& x) { return std::max(a(x), b(x)); };
    case BoolOp::diff_ab:
      return [a, b](const Point3& x) { return std::max(a(x), -b(x)); };
    case BoolOp::diff_ba:
      return [a, b](const Point3& x) { return std::max(-a(x), b(x)); };
  }
  throw Error("boolean_combine: unknown op");
}

}  // namespace sharpfield::train3d
