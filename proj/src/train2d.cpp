#include "sharpfield/train2d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "sharpfield/common.hpp"
#include "sharpfield/green.hpp"
#include "sharpfield/io.hpp"
#include "sharpfield/kdtree.hpp"
#include "sharpfield/partition.hpp"

namespace sharpfield::train2d {

namespace {

Eigen::MatrixXd feature_batch(const feature::FeatureSet& fs, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd F(fs.n_channels, X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i)
    F.col(i) = feature::eval_values(X.col(i), fs);
  return F;
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

// ---- geodesic scene --------------------------------------------------------

bool disk_shadowed(const Point2& x, const GeodesicScene& sc) {
  const Segment seg{sc.source, x};
  return green::distance_to_segment(sc.center, seg) < sc.radius * (1.0 - 1e-12);
}

double geodesic_gt(const Point2& x, const GeodesicScene& sc) {
  const double r = (x - sc.center).norm();
  if (r < sc.radius * (1.0 - 1e-12))
    throw Error("geodesic_gt: point inside the obstacle disk");
  if (!disk_shadowed(x, sc)) return (x - sc.source).norm();
  const double rs = (sc.source - sc.center).norm();
  const double ts = std::sqrt(std::max(rs * rs - sc.radius * sc.radius, 0.0));
  const double tx = std::sqrt(std::max(r * r - sc.radius * sc.radius, 0.0));
  double cpsi = (sc.source - sc.center).dot(x - sc.center) / (rs * r);
  cpsi = std::clamp(cpsi, -1.0, 1.0);
  const double wrap = std::acos(cpsi) - std::acos(sc.radius / rs) -
                      std::acos(std::min(sc.radius / r, 1.0));
  return ts + tx + sc.radius * std::max(wrap, 0.0);
}

Point2 geodesic_gt_grad(const Point2& x, const GeodesicScene& sc) {
  if (!disk_shadowed(x, sc)) {
    const Point2 d = x - sc.source;
    const double n = d.norm();
    if (n < 1e-300) return Point2(0, 0);
    return d / n;
  }
  // Arrival direction of the wrapping path: x - T normalized, T the tangent
  // point on x's side of the circle.
  const Point2 rel = x - sc.center;
  const double r = rel.norm();
  const double alpha = std::acos(std::min(sc.radius / r, 1.0));
  const double beta = std::atan2(rel.y(), rel.x());
  const double side = rel.y() >= 0.0 ? 1.0 : -1.0;  // wrap over x's hemisphere
  const double ang = beta + side * alpha;
  const Point2 T = sc.center + sc.radius * Point2(std::cos(ang), std::sin(ang));
  const Point2 d = x - T;
  return d / d.norm();
}

FeatureGraph geodesic_ray_graph(const GeodesicScene& sc, double seg_len) {
  const double len = sc.xmax - sc.ray_x0;
  if (len <= 0 || seg_len <= 0) throw Error("geodesic_ray_graph: bad extents");
  const int n = std::max(1, static_cast<int>(std::lround(len / seg_len)));
  FeatureGraph g;
  g.dim = 2;
  g.V.resize(2, n + 1);
  for (int i = 0; i <= n; ++i)
    g.V.col(i) = Point2(sc.ray_x0 + len * i / n, 0.0);
  for (int i = 0; i < n; ++i) g.edges.push_back({i, i + 1});
  g.color.assign(g.edges.size(), -1);
  return g;
}

// ---- rectangle scene -------------------------------------------------------

double rect_distance_gt(const Point2& x, const MedialScene& sc) {
  const double dx = sc.hx - std::abs(x.x());
  const double dy = sc.hy - std::abs(x.y());
  if (dx >= 0.0 && dy >= 0.0) return std::min(dx, dy);
  const double ox = std::max(-dx, 0.0), oy = std::max(-dy, 0.0);
  return std::hypot(ox, oy);
}

Point2 rect_distance_grad(const Point2& x, const MedialScene& sc) {
  const double dx = sc.hx - std::abs(x.x());
  const double dy = sc.hy - std::abs(x.y());
  if (dx >= 0.0 && dy >= 0.0) {
    if (dx < dy) return Point2(-sgn(x.x()), 0.0);
    return Point2(0.0, -sgn(x.y()));
  }
  const double ox = std::max(-dx, 0.0), oy = std::max(-dy, 0.0);
  const double n = std::hypot(ox, oy);
  return Point2(sgn(x.x()) * ox / n, sgn(x.y()) * oy / n);
}

FeatureGraph medial_axis_gt(const MedialScene& sc) {
  if (!(sc.hx > sc.hy) || sc.hy <= 0)
    throw Error("medial_axis_gt: rectangle must satisfy hx > hy > 0");
  const double j = sc.hx - sc.hy;  // junction abscissa
  FeatureGraph g;
  g.dim = 2;
  g.V.resize(2, 6);
  g.V.col(0) = Point2(-j, 0.0);
  g.V.col(1) = Point2(j, 0.0);
  g.V.col(2) = Point2(-sc.hx, -sc.hy);
  g.V.col(3) = Point2(-sc.hx, sc.hy);
  g.V.col(4) = Point2(sc.hx, -sc.hy);
  g.V.col(5) = Point2(sc.hx, sc.hy);
  g.edges = {{0, 1}, {0, 2}, {0, 3}, {1, 4}, {1, 5}};
  g.color.assign(g.edges.size(), -1);
  return g;
}

FeatureGraph subdivide_axis(const FeatureGraph& g, int n_segments) {
  g.check();
  const int ne = g.n_edges();
  if (n_segments < ne) throw Error("subdivide_axis: fewer segments than edges");
  std::vector<double> len(ne);
  double total = 0;
  for (int e = 0; e < ne; ++e) {
    len[e] = (g.V.col(g.edges[e][0]) - g.V.col(g.edges[e][1])).norm();
    total += len[e];
  }
  // Proportional allocation, then adjust to hit the exact total by nudging
  // the edges whose piece length changes least.
  std::vector<int> parts(ne);
  int sum = 0;
  for (int e = 0; e < ne; ++e) {
    parts[e] = std::max(1, static_cast<int>(std::lround(len[e] / total * n_segments)));
    sum += parts[e];
  }
  while (sum != n_segments) {
    const int dir = sum < n_segments ? 1 : -1;
    int best = -1;
    double best_err = std::numeric_limits<double>::infinity();
    for (int e = 0; e < ne; ++e) {
      if (dir < 0 && parts[e] <= 1) continue;
      const double target = total / n_segments;
      const double err = std::abs(len[e] / (parts[e] + dir) - target);
      if (err < best_err) {
        best_err = err;
        best = e;
      }
    }
    if (best < 0) throw Error("subdivide_axis: cannot reach requested count");
    parts[best] += dir;
    sum += dir;
  }

  FeatureGraph out;
  out.dim = 2;
  std::vector<Point2> verts;
  for (int i = 0; i < g.n_vertices(); ++i) verts.push_back(g.V.col(i));
  for (int e = 0; e < ne; ++e) {
    const int a = g.edges[e][0], b = g.edges[e][1];
    int prev = a;
    for (int p = 1; p < parts[e]; ++p) {
      const double t = static_cast<double>(p) / parts[e];
      verts.push_back((1 - t) * Point2(g.V.col(a)) + t * Point2(g.V.col(b)));
      const int id = static_cast<int>(verts.size()) - 1;
      out.edges.push_back({prev, id});
      prev = id;
    }
    out.edges.push_back({prev, b});
  }
  out.V.resize(2, static_cast<int>(verts.size()));
  for (int i = 0; i < static_cast<int>(verts.size()); ++i) out.V.col(i) = verts[i];
  out.color.assign(out.edges.size(), -1);
  return out;
}

void perturb_vertices(FeatureGraph& g, double amplitude, Rng& rng) {
  const std::vector<int> deg = vertex_degrees(g);
  for (int i = 0; i < g.n_vertices(); ++i) {
    if (deg[i] < 2) continue;
    g.V(0, i) += rng.uniform(-amplitude, amplitude);
    g.V(1, i) += rng.uniform(-amplitude, amplitude);
  }
}

// ---- losses ----------------------------------------------------------------

double loss_field_fit(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                      const Eigen::MatrixXd& X, const Eigen::VectorXd& gt) {
  if (X.cols() == 0) throw Error("loss_field_fit: empty sample set");
  if (X.cols() != gt.size()) throw Error("loss_field_fit: sample/gt mismatch");
  const Eigen::MatrixXd F = feature_batch(fs, X);
  nnet::FieldBatch fb;
  nnet::field_forward(m, X, F, false, fb);
  return (fb.phi.transpose().array() - gt.array()).abs().mean();
}

namespace {

struct RegTerms {
  // Per usable degree-2 vertex: index, neighbors, v, u, |a_r - a_l|.
  struct Entry {
    int i, l, r;
    Eigen::VectorXd v, u;
    double len;
  };
  std::vector<Entry> entries;
  int excluded = 0;
};

RegTerms regularizer_terms(const Eigen::MatrixXd& V,
                           const std::vector<std::array<int, 2>>& edges) {
  const int nv = static_cast<int>(V.cols());
  std::vector<std::vector<int>> nbr(nv);
  for (const auto& e : edges) {
    nbr[e[0]].push_back(e[1]);
    nbr[e[1]].push_back(e[0]);
  }
  RegTerms out;
  for (int i = 0; i < nv; ++i) {
    if (nbr[i].size() != 2) continue;
    const int l = nbr[i][0], r = nbr[i][1];
    const Eigen::VectorXd al = V.col(l), ar = V.col(r), ai = V.col(i);
    const double len = (ar - al).norm();
    if (len < 1e-300) {
      ++out.excluded;
      continue;
    }
    out.entries.push_back({i, l, r, 0.5 * (al + ar) - ai, (ar - al) / len, len});
  }
  return out;
}

std::vector<std::array<int, 2>> segment_edges(const feature::FeatureSet& fs) {
  std::vector<std::array<int, 2>> edges;
  edges.reserve(fs.elems.size());
  for (const auto& e : fs.elems) edges.push_back({e[0], e[1]});
  return edges;
}

}  // namespace

double polyline_regularizer(const Eigen::MatrixXd& V,
                            const std::vector<std::array<int, 2>>& edges,
                            double lambda, int* excluded) {
  const RegTerms t = regularizer_terms(V, edges);
  if (excluded) *excluded = t.excluded;
  if (t.entries.empty()) return 0.0;
  const double m = static_cast<double>(t.entries.size());
  double s1 = 0, s2 = 0;
  for (const auto& e : t.entries) {
    s1 += e.v.norm();
    s2 += std::abs(e.v.dot(e.u));
  }
  return lambda / m * s1 + (1.0 - lambda) / m * s2;
}

void polyline_regularizer_grad(const Eigen::MatrixXd& V,
                               const std::vector<std::array<int, 2>>& edges,
                               double lambda, double weight,
                               std::map<int, Eigen::VectorXd>& grad, int* excluded) {
  const RegTerms t = regularizer_terms(V, edges);
  if (excluded) *excluded = t.excluded;
  if (t.entries.empty()) return;
  const double m = static_cast<double>(t.entries.size());
  auto acc = [&grad](int i, const Eigen::VectorXd& g) {
    auto it = grad.find(i);
    if (it == grad.end())
      grad.emplace(i, g);
    else
      it->second += g;
  };
  for (const auto& e : t.entries) {
    // First term: (lambda/m) |v|, with dv/da_i = -I, dv/da_{l,r} = I/2.
    const double vn = e.v.norm();
    if (vn > 1e-300) {
      const Eigen::VectorXd vh = weight * lambda / m * (e.v / vn);
      acc(e.i, -vh);
      acc(e.l, 0.5 * vh);
      acc(e.r, 0.5 * vh);
    }
    // Second term: c |v . u|, u also depends on a_l, a_r.
    const double c = weight * (1.0 - lambda) / m;
    const double s = sgn(e.v.dot(e.u));
    if (s != 0.0) {
      const Eigen::VectorXd Pv = e.v - e.u * e.u.dot(e.v);  // (I - u u^T) v
      acc(e.i, -s * c * e.u);
      acc(e.l, s * c * (0.5 * e.u - Pv / e.len));
      acc(e.r, s * c * (0.5 * e.u + Pv / e.len));
    }
  }
}

double loss_regularizer(const feature::FeatureSet& fs, double lambda, int* excluded) {
  return polyline_regularizer(fs.V, segment_edges(fs), lambda, excluded);
}

void loss_regularizer_grad(const feature::FeatureSet& fs, double lambda,
                           double weight, std::map<int, Point2>& grad, int* excluded) {
  std::map<int, Eigen::VectorXd> g;
  polyline_regularizer_grad(fs.V, segment_edges(fs), lambda, weight, g, excluded);
  for (const auto& [i, v] : g) {
    auto it = grad.find(i);
    if (it == grad.end())
      grad.emplace(i, Point2(v));
    else
      it->second += Point2(v);
  }
}

// ---- evaluation helpers ----------------------------------------------------

std::vector<BandPoint> geodesic_band(const GeodesicScene& sc) {
  std::vector<BandPoint> band;
  const int nx = 81;
  const double x0 = 1.55, x1 = 1.95;
  const std::vector<double> y_val = {-0.005, -0.0025, 0.0, 0.0025, 0.005};
  for (int i = 0; i < nx; ++i) {
    const double x = x0 + (x1 - x0) * i / (nx - 1);
    for (double y : y_val) {
      BandPoint p;
      p.x = Point2(x, y);
      p.gt = geodesic_gt(p.x, sc);
      p.has_grad = y != 0.0;  // the kink sits exactly on y = 0
      if (p.has_grad) p.gt_grad = geodesic_gt_grad(p.x, sc);
      band.push_back(p);
    }
  }
  return band;
}

std::vector<BandPoint> medial_band(const MedialScene& sc) {
  const FeatureGraph axis = medial_axis_gt(sc);
  std::vector<BandPoint> band;
  const double step = 0.005;
  for (const auto& e : axis.edges) {
    const Point2 a = axis.V.col(e[0]), b = axis.V.col(e[1]);
    const double len = (b - a).norm();
    const int n = std::max(2, static_cast<int>(std::lround(len / step)));
    const Point2 t = (b - a) / len;
    const Point2 nrm(-t.y(), t.x());
    for (int i = 0; i <= n; ++i) {
      const Point2 base = a + (b - a) * (static_cast<double>(i) / n);
      for (double off : {-0.005, -0.0025, 0.0025, 0.005}) {
        const Point2 p = base + off * nrm;
        if (std::abs(p.x()) >= sc.hx - 1e-9 || std::abs(p.y()) >= sc.hy - 1e-9)
          continue;  // stay strictly inside the rectangle
        // Skip points that land on another axis branch (near junctions).
        const double dx = sc.hx - std::abs(p.x());
        const double dy = sc.hy - std::abs(p.y());
        if (std::abs(dx - dy) < 5e-4) continue;
        BandPoint bp;
        bp.x = p;
        bp.gt = rect_distance_gt(p, sc);
        bp.gt_grad = rect_distance_grad(p, sc);
        bp.has_grad = true;
        band.push_back(bp);
      }
    }
  }
  return band;
}

BandErrors band_errors(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                       const std::vector<BandPoint>& band) {
  if (band.empty()) throw Error("band_errors: empty band");
  const int nf = m.arch.n_feat;  // 0 for the raw-MLP baseline
  if (nf != 0 && nf != fs.n_channels)
    throw Error("band_errors: model/feature channel mismatch");
  const int B = static_cast<int>(band.size());
  Eigen::MatrixXd X(2, B);
  for (int i = 0; i < B; ++i) X.col(i) = band[i].x;
  Eigen::MatrixXd F(nf, B);
  std::vector<Eigen::MatrixXd> Js(B);
  for (int i = 0; i < B && nf > 0; ++i) {
    Eigen::VectorXd fv;
    feature::eval_jet(X.col(i), fs, fv, Js[i], nullptr);
    F.col(i) = fv;
  }
  nnet::FieldBatch fb;
  nnet::field_forward(m, X, F, true, fb);
  BandErrors out;
  int ng = 0;
  for (int i = 0; i < B; ++i) {
    out.value_err += std::abs(fb.phi(i) - band[i].gt);
    if (band[i].has_grad) {
      Eigen::VectorXd gtot = fb.grad_x.col(i);
      if (nf > 0) gtot += Js[i].transpose() * fb.q.col(i);
      out.grad_err += (gtot - Eigen::VectorXd(band[i].gt_grad)).norm();
      ++ng;
    }
  }
  out.value_err /= B;
  if (ng > 0) out.grad_err /= ng;
  return out;
}

namespace {

std::vector<Point2> sample_polyline(const FeatureGraph& g, double step) {
  std::vector<Point2> pts;
  for (const auto& e : g.edges) {
    const Point2 a = g.V.col(e[0]), b = g.V.col(e[1]);
    const double len = (b - a).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int i = 0; i <= n; ++i)
      pts.push_back(a + (b - a) * (static_cast<double>(i) / n));
  }
  return pts;
}

}  // namespace

double axis_chamfer(const FeatureGraph& a, const FeatureGraph& b, double step) {
  const std::vector<Point2> pa = sample_polyline(a, step);
  const std::vector<Point2> pb = sample_polyline(b, step);
  if (pa.empty() || pb.empty()) throw Error("axis_chamfer: empty polyline");
  auto one_sided = [](const std::vector<Point2>& from, const std::vector<Point2>& to) {
    std::vector<Eigen::Vector2d> cloud(to.begin(), to.end());
    KdTree<2> tree(cloud);
    double s = 0;
    for (const auto& p : from) {
      double d2 = 0;
      tree.nearest(p, &d2);
      s += std::sqrt(d2);
    }
    return s / static_cast<double>(from.size());
  };
  return 0.5 * (one_sided(pa, pb) + one_sided(pb, pa));
}

namespace {

bool segments_cross(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  auto orient = [](const Point2& p, const Point2& q, const Point2& r) {
    const double v = (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
    return sgn(v);
  };
  const double o1 = orient(a, b, c), o2 = orient(a, b, d);
  const double o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;  // proper crossings only
}

}  // namespace

int count_fold_crossings(const feature::FeatureSet& fs) {
  int count = 0;
  const int ne = static_cast<int>(fs.elems.size());
  for (int i = 0; i < ne; ++i) {
    for (int j = i + 1; j < ne; ++j) {
      const auto &ei = fs.elems[i], &ej = fs.elems[j];
      if (ei[0] == ej[0] || ei[0] == ej[1] || ei[1] == ej[0] || ei[1] == ej[1])
        continue;  // adjacent segments share a vertex, not a fold
      if (segments_cross(fs.V.col(ei[0]), fs.V.col(ei[1]), fs.V.col(ej[0]),
                         fs.V.col(ej[1])))
        ++count;
    }
  }
  return count;
}

// ---- training --------------------------------------------------------------

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

// Exponential learning-rate factor: decay^(it/(iters-1)), so step 0 runs at
// the configured rate and the final step at rate * decay.
double lr_schedule(double decay, long it, long iters) {
  if (iters <= 1 || decay == 1.0) return 1.0;
  return std::pow(decay, static_cast<double>(it) / static_cast<double>(iters - 1));
}

feature::FeatureSet colored_feature_set(FeatureGraph g, double rho) {
  const partition::EdgeColoring col = partition::color_edges(g);
  g.color = col.color;
  feature::MollifierConfig mc;
  mc.radius = rho;
  feature::FeatureSet fs = feature::feature_set_from_graph(g, mc);
  fs.rebuild_acceleration();
  return fs;
}

}  // namespace

std::uint64_t GeodesicConfig::config_hash() const {
  std::uint64_t h = fnv1a("geodesic");
  h = hash_doubles(h, {static_cast<double>(k_samples), static_cast<double>(iters),
                       static_cast<double>(batch), static_cast<double>(width),
                       static_cast<double>(hidden_layers), static_cast<double>(pe),
                       static_cast<double>(static_cast<int>(act)),
                       use_features ? 1.0 : 0.0, lr, lr_decay, rho, seg_len,
                       static_cast<double>(seed)});
  return h;
}

std::uint64_t MedialConfig::config_hash() const {
  std::uint64_t h = fnv1a("medial");
  h = hash_doubles(h, {static_cast<double>(k_samples), static_cast<double>(iters),
                       static_cast<double>(freeze_iters), static_cast<double>(batch),
                       static_cast<double>(width), static_cast<double>(hidden_layers),
                       static_cast<double>(pe), lr_theta, lr_vertices, lr_decay,
                       rho, weights.alpha, weights.lambda,
                       static_cast<double>(seed)});
  return h;
}

void write_train_csv(const std::string& path, const std::vector<TrainRow>& rows,
                     const ArtifactStamp& stamp, bool with_chamfer) {
  std::ofstream os(path);
  if (!os) throw Error("write_train_csv: cannot open " + path);
  os << "# seed=" << stamp.seed << " config=" << stamp.config_hash << "\n";
  os << "iter,loss,band_value_err,band_grad_err";
  if (with_chamfer) os << ",axis_chamfer";
  os << "\n";
  for (const auto& r : rows) {
    os << r.iter << ',' << format_double(r.loss) << ','
       << format_double(r.band.value_err) << ',' << format_double(r.band.grad_err);
    if (with_chamfer) os << ',' << format_double(r.axis_chamfer);
    os << "\n";
  }
  if (!os) throw Error("write_train_csv: write failed for " + path);
}

GeodesicResult train_geodesic(const GeodesicConfig& cfg) {
  Rng rng(cfg.seed);
  const GeodesicScene& sc = cfg.scene;

  // Fixed feature ray (single chain, one channel).
  feature::FeatureSet fs = colored_feature_set(geodesic_ray_graph(sc, cfg.seg_len), cfg.rho);

  // Fixed training set: uniform over the box minus the open disk.
  Eigen::MatrixXd X(2, cfg.k_samples);
  Eigen::VectorXd gt(cfg.k_samples);
  for (int i = 0; i < cfg.k_samples; ++i) {
    Point2 p;
    do {
      p = Point2(rng.uniform(sc.xmin, sc.xmax), rng.uniform(sc.ymin, sc.ymax));
    } while ((p - sc.center).norm() < sc.radius);
    X.col(i) = p;
    gt(i) = geodesic_gt(p, sc);
  }

  const int n_feat = cfg.use_features ? fs.n_channels : 0;
  // RMS-1 feature scaling over the initial training set.  Raw channel values
  // are Green integrals, tiny at rho = 0.08 scale (RMS ~ 1/150 here); without
  // the scale the crease coefficient sits ~150 sigma outside the last layer's
  // init distribution and Adam spends the whole schedule crawling toward it
  // (measured: band gradient error barely improves over the raw baseline).
  // The constant is frozen after this point and recorded with the feature
  // set, so it is a fixed smooth factor that leaves continuity classes alone.
  if (cfg.use_features) {
    std::vector<Eigen::VectorXd> init_pool(cfg.k_samples);
    for (int i = 0; i < cfg.k_samples; ++i) init_pool[i] = X.col(i);
    fs.scale = feature::compute_feature_scale(fs, init_pool);
  }
  Eigen::MatrixXd F(n_feat, cfg.k_samples);
  if (cfg.use_features) F = feature_batch(fs, X);

  nnet::MlpArch arch;
  arch.d = 2;
  arch.n_feat = n_feat;
  arch.hidden_layers = cfg.hidden_layers;
  arch.width = cfg.width;
  arch.act = cfg.act;
  arch.pe = cfg.pe;
  nnet::MlpModel model = nnet::init_model(arch, rng);
  // model.feature_scale stays 1 here: the RMS-1 constant lives on fs.scale so
  // every consumer of the feature set (loss, band evaluation, export) sees
  // the same scaled channels.  Checkpoint writers fold the two together.

  const std::vector<BandPoint> band = geodesic_band(sc);
  GeodesicResult res;
  res.stamp = ArtifactStamp{cfg.seed, cfg.config_hash()};

  nnet::AdamState adam;
  adam.lr = cfg.lr;
  Eigen::MatrixXd Xb(2, cfg.batch), Fb(n_feat, cfg.batch);
  Eigen::VectorXd gtb(cfg.batch);
  nnet::FieldBatch fb;
  Eigen::VectorXd tg(arch.param_count());
  double loss = 0;
  for (long it = 0; it < cfg.iters; ++it) {
    adam.lr = cfg.lr * lr_schedule(cfg.lr_decay, it, cfg.iters);
    for (int i = 0; i < cfg.batch; ++i) {
      const int s = rng.index(cfg.k_samples);
      Xb.col(i) = X.col(s);
      if (n_feat > 0) Fb.col(i) = F.col(s);
      gtb(i) = gt(s);
    }
    nnet::field_forward(model, Xb, Fb, false, fb);
    const Eigen::VectorXd r = fb.phi.transpose() - gtb;
    loss = r.cwiseAbs().mean();
    if (!std::isfinite(loss))
      throw NumericError("train_geodesic: loss diverged at iteration " +
                         std::to_string(it));
    Eigen::RowVectorXd ybar(cfg.batch);
    for (int i = 0; i < cfg.batch; ++i) ybar(i) = sgn(r(i)) / cfg.batch;
    tg.setZero();
    nnet::field_backward(model, fb, ybar, Eigen::MatrixXd(), Eigen::MatrixXd(), tg);
    nnet::adam_step(model.theta, tg, adam);

    if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.iters) {
      TrainRow row;
      row.iter = it + 1;
      row.loss = loss;
      row.band = band_errors(model, fs, band);
      res.log.push_back(row);
    }
  }

  res.model = model;
  res.fs = fs;
  res.band = res.log.empty() ? band_errors(model, fs, band) : res.log.back().band;
  res.final_loss = loss;
  if (!cfg.csv_path.empty()) write_train_csv(cfg.csv_path, res.log, res.stamp, false);
  return res;
}

MedialResult train_medial(const MedialConfig& cfg) {
  Rng rng(cfg.seed);
  const MedialScene& sc = cfg.scene;
  const FeatureGraph gt_axis = medial_axis_gt(sc);

  feature::FeatureSet fs = colored_feature_set(cfg.initial_axis, cfg.rho);

  // Movable vertices: degree >= 2 (interior chain vertices and junctions).
  const std::vector<int> deg = vertex_degrees(cfg.initial_axis);
  std::vector<int> movable;
  for (int i = 0; i < static_cast<int>(deg.size()); ++i)
    if (deg[i] >= 2) movable.push_back(i);

  // Fixed training set: uniform inside the rectangle.
  Eigen::MatrixXd X(2, cfg.k_samples);
  Eigen::VectorXd gt(cfg.k_samples);
  for (int i = 0; i < cfg.k_samples; ++i) {
    const Point2 p(rng.uniform(-sc.hx, sc.hx), rng.uniform(-sc.hy, sc.hy));
    X.col(i) = p;
    gt(i) = rect_distance_gt(p, sc);
  }

  nnet::MlpArch arch;
  arch.d = 2;
  arch.n_feat = fs.n_channels;
  arch.hidden_layers = cfg.hidden_layers;
  arch.width = cfg.width;
  arch.act = cfg.act;
  arch.pe = cfg.pe;
  nnet::MlpModel model = nnet::init_model(arch, rng);
  // RMS-1 feature scaling over the fixed sample set, frozen for the whole
  // run (vertex motion later changes raw magnitudes only mildly); see
  // train_geodesic for the conditioning rationale.
  {
    std::vector<Eigen::VectorXd> init_pool(cfg.k_samples);
    for (int i = 0; i < cfg.k_samples; ++i) init_pool[i] = X.col(i);
    fs.scale = feature::compute_feature_scale(fs, init_pool);
  }

  const std::vector<BandPoint> band = medial_band(sc);
  MedialResult res;
  res.stamp = ArtifactStamp{cfg.seed, cfg.config_hash()};
  res.initial_chamfer = axis_chamfer(cfg.initial_axis, gt_axis);

  auto current_graph = [&]() {
    FeatureGraph g = cfg.initial_axis;
    g.V = fs.V;
    return g;
  };

  nnet::AdamState adam_theta, adam_verts;
  adam_theta.lr = cfg.lr_theta;
  adam_verts.lr = cfg.lr_vertices;
  Eigen::VectorXd vert_params(2 * movable.size());
  for (std::size_t i = 0; i < movable.size(); ++i)
    vert_params.segment<2>(2 * static_cast<Eigen::Index>(i)) = fs.V.col(movable[i]);

  // While the axis is frozen the features of the fixed sample set are
  // constants; precompute them once.
  Eigen::MatrixXd F_frozen(arch.n_feat, cfg.k_samples);
  for (int i = 0; i < cfg.k_samples; ++i)
    F_frozen.col(i) = feature::eval_values(X.col(i), fs);

  Eigen::MatrixXd Xb(2, cfg.batch), Fb(arch.n_feat, cfg.batch);
  Eigen::VectorXd gtb(cfg.batch);
  std::vector<int> batch_ids(cfg.batch);
  nnet::FieldBatch fb;
  Eigen::VectorXd tg(arch.param_count());
  long last_fold_warn = -1;
  double loss = 0;

  for (long it = 0; it < cfg.iters; ++it) {
    const bool frozen = it < cfg.freeze_iters;
    const double lr_fac = lr_schedule(cfg.lr_decay, it, cfg.iters);
    adam_theta.lr = cfg.lr_theta * lr_fac;
    adam_verts.lr = cfg.lr_vertices * lr_fac;
    for (int i = 0; i < cfg.batch; ++i) {
      const int s = rng.index(cfg.k_samples);
      batch_ids[i] = s;
      Xb.col(i) = X.col(s);
      gtb(i) = gt(s);
    }
    // Once the axis moves, features are re-evaluated every step with full
    // first-order evals so vertex gradients come along for free.
    std::vector<feature::FeatureEval> evals;
    if (frozen) {
      for (int i = 0; i < cfg.batch; ++i) Fb.col(i) = F_frozen.col(batch_ids[i]);
    } else {
      evals.resize(cfg.batch);
      for (int i = 0; i < cfg.batch; ++i) {
        evals[i] = feature::eval_feature(Xb.col(i), fs);
        Fb.col(i) = evals[i].values;
      }
    }
    nnet::field_forward(model, Xb, Fb, false, fb);
    const Eigen::VectorXd r = fb.phi.transpose() - gtb;
    const double fit = r.cwiseAbs().mean();
    const double reg = loss_regularizer(fs, cfg.weights.lambda);
    loss = fit + cfg.weights.alpha * reg;
    if (!std::isfinite(loss))
      throw NumericError("train_medial: loss diverged at iteration " +
                         std::to_string(it));

    Eigen::RowVectorXd ybar(cfg.batch);
    for (int i = 0; i < cfg.batch; ++i) ybar(i) = sgn(r(i)) / cfg.batch;
    tg.setZero();
    Eigen::MatrixXd fbar;
    nnet::field_backward(model, fb, ybar, Eigen::MatrixXd(), Eigen::MatrixXd(), tg,
                         nullptr, frozen ? nullptr : &fbar);
    nnet::adam_step(model.theta, tg, adam_theta);

    if (!frozen) {
      std::map<int, Point2> vgrad;
      for (int i = 0; i < cfg.batch; ++i) {
        for (const auto& [vi, G] : evals[i].grad_vertices) {
          Point2 g(0, 0);
          for (int c = 0; c < arch.n_feat; ++c)
            g += fbar(c, i) * Eigen::Vector2d(G.row(c).transpose());
          auto itg = vgrad.find(vi);
          if (itg == vgrad.end())
            vgrad.emplace(vi, g);
          else
            itg->second += g;
        }
      }
      loss_regularizer_grad(fs, cfg.weights.lambda, cfg.weights.alpha, vgrad);
      Eigen::VectorXd vg = Eigen::VectorXd::Zero(vert_params.size());
      for (std::size_t i = 0; i < movable.size(); ++i) {
        auto itg = vgrad.find(movable[i]);
        if (itg != vgrad.end())
          vg.segment<2>(2 * static_cast<Eigen::Index>(i)) = itg->second;
      }
      nnet::adam_step(vert_params, vg, adam_verts);
      Eigen::MatrixXd V = fs.V;
      for (std::size_t i = 0; i < movable.size(); ++i)
        V.col(movable[i]) = vert_params.segment<2>(2 * static_cast<Eigen::Index>(i));
      fs.set_vertices(V);
    }

    if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.iters) {
      TrainRow row;
      row.iter = it + 1;
      row.loss = loss;
      row.band = band_errors(model, fs, band);
      row.axis_chamfer = axis_chamfer(current_graph(), gt_axis);
      res.log.push_back(row);
      if (count_fold_crossings(fs) > 0 && it != last_fold_warn) {
        std::fprintf(stderr,
                     "warning: medial axis self-intersects at iteration %ld; "
                     "continuing (regularizer should recover)\n",
                     it + 1);
        last_fold_warn = it;
      }
    }
  }

  res.model = model;
  res.fs = fs;
  res.final_chamfer = axis_chamfer(current_graph(), gt_axis);
  if (!cfg.csv_path.empty()) write_train_csv(cfg.csv_path, res.log, res.stamp, true);
  return res;
}

}  // namespace sharpfield::train2d
