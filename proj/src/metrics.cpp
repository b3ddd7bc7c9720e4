#include "sharpfield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "sharpfield/kdtree.hpp"

namespace sharpfield::metrics {

void MetricsConfig::check() const {
  if (samples <= 0) throw Error("MetricsConfig: sample count must be positive");
  if (!(fc_threshold > 0.0)) throw Error("MetricsConfig: match radius must be positive");
}

namespace {

/// Nearest-neighbor distances (and indices) from every column of Q to R.
void nn_dists(const Eigen::Matrix3Xd& Q, const Eigen::Matrix3Xd& R,
              Eigen::VectorXd& dist, std::vector<int>* idx = nullptr) {
  if (Q.cols() == 0 || R.cols() == 0)
    throw Error("metrics: point sets must be nonempty");
  std::vector<Point3> pts(R.cols());
  for (int i = 0; i < R.cols(); ++i) pts[i] = R.col(i);
  KdTree<3> tree(std::move(pts));
  dist.resize(Q.cols());
  if (idx) idx->resize(Q.cols());
  for (int i = 0; i < Q.cols(); ++i) {
    double d2 = 0.0;
    const int j = tree.nearest(Q.col(i), &d2);
    dist[i] = std::sqrt(d2);
    if (idx) (*idx)[i] = j;
  }
}

}  // namespace

double chamfer(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& P2) {
  Eigen::VectorXd d12, d21;
  nn_dists(P1, P2, d12);
  nn_dists(P2, P1, d21);
  return 0.5 * d12.mean() + 0.5 * d21.mean();
}

double hausdorff(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& P2) {
  Eigen::VectorXd d12, d21;
  nn_dists(P1, P2, d12);
  nn_dists(P2, P1, d21);
  return std::max(d12.maxCoeff(), d21.maxCoeff());
}

double normal_error(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& N1,
                    const Eigen::Matrix3Xd& P2, const Eigen::Matrix3Xd& N2) {
  if (N1.cols() != P1.cols() || N2.cols() != P2.cols())
    throw Error("normal_error: normals must align with points");
  auto one_sided = [](const Eigen::Matrix3Xd& P, const Eigen::Matrix3Xd& N,
                      const Eigen::Matrix3Xd& Pr, const Eigen::Matrix3Xd& Nr) {
    Eigen::VectorXd dist;
    std::vector<int> idx;
    nn_dists(P, Pr, dist, &idx);
    double acc = 0.0;
    for (int i = 0; i < P.cols(); ++i) {
      const double c = std::clamp(std::abs(N.col(i).dot(Nr.col(idx[i]))), 0.0, 1.0);
      acc += std::acos(c);
    }
    return acc / P.cols();
  };
  const double rad =
      0.5 * one_sided(P1, N1, P2, N2) + 0.5 * one_sided(P2, N2, P1, N1);
  return rad * 180.0 / M_PI;
}

double harmonic_fscore(double r1, double r2) {
  if (r1 + r2 <= 0.0) return 0.0;
  return 2.0 * r1 * r2 / (r1 + r2);
}

double fscore(const Eigen::Matrix3Xd& P1, const Eigen::Matrix3Xd& P2, double r) {
  if (!(r > 0.0)) throw Error("fscore: match radius must be positive");
  Eigen::VectorXd d12, d21;
  nn_dists(P1, P2, d12);
  nn_dists(P2, P1, d21);
  const double r1 = (d12.array() < r).cast<double>().mean();
  const double r2 = (d21.array() < r).cast<double>().mean();
  return 100.0 * harmonic_fscore(r1, r2);
}

void sample_surface(const TriMesh& m, int n, Rng& rng, Eigen::Matrix3Xd& P,
                    Eigen::Matrix3Xd& N) {
  if (m.f.empty()) throw Error("sample_surface: mesh has no faces");
  if (n <= 0) throw Error("sample_surface: sample count must be positive");
  std::vector<double> cum(m.f.size());
  std::vector<Point3> fn(m.f.size());
  double total = 0.0;
  for (std::size_t t = 0; t < m.f.size(); ++t) {
    const auto& f = m.f[t];
    const Point3 c = (m.v[f[1]] - m.v[f[0]]).cross(m.v[f[2]] - m.v[f[0]]);
    const double a = 0.5 * c.norm();
    total += a;
    cum[t] = total;
    fn[t] = a > 1e-300 ? Point3(c.normalized()) : Point3(0, 0, 1);
  }
  if (!(total > 0.0)) throw Error("sample_surface: mesh has zero area");

  P.resize(3, n);
  N.resize(3, n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, total);
    const std::size_t t =
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    const auto& f = m.f[std::min(t, m.f.size() - 1)];
    // Uniform barycentric draw via the square-root trick.
    const double su = std::sqrt(rng.uniform(0.0, 1.0));
    const double v = rng.uniform(0.0, 1.0);
    const double b0 = 1.0 - su, b1 = su * (1.0 - v), b2 = su * v;
    P.col(i) = b0 * m.v[f[0]] + b1 * m.v[f[1]] + b2 * m.v[f[2]];
    N.col(i) = fn[std::min(t, m.f.size() - 1)];
  }
}

MetricReport compare_meshes(const TriMesh& a, const TriMesh& b,
                            const MetricsConfig& cfg) {
  cfg.check();
  // Each mesh gets its own stream at the same seed: the report is symmetric
  // in its arguments, and comparing a mesh against itself yields exact zeros.
  Rng rng_a(cfg.seed), rng_b(cfg.seed);
  Eigen::Matrix3Xd Pa, Na, Pb, Nb;
  sample_surface(a, cfg.samples, rng_a, Pa, Na);
  sample_surface(b, cfg.samples, rng_b, Pb, Nb);
  MetricReport r;
  r.cd = chamfer(Pa, Pb);
  r.hd = hausdorff(Pa, Pb);
  r.ne_degrees = normal_error(Pa, Na, Pb, Nb);
  r.fc_percent = fscore(Pa, Pb, cfg.fc_threshold);
  r.samples = cfg.samples;
  r.fc_threshold = cfg.fc_threshold;
  r.seed = cfg.seed;
  return r;
}

FeatureMetricsResult feature_metrics_fn(
    const std::function<double(const Point3&)>& phi, const feature::FeatureSet& fs,
    const Eigen::Matrix3Xd& gt_points, const Eigen::Matrix3Xd& gt_normals,
    int sections_per_element) {
  if (!phi) throw Error("feature_metrics: empty field function");
  if (fs.dim != 3) throw Error("feature_metrics: 3D feature set required");
  if (fs.elems.empty()) throw Error("feature_metrics: feature set has no elements");
  if (gt_points.cols() == 0) throw Error("feature_metrics: empty ground-truth curve");
  if (gt_normals.cols() != gt_points.cols())
    throw Error("feature_metrics: ground-truth normals must align with points");
  if (sections_per_element < 1)
    throw Error("feature_metrics: need at least one cross-section");

  std::vector<Point3> samples;
  std::vector<Point3> sample_normals;
  int skipped = 0;
  for (const auto& el : fs.elems) {
    const Point3 p[3] = {fs.V.col(el[0]), fs.V.col(el[1]), fs.V.col(el[2])};
    const Point3 cross = (p[1] - p[0]).cross(p[2] - p[0]);
    if (cross.norm() < 1e-300) {
      ++skipped;
      continue;
    }
    const Point3 en = cross.normalized();

    const double s[3] = {phi(p[0]), phi(p[1]), phi(p[2])};
    // The zero curve crossing the element separates one vertex (the apex)
    // from the opposite edge; every apex-to-opposite-edge section therefore
    // crosses the curve, giving a dense transverse sampling.
    int odd = -1;
    for (int v = 0; v < 3; ++v)
      if ((s[v] < 0.0) != (s[(v + 1) % 3] < 0.0) &&
          (s[v] < 0.0) != (s[(v + 2) % 3] < 0.0))
        odd = v;
    if (odd < 0) {
      ++skipped;
      continue;
    }
    const Point3 apex = p[odd];
    const Point3 ea = p[(odd + 1) % 3];
    const Point3 eb = p[(odd + 2) % 3];
    int found = 0;
    for (int j = 1; j <= sections_per_element; ++j) {
      const double t = double(j) / (sections_per_element + 1);
      Point3 a = apex;
      Point3 b = ea + t * (eb - ea);
      double fa = phi(a), fb = phi(b);
      if ((fa < 0.0) == (fb < 0.0)) continue;
      for (int it = 0; it < 60 && (b - a).norm() > 1e-12; ++it) {
        const Point3 mid = 0.5 * (a + b);
        const double fm = phi(mid);
        if ((fm < 0.0) == (fa < 0.0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      samples.push_back(0.5 * (a + b));
      sample_normals.push_back(en);
      ++found;
    }
    if (found == 0) ++skipped;
  }
  if (samples.empty())
    throw Error("feature_metrics: no zero crossing found on any strip element");

  Eigen::Matrix3Xd L(3, samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) L.col(i) = samples[i];

  FeatureMetricsResult res;
  res.n_samples = static_cast<int>(samples.size());
  res.elements_skipped = skipped;
  res.fcd = chamfer(L, gt_points);

  std::vector<Point3> gp(gt_points.cols());
  for (int i = 0; i < gt_points.cols(); ++i) gp[i] = gt_points.col(i);
  KdTree<3> tree(std::move(gp));
  double acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int j = tree.nearest(samples[i]);
    const double c = std::clamp(
        std::abs(sample_normals[i].dot(gt_normals.col(j).normalized())), 0.0, 1.0);
    acc += std::acos(c);
  }
  res.fne_degrees = acc / samples.size() * 180.0 / M_PI;
  return res;
}

FeatureMetricsResult feature_metrics(const nnet::MlpModel& m,
                                     const feature::FeatureSet& fs,
                                     const Eigen::Matrix3Xd& gt_points,
                                     const Eigen::Matrix3Xd& gt_normals,
                                     int sections_per_element) {
  if (m.arch.d != 3) throw Error("feature_metrics: 3D model required");
  if (m.arch.n_feat > 0 && m.arch.n_feat != fs.n_channels)
    throw Error("feature_metrics: model/feature channel mismatch");
  auto phi = [&](const Point3& x) {
    Eigen::VectorXd f =
        m.arch.n_feat > 0 ? feature::eval_values(x, fs) : Eigen::VectorXd(0);
    return nnet::forward(m, x, f);
  };
  return feature_metrics_fn(phi, fs, gt_points, gt_normals, sections_per_element);
}

std::string report_csv(const MetricReport& r) {
  std::ostringstream os;
  os << "cd,hd,ne_degrees,fc_percent,fcd,fne_degrees,samples,fc_threshold,seed\n";
  os.precision(12);
  os << r.cd << "," << r.hd << "," << r.ne_degrees << "," << r.fc_percent << ",";
  if (r.has_feature_metrics)
    os << r.fcd << "," << r.fne_degrees;
  else
    os << ",";
  os << "," << r.samples << "," << r.fc_threshold << "," << r.seed << "\n";
  return os.str();
}

std::string report_text(const MetricReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "chamfer distance   " << r.cd << "\n"
     << "hausdorff distance " << r.hd << "\n"
     << "normal error       " << r.ne_degrees << " deg\n"
     << "f-score            " << r.fc_percent << " % (r=" << r.fc_threshold
     << ")\n";
  if (r.has_feature_metrics)
    os << "feature chamfer    " << r.fcd << "\n"
       << "feature normal err " << r.fne_degrees << " deg\n";
  os << "samples            " << r.samples << " (seed " << r.seed << ")\n";
  return os.str();
}

}  // namespace sharpfield::metrics
