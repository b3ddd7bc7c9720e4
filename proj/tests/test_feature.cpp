#include <doctest.h>

#include <cmath>
#include <cstring>

#include "sharpfield/feature.hpp"
#include "sharpfield/green.hpp"
#include "sharpfield/rng.hpp"

using namespace sharpfield;
using namespace sharpfield::feature;

namespace {

FeatureSet polyline_set_2d(Rng& rng, int n_elems, int n_channels, double rho) {
  FeatureSet fs;
  fs.dim = 2;
  fs.V.resize(2, n_elems + 1);
  Eigen::Vector2d p(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
  for (int i = 0; i <= n_elems; ++i) {
    fs.V.col(i) = p;
    p += Eigen::Vector2d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  }
  for (int e = 0; e < n_elems; ++e) {
    fs.elems.push_back({e, e + 1, -1});
    fs.channel.push_back(static_cast<int>(rng.bounded(n_channels)));
  }
  fs.n_channels = n_channels;
  fs.mollifier.radius = rho;
  fs.check();
  fs.rebuild_acceleration();
  return fs;
}

FeatureSet fan_set_3d(Rng& rng, int n_elems, int n_channels, double rho) {
  FeatureSet fs;
  fs.dim = 3;
  fs.V.resize(3, n_elems + 2);
  for (int i = 0; i < n_elems + 2; ++i)
    fs.V.col(i) = Eigen::Vector3d(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6),
                                  rng.uniform(-0.6, 0.6));
  for (int e = 0; e < n_elems; ++e) {
    fs.elems.push_back({0, e + 1, e + 2});
    fs.channel.push_back(static_cast<int>(rng.bounded(n_channels)));
  }
  fs.n_channels = n_channels;
  fs.mollifier.radius = rho;
  fs.check();
  fs.rebuild_acceleration();
  return fs;
}

double min_elem_distance(const Eigen::VectorXd& x, const FeatureSet& fs) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& el : fs.elems) {
    if (fs.dim == 2) {
      Segment s{Point2(fs.V(0, el[0]), fs.V(1, el[0])),
                Point2(fs.V(0, el[1]), fs.V(1, el[1]))};
      d = std::min(d, green::distance_to_segment(Point2(x[0], x[1]), s));
    } else {
      Triangle t{fs.V.col(el[0]), fs.V.col(el[1]), fs.V.col(el[2])};
      d = std::min(d, green::distance_to_triangle(Point3(x[0], x[1], x[2]), t));
    }
  }
  return d;
}

/// FD perturbations must not flip any element across its support boundary.
bool near_support_boundary(const Eigen::VectorXd& x, const FeatureSet& fs, double slack) {
  for (size_t e = 0; e < fs.elems.size(); ++e) {
    double dist = (x - fs.centroid(static_cast<int>(e))).norm();
    if (std::abs(dist - fs.mollifier.radius) < slack) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("mollifier: pinned values and smooth cutoff") {
  MollifierConfig cfg;  // radius irrelevant here, normalizer 1/e
  CHECK(mollifier(0.0, cfg) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(mollifier(1.0, cfg) == 0.0);
  CHECK(mollifier(2.0, cfg) == 0.0);
  CHECK(mollifier(-1.0, cfg) == 0.0);
  CHECK(mollifier(-0.3, cfg) == mollifier(0.3, cfg));
  // derivative vanishes at the support boundary
  double h = 1e-4;
  CHECK(std::abs((mollifier(1.0 + h, cfg) - mollifier(1.0 - h, cfg)) / (2 * h)) < 1e-8);
  // interior monotone decay
  CHECK(mollifier(0.2, cfg) > mollifier(0.4, cfg));
  CHECK(mollifier(0.4, cfg) > mollifier(0.8, cfg));
}

TEST_CASE("local_weight: centroid peak, boundary zero, FD gradient") {
  MollifierConfig cfg;
  cfg.radius = 0.25;
  Eigen::VectorXd c(2);
  c << 0.3, -0.2;
  CHECK(local_weight(c, c, cfg) == doctest::Approx(1.0).epsilon(1e-15));
  Eigen::VectorXd x = c;
  x[0] += cfg.radius;
  CHECK(local_weight(x, c, cfg) == 0.0);

  x = c + 0.5 * cfg.radius * Eigen::Vector2d(0.6, 0.8).eval();
  double h = 1e-7;
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    double fd = (local_weight(xp, c, cfg) - local_weight(xm, c, cfg)) / (2 * h);
    // analytic gradient via the same chain the evaluator uses
    double q = (x - c).squaredNorm(), rho2 = cfg.radius * cfg.radius;
    double t = q / rho2, w = local_weight(x, c, cfg);
    double om = 1.0 - t * t;
    double dw = w * (-2.0 * t / (om * om)) / rho2 * 2.0 * (x[i] - c[i]);
    CHECK(std::abs(fd - dw) < 1e-6 * std::max(1.0, std::abs(dw)));
  }
}

TEST_CASE("eval_feature: composition oracle on a single segment") {
  FeatureSet fs;
  fs.dim = 2;
  fs.V.resize(2, 2);
  fs.V.col(0) = Eigen::Vector2d(-0.4, 0.1);
  fs.V.col(1) = Eigen::Vector2d(0.3, -0.2);
  fs.elems.push_back({0, 1, -1});
  fs.channel.push_back(0);
  fs.n_channels = 1;
  fs.mollifier.radius = 0.5;
  fs.check();
  fs.rebuild_acceleration();

  Rng rng(11);
  int hits = 0;
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd x(2);
    x << rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8);
    Eigen::VectorXd c = fs.centroid(0);
    FeatureEval ev = eval_feature(x, fs);
    if ((x - c).norm() >= fs.mollifier.radius) {
      CHECK(ev.values[0] == 0.0);
      CHECK(ev.grad_query.row(0).norm() == 0.0);
      continue;
    }
    ++hits;
    Segment s{Point2(fs.V.col(0)), Point2(fs.V.col(1))};
    double want = local_weight(x, c, fs.mollifier) *
                  green::integral_segment(Point2(x[0], x[1]), s);
    CHECK(std::abs(ev.values[0] - want) <= 1e-14 * std::max(1.0, std::abs(want)));
  }
  CHECK(hits > 20);
}

TEST_CASE("eval_feature: channels outside support are exactly zero") {
  Rng rng(21);
  FeatureSet fs = polyline_set_2d(rng, 6, 3, 0.15);
  Eigen::VectorXd far(2);
  far << 50.0, 50.0;
  FeatureEval ev = eval_feature(far, fs);
  CHECK(ev.values.isZero(0.0));
  CHECK(ev.grad_query.isZero(0.0));
  CHECK(ev.grad_vertices.empty());
  CHECK_FALSE(ev.one_sided);
}

TEST_CASE("eval_feature: value/jet fast paths agree with the full evaluation") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureSet fs = trial % 2 == 0 ? polyline_set_2d(rng, 5, 2, 0.4)
                                   : fan_set_3d(rng, 4, 2, 0.5);
    for (int i = 0; i < 20; ++i) {
      Eigen::VectorXd x(fs.dim);
      for (int c = 0; c < fs.dim; ++c) x[c] = rng.uniform(-1.0, 1.0);
      FeatureEval full = eval_feature(x, fs);
      Eigen::VectorXd v = eval_values(x, fs);
      Eigen::VectorXd f;
      Eigen::MatrixXd J;
      bool side = false;
      eval_jet(x, fs, f, J, &side);
      for (int k = 0; k < fs.n_channels; ++k) {
        CHECK(std::abs(v[k] - full.values[k]) <=
              1e-14 * std::max(1.0, std::abs(full.values[k])));
        CHECK(f[k] == full.values[k]);  // same code path
      }
      CHECK((J - full.grad_query).norm() == 0.0);
      CHECK(side == full.one_sided);
    }
  }
}

TEST_CASE("gradients match central differences over random configurations") {
  Rng rng(41);
  const double h = 1e-6;
  int tested = 0;
  for (int trial = 0; tested < 200 && trial < 2000; ++trial) {
    bool three_d = trial % 2 == 1;
    FeatureSet fs = three_d ? fan_set_3d(rng, 3, 2, 0.5) : polyline_set_2d(rng, 4, 2, 0.4);
    Eigen::VectorXd x(fs.dim);
    for (int c = 0; c < fs.dim; ++c) x[c] = rng.uniform(-0.8, 0.8);
    if (min_elem_distance(x, fs) < 1e-2) continue;
    if (near_support_boundary(x, fs, 1e-3)) continue;
    FeatureEval ev = eval_feature(x, fs);
    if (ev.values.isZero(0.0)) continue;  // nothing in support: trivial
    ++tested;
    double scale = std::max(1.0, ev.grad_query.lpNorm<Eigen::Infinity>());

    for (int k = 0; k < fs.n_channels; ++k)
      for (int c = 0; c < fs.dim; ++c) {
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        double fd = (eval_values(xp, fs)[k] - eval_values(xm, fs)[k]) / (2 * h);
        CHECK(std::abs(ev.grad_query(k, c) - fd) < 1e-5 * scale);
      }

    for (const auto& [vid, grad] : ev.grad_vertices)
      for (int c = 0; c < fs.dim; ++c) {
        Eigen::MatrixXd Vp = fs.V, Vm = fs.V;
        Vp(c, vid) += h;
        Vm(c, vid) -= h;
        FeatureSet fsp = fs, fsm = fs;
        fsp.set_vertices(Vp);
        fsm.set_vertices(Vm);
        for (int k = 0; k < fs.n_channels; ++k) {
          double fd = (eval_values(x, fsp)[k] - eval_values(x, fsm)[k]) / (2 * h);
          CHECK(std::abs(grad(k, c) - fd) < 1e-5 * scale);
        }
      }
  }
  CHECK(tested == 200);
}

TEST_CASE("feature values are C0 across an element") {
  FeatureSet fs;
  fs.dim = 2;
  fs.V.resize(2, 2);
  fs.V.col(0) = Eigen::Vector2d(-0.5, 0.0);
  fs.V.col(1) = Eigen::Vector2d(0.5, 0.0);
  fs.elems.push_back({0, 1, -1});
  fs.channel.push_back(0);
  fs.n_channels = 1;
  fs.mollifier.radius = 0.3;
  fs.rebuild_acceleration();

  Eigen::VectorXd x0(2), n(2);
  x0 << 0.07, 0.0;
  n << 0.0, 1.0;
  for (double eps : {1e-3, 1e-4, 1e-6}) {
    double above = eval_values(x0 + eps * n, fs)[0];
    double below = eval_values(x0 - eps * n, fs)[0];
    CHECK(std::abs(above - below) < 2.0 * eps);  // difference is O(eps), no jump
  }
  // one-sided flag on the element, principal-value gradient
  FeatureEval on = eval_feature(x0, fs);
  CHECK(on.one_sided);
  CHECK(std::isfinite(on.values[0]));
  FeatureEval off = eval_feature((x0 + 1e-3 * n).eval(), fs);
  CHECK_FALSE(off.one_sided);
}

TEST_CASE("jump probe: equals the local mollifier weight, symmetric in n") {
  Rng rng(51);
  for (int trial = 0; trial < 12; ++trial) {
    // random single-segment feature
    FeatureSet fs;
    fs.dim = 2;
    fs.V.resize(2, 2);
    fs.V.col(0) = Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
    fs.V.col(1) = fs.V.col(0) + Eigen::Vector2d(rng.uniform(-0.8, 0.8),
                                                rng.uniform(-0.8, 0.8));
    if ((fs.V.col(1) - fs.V.col(0)).norm() < 0.2) continue;
    fs.elems.push_back({0, 1, -1});
    fs.channel.push_back(0);
    fs.n_channels = 1;
    fs.mollifier.radius = 0.3;
    fs.rebuild_acceleration();

    double t = rng.uniform(0.3, 0.7);
    Eigen::VectorXd x0 = (1 - t) * fs.V.col(0) + t * fs.V.col(1);
    Eigen::Vector2d d = (fs.V.col(1) - fs.V.col(0)).normalized();
    Eigen::VectorXd n(2);
    n << -d.y(), d.x();

    double w = local_weight(x0, fs.centroid(0), fs.mollifier);
    double eps = 1e-4;
    double j1 = jump_probe(fs, x0, n, eps);
    double j2 = jump_probe(fs, x0, n, eps / 2);
    double richardson = 2 * j2 - j1;
    CHECK(std::abs(richardson - w) < 0.02 * std::max(w, 1e-6));

    // direction independence must be exact
    CHECK(jump_probe(fs, x0, (-n).eval(), eps) == j1);
  }

  // 3D: triangle centroid
  FeatureSet fs = [] {
    FeatureSet f;
    f.dim = 3;
    f.V.resize(3, 3);
    f.V.col(0) = Eigen::Vector3d(-0.5, -0.4, 0.0);
    f.V.col(1) = Eigen::Vector3d(0.6, -0.3, 0.0);
    f.V.col(2) = Eigen::Vector3d(0.0, 0.7, 0.0);
    f.elems.push_back({0, 1, 2});
    f.channel.push_back(0);
    f.n_channels = 1;
    f.mollifier.radius = 0.4;
    f.rebuild_acceleration();
    return f;
  }();
  Eigen::VectorXd c0 = (fs.V.col(0) + fs.V.col(1) + fs.V.col(2)) / 3.0;
  Eigen::VectorXd n3(3);
  n3 << 0, 0, 1;
  double w = local_weight(c0, fs.centroid(0), fs.mollifier);
  double j1 = jump_probe(fs, c0, n3, 1e-4);
  double j2 = jump_probe(fs, c0, n3, 5e-5);
  CHECK(std::abs(2 * j2 - j1 - w) < 0.02 * std::max(w, 1e-6));
  CHECK(jump_probe(fs, c0, (-n3).eval(), 1e-4) == j1);

  // off the feature: hard error
  Eigen::VectorXd off(3);
  off << 0.0, 0.0, 0.5;
  CHECK_THROWS_AS(jump_probe(fs, off, n3, 1e-4), Error);
}

TEST_CASE("channel locality: far vertex perturbation is bit-identical") {
  FeatureSet fs;
  fs.dim = 2;
  fs.V.resize(2, 4);
  fs.V.col(0) = Eigen::Vector2d(-0.1, 0.0);
  fs.V.col(1) = Eigen::Vector2d(0.1, 0.05);
  fs.V.col(2) = Eigen::Vector2d(10.0, 10.0);
  fs.V.col(3) = Eigen::Vector2d(10.2, 10.1);
  fs.elems.push_back({0, 1, -1});
  fs.elems.push_back({2, 3, -1});
  fs.channel = {0, 1};
  fs.n_channels = 2;
  fs.mollifier.radius = 0.3;
  fs.rebuild_acceleration();

  Eigen::VectorXd x(2);
  x << 0.02, 0.1;
  FeatureEval before = eval_feature(x, fs);

  Eigen::MatrixXd V2 = fs.V;
  V2.col(3) += Eigen::Vector2d(0.37, -1.21);  // still far away
  fs.set_vertices(V2);
  FeatureEval after = eval_feature(x, fs);

  CHECK(std::memcmp(before.values.data(), after.values.data(),
                    sizeof(double) * before.values.size()) == 0);
  CHECK(std::memcmp(before.grad_query.data(), after.grad_query.data(),
                    sizeof(double) * before.grad_query.size()) == 0);
  REQUIRE(before.grad_vertices.size() == after.grad_vertices.size());
  for (const auto& [vid, g] : before.grad_vertices) {
    auto it = after.grad_vertices.find(vid);
    REQUIRE(it != after.grad_vertices.end());
    CHECK(std::memcmp(g.data(), it->second.data(), sizeof(double) * g.size()) == 0);
  }
}

TEST_CASE("feature is smooth away from the elements (no hidden kinks)") {
  Rng rng(61);
  int tested = 0;
  for (int trial = 0; tested < 40 && trial < 500; ++trial) {
    FeatureSet fs = polyline_set_2d(rng, 4, 2, 0.4);
    Eigen::VectorXd x(2);
    x << rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8);
    if (min_elem_distance(x, fs) < 2e-2) continue;
    if (near_support_boundary(x, fs, 5e-3)) continue;
    Eigen::VectorXd sum0 = eval_values(x, fs);
    if (sum0.isZero(0.0)) continue;
    ++tested;
    Eigen::Vector2d u(rng.normal(), rng.normal());
    u.normalize();
    auto f = [&](double s) {
      return eval_values((x + s * Eigen::VectorXd(u)).eval(), fs).sum();
    };
    double h = 1e-3;
    double d2a = (f(h) - 2 * f(0) + f(-h)) / (h * h);
    double d2b = (f(h / 2) - 2 * f(0) + f(-h / 2)) / (h * h / 4);
    CHECK(std::abs(d2a - d2b) < 0.05 * std::max(1.0, std::abs(d2b)));
  }
  CHECK(tested == 40);
}

TEST_CASE("compact support: FD Laplacian vanishes at distance beyond the radius") {
  // Default radius 0.08; every probe at distance >= 0.1 sits outside the
  // support, so the field (and its FD Laplacian) must be identically zero.
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureSet fs;
    fs.dim = 2;
    fs.V.resize(2, 2);
    fs.V.col(0) = Eigen::Vector2d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    fs.V.col(1) = fs.V.col(0) + Eigen::Vector2d(rng.uniform(-0.05, 0.05),
                                                rng.uniform(-0.05, 0.05));
    if ((fs.V.col(1) - fs.V.col(0)).norm() < 0.01) continue;
    fs.elems.push_back({0, 1, -1});
    fs.channel.push_back(0);
    fs.n_channels = 1;
    fs.check();
    fs.rebuild_acceleration();

    Eigen::VectorXd c = fs.centroid(0);
    Eigen::Vector2d dir(rng.normal(), rng.normal());
    dir.normalize();
    Eigen::VectorXd x = c + rng.uniform(0.1, 0.3) * Eigen::VectorXd(dir);
    double h = 1e-4;
    double lap = -4.0 * eval_values(x, fs)[0];
    for (int axis = 0; axis < 2; ++axis)
      for (double sgn : {-1.0, 1.0}) {
        Eigen::VectorXd xp = x;
        xp[axis] += sgn * h;
        lap += eval_values(xp, fs)[0];
      }
    CHECK(std::abs(lap / (h * h)) < 1e-3);
  }
}

TEST_CASE("feature_backward: agrees with eval_feature on the value path") {
  Rng rng(81);
  for (int trial = 0; trial < 30; ++trial) {
    bool three_d = trial % 2 == 1;
    FeatureSet fs = three_d ? fan_set_3d(rng, 3, 2, 0.5) : polyline_set_2d(rng, 4, 2, 0.4);
    Eigen::VectorXd x(fs.dim);
    for (int c = 0; c < fs.dim; ++c) x[c] = rng.uniform(-0.8, 0.8);
    FeatureEval ev = eval_feature(x, fs);
    if (ev.grad_vertices.empty()) continue;

    Eigen::VectorXd fbar(fs.n_channels);
    for (int k = 0; k < fs.n_channels; ++k) fbar[k] = rng.uniform(-1, 1);

    std::map<int, Eigen::VectorXd> vbar;
    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(fs.dim);
    feature_backward(x, fs, fbar, Eigen::MatrixXd(), vbar, &xbar);

    // reference: contract the full first-order eval with fbar
    for (const auto& [vid, g] : ev.grad_vertices) {
      Eigen::VectorXd want = g.transpose() * fbar;
      REQUIRE(vbar.count(vid) == 1);
      CHECK((vbar[vid] - want).norm() < 1e-10 * std::max(1.0, want.norm()));
    }
    Eigen::VectorXd want_x = ev.grad_query.transpose() * fbar;
    CHECK((xbar - want_x).norm() < 1e-10 * std::max(1.0, want_x.norm()));
  }
}

TEST_CASE("feature_backward: mixed second derivatives match finite differences") {
  Rng rng(91);
  const double h = 1e-6;
  int tested = 0;
  for (int trial = 0; tested < 30 && trial < 600; ++trial) {
    bool three_d = trial % 2 == 1;
    FeatureSet fs = three_d ? fan_set_3d(rng, 2, 2, 0.6) : polyline_set_2d(rng, 3, 2, 0.5);
    Eigen::VectorXd x(fs.dim);
    for (int c = 0; c < fs.dim; ++c) x[c] = rng.uniform(-0.7, 0.7);
    if (min_elem_distance(x, fs) < 2e-2) continue;
    if (near_support_boundary(x, fs, 1e-3)) continue;
    FeatureEval ev = eval_feature(x, fs);
    if (ev.grad_vertices.empty()) continue;
    ++tested;

    int k = static_cast<int>(rng.bounded(fs.n_channels));
    int j = static_cast<int>(rng.bounded(fs.dim));
    Eigen::MatrixXd Jbar = Eigen::MatrixXd::Zero(fs.n_channels, fs.dim);
    Jbar(k, j) = 1.0;

    std::map<int, Eigen::VectorXd> vbar;
    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(fs.dim);
    feature_backward(x, fs, Eigen::VectorXd::Zero(fs.n_channels), Jbar, vbar, &xbar);

    // d(J_kj)/d(vertex) via FD on the jet
    for (const auto& [vid, got] : vbar) {
      for (int c = 0; c < fs.dim; ++c) {
        Eigen::MatrixXd Vp = fs.V, Vm = fs.V;
        Vp(c, vid) += h;
        Vm(c, vid) -= h;
        FeatureSet fsp = fs, fsm = fs;
        fsp.set_vertices(Vp);
        fsm.set_vertices(Vm);
        Eigen::VectorXd f;
        Eigen::MatrixXd Jp, Jm;
        eval_jet(x, fsp, f, Jp);
        eval_jet(x, fsm, f, Jm);
        double fd = (Jp(k, j) - Jm(k, j)) / (2 * h);
        CHECK(std::abs(got[c] - fd) < 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
    // d(J_kj)/dx via FD
    for (int c = 0; c < fs.dim; ++c) {
      Eigen::VectorXd xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      Eigen::VectorXd f;
      Eigen::MatrixXd Jp, Jm;
      eval_jet(xp, fs, f, Jp);
      eval_jet(xm, fs, f, Jm);
      double fd = (Jp(k, j) - Jm(k, j)) / (2 * h);
      CHECK(std::abs(xbar[c] - fd) < 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
  CHECK(tested == 30);
}

TEST_CASE("compute_feature_scale: scaled batch has RMS one") {
  Rng rng(103);
  FeatureSet fs = polyline_set_2d(rng, 6, 2, 0.4);
  std::vector<Eigen::VectorXd> batch;
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd x(2);
    x << rng.uniform(-1, 1), rng.uniform(-1, 1);
    batch.push_back(x);
  }
  double s = compute_feature_scale(fs, batch);
  CHECK(s > 0);
  fs.scale = s;
  double sq = 0;
  for (const auto& x : batch) sq += eval_values(x, fs).squaredNorm();
  double rms = std::sqrt(sq / (batch.size() * fs.n_channels));
  CHECK(rms == doctest::Approx(1.0).epsilon(1e-9));

  // empty or out-of-support batch keeps the neutral scale
  std::vector<Eigen::VectorXd> far;
  Eigen::VectorXd xf(2);
  xf << 99.0, 99.0;
  far.push_back(xf);
  CHECK(compute_feature_scale(fs, far) == 1.0);
  CHECK(compute_feature_scale(fs, {}) == 1.0);

  // scale multiplies gradients too
  FeatureSet unit = fs;
  unit.scale = 1.0;
  Eigen::VectorXd probe = fs.centroid(0) + Eigen::VectorXd(Eigen::Vector2d(0.05, 0.07));
  FeatureEval a = eval_feature(probe, fs), b = eval_feature(probe, unit);
  CHECK((a.grad_query - s * b.grad_query).norm() < 1e-12 * a.grad_query.norm());
}

TEST_CASE("feature_set_from_graph: colors become channels; errors surface") {
  FeatureGraph g;
  g.dim = 2;
  g.V.resize(2, 3);
  g.V.col(0) = Eigen::Vector2d(0, 0);
  g.V.col(1) = Eigen::Vector2d(1, 0);
  g.V.col(2) = Eigen::Vector2d(0, 1);
  g.edges = {{0, 1}, {0, 2}};

  MollifierConfig cfg;
  CHECK_THROWS_AS(feature_set_from_graph(g, cfg), Error);  // uncolored

  g.color = {0, 1};
  FeatureSet fs = feature_set_from_graph(g, cfg);
  CHECK(fs.n_channels == 2);
  CHECK(fs.elems.size() == 2);
  CHECK(fs.channel[0] == 0);
  CHECK(fs.channel[1] == 1);

  FeatureSet bad = fs;
  bad.channel[1] = 7;  // out of range
  CHECK_THROWS_AS(bad.check(), Error);
}
