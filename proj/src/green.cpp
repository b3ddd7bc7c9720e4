#include "sharpfield/green.hpp"

#include <cmath>
#include <vector>

#include "sharpfield/green_forms.hpp"

namespace sharpfield::green {

using green_forms::V2;
using green_forms::V3;

double green_2d(const Point2& x, const Point2& y) {
  double r = (x - y).norm();
  if (r < 1e-300) throw SingularityError("green_2d evaluated at x == y");
  return std::log(r) / (2.0 * kPi);
}

double green_3d(const Point3& x, const Point3& y) {
  double r = (x - y).norm();
  if (r < 1e-300) throw SingularityError("green_3d evaluated at x == y");
  return -1.0 / (4.0 * kPi * r);
}

double integral_segment(const Point2& x, const Segment& s) {
  V2<double> xv{x.x(), x.y()}, av{s.a.x(), s.a.y()}, bv{s.b.x(), s.b.y()};
  return green_forms::segment_potential(xv, av, bv);
}

double integral_triangle(const Point3& x, const Triangle& t) {
  V3<double> xv{x.x(), x.y(), x.z()}, av{t.a.x(), t.a.y(), t.a.z()},
      bv{t.b.x(), t.b.y(), t.b.z()}, cv{t.c.x(), t.c.y(), t.c.z()};
  return green_forms::triangle_potential(xv, av, bv, cv);
}

double distance_to_segment(const Point2& x, const Segment& s) {
  Point2 d = s.b - s.a;
  double len2 = d.squaredNorm();
  if (len2 < 1e-300) return (x - s.a).norm();
  double t = std::clamp((x - s.a).dot(d) / len2, 0.0, 1.0);
  return (x - (s.a + t * d)).norm();
}

double distance_to_triangle(const Point3& x, const Triangle& t) {
  // Ericson-style closest point on triangle.
  Point3 ab = t.b - t.a, ac = t.c - t.a, ap = x - t.a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (x - t.a).norm();
  Point3 bp = x - t.b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (x - t.b).norm();
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    return (x - (t.a + v * ab)).norm();
  }
  Point3 cp = x - t.c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (x - t.c).norm();
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double w = d2 / (d2 - d6);
    return (x - (t.a + w * ac)).norm();
  }
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (x - (t.b + w * (t.c - t.b))).norm();
  }
  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return (x - (t.a + v * ab + w * ac)).norm();
}

// ---- gradients via forward duals ------------------------------------------

namespace {

KernelEval2 segment_grads(const Point2& x, const Segment& s) {
  using D = Dual<double, 6>;
  V2<D> xv{D::var(x.x(), 0), D::var(x.y(), 1)};
  V2<D> av{D::var(s.a.x(), 2), D::var(s.a.y(), 3)};
  V2<D> bv{D::var(s.b.x(), 4), D::var(s.b.y(), 5)};
  D r = green_forms::segment_potential(xv, av, bv);
  KernelEval2 out;
  out.value = r.v;
  out.grad_query = Point2(r.d[0], r.d[1]);
  out.grad_vertices[0] = Point2(r.d[2], r.d[3]);
  out.grad_vertices[1] = Point2(r.d[4], r.d[5]);
  return out;
}

KernelEval3 triangle_grads(const Point3& x, const Triangle& t) {
  using D = Dual<double, 12>;
  V3<D> xv{D::var(x.x(), 0), D::var(x.y(), 1), D::var(x.z(), 2)};
  V3<D> av{D::var(t.a.x(), 3), D::var(t.a.y(), 4), D::var(t.a.z(), 5)};
  V3<D> bv{D::var(t.b.x(), 6), D::var(t.b.y(), 7), D::var(t.b.z(), 8)};
  V3<D> cv{D::var(t.c.x(), 9), D::var(t.c.y(), 10), D::var(t.c.z(), 11)};
  D r = green_forms::triangle_potential(xv, av, bv, cv);
  KernelEval3 out;
  out.value = r.v;
  out.grad_query = Point3(r.d[0], r.d[1], r.d[2]);
  for (int v = 0; v < 3; ++v)
    out.grad_vertices[v] = Point3(r.d[3 + 3 * v], r.d[4 + 3 * v], r.d[5 + 3 * v]);
  return out;
}

}  // namespace

KernelEval2 integral_with_grads_one_sided(const Point2& x, const Segment& s) {
  KernelEval2 out = segment_grads(x, s);
  out.one_sided = distance_to_segment(x, s) < kOnElementTol;
  return out;
}

KernelEval3 integral_with_grads_one_sided(const Point3& x, const Triangle& t) {
  KernelEval3 out = triangle_grads(x, t);
  out.one_sided = distance_to_triangle(x, t) < kOnElementTol;
  return out;
}

KernelEval2 integral_with_grads(const Point2& x, const Segment& s) {
  KernelEval2 out = integral_with_grads_one_sided(x, s);
  if (out.one_sided)
    throw OnElementError("gradient requested on the feature element (2D segment)");
  return out;
}

KernelEval3 integral_with_grads(const Point3& x, const Triangle& t) {
  KernelEval3 out = integral_with_grads_one_sided(x, t);
  if (out.one_sided)
    throw OnElementError("gradient requested on the feature element (3D triangle)");
  return out;
}

// ---- quadrature oracles ---------------------------------------------------

namespace {

/// n-point Gauss-Legendre nodes/weights on [-1,1] via Newton on P_n.
struct GaussRule {
  std::vector<double> x, w;
  explicit GaussRule(int n) : x(n), w(n) {
    for (int i = 0; i < n; ++i) {
      double xi = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = xi;
        for (int k = 2; k <= n; ++k) {
          double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
        double dx = p1 / dp;
        xi -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      x[i] = xi;
      w[i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
  }
};

const GaussRule& gauss16() {
  static const GaussRule r(16);
  return r;
}
const GaussRule& gauss8() {
  static const GaussRule r(8);
  return r;
}

double segment_panel(const Point2& x, const Point2& a, const Point2& b) {
  const GaussRule& g = gauss16();
  double len = (b - a).norm();
  double acc = 0;
  for (size_t i = 0; i < g.x.size(); ++i) {
    double t = 0.5 * (g.x[i] + 1.0);
    Point2 y = a + t * (b - a);
    acc += 0.5 * g.w[i] * std::log((x - y).norm()) / (2.0 * kPi);
  }
  return acc * len;
}

/// Tensor Gauss rule on the triangle via the Duffy-style map
/// P(s,v) = A + s (B-A) + (1-s) v (C-A), |J| = 2 Area (1-s).
double triangle_panel(const Point3& x, const Point3& A, const Point3& B, const Point3& C) {
  const GaussRule& g = gauss8();
  double area2 = (B - A).cross(C - A).norm();  // = 2 * Area
  if (area2 < 1e-300) return 0;
  double acc = 0;
  for (size_t i = 0; i < g.x.size(); ++i) {
    double s = 0.5 * (g.x[i] + 1.0), ws = 0.5 * g.w[i];
    for (size_t j = 0; j < g.x.size(); ++j) {
      double v = 0.5 * (g.x[j] + 1.0), wv = 0.5 * g.w[j];
      Point3 y = A + s * (B - A) + (1.0 - s) * v * (C - A);
      acc += ws * wv * (1.0 - s) * (-1.0 / (4.0 * kPi * (x - y).norm()));
    }
  }
  return acc * area2;
}

double segment_adaptive(const Point2& x, const Point2& a, const Point2& b, double tol_abs,
                        int depth) {
  double whole = segment_panel(x, a, b);
  Point2 m = 0.5 * (a + b);
  double split = segment_panel(x, a, m) + segment_panel(x, m, b);
  if (std::abs(whole - split) <= tol_abs || depth >= 40) return split;
  return segment_adaptive(x, a, m, tol_abs * 0.5, depth + 1) +
         segment_adaptive(x, m, b, tol_abs * 0.5, depth + 1);
}

double triangle_adaptive(const Point3& x, const Point3& A, const Point3& B, const Point3& C,
                         double tol_abs, int depth) {
  double whole = triangle_panel(x, A, B, C);
  Point3 ab = 0.5 * (A + B), bc = 0.5 * (B + C), ca = 0.5 * (C + A);
  double split = triangle_panel(x, A, ab, ca) + triangle_panel(x, ab, B, bc) +
                 triangle_panel(x, ca, bc, C) + triangle_panel(x, ab, bc, ca);
  if (std::abs(whole - split) <= tol_abs || depth >= 30) return split;
  double child_tol = tol_abs * 0.25;
  return triangle_adaptive(x, A, ab, ca, child_tol, depth + 1) +
         triangle_adaptive(x, ab, B, bc, child_tol, depth + 1) +
         triangle_adaptive(x, ca, bc, C, child_tol, depth + 1) +
         triangle_adaptive(x, ab, bc, ca, child_tol, depth + 1);
}

}  // namespace

double integral_quadrature(const Point2& x, const Segment& s, int refinement) {
  if ((s.b - s.a).squaredNorm() < 1e-300) return 0;
  int panels = 1 << std::max(0, refinement);
  double acc = 0;
  for (int i = 0; i < panels; ++i) {
    double t0 = static_cast<double>(i) / panels, t1 = static_cast<double>(i + 1) / panels;
    acc += segment_panel(x, s.a + t0 * (s.b - s.a), s.a + t1 * (s.b - s.a));
  }
  return acc;
}

double integral_quadrature(const Point3& x, const Triangle& t, int refinement) {
  struct Rec {
    Point3 a, b, c;
    int level;
  };
  std::vector<Rec> stack{{t.a, t.b, t.c, 0}};
  double acc = 0;
  while (!stack.empty()) {
    Rec r = stack.back();
    stack.pop_back();
    if (r.level >= refinement) {
      acc += triangle_panel(x, r.a, r.b, r.c);
    } else {
      Point3 ab = 0.5 * (r.a + r.b), bc = 0.5 * (r.b + r.c), ca = 0.5 * (r.c + r.a);
      stack.push_back({r.a, ab, ca, r.level + 1});
      stack.push_back({ab, r.b, bc, r.level + 1});
      stack.push_back({ca, bc, r.c, r.level + 1});
      stack.push_back({ab, bc, ca, r.level + 1});
    }
  }
  return acc;
}

double integral_quadrature_adaptive(const Point2& x, const Segment& s, double rel_tol) {
  if ((s.b - s.a).squaredNorm() < 1e-300) return 0;
  double rough = std::abs(segment_panel(x, s.a, s.b));
  return segment_adaptive(x, s.a, s.b, rel_tol * (rough + 1e-14), 0);
}

double integral_quadrature_adaptive(const Point3& x, const Triangle& t, double rel_tol) {
  double rough = std::abs(triangle_panel(x, t.a, t.b, t.c));
  if (rough == 0) return 0;
  return triangle_adaptive(x, t.a, t.b, t.c, rel_tol * (rough + 1e-14), 0);
}

}  // namespace sharpfield::green
