#pragma once
#include <array>

#include "sharpfield/geom.hpp"

namespace sharpfield::green {

/// (1/2pi) ln|x-y|.  Throws SingularityError at x == y.
double green_2d(const Point2& x, const Point2& y);
/// -1/(4pi |x-y|).  Throws SingularityError at x == y.
double green_3d(const Point3& x, const Point3& y);

/// Closed-form single-layer potentials (finite even on the element).
double integral_segment(const Point2& x, const Segment& s);
double integral_triangle(const Point3& x, const Triangle& t);

struct KernelEval2 {
  double value = 0;
  Point2 grad_query = Point2::Zero();
  std::array<Point2, 2> grad_vertices = {Point2::Zero(), Point2::Zero()};
  bool one_sided = false;  // x on the element: gradient is a principal value
};
struct KernelEval3 {
  double value = 0;
  Point3 grad_query = Point3::Zero();
  std::array<Point3, 3> grad_vertices = {Point3::Zero(), Point3::Zero(), Point3::Zero()};
  bool one_sided = false;
};

/// Value + gradients w.r.t. the query and each element vertex (exact
/// algorithmic differentiation of the closed forms).  Throws OnElementError
/// when x lies on the element; the *_one_sided variants flag instead and
/// return the principal-value gradient (tangential part; zero normal part).
KernelEval2 integral_with_grads(const Point2& x, const Segment& s);
KernelEval3 integral_with_grads(const Point3& x, const Triangle& t);
KernelEval2 integral_with_grads_one_sided(const Point2& x, const Segment& s);
KernelEval3 integral_with_grads_one_sided(const Point3& x, const Triangle& t);

/// Test oracles: fixed-refinement composite quadrature (2^r panels of 16-pt
/// Gauss-Legendre on segments, 4^r sub-triangles of a tensor Duffy rule) and
/// tolerance-driven adaptive versions.  Independent of the closed forms.
double integral_quadrature(const Point2& x, const Segment& s, int refinement);
double integral_quadrature(const Point3& x, const Triangle& t, int refinement);
double integral_quadrature_adaptive(const Point2& x, const Segment& s, double rel_tol);
double integral_quadrature_adaptive(const Point3& x, const Triangle& t, double rel_tol);

double distance_to_segment(const Point2& x, const Segment& s);
double distance_to_triangle(const Point3& x, const Triangle& t);

/// x counts as on-element below this distance; gradients are one-sided there.
inline constexpr double kOnElementTol = 1e-12;

}  // namespace sharpfield::green
