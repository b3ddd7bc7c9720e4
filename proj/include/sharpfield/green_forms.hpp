#pragma once
#include <array>

#include "sharpfield/common.hpp"
#include "sharpfield/dual.hpp"

// Closed forms of the Laplace single-layer potentials over a segment (2D,
// kernel ln(r)/2pi) and a triangle (3D, kernel -1/(4 pi r)), templated on the
// scalar so forward-mode duals extract exact first and mixed second
// derivatives from the same expressions.
//
// Derivations (self-contained):
//  2D, x at perpendicular distance h from the segment's line, u the signed
//  along-line coordinate relative to the foot point:
//      int ln(u^2+h^2)^(1/2) du = [ u ln(u^2+h^2) - 2u + 2h atan(u/h) ] / 2.
//  On the line (h=0) this degenerates to int ln|u| du = u ln|u| - u, with the
//  0 * ln 0 limit taken as 0.
//
//  3D, p the in-plane projection of x, h the height above the plane.  Writing
//  1/R as the planar divergence of ((R - |h|)/s^2) * s with s = y - p and
//  integrating by parts edge by edge gives
//      int_T dA/R = sum_i d_i ln((R_i+ + t_i+) / (R_i- + t_i-)) - |h| Omega,
//  d_i the signed in-plane distance from p to edge i (outward normal
//  l_hat x n_hat), t_i-+ the along-edge coordinates of the edge endpoints
//  relative to the foot of p, R the 3D distances to the endpoints, and Omega
//  the (positive) solid angle of the triangle seen from x, evaluated with the
//  van Oosterom-Strackee atan2 form.  The log ratio is rewritten with
//  (R+t)(R-t) = d^2 + h^2 when t < 0 to avoid cancellation.
//
// Branch rule: within 1e-12 of the supporting line/plane the limit branch is
// used (h-dependent terms dropped); their true contribution vanishes to first
// order there unless x is on the element itself, where only one-sided
// gradients exist (callers detect that case separately).

namespace sharpfield::green_forms {

inline constexpr double kBranchEps2 = 1e-24;  // squared 1e-12 line/plane snap

template <class T> using V2 = std::array<T, 2>;
template <class T> using V3 = std::array<T, 3>;

template <class T> V2<T> sub(const V2<T>& a, const V2<T>& b) { return {a[0] - b[0], a[1] - b[1]}; }
template <class T> V3<T> sub(const V3<T>& a, const V3<T>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
template <class T> T dot(const V2<T>& a, const V2<T>& b) { return a[0] * b[0] + a[1] * b[1]; }
template <class T> T dot(const V3<T>& a, const V3<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
template <class T> V3<T> cross(const V3<T>& a, const V3<T>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// log|u| valid for either sign of the leading value.
template <class T>
T log_abs(const T& u) {
  using std::log;
  using sharpfield::log;
  return leading(u) >= 0 ? log(u) : log(T(0.0) - u);
}

/// (1/2pi) int_a^b ln|x - y| ds(y)
template <class T>
T segment_potential(const V2<T>& x, const V2<T>& a, const V2<T>& b) {
  using std::atan2;
  using std::log;
  using std::sqrt;
  using sharpfield::atan2;
  using sharpfield::log;
  using sharpfield::sqrt;

  V2<T> d = sub(b, a);
  T len2 = dot(d, d);
  if (leading(len2) < 1e-300) return T(0.0);  // degenerate segment
  T len = sqrt(len2);
  V2<T> dh = {d[0] / len, d[1] / len};
  V2<T> w = sub(x, a);
  T t0 = dot(w, dh);
  V2<T> hv = {w[0] - t0 * dh[0], w[1] - t0 * dh[1]};
  T h2 = dot(hv, hv);
  T u1 = T(0.0) - t0;
  T u2 = len - t0;

  if (leading(h2) > kBranchEps2) {
    T h = sqrt(h2);
    auto F = [&](const T& u) {
      return u * log(u * u + h2) - 2.0 * u + 2.0 * h * atan2(u, h);
    };
    return (F(u2) - F(u1)) * (1.0 / (4.0 * kPi));
  }
  // on the supporting line: int ln|u| du = u ln|u| - u, 0 ln 0 -> 0
  auto F0 = [&](const T& u) {
    if (std::abs(leading(u)) < 1e-300) return T(0.0);
    return u * log_abs(u) - u;
  };
  return (F0(u2) - F0(u1)) * (1.0 / (2.0 * kPi));
}

/// -(1/4pi) int_T dA / |x - y|
template <class T>
T triangle_potential(const V3<T>& x, const V3<T>& A, const V3<T>& B, const V3<T>& C) {
  using std::atan2;
  using std::log;
  using std::sqrt;
  using sharpfield::atan2;
  using sharpfield::log;
  using sharpfield::sqrt;

  V3<T> e1 = sub(B, A), e2 = sub(C, A);
  V3<T> nv = cross(e1, e2);
  T n2 = dot(nv, nv);
  if (leading(n2) < 1e-300) return T(0.0);  // degenerate triangle
  T nn = sqrt(n2);
  V3<T> nh = {nv[0] / nn, nv[1] / nn, nv[2] / nn};
  V3<T> w = sub(x, A);
  T hs = dot(w, nh);  // signed height of x over the plane
  T h2 = hs * hs;
  bool in_plane = leading(h2) <= kBranchEps2;

  const V3<T>* P[3] = {&A, &B, &C};
  T I1(0.0);  // int dA / R
  for (int i = 0; i < 3; ++i) {
    const V3<T>& Pi = *P[i];
    const V3<T>& Pj = *P[(i + 1) % 3];
    V3<T> lv = sub(Pj, Pi);
    T ll = sqrt(dot(lv, lv));
    V3<T> lh = {lv[0] / ll, lv[1] / ll, lv[2] / ll};
    V3<T> mh = cross(lh, nh);  // outward in-plane edge normal
    // in-plane vector from the projection p to Pi: (Pi - x) + hs * nh
    V3<T> wi = {Pi[0] - x[0] + hs * nh[0], Pi[1] - x[1] + hs * nh[1], Pi[2] - x[2] + hs * nh[2]};
    T di = dot(wi, mh);
    T b2 = di * di + h2;
    if (leading(b2) < 1e-280) continue;  // x on the edge's line: d ln(..) -> 0
    T tm = dot(wi, lh);
    T tp = tm + ll;
    V3<T> xm = sub(Pi, x), xp = sub(Pj, x);
    T Rm = sqrt(dot(xm, xm)), Rp = sqrt(dot(xp, xp));
    T lr;
    if (leading(tm) >= 0.0)
      lr = log((Rp + tp) / (Rm + tm));
    else if (leading(tp) <= 0.0)
      lr = log((Rm - tm) / (Rp - tp));
    else
      lr = log((Rp + tp) * (Rm - tm) / b2);
    I1 = I1 + di * lr;
  }

  if (!in_plane) {
    // solid angle (van Oosterom-Strackee), made positive
    V3<T> v0 = sub(A, x), v1 = sub(B, x), v2 = sub(C, x);
    T r0 = sqrt(dot(v0, v0)), r1 = sqrt(dot(v1, v1)), r2 = sqrt(dot(v2, v2));
    T num = dot(v0, cross(v1, v2));
    T den = r0 * r1 * r2 + dot(v0, v1) * r2 + dot(v1, v2) * r0 + dot(v2, v0) * r1;
    T omega = 2.0 * atan2(num, den);
    if (leading(omega) < 0) omega = T(0.0) - omega;
    T habs = leading(hs) >= 0 ? hs : T(0.0) - hs;
    I1 = I1 - habs * omega;
  }
  return I1 * (-1.0 / (4.0 * kPi));
}

}  // namespace sharpfield::green_forms
