#pragma once
#include <array>
#include <cmath>
#include <type_traits>

namespace sharpfield {

/// Forward-mode dual number with N partials over scalar S.  S may itself be a
/// Dual, which yields exact mixed second derivatives (used for the
/// d^2/dx dv terms of the feature function).  Branch conditions in the closed
/// forms must compare `leading()` values, never the duals themselves.
template <class S, int N>
struct Dual {
  S v;
  std::array<S, N> d;

  Dual() : v(S(0.0)) { d.fill(S(0.0)); }
  Dual(double c) : v(S(c)) { d.fill(S(0.0)); }  // NOLINT: implicit by design
  explicit Dual(const S& val)
    requires(!std::is_same_v<S, double>)
      : v(val) {
    d.fill(S(0.0));
  }

  static Dual var(const S& val, int slot) {
    Dual r(val);
    r.d[slot] = S(1.0);
    return r;
  }
};

inline double leading(double x) { return x; }
template <class S, int N>
double leading(const Dual<S, N>& x) {
  return leading(x.v);
}

// ---- arithmetic -----------------------------------------------------------

template <class S, int N>
Dual<S, N> operator+(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  r.v = a.v + b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <class S, int N>
Dual<S, N> operator-(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  r.v = a.v - b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <class S, int N>
Dual<S, N> operator-(const Dual<S, N>& a) {
  Dual<S, N> r;
  r.v = -a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}
template <class S, int N>
Dual<S, N> operator*(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  r.v = a.v * b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <class S, int N>
Dual<S, N> operator/(const Dual<S, N>& a, const Dual<S, N>& b) {
  Dual<S, N> r;
  S inv = S(1.0) / b.v;
  r.v = a.v * inv;
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}

template <class S, int N> Dual<S, N> operator+(const Dual<S, N>& a, double c) { return a + Dual<S, N>(c); }
template <class S, int N> Dual<S, N> operator+(double c, const Dual<S, N>& a) { return Dual<S, N>(c) + a; }
template <class S, int N> Dual<S, N> operator-(const Dual<S, N>& a, double c) { return a - Dual<S, N>(c); }
template <class S, int N> Dual<S, N> operator-(double c, const Dual<S, N>& a) { return Dual<S, N>(c) - a; }
template <class S, int N> Dual<S, N> operator*(const Dual<S, N>& a, double c) { return a * Dual<S, N>(c); }
template <class S, int N> Dual<S, N> operator*(double c, const Dual<S, N>& a) { return Dual<S, N>(c) * a; }
template <class S, int N> Dual<S, N> operator/(const Dual<S, N>& a, double c) { return a / Dual<S, N>(c); }
template <class S, int N> Dual<S, N> operator/(double c, const Dual<S, N>& a) { return Dual<S, N>(c) / a; }

// ---- elementary functions (chain rule on the value's derivative) ----------

using std::atan2;
using std::exp;
using std::log;
using std::sqrt;

template <class S, int N>
Dual<S, N> exp(const Dual<S, N>& a) {
  Dual<S, N> r;
  r.v = exp(a.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * r.v;
  return r;
}

template <class S, int N>
Dual<S, N> sqrt(const Dual<S, N>& a) {
  Dual<S, N> r;
  r.v = sqrt(a.v);
  S half_inv = S(0.5) / r.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * half_inv;
  return r;
}
template <class S, int N>
Dual<S, N> log(const Dual<S, N>& a) {
  Dual<S, N> r;
  r.v = log(a.v);
  S inv = S(1.0) / a.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * inv;
  return r;
}
/// atan2 differentiated as d(atan2(y,x)) = (x dy - y dx) / (x^2 + y^2);
/// valid away from the origin, recursion handles nested duals.
template <class S, int N>
Dual<S, N> atan2(const Dual<S, N>& y, const Dual<S, N>& x) {
  Dual<S, N> r;
  r.v = atan2(y.v, x.v);
  S inv = S(1.0) / (x.v * x.v + y.v * y.v);
  for (int i = 0; i < N; ++i) r.d[i] = (x.v * y.d[i] - y.v * x.d[i]) * inv;
  return r;
}

}  // namespace sharpfield
