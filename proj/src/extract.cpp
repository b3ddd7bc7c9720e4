#include "sharpfield/extract.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <utility>

#include "sharpfield/common.hpp"

namespace sharpfield::extract {

void FieldGrid::check() const {
  if (dim != 2 && dim != 3) throw Error("FieldGrid: dim must be 2 or 3");
  std::size_t n = 1;
  for (int a = 0; a < 3; ++a) {
    if (a < dim) {
      if (res[a] < 2) throw Error("FieldGrid: resolution must be >= 2 per axis");
      if (!(bbox_max[a] > bbox_min[a])) throw Error("FieldGrid: empty bbox axis");
    } else if (res[a] != 1) {
      throw Error("FieldGrid: inactive axis must have resolution 1");
    }
    n *= static_cast<std::size_t>(res[a]);
  }
  if (values.size() != n) throw Error("FieldGrid: value count mismatch");
}

FieldGrid sample_grid(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                      const Eigen::VectorXd& bbox_min, const Eigen::VectorXd& bbox_max,
                      const std::vector<int>& res) {
  const int dim = m.arch.d;
  if (dim != 2 && dim != 3) throw Error("sample_grid: model dimension must be 2 or 3");
  if (bbox_min.size() != dim || bbox_max.size() != dim ||
      static_cast<int>(res.size()) != dim)
    throw Error("sample_grid: bbox/resolution size must match the model dimension");
  const int nf = m.arch.n_feat;
  if (nf > 0 && nf != fs.n_channels)
    throw Error("sample_grid: model/feature channel mismatch");

  FieldGrid g;
  g.dim = dim;
  for (int a = 0; a < dim; ++a) {
    g.bbox_min[a] = bbox_min[a];
    g.bbox_max[a] = bbox_max[a];
    g.res[a] = res[a];
  }
  if (dim == 2) g.res[2] = 1;
  std::size_t total = 1;
  for (int a = 0; a < 3; ++a) total *= static_cast<std::size_t>(g.res[a]);
  g.values.resize(total);
  g.check();  // validates resolution and bbox before any evaluation

  // Chunked batch evaluation in storage order (x fastest).
  const int chunk = 4096;
  Eigen::MatrixXd X(dim, chunk), F(nf, chunk);
  nnet::FieldBatch fb;
  std::size_t base = 0;
  while (base < total) {
    const int b = static_cast<int>(std::min<std::size_t>(chunk, total - base));
    for (int s = 0; s < b; ++s) {
      std::size_t idx = base + s;
      const int i = static_cast<int>(idx % g.res[0]);
      const int j = static_cast<int>((idx / g.res[0]) % g.res[1]);
      const int k = static_cast<int>(idx / (std::size_t(g.res[0]) * g.res[1]));
      Eigen::VectorXd x(dim);
      x[0] = g.coord(0, i);
      x[1] = g.coord(1, j);
      if (dim == 3) x[2] = g.coord(2, k);
      X.col(s) = x;
      if (nf > 0) F.col(s) = feature::eval_values(x, fs);
    }
    nnet::field_forward(m, X.leftCols(b), F.leftCols(b), false, fb);
    for (int s = 0; s < b; ++s) g.values[base + s] = fb.phi(s);
    base += b;
  }
  return g;
}

namespace {

using Key = std::pair<double, double>;

/// Chain undirected segments with exactly matching endpoints into polylines
/// (closed loops repeat their first point).
std::vector<std::vector<Point2>> chain_segments(
    const std::vector<std::array<Point2, 2>>& segs) {
  std::multimap<Key, int> by_end;
  for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
    by_end.insert({{segs[s][0].x(), segs[s][0].y()}, s});
    by_end.insert({{segs[s][1].x(), segs[s][1].y()}, s});
  }
  std::vector<bool> used(segs.size(), false);
  auto next_at = [&](const Point2& p, int skip) {
    auto [lo, hi] = by_end.equal_range({p.x(), p.y()});
    for (auto it = lo; it != hi; ++it)
      if (it->second != skip && !used[it->second]) return it->second;
    return -1;
  };

  std::vector<std::vector<Point2>> out;
  for (int s0 = 0; s0 < static_cast<int>(segs.size()); ++s0) {
    if (used[s0]) continue;
    used[s0] = true;
    std::vector<Point2> line{segs[s0][0], segs[s0][1]};
    // Extend forward, then backward.
    for (int pass = 0; pass < 2; ++pass) {
      int prev = s0;
      while (true) {
        const Point2 tip = line.back();
        const int nx = next_at(tip, prev);
        if (nx < 0) break;
        used[nx] = true;
        line.push_back((segs[nx][0] - tip).norm() == 0.0 ? segs[nx][1] : segs[nx][0]);
        prev = nx;
        if ((line.back() - line.front()).norm() == 0.0) break;  // closed loop
      }
      if ((line.back() - line.front()).norm() == 0.0) break;
      std::reverse(line.begin(), line.end());
    }
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace

std::vector<std::vector<Point2>> marching_squares(const FieldGrid& grid, double iso) {
  grid.check();
  if (grid.dim != 2) throw Error("marching_squares: 2D grid required");

  std::vector<std::array<Point2, 2>> segs;
  for (int j = 0; j + 1 < grid.res[1]; ++j) {
    for (int i = 0; i + 1 < grid.res[0]; ++i) {
      const double f00 = grid.at(i, j) - iso;
      const double f10 = grid.at(i + 1, j) - iso;
      const double f11 = grid.at(i + 1, j + 1) - iso;
      const double f01 = grid.at(i, j + 1) - iso;
      auto inside = [](double v) { return v < 0.0; };
      const int cb = inside(f00) + 2 * inside(f10) + 4 * inside(f11) + 8 * inside(f01);
      if (cb == 0 || cb == 15) continue;

      const double x0 = grid.coord(0, i), x1 = grid.coord(0, i + 1);
      const double y0 = grid.coord(1, j), y1 = grid.coord(1, j + 1);
      auto lerp = [](double a, double fa, double b, double fb) {
        return a + (b - a) * (fa / (fa - fb));
      };
      const Point2 B(lerp(x0, f00, x1, f10), y0);  // bottom edge crossing
      const Point2 R(x1, lerp(y0, f10, y1, f11));  // right
      const Point2 T(lerp(x0, f01, x1, f11), y1);  // top
      const Point2 L(x0, lerp(y0, f00, y1, f01));  // left

      auto emit = [&](const Point2& a, const Point2& b) {
        if ((a - b).norm() > 0.0) segs.push_back({a, b});
      };
      switch (cb) {
        case 1: case 14: emit(B, L); break;
        case 2: case 13: emit(B, R); break;
        case 3: case 12: emit(L, R); break;
        case 4: case 11: emit(R, T); break;
        case 6: case 9:  emit(B, T); break;
        case 7: case 8:  emit(L, T); break;
        case 5: case 10: {
          // Saddle: disambiguate with the cell-midpoint value (the corner
          // average, which is the bilinear value at the center).
          const double center = 0.25 * (f00 + f10 + f11 + f01);
          const bool diag00 = cb == 5;  // inside corners on the 00-11 diagonal
          if (inside(center) == diag00) {
            emit(B, R);
            emit(T, L);
          } else {
            emit(B, L);
            emit(T, R);
          }
          break;
        }
        default: break;
      }
    }
  }
  return chain_segments(segs);
}

namespace {

struct HermiteSample {
  Point3 p;
  Point3 n;
};

Point3 qef_vertex(const std::vector<HermiteSample>& planes, const Point3& mass,
                  double reg) {
  Eigen::Matrix3d A = reg * Eigen::Matrix3d::Identity();
  Point3 b = reg * mass;
  for (const auto& h : planes) {
    A += h.n * h.n.transpose();
    b += h.n * (h.n.dot(h.p));
  }
  return A.ldlt().solve(b);
}

}  // namespace

TriMesh dual_contouring_fn(const std::function<FieldJet(const Point3&)>& field,
                           const Point3& bbox_min, const Point3& bbox_max,
                           const std::array<int, 3>& res,
                           const DualContourConfig& cfg) {
  if (!field) throw Error("dual_contouring: empty field function");
  for (int a = 0; a < 3; ++a) {
    if (res[a] < 2) throw Error("dual_contouring: resolution must be >= 2 per axis");
    if (!(bbox_max[a] > bbox_min[a])) throw Error("dual_contouring: empty bbox axis");
  }
  const int nx = res[0], ny = res[1], nz = res[2];
  auto coord = [&](int a, int i) {
    return bbox_min[a] + (bbox_max[a] - bbox_min[a]) * i / double(res[a] - 1);
  };
  auto node = [&](int i, int j, int k) {
    return Point3(coord(0, i), coord(1, j), coord(2, k));
  };

  // Node signs (phi < 0 = inside).
  std::vector<double> phi(static_cast<std::size_t>(nx) * ny * nz);
  auto pidx = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(j) +
                                           static_cast<std::size_t>(ny) * k);
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) phi[pidx(i, j, k)] = field(node(i, j, k)).phi;

  // Hermite data per sign-change edge: bisection to the crossing, gradient
  // there (already composed through the feature channels by the caller).
  struct EdgeCross {
    HermiteSample h;
    bool neg_to_pos;  // phi < 0 at the lower-index node
  };
  std::map<std::array<int, 4>, EdgeCross> crossings;  // (axis, i, j, k) -> data
  auto visit_edge = [&](int axis, int i, int j, int k) {
    const int di = axis == 0, dj = axis == 1, dk = axis == 2;
    const double pa = phi[pidx(i, j, k)];
    const double pb = phi[pidx(i + di, j + dj, k + dk)];
    if (!((pa < 0.0) != (pb < 0.0))) return;
    Point3 a = node(i, j, k), b = node(i + di, j + dj, k + dk);
    double fa = pa;
    while ((b - a).norm() > cfg.bisection_tol) {
      const Point3 mid = 0.5 * (a + b);
      const double fm = field(mid).phi;
      if ((fm < 0.0) == (fa < 0.0)) {
        a = mid;
        fa = fm;
      } else {
        b = mid;
      }
    }
    const Point3 p = 0.5 * (a + b);
    const FieldJet jet = field(p);
    EdgeCross ec;
    ec.h.p = p;
    const double gn = jet.grad.norm();
    ec.h.n = gn > 1e-300 ? Point3(jet.grad / gn) : Point3(0, 0, 0);
    ec.neg_to_pos = pa < 0.0;
    crossings[{axis, i, j, k}] = ec;
  };
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (i + 1 < nx) visit_edge(0, i, j, k);
        if (j + 1 < ny) visit_edge(1, i, j, k);
        if (k + 1 < nz) visit_edge(2, i, j, k);
      }

  // One vertex per cell with crossings on its edges.
  std::map<std::array<int, 3>, int> cell_vertex;
  std::vector<Point3> verts;
  auto cell_of = [&](int ci, int cj, int ck) -> int {
    if (ci < 0 || cj < 0 || ck < 0 || ci >= nx - 1 || cj >= ny - 1 || ck >= nz - 1)
      return -1;
    const std::array<int, 3> key{ci, cj, ck};
    auto it = cell_vertex.find(key);
    if (it != cell_vertex.end()) return it->second;

    std::vector<HermiteSample> planes;
    Point3 mass(0, 0, 0);
    // The cell's 12 edges: 4 per axis.
    for (int axis = 0; axis < 3; ++axis) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      for (int du = 0; du <= 1; ++du)
        for (int dv = 0; dv <= 1; ++dv) {
          std::array<int, 4> key4{axis, ci, cj, ck};
          key4[1 + u] += du;
          key4[1 + v] += dv;
          auto ec = crossings.find(key4);
          if (ec == crossings.end()) continue;
          mass += ec->second.h.p;
          if (ec->second.h.n.norm() > 0.0) planes.push_back(ec->second.h);
        }
    }
    if (planes.empty()) return -1;
    mass /= double(planes.size());
    Point3 p = qef_vertex(planes, mass, cfg.qef_regularization);
    for (int a = 0; a < 3; ++a)  // clamp into the cell
      p[a] = std::clamp(p[a], coord(a, (a == 0 ? ci : a == 1 ? cj : ck)),
                        coord(a, (a == 0 ? ci : a == 1 ? cj : ck) + 1));
    const int id = static_cast<int>(verts.size());
    verts.push_back(p);
    cell_vertex[key] = id;
    return id;
  };

  // A quad per interior sign-change edge, wound by the field direction.
  std::vector<std::array<int, 3>> faces;
  for (const auto& [key4, ec] : crossings) {
    const int axis = key4[0];
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    int c[3] = {key4[1], key4[2], key4[3]};
    // Four cells around the edge, counter-clockwise seen from +axis.
    const int duv[4][2] = {{-1, -1}, {0, -1}, {0, 0}, {-1, 0}};
    int q[4];
    bool ok = true;
    for (int t = 0; t < 4; ++t) {
      int cc[3] = {c[0], c[1], c[2]};
      cc[u] += duv[t][0];
      cc[v] += duv[t][1];
      q[t] = cell_of(cc[0], cc[1], cc[2]);
      ok = ok && q[t] >= 0;
    }
    if (!ok) continue;  // edge on the box hull: open boundary, skip
    if (ec.neg_to_pos) {
      faces.push_back({q[0], q[1], q[2]});
      faces.push_back({q[0], q[2], q[3]});
    } else {
      faces.push_back({q[0], q[2], q[1]});
      faces.push_back({q[0], q[3], q[2]});
    }
  }
  return TriMesh(std::move(verts), std::move(faces));
}

TriMesh dual_contouring(const nnet::MlpModel& m, const feature::FeatureSet& fs,
                        const Point3& bbox_min, const Point3& bbox_max,
                        const std::array<int, 3>& res, const DualContourConfig& cfg) {
  if (m.arch.d != 3) throw Error("dual_contouring: 3D model required");
  const int nf = m.arch.n_feat;
  if (nf > 0 && nf != fs.n_channels)
    throw Error("dual_contouring: model/feature channel mismatch");
  auto field = [&m, &fs, nf](const Point3& x) {
    FieldJet out;
    Eigen::VectorXd f;
    Eigen::MatrixXd J;
    if (nf > 0) {
      // eval_jet returns principal-value (one-sided-safe) gradients on M.
      feature::eval_jet(x, fs, f, J, nullptr);
    } else {
      f.resize(0);
    }
    Eigen::VectorXd dx, df;
    nnet::grad_wrt_input(m, x, f, &dx, &df);
    out.phi = nnet::forward(m, x, f);
    out.grad = Point3(dx);
    if (nf > 0) out.grad += Point3(J.transpose() * df);
    return out;
  };
  return dual_contouring_fn(field, bbox_min, bbox_max, res, cfg);
}

void write_field_grid(const std::string& path, const FieldGrid& grid,
                      const ArtifactStamp& stamp) {
  grid.check();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_field_grid: cannot open " + path);
  os.write("SFG1", 4);
  const std::uint8_t dim = static_cast<std::uint8_t>(grid.dim);
  os.write(reinterpret_cast<const char*>(&dim), 1);
  for (int a = 0; a < grid.dim; ++a) {
    const std::uint32_t r = static_cast<std::uint32_t>(grid.res[a]);
    os.write(reinterpret_cast<const char*>(&r), 4);
  }
  for (int a = 0; a < grid.dim; ++a) {
    os.write(reinterpret_cast<const char*>(&grid.bbox_min[a]), 8);
    os.write(reinterpret_cast<const char*>(&grid.bbox_max[a]), 8);
  }
  for (double v : grid.values) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
  os.write(reinterpret_cast<const char*>(&stamp.seed), 8);
  os.write(reinterpret_cast<const char*>(&stamp.config_hash), 8);
  if (!os) throw Error("write_field_grid: write failed for " + path);
}

FieldGrid read_field_grid(const std::string& path, ArtifactStamp* stamp) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("read_field_grid: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SFG1", 4) != 0)
    throw Error("read_field_grid: bad magic in " + path);
  std::uint8_t dim = 0;
  is.read(reinterpret_cast<char*>(&dim), 1);
  if (!is || (dim != 2 && dim != 3)) throw Error("read_field_grid: bad dimension");
  FieldGrid g;
  g.dim = dim;
  std::size_t total = 1;
  for (int a = 0; a < g.dim; ++a) {
    std::uint32_t r = 0;
    is.read(reinterpret_cast<char*>(&r), 4);
    g.res[a] = static_cast<int>(r);
    total *= r;
  }
  if (g.dim == 2) g.res[2] = 1;
  for (int a = 0; a < g.dim; ++a) {
    is.read(reinterpret_cast<char*>(&g.bbox_min[a]), 8);
    is.read(reinterpret_cast<char*>(&g.bbox_max[a]), 8);
  }
  if (!is) throw Error("read_field_grid: truncated header in " + path);
  g.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    float f = 0;
    is.read(reinterpret_cast<char*>(&f), 4);
    g.values[i] = f;
  }
  ArtifactStamp st;
  is.read(reinterpret_cast<char*>(&st.seed), 8);
  is.read(reinterpret_cast<char*>(&st.config_hash), 8);
  if (!is) throw Error("read_field_grid: truncated data in " + path);
  if (stamp) *stamp = st;
  g.check();
  return g;
}

}  // namespace sharpfield::extract
