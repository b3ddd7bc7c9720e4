#include "sharpfield/io.hpp"

#include <cstdio>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sharpfield {

std::string format_double(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  return out;
}

void write_stamp(std::ostream& out, const ArtifactStamp* stamp) {
  if (stamp)
    out << "# seed=" << stamp->seed << " config=" << stamp->config_hash << "\n";
}

bool parse_stamp(const std::string& line, ArtifactStamp& s) {
  return std::sscanf(line.c_str(), "# seed=%lu config=%lu", &s.seed, &s.config_hash) == 2;
}

// OBJ face corner "7", "7/2" or "7//3" -> vertex index (1-based in file).
int face_corner_index(const std::string& tok) {
  size_t slash = tok.find('/');
  return std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
}

}  // namespace

TriMesh load_obj(const std::string& path) {
  auto in = open_in(path);
  TriMesh m;
  int group = -1;
  bool any_group = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) throw FormatError("bad OBJ vertex line: " + line);
      m.v.emplace_back(x, y, z);
    } else if (tag == "vn") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) throw FormatError("bad OBJ normal line: " + line);
      m.vn.emplace_back(x, y, z);
    } else if (tag == "g") {
      std::string name;
      ss >> name;
      m.group_names.push_back(name);
      group = static_cast<int>(m.group_names.size()) - 1;
      any_group = true;
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) idx.push_back(face_corner_index(tok));
      if (idx.size() < 3) throw FormatError("bad OBJ face line: " + line);
      for (int& i : idx) {
        if (i < 0) i = static_cast<int>(m.v.size()) + i; else i -= 1;
      }
      // fan-triangulate polygons
      for (size_t k = 1; k + 1 < idx.size(); ++k) {
        m.f.push_back({idx[0], idx[k], idx[k + 1]});
        m.face_group.push_back(group);
      }
    }
    // everything else ignored (spec: v/vn/f/g records only)
  }
  if (!any_group) m.face_group.clear();
  return m;
}

void save_obj(const std::string& path, const TriMesh& m, const ArtifactStamp* stamp) {
  auto out = open_out(path);
  write_stamp(out, stamp);
  for (const auto& p : m.v)
    out << "v " << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
        << format_double(p.z()) << "\n";
  for (const auto& n : m.vn)
    out << "vn " << format_double(n.x()) << ' ' << format_double(n.y()) << ' '
        << format_double(n.z()) << "\n";
  int cur_group = -1;
  bool grouped = m.face_group.size() == m.f.size() && !m.group_names.empty();
  for (size_t i = 0; i < m.f.size(); ++i) {
    if (grouped && m.face_group[i] != cur_group && m.face_group[i] >= 0) {
      cur_group = m.face_group[i];
      out << "g " << m.group_names.at(cur_group) << "\n";
    }
    out << "f " << m.f[i][0] + 1 << ' ' << m.f[i][1] + 1 << ' ' << m.f[i][2] + 1 << "\n";
  }
}

PointCloud load_xyz(const std::string& path) {
  auto in = open_in(path);
  PointCloud c;
  std::string line;
  bool normals = false, first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z)) throw FormatError("bad XYZ line: " + line);
    double nx, ny, nz;
    bool has_n = static_cast<bool>(ss >> nx >> ny >> nz);
    if (first) {
      normals = has_n;
      first = false;
    } else if (has_n != normals) {
      throw FormatError("XYZ mixes points with and without normals");
    }
    c.p.emplace_back(x, y, z);
    if (has_n) {
      Point3 n(nx, ny, nz);
      double len = n.norm();
      if (len < 1e-12) throw FormatError("XYZ normal with (near-)zero length: " + line);
      c.n.push_back(n / len);  // invariant: stored normals are unit length
    }
  }
  return c;
}

void save_xyz(const std::string& path, const PointCloud& c, const ArtifactStamp* stamp) {
  auto out = open_out(path);
  write_stamp(out, stamp);
  for (size_t i = 0; i < c.p.size(); ++i) {
    out << format_double(c.p[i].x()) << ' ' << format_double(c.p[i].y()) << ' '
        << format_double(c.p[i].z());
    if (c.has_normals())
      out << ' ' << format_double(c.n[i].x()) << ' ' << format_double(c.n[i].y()) << ' '
          << format_double(c.n[i].z());
    out << "\n";
  }
}

FeatureGraph load_fg(const std::string& path, FgHeader* header) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty FG file: " + path);
  FeatureGraph g;
  {
    std::istringstream ss(line);
    std::string magic;
    if (!(ss >> magic >> g.dim) || magic != "FG" || (g.dim != 2 && g.dim != 3))
      throw FormatError("bad FG header: " + line);
  }
  std::vector<double> coords;
  bool any_color = false;
  std::vector<std::array<int, 2>> edges;
  std::vector<int> colors;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header) {
        double rho, scale;
        if (std::sscanf(line.c_str(), "# mollifier rho=%lf scale=%lf", &rho, &scale) == 2) {
          header->rho = rho;
          header->scale = scale;
        }
        ArtifactStamp s;
        if (parse_stamp(line, s)) header->stamp = s;
      }
      continue;
    }
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double c;
      int got = 0;
      while (ss >> c) {
        coords.push_back(c);
        ++got;
      }
      if (got != g.dim) throw FormatError("FG vertex arity mismatch: " + line);
    } else if (tag == "e") {
      int a, b, col;
      if (!(ss >> a >> b)) throw FormatError("bad FG edge line: " + line);
      edges.push_back({a, b});
      if (ss >> col) {
        any_color = true;
        colors.push_back(col);
      } else {
        colors.push_back(-1);
      }
    } else {
      throw FormatError("unknown FG record: " + line);
    }
  }
  int n = static_cast<int>(coords.size()) / g.dim;
  g.V.resize(g.dim, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < g.dim; ++k) g.V(k, i) = coords[i * g.dim + k];
  g.edges = std::move(edges);
  if (any_color) g.color = std::move(colors);
  g.check();
  return g;
}

void save_fg(const std::string& path, const FeatureGraph& g, const FgHeader* header) {
  auto out = open_out(path);
  out << "FG " << g.dim << "\n";
  if (header) {
    if (header->rho)
      out << "# mollifier rho=" << format_double(*header->rho) << " scale="
          << format_double(header->scale.value_or(1.0)) << "\n";
    if (header->stamp) write_stamp(out, &*header->stamp);
  }
  for (int i = 0; i < g.n_vertices(); ++i) {
    out << "v";
    for (int k = 0; k < g.dim; ++k) out << ' ' << format_double(g.V(k, i));
    out << "\n";
  }
  bool colored = g.color.size() == g.edges.size();
  for (size_t e = 0; e < g.edges.size(); ++e) {
    out << "e " << g.edges[e][0] << ' ' << g.edges[e][1];
    if (colored && g.color[e] >= 0) out << ' ' << g.color[e];
    out << "\n";
  }
}

}  // namespace sharpfield
