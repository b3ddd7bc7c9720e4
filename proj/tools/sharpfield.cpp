// Command-line front end: one binary exposing the full pipeline.
//
// Subcommands
//   fit-geodesic        train the 2D geodesic-distance field (fixed features)
//   learn-medial        jointly train the 2D field and its medial-axis features
//   feature-from-mesh   build channelled feature strips from a mesh's sharp edges
//   feature-from-points build strips from a point cloud + sharp polyline
//   fit-mesh            train a 3D SDF from a mesh with fixed strips
//   fit-points-normals  train from an oriented cloud, strips learnable
//   fit-points          train from a bare cloud, strips learnable
//   extract             iso-curve (2D) or dual-contoured surface (3D) from a checkpoint
//   sample-field        field values on a regular grid
//   boolean             min/max composition of two trained fields on a grid
//   eval                metric report between two surfaces (mesh or checkpoint)
//
// Exit codes: 0 success, 1 usage/input error, 2 numeric failure.
//
// Coordinate frames: the 3D fitters normalize their input into [-1,1]^3 (5%
// margin) and train in that frame; the isotropic transform is written next to
// the checkpoint as `<checkpoint>.transform` and picked up automatically by
// `extract`, `sample-field` and `eval`, whose outputs are then in original
// units.  Strip artifacts are exchanged in original units.  `boolean` assumes
// its two checkpoints already share one frame.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sharpfield/common.hpp"
#include "sharpfield/extract.hpp"
#include "sharpfield/featgen.hpp"
#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"
#include "sharpfield/io.hpp"
#include "sharpfield/metrics.hpp"
#include "sharpfield/nnet.hpp"
#include "sharpfield/partition.hpp"
#include "sharpfield/train2d.hpp"
#include "sharpfield/train3d.hpp"

namespace sf = sharpfield;
namespace fsys = std::filesystem;

namespace {

// ---- shared plumbing -------------------------------------------------------

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("SHARPFIELD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void apply_threads(int flag) {
  // The numeric core is sequential per batch; the thread count is recorded
  // for Eigen's parallel kernels.  Determinism is guaranteed at 1.
  Eigen::setNbThreads(resolve_threads(flag));
}

fsys::path ensure_out_dir(const std::string& out) {
  fsys::path dir = out.empty() ? fsys::path(".") : fsys::path(out);
  fsys::create_directories(dir);
  return dir;
}

// "x0,y0,x1,y1" (2D) or "x0,y0,z0,x1,y1,z1" (3D)
std::vector<double> parse_bbox(const std::string& s, int dim) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
  if (static_cast<int>(v.size()) != 2 * dim)
    throw sf::FormatError("--bbox needs " + std::to_string(2 * dim) +
                          " comma-separated numbers for a " + std::to_string(dim) +
                          "D field");
  for (int a = 0; a < dim; ++a)
    if (!(v[a] < v[dim + a]))
      throw sf::FormatError("--bbox min must be below max on every axis");
  return v;
}

// ---- transform sidecar -----------------------------------------------------

void save_transform(const fsys::path& path, const sf::train3d::NormalizeTransform& t) {
  std::ofstream os(path);
  if (!os) throw sf::Error("cannot write transform file " + path.string());
  os << "center " << sf::format_double(t.center.x()) << " "
     << sf::format_double(t.center.y()) << " " << sf::format_double(t.center.z())
     << "\nscale " << sf::format_double(t.scale) << "\n";
}

sf::train3d::NormalizeTransform load_transform(const fsys::path& path) {
  std::ifstream is(path);
  if (!is) throw sf::FormatError("cannot read transform file " + path.string());
  sf::train3d::NormalizeTransform t;
  std::string key;
  if (!(is >> key >> t.center.x() >> t.center.y() >> t.center.z()) || key != "center")
    throw sf::FormatError("malformed transform file " + path.string());
  if (!(is >> key >> t.scale) || key != "scale" || !(t.scale > 0))
    throw sf::FormatError("malformed transform file " + path.string());
  return t;
}

// Sidecar found next to the checkpoint, or an explicit override.
bool find_transform(const std::string& ckpt_path, const std::string& override_path,
                    sf::train3d::NormalizeTransform& t) {
  if (!override_path.empty()) {
    t = load_transform(override_path);
    return true;
  }
  const fsys::path sidecar = ckpt_path + ".transform";
  if (fsys::exists(sidecar)) {
    t = load_transform(sidecar);
    return true;
  }
  return false;
}

// ---- feature-set loading ---------------------------------------------------

// 2D feature set from an FG artifact.  The loaded model already carries the
// full feature multiplier (fold happens at save time), so the set stays at
// scale 1; the header's recorded scale is provenance only.
sf::feature::FeatureSet load_feature_set_2d(const std::string& path, double rho_flag) {
  sf::FgHeader header;
  sf::FeatureGraph g = sf::load_fg(path, &header);
  if (g.dim != 2) throw sf::FormatError(path + ": expected a 2D feature graph");
  const bool fully_colored =
      g.color.size() == g.edges.size() &&
      std::all_of(g.color.begin(), g.color.end(), [](int c) { return c >= 0; });
  if (!fully_colored) {
    const sf::partition::EdgeColoring col = sf::partition::color_edges(g);
    g.color = col.color;
  }
  sf::feature::MollifierConfig mc;
  mc.radius = header.rho.value_or(rho_flag);
  sf::feature::FeatureSet fs = sf::feature::feature_set_from_graph(g, mc);
  fs.rebuild_acceleration();
  return fs;
}

sf::feature::FeatureSet load_feature_set_3d(const std::string& strips_path, double rho) {
  const sf::TriMesh strips = sf::load_obj(strips_path);
  sf::feature::MollifierConfig mc;
  mc.radius = rho;
  return sf::featgen::feature_set_from_strip_mesh(strips, mc);
}

// 2D feature set -> FG graph (segments become edges, channel becomes color).
sf::FeatureGraph graph_from_feature_set_2d(const sf::feature::FeatureSet& fs) {
  sf::FeatureGraph g;
  g.dim = 2;
  g.V = fs.V;
  g.edges.reserve(fs.elems.size());
  g.color.reserve(fs.elems.size());
  for (size_t e = 0; e < fs.elems.size(); ++e) {
    g.edges.push_back({fs.elems[e][0], fs.elems[e][1]});
    g.color.push_back(fs.channel[e]);
  }
  return g;
}

// Checkpoint writer: the trainer keeps the RMS constant on fs.scale; the
// artifact carries the folded product so any consumer pairing it with a
// scale-1 feature set reproduces the trained field exactly.
void save_folded_checkpoint(const fsys::path& path, const sf::nnet::MlpModel& model,
                            double fs_scale, const sf::ArtifactStamp& stamp) {
  sf::nnet::MlpModel folded = model;
  folded.feature_scale *= fs_scale;
  sf::nnet::save_model(path.string(), folded, &stamp);
}

// ---- grid sampling helpers -------------------------------------------------

sf::extract::FieldGrid sample_grid_fn(const sf::train3d::FieldFn& fn,
                                      const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                                      int res) {
  sf::extract::FieldGrid g;
  g.dim = 3;
  g.bbox_min = lo;
  g.bbox_max = hi;
  g.res = {res, res, res};
  g.values.resize(static_cast<size_t>(res) * res * res);
  for (int k = 0; k < res; ++k)
    for (int j = 0; j < res; ++j)
      for (int i = 0; i < res; ++i)
        g.values[g.index(i, j, k)] =
            fn(sf::Point3(g.coord(0, i), g.coord(1, j), g.coord(2, k)));
  g.check();
  return g;
}

// ---- 2D tasks --------------------------------------------------------------

struct Geodesic2DOpts {
  sf::train2d::GeodesicConfig cfg;
  int grid_res = 256;
  std::string out;
  int threads = 0;
};

int run_fit_geodesic(const Geodesic2DOpts& o) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);
  sf::train2d::GeodesicConfig cfg = o.cfg;
  cfg.csv_path = (dir / "log.csv").string();

  const sf::train2d::GeodesicResult res = sf::train2d::train_geodesic(cfg);

  save_folded_checkpoint(dir / "checkpoint.snm", res.model, res.fs.scale, res.stamp);

  sf::FgHeader fh;
  fh.rho = cfg.rho;
  fh.scale = res.fs.scale;
  fh.stamp = res.stamp;
  sf::save_fg((dir / "features.fg").string(), graph_from_feature_set_2d(res.fs), &fh);

  Eigen::VectorXd lo(2), hi(2);
  lo << cfg.scene.xmin, cfg.scene.ymin;
  hi << cfg.scene.xmax, cfg.scene.ymax;
  const sf::extract::FieldGrid grid = sf::extract::sample_grid(
      res.model, res.fs, lo, hi, {o.grid_res, o.grid_res});
  sf::extract::write_field_grid((dir / "field.sfg").string(), grid, res.stamp);

  std::cout << "fit-geodesic: final loss " << res.final_loss << ", band value err "
            << res.band.value_err << ", band grad err " << res.band.grad_err << "\n"
            << "artifacts in " << dir.string() << "\n";
  return 0;
}

struct Medial2DOpts {
  sf::train2d::MedialConfig cfg;
  int segments = 94;
  double perturb = 0.02;
  std::string axis_file;
  int grid_res = 256;
  std::string out;
  int threads = 0;
};

int run_learn_medial(const Medial2DOpts& o) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);
  sf::train2d::MedialConfig cfg = o.cfg;
  cfg.csv_path = (dir / "log.csv").string();

  if (!o.axis_file.empty()) {
    cfg.initial_axis = sf::load_fg(o.axis_file);
    if (cfg.initial_axis.dim != 2)
      throw sf::FormatError(o.axis_file + ": expected a 2D axis polyline");
  } else {
    // The scene's exact axis, subdivided and perturbed at the joints.
    sf::FeatureGraph axis = sf::train2d::medial_axis_gt(cfg.scene);
    axis = sf::train2d::subdivide_axis(axis, o.segments);
    sf::Rng prng(cfg.seed);
    sf::train2d::perturb_vertices(axis, o.perturb, prng);
    cfg.initial_axis = axis;
  }

  const sf::train2d::MedialResult res = sf::train2d::train_medial(cfg);

  save_folded_checkpoint(dir / "checkpoint.snm", res.model, res.fs.scale, res.stamp);

  sf::FgHeader fh;
  fh.rho = cfg.rho;
  fh.scale = res.fs.scale;
  fh.stamp = res.stamp;
  sf::save_fg((dir / "axis.fg").string(), graph_from_feature_set_2d(res.fs), &fh);

  Eigen::VectorXd lo(2), hi(2);
  lo << -cfg.scene.hx, -cfg.scene.hy;
  hi << cfg.scene.hx, cfg.scene.hy;
  const sf::extract::FieldGrid grid = sf::extract::sample_grid(
      res.model, res.fs, lo, hi, {o.grid_res, o.grid_res});
  sf::extract::write_field_grid((dir / "field.sfg").string(), grid, res.stamp);

  std::cout << "learn-medial: axis chamfer " << res.initial_chamfer << " -> "
            << res.final_chamfer << "\nartifacts in " << dir.string() << "\n";
  return 0;
}

// ---- feature construction --------------------------------------------------

struct FeatGenOpts {
  std::string input;      // mesh or cloud
  std::string sharp_fg;   // point path only
  sf::featgen::FeatGenConfig cfg;
  std::uint64_t seed = 1;
  std::string out;
  int threads = 0;
};

std::uint64_t featgen_hash(const FeatGenOpts& o, const char* kind) {
  std::ostringstream ss;
  ss << kind << "|" << o.cfg.dihedral_threshold << "|" << o.cfg.strip_half_width
     << "|" << o.cfg.energy_lambda << "|" << o.cfg.knn << "|" << o.cfg.opt_steps
     << "|" << o.cfg.opt_step_size;
  return sf::fnv1a(ss.str());
}

void write_strip_artifacts(const fsys::path& dir, sf::featgen::StripResult& strips,
                           const sf::train3d::NormalizeTransform& t,
                           const sf::ArtifactStamp& stamp) {
  for (auto& v : strips.mesh.v) v = t.to_original(v);
  for (int i = 0; i < strips.rails.V.cols(); ++i)
    strips.rails.V.col(i) = t.to_original(sf::Point3(strips.rails.V.col(i)));
  sf::save_obj((dir / "strips.obj").string(), strips.mesh, &stamp);
  sf::FgHeader fh;
  fh.stamp = stamp;
  sf::save_fg((dir / "rails.fg").string(), strips.rails, &fh);
}

int run_feature_from_mesh(const FeatGenOpts& o) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);
  sf::TriMesh mesh = sf::load_obj(o.input);

  Eigen::MatrixXd P(3, mesh.v.size());
  for (size_t i = 0; i < mesh.v.size(); ++i) P.col(static_cast<int>(i)) = mesh.v[i];
  const sf::train3d::NormalizeTransform t = sf::train3d::normalize_transform(P);
  sf::train3d::apply_transform(t, mesh);

  const sf::featgen::SharpEdgeGraph s = sf::featgen::detect_sharp_edges(mesh, o.cfg);
  if (s.graph.n_edges() == 0)
    throw sf::FormatError("no sharp edges above the dihedral threshold in " + o.input);
  const sf::partition::EdgeColoring col = sf::partition::color_edges(s.graph);

  std::vector<sf::Point3> edge_dirs(s.graph.n_edges());
  for (int e = 0; e < s.graph.n_edges(); ++e)
    edge_dirs[e] = sf::featgen::edge_guiding_dir(mesh, s.mesh_vertex[s.graph.edges[e][0]],
                                                 s.mesh_vertex[s.graph.edges[e][1]]);
  const std::vector<sf::Point3> dirs =
      sf::featgen::vertex_guiding_dirs(s.graph, edge_dirs, o.cfg);
  sf::featgen::StripResult strips =
      sf::featgen::build_strips(s.graph, dirs, o.cfg.strip_half_width);
  sf::featgen::assign_strip_channels(strips, col.color, col.n_colors);

  const sf::ArtifactStamp stamp{o.seed, featgen_hash(o, "mesh")};
  write_strip_artifacts(dir, strips, t, stamp);
  std::cout << "feature-from-mesh: " << s.graph.n_edges() << " sharp edges, "
            << col.n_colors << " channels\nartifacts in " << dir.string() << "\n";
  return 0;
}

int run_feature_from_points(const FeatGenOpts& o) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);
  sf::PointCloud cloud = sf::load_xyz(o.input);
  sf::FeatureGraph sharp = sf::load_fg(o.sharp_fg);
  if (sharp.dim != 3) throw sf::FormatError(o.sharp_fg + ": expected a 3D polyline");
  if (sharp.n_edges() == 0) throw sf::FormatError(o.sharp_fg + ": polyline has no edges");

  Eigen::MatrixXd P(3, cloud.p.size());
  for (size_t i = 0; i < cloud.p.size(); ++i) P.col(static_cast<int>(i)) = cloud.p[i];
  const sf::train3d::NormalizeTransform t = sf::train3d::normalize_transform(P);
  sf::train3d::apply_transform(t, cloud);
  sf::train3d::apply_transform(t, sharp);

  const sf::partition::EdgeColoring col = sf::partition::color_edges(sharp);
  const std::vector<sf::Point3> dirs = sf::featgen::cloud_guiding_dirs(sharp, cloud, o.cfg);
  sf::featgen::StripResult strips =
      sf::featgen::build_strips(sharp, dirs, o.cfg.strip_half_width);
  sf::featgen::assign_strip_channels(strips, col.color, col.n_colors);

  const sf::ArtifactStamp stamp{o.seed, featgen_hash(o, "points")};
  write_strip_artifacts(dir, strips, t, stamp);
  std::cout << "feature-from-points: " << sharp.n_edges() << " sharp edges, "
            << col.n_colors << " channels\nartifacts in " << dir.string() << "\n";
  return 0;
}

// ---- 3D fitting ------------------------------------------------------------

struct Fit3DOpts {
  std::string data;    // mesh (fit-mesh) or cloud (fit-points*)
  std::string strips;  // channel-grouped strip OBJ
  std::string rails;   // optional rails FG (regularizer in learnable modes)
  double rho = 0.08;
  sf::train3d::Train3DConfig cfg;
  std::string out;
  int threads = 0;
};

int run_fit3d(const Fit3DOpts& o, sf::train3d::Mode mode) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);
  sf::train3d::Train3DConfig cfg = o.cfg;
  cfg.csv_path = (dir / "log.csv").string();

  // Primary geometry fixes the normalization transform.
  sf::TriMesh mesh;
  sf::PointCloud cloud;
  sf::train3d::NormalizeTransform t;
  if (mode == sf::train3d::Mode::mesh) {
    mesh = sf::load_obj(o.data);
    Eigen::MatrixXd P(3, mesh.v.size());
    for (size_t i = 0; i < mesh.v.size(); ++i) P.col(static_cast<int>(i)) = mesh.v[i];
    t = sf::train3d::normalize_transform(P);
    sf::train3d::apply_transform(t, mesh);
  } else {
    cloud = sf::load_xyz(o.data);
    if (mode == sf::train3d::Mode::points_normals && cloud.n.empty())
      throw sf::FormatError(o.data + " carries no normals; use fit-points instead");
    Eigen::MatrixXd P(3, cloud.p.size());
    for (size_t i = 0; i < cloud.p.size(); ++i) P.col(static_cast<int>(i)) = cloud.p[i];
    t = sf::train3d::normalize_transform(P);
    sf::train3d::apply_transform(t, cloud);
  }

  // Strips + rails move into the same frame.
  sf::TriMesh strip_mesh = sf::load_obj(o.strips);
  sf::train3d::apply_transform(t, strip_mesh);
  sf::feature::MollifierConfig mc;
  mc.radius = o.rho;
  sf::feature::FeatureSet fs = sf::featgen::feature_set_from_strip_mesh(strip_mesh, mc);

  std::vector<std::array<int, 2>> rails;
  if (!o.rails.empty()) {
    const sf::FeatureGraph rg = sf::load_fg(o.rails);
    for (const auto& e : rg.edges) {
      if (e[0] >= fs.V.cols() || e[1] >= fs.V.cols())
        throw sf::FormatError(o.rails + ": rail vertex outside the strip buffer");
      rails.push_back(e);
    }
  }

  sf::Rng pool_rng(cfg.seed);
  const sf::train3d::SurfacePool pool =
      (mode == sf::train3d::Mode::mesh)
          ? sf::train3d::pool_from_mesh(mesh, cfg.sampling, pool_rng)
          : sf::train3d::pool_from_cloud(cloud, cfg.sampling, pool_rng);

  const sf::train3d::Train3DResult res = sf::train3d::train_sdf(pool, fs, rails, cfg, mode);
  if (res.aborted) {
    // Last finite state is still written so the run can be inspected.
    save_folded_checkpoint(dir / "checkpoint.snm", res.model, res.fs.scale, res.stamp);
    save_transform(dir / "checkpoint.snm.transform", t);
    std::cerr << "training aborted: loss became non-finite at epoch "
              << res.aborted_at_epoch << "\n";
    return 2;
  }

  save_folded_checkpoint(dir / "checkpoint.snm", res.model, res.fs.scale, res.stamp);
  save_transform(dir / "checkpoint.snm.transform", t);

  // Learned strips: same connectivity, final vertex positions, original units.
  sf::TriMesh learned = strip_mesh;
  for (size_t i = 0; i < learned.v.size(); ++i)
    learned.v[i] = t.to_original(sf::Point3(res.fs.V.col(static_cast<int>(i))));
  sf::save_obj((dir / "learned_strips.obj").string(), learned, &res.stamp);

  sf::FeatureGraph learned_rails;
  learned_rails.dim = 3;
  learned_rails.V.resize(3, res.fs.V.cols());
  for (int i = 0; i < res.fs.V.cols(); ++i)
    learned_rails.V.col(i) = t.to_original(sf::Point3(res.fs.V.col(i)));
  learned_rails.edges = rails;
  sf::FgHeader fh;
  fh.rho = o.rho;
  fh.scale = res.fs.scale;
  fh.stamp = res.stamp;
  sf::save_fg((dir / "learned_rails.fg").string(), learned_rails, &fh);

  std::cout << "fit: final loss " << res.final_terms.total << " (sur "
            << res.final_terms.sur << ", ext " << res.final_terms.ext << ", ekl "
            << res.final_terms.ekl << ")\nartifacts in " << dir.string() << "\n";
  return 0;
}

// ---- checkpoint-driven field reconstruction --------------------------------

struct FieldOpts {
  std::string ckpt;
  std::string strips;    // 3D feature artifact
  std::string features;  // 2D feature artifact
  double rho = 0.08;
  int res = 128;
  std::string bbox;
  double iso = 0.0;
  std::string transform;
  std::string out;
  int threads = 0;
};

struct LoadedField {
  sf::nnet::MlpModel model;
  sf::feature::FeatureSet fs;  // scale 1; model carries the folded multiplier
  sf::ArtifactStamp stamp;
  sf::train3d::NormalizeTransform t;
  bool has_transform = false;
};

LoadedField load_field(const std::string& ckpt, const std::string& strips,
                       const std::string& features, double rho,
                       const std::string& transform_override) {
  LoadedField lf;
  lf.model = sf::nnet::load_model(ckpt, &lf.stamp);
  if (lf.model.arch.n_feat > 0) {
    if (lf.model.arch.d == 3) {
      if (strips.empty())
        throw sf::FormatError(ckpt + " uses feature channels; pass --strips");
      lf.fs = load_feature_set_3d(strips, rho);
    } else {
      if (features.empty())
        throw sf::FormatError(ckpt + " uses feature channels; pass --features");
      lf.fs = load_feature_set_2d(features, rho);
    }
    if (lf.fs.n_channels != lf.model.arch.n_feat)
      throw sf::FormatError("feature artifact has " + std::to_string(lf.fs.n_channels) +
                      " channels but the checkpoint expects " +
                      std::to_string(lf.model.arch.n_feat));
  }
  if (lf.model.arch.d == 3)
    lf.has_transform = find_transform(ckpt, transform_override, lf.t);
  if (lf.has_transform && lf.model.arch.n_feat > 0) {
    // Strips are stored in original units; evaluation happens in net frame.
    Eigen::MatrixXd V = lf.fs.V;
    for (int i = 0; i < V.cols(); ++i)
      V.col(i) = lf.t.to_normalized(sf::Point3(V.col(i)));
    lf.fs.set_vertices(V);
  }
  return lf;
}

int run_extract(const FieldOpts& o) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);
  LoadedField lf = load_field(o.ckpt, o.strips, o.features, o.rho, o.transform);

  if (lf.model.arch.d == 3) {
    sf::Point3 lo(-1.1, -1.1, -1.1), hi(1.1, 1.1, 1.1);
    if (!o.bbox.empty()) {
      const std::vector<double> b = parse_bbox(o.bbox, 3);
      lo = sf::Point3(b[0], b[1], b[2]);
      hi = sf::Point3(b[3], b[4], b[5]);
      if (lf.has_transform) {
        lo = lf.t.to_normalized(lo);
        hi = lf.t.to_normalized(hi);
      }
    }
    sf::TriMesh mesh;
    const std::array<int, 3> res = {o.res, o.res, o.res};
    if (o.iso == 0.0) {
      mesh = sf::extract::dual_contouring(lf.model, lf.fs, lo, hi, res);
    } else {
      const sf::train3d::FieldJetFn jet = sf::train3d::field_jet_function(lf.model, lf.fs);
      const double iso = o.iso;
      mesh = sf::extract::dual_contouring_fn(
          [&](const sf::Point3& x) {
            const sf::train3d::FieldSample s = jet(x);
            return sf::extract::FieldJet{s.phi - iso, s.grad};
          },
          lo, hi, res);
    }
    if (lf.has_transform)
      for (auto& v : mesh.v) v = lf.t.to_original(v);
    sf::save_obj((dir / "surface.obj").string(), mesh, &lf.stamp);
    std::cout << "extract: " << mesh.v.size() << " vertices, " << mesh.f.size()
              << " triangles -> " << (dir / "surface.obj").string() << "\n";
  } else {
    Eigen::VectorXd lo(2), hi(2);
    if (o.bbox.empty()) {
      const sf::train2d::GeodesicScene sc;
      lo << sc.xmin, sc.ymin;
      hi << sc.xmax, sc.ymax;
    } else {
      const std::vector<double> b = parse_bbox(o.bbox, 2);
      lo << b[0], b[1];
      hi << b[2], b[3];
    }
    const sf::extract::FieldGrid grid =
        sf::extract::sample_grid(lf.model, lf.fs, lo, hi, {o.res, o.res});
    const std::vector<std::vector<sf::Point2>> curves =
        sf::extract::marching_squares(grid, o.iso);
    sf::FeatureGraph g;
    g.dim = 2;
    int total = 0;
    for (const auto& c : curves) total += static_cast<int>(c.size());
    g.V.resize(2, total);
    int at = 0;
    for (const auto& c : curves) {
      for (size_t i = 0; i < c.size(); ++i) {
        g.V.col(at + static_cast<int>(i)) = c[i];
        if (i + 1 < c.size())
          g.edges.push_back({at + static_cast<int>(i), at + static_cast<int>(i) + 1});
      }
      at += static_cast<int>(c.size());
    }
    sf::FgHeader fh;
    fh.stamp = lf.stamp;
    sf::save_fg((dir / "contour.fg").string(), g, &fh);
    std::cout << "extract: " << curves.size() << " iso-curves -> "
              << (dir / "contour.fg").string() << "\n";
  }
  return 0;
}

int run_sample_field(const FieldOpts& o) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);
  LoadedField lf = load_field(o.ckpt, o.strips, o.features, o.rho, o.transform);

  sf::extract::FieldGrid grid;
  if (lf.model.arch.d == 3) {
    sf::Point3 lo(-1.1, -1.1, -1.1), hi(1.1, 1.1, 1.1);
    bool original_units = false;
    if (!o.bbox.empty()) {
      const std::vector<double> b = parse_bbox(o.bbox, 3);
      lo = sf::Point3(b[0], b[1], b[2]);
      hi = sf::Point3(b[3], b[4], b[5]);
      original_units = lf.has_transform;
    } else if (lf.has_transform) {
      lo = lf.t.to_original(lo);
      hi = lf.t.to_original(hi);
      original_units = true;
    }
    Eigen::VectorXd lov(3), hiv(3);
    if (original_units) {
      const sf::Point3 nl = lf.t.to_normalized(lo), nh = lf.t.to_normalized(hi);
      lov = nl;
      hiv = nh;
    } else {
      lov = lo;
      hiv = hi;
    }
    grid = sf::extract::sample_grid(lf.model, lf.fs, lov, hiv, {o.res, o.res, o.res});
    if (original_units) {
      // Present both the box and the distances in input units.
      grid.bbox_min = lo;
      grid.bbox_max = hi;
      for (double& v : grid.values) v = lf.t.distance_to_original(v);
    }
  } else {
    Eigen::VectorXd lo(2), hi(2);
    if (o.bbox.empty()) {
      const sf::train2d::GeodesicScene sc;
      lo << sc.xmin, sc.ymin;
      hi << sc.xmax, sc.ymax;
    } else {
      const std::vector<double> b = parse_bbox(o.bbox, 2);
      lo << b[0], b[1];
      hi << b[2], b[3];
    }
    grid = sf::extract::sample_grid(lf.model, lf.fs, lo, hi, {o.res, o.res});
  }
  sf::extract::write_field_grid((dir / "field.sfg").string(), grid, lf.stamp);
  std::cout << "sample-field: " << grid.values.size() << " samples -> "
            << (dir / "field.sfg").string() << "\n";
  return 0;
}

// ---- boolean composition ---------------------------------------------------

struct BoolOpts {
  std::string ckpt_a, ckpt_b;
  std::string strips_a, strips_b;
  double rho_a = 0.08, rho_b = 0.08;
  std::string op = "union";
  int res = 64;
  std::string bbox;
  std::string out;
  int threads = 0;
};

int run_boolean(const BoolOpts& o) {
  apply_threads(o.threads);
  const fsys::path dir = ensure_out_dir(o.out);

  const LoadedField a = load_field(o.ckpt_a, o.strips_a, "", o.rho_a, "");
  const LoadedField b = load_field(o.ckpt_b, o.strips_b, "", o.rho_b, "");
  if (a.model.arch.d != 3 || b.model.arch.d != 3)
    throw sf::FormatError("boolean needs two 3D checkpoints");

  sf::train3d::BoolOp op;
  if (o.op == "union") op = sf::train3d::BoolOp::unite;
  else if (o.op == "intersect") op = sf::train3d::BoolOp::intersect;
  else if (o.op == "diff-ab") op = sf::train3d::BoolOp::diff_ab;
  else if (o.op == "diff-ba") op = sf::train3d::BoolOp::diff_ba;
  else throw sf::FormatError("--op must be union|intersect|diff-ab|diff-ba");

  const sf::train3d::FieldFn combined = sf::train3d::boolean_combine(
      sf::train3d::field_function(a.model, a.fs),
      sf::train3d::field_function(b.model, b.fs), op);

  sf::Point3 lo(-1.1, -1.1, -1.1), hi(1.1, 1.1, 1.1);
  if (!o.bbox.empty()) {
    const std::vector<double> v = parse_bbox(o.bbox, 3);
    lo = sf::Point3(v[0], v[1], v[2]);
    hi = sf::Point3(v[3], v[4], v[5]);
  }
  const sf::extract::FieldGrid grid = sample_grid_fn(combined, lo, hi, o.res);
  const sf::ArtifactStamp stamp{
      a.stamp.seed, sf::fnv1a(o.op + "|" + std::to_string(a.stamp.config_hash) + "|" +
                              std::to_string(b.stamp.config_hash))};
  sf::extract::write_field_grid((dir / "field.sfg").string(), grid, stamp);
  std::cout << "boolean " << o.op << ": " << grid.values.size() << " samples -> "
            << (dir / "field.sfg").string() << "\n";
  return 0;
}

// ---- evaluation ------------------------------------------------------------

struct EvalOpts {
  std::string a, b;
  std::string strips_a, strips_b;
  double rho = 0.08;
  std::string transform_a, transform_b;
  int res = 128;
  sf::metrics::MetricsConfig cfg;
  std::string gt_sharp;  // optional XYZ with normals for feature metrics
  int threads = 0;
};

bool is_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  return is && std::string(magic, 4) == "SNM1";
}

sf::TriMesh surface_of(const std::string& path, const std::string& strips,
                       const std::string& transform_override, double rho, int res,
                       LoadedField* out_field) {
  if (!is_checkpoint(path)) return sf::load_obj(path);
  LoadedField lf = load_field(path, strips, "", rho, transform_override);
  if (lf.model.arch.d != 3)
    throw sf::FormatError(path + ": eval auto-extraction needs a 3D checkpoint");
  const sf::Point3 lo(-1.1, -1.1, -1.1), hi(1.1, 1.1, 1.1);
  sf::TriMesh mesh =
      sf::extract::dual_contouring(lf.model, lf.fs, lo, hi, {res, res, res});
  if (lf.has_transform)
    for (auto& v : mesh.v) v = lf.t.to_original(v);
  if (out_field) *out_field = std::move(lf);
  return mesh;
}

int run_eval(const EvalOpts& o) {
  apply_threads(o.threads);
  LoadedField field_a;
  bool have_field = false;
  const bool a_is_ckpt = is_checkpoint(o.a);

  const sf::TriMesh ma = surface_of(o.a, o.strips_a, o.transform_a, o.rho, o.res,
                                    a_is_ckpt ? &field_a : nullptr);
  have_field = a_is_ckpt;
  const sf::TriMesh mb = surface_of(o.b, o.strips_b, o.transform_b, o.rho, o.res,
                                    (!a_is_ckpt && is_checkpoint(o.b)) ? &field_a : nullptr);
  have_field = have_field || is_checkpoint(o.b);

  sf::metrics::MetricReport rep = sf::metrics::compare_meshes(ma, mb, o.cfg);

  if (!o.gt_sharp.empty()) {
    if (!have_field)
      throw sf::FormatError("--gt-sharp needs one side to be a feature-carrying checkpoint");
    if (field_a.model.arch.n_feat == 0)
      throw sf::FormatError("--gt-sharp needs a checkpoint trained with feature channels");
    const sf::PointCloud gt = sf::load_xyz(o.gt_sharp);
    if (gt.n.empty())
      throw sf::FormatError(o.gt_sharp + ": feature metrics need normals");
    Eigen::Matrix3Xd P(3, gt.p.size()), N(3, gt.p.size());
    for (size_t i = 0; i < gt.p.size(); ++i) {
      sf::Point3 p = gt.p[i];
      if (field_a.has_transform) p = field_a.t.to_normalized(p);
      P.col(static_cast<int>(i)) = p;
      N.col(static_cast<int>(i)) = gt.n[i];
    }
    const sf::metrics::FeatureMetricsResult fm =
        sf::metrics::feature_metrics(field_a.model, field_a.fs, P, N);
    rep.has_feature_metrics = true;
    rep.fcd = field_a.has_transform ? field_a.t.distance_to_original(fm.fcd) : fm.fcd;
    rep.fne_degrees = fm.fne_degrees;
  }

  std::cout << sf::metrics::report_csv(rep) << "\n"
            << sf::metrics::report_text(rep);
  return 0;
}

}  // namespace

// ---- argument wiring -------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"sharpfield: neural fields with exact sharp features"};
  app.require_subcommand(1);
  int rc = 0;  // set by the selected subcommand's callback
  app.set_config("--config", "", "config file (key = value, [subcommand] sections)");

  // fit-geodesic ------------------------------------------------------------
  Geodesic2DOpts geo;
  {
    CLI::App* c = app.add_subcommand("fit-geodesic",
                                     "train the 2D geodesic-distance field");
    c->configurable();
    c->add_option("--iters", geo.cfg.iters, "training iterations");
    c->add_option("--k-samples", geo.cfg.k_samples, "fixed training set size");
    c->add_option("--batch", geo.cfg.batch, "batch size");
    c->add_option("--width", geo.cfg.width, "hidden width");
    c->add_option("--hidden", geo.cfg.hidden_layers, "hidden layer count");
    c->add_option("--pe", geo.cfg.pe, "positional-encoding octaves");
    c->add_option("--lr", geo.cfg.lr, "Adam learning rate");
    c->add_option("--lr-decay", geo.cfg.lr_decay, "final/initial rate ratio");
    c->add_option("--rho", geo.cfg.rho, "mollifier radius");
    c->add_option("--seg-len", geo.cfg.seg_len, "feature segment length");
    c->add_flag_callback("--no-features", [&] { geo.cfg.use_features = false; },
                         "raw-MLP baseline (no feature channels)");
    c->add_option("--seed", geo.cfg.seed, "rng seed");
    c->add_option("--log-every", geo.cfg.log_every, "iterations between log rows");
    c->add_option("--grid-res", geo.grid_res, "emitted field-grid resolution");
    c->add_option("--threads", geo.threads, "thread count (0 = auto)");
    c->add_option("-o,--out", geo.out, "output directory");
    c->callback([&] { rc = run_fit_geodesic(geo); });
  }

  // learn-medial ------------------------------------------------------------
  Medial2DOpts med;
  {
    CLI::App* c = app.add_subcommand("learn-medial",
                                     "jointly train the 2D field and medial axis");
    c->configurable();
    c->add_option("--iters", med.cfg.iters, "training iterations");
    c->add_option("--freeze-iters", med.cfg.freeze_iters, "axis-frozen prefix");
    c->add_option("--segments", med.segments, "axis subdivision segment count");
    c->add_option("--perturb", med.perturb, "initial joint-vertex perturbation");
    c->add_option("--axis", med.axis_file, "initial axis FG (overrides --segments/--perturb)");
    c->add_option("--k-samples", med.cfg.k_samples, "fixed training set size");
    c->add_option("--batch", med.cfg.batch, "batch size");
    c->add_option("--width", med.cfg.width, "hidden width");
    c->add_option("--pe", med.cfg.pe, "positional-encoding octaves");
    c->add_option("--lr", med.cfg.lr_theta, "Adam rate for the network");
    c->add_option("--lr-vertices", med.cfg.lr_vertices, "Adam rate for axis vertices");
    c->add_option("--lr-decay", med.cfg.lr_decay, "final/initial rate ratio");
    c->add_option("--rho", med.cfg.rho, "mollifier radius");
    c->add_option("--seed", med.cfg.seed, "rng seed");
    c->add_option("--log-every", med.cfg.log_every, "iterations between log rows");
    c->add_option("--grid-res", med.grid_res, "emitted field-grid resolution");
    c->add_option("--threads", med.threads, "thread count (0 = auto)");
    c->add_option("-o,--out", med.out, "output directory");
    c->callback([&] { rc = run_learn_medial(med); });
  }

  // feature-from-mesh / feature-from-points ---------------------------------
  FeatGenOpts fgm, fgp;
  double fgm_dihedral_deg = 30.0;
  {
    CLI::App* c = app.add_subcommand("feature-from-mesh",
                                     "build feature strips from sharp mesh edges");
    c->configurable();
    c->add_option("mesh", fgm.input, "input OBJ mesh")->required();
    c->add_option("--half-width", fgm.cfg.strip_half_width,
                  "strip half width (normalized units)");
    c->add_option("--dihedral-deg", fgm_dihedral_deg, "sharpness threshold in degrees");
    c->add_option("--energy-lambda", fgm.cfg.energy_lambda, "mean-attraction weight");
    c->add_option("--seed", fgm.seed, "stamp seed");
    c->add_option("--threads", fgm.threads, "thread count (0 = auto)");
    c->add_option("-o,--out", fgm.out, "output directory");
    c->callback([&] {
      fgm.cfg.dihedral_threshold = fgm_dihedral_deg * sf::kPi / 180.0;
      rc = run_feature_from_mesh(fgm);
    });
  }
  {
    CLI::App* c = app.add_subcommand("feature-from-points",
                                     "build feature strips from a cloud + sharp polyline");
    c->configurable();
    c->add_option("cloud", fgp.input, "input XYZ point cloud")->required();
    c->add_option("sharp", fgp.sharp_fg, "sharp polyline FG")->required();
    c->add_option("--half-width", fgp.cfg.strip_half_width,
                  "strip half width (normalized units)");
    c->add_option("--knn", fgp.cfg.knn, "cloud neighborhood size");
    c->add_option("--seed", fgp.seed, "stamp seed");
    c->add_option("--threads", fgp.threads, "thread count (0 = auto)");
    c->add_option("-o,--out", fgp.out, "output directory");
    c->callback([&] { rc = run_feature_from_points(fgp); });
  }

  // fit-mesh / fit-points-normals / fit-points -------------------------------
  auto add_fit3d = [&](const char* name, const char* desc, const char* data_name,
                       Fit3DOpts& o, sf::train3d::Mode mode) {
    CLI::App* c = app.add_subcommand(name, desc);
    c->configurable();
    c->add_option(data_name, o.data, "input geometry")->required();
    c->add_option("strips", o.strips, "channel-grouped strip OBJ")->required();
    c->add_option("--rails", o.rails, "strip rail FG (boundary regularizer)");
    c->add_option("--rho", o.rho, "mollifier radius (normalized units)");
    c->add_option("--epochs", o.cfg.sampling.epochs, "training epochs");
    c->add_option("--surface-total", o.cfg.sampling.surface_total, "surface pool size");
    c->add_option("--per-epoch-surface", o.cfg.sampling.per_epoch_surface,
                  "surface samples per epoch");
    c->add_option("--per-epoch-near", o.cfg.sampling.per_epoch_near,
                  "near-surface samples per epoch");
    c->add_option("--per-epoch-ambient", o.cfg.sampling.per_epoch_ambient,
                  "ambient samples per epoch");
    c->add_option("--knn", o.cfg.sampling.knn, "sigma neighbor rank");
    c->add_option("--width", o.cfg.width, "hidden width");
    c->add_option("--hidden", o.cfg.hidden_layers, "hidden layer count");
    c->add_option("--lr", o.cfg.lr, "Adam learning rate");
    c->add_option("--lr-decay", o.cfg.lr_decay, "final/initial rate ratio");
    c->add_option("--lr-vertices", o.cfg.lr_vertices, "strip-vertex rate");
    c->add_option("--alpha-sur", o.cfg.weights.alpha_sur, "surface-loss weight");
    c->add_option("--alpha-ext", o.cfg.weights.alpha_ext, "exterior-loss weight");
    c->add_option("--alpha-ekl", o.cfg.weights.alpha_ekl, "eikonal-loss weight");
    c->add_option("--alpha-nor", o.cfg.weights.alpha_nor, "normal-loss weight");
    c->add_option("--alpha-reg", o.cfg.weights.alpha_reg, "rail-regularizer weight");
    c->add_flag_callback("--no-features", [&o] { o.cfg.use_features = false; },
                         "plain-MLP ablation (strips ignored by the net)");
    c->add_option("--seed", o.cfg.seed, "rng seed");
    c->add_option("--log-every", o.cfg.log_every, "epochs between log rows");
    c->add_option("--threads", o.threads, "thread count (0 = auto)");
    c->add_option("-o,--out", o.out, "output directory");
    c->callback([&o, &rc, mode] { rc = run_fit3d(o, mode); });
    return c;
  };
  Fit3DOpts fm, fpn, fp;
  fm.cfg.weights = sf::train3d::Loss3DWeights::mesh_preset();
  fpn.cfg.weights = sf::train3d::Loss3DWeights::points_normals_preset();
  fp.cfg.weights = sf::train3d::Loss3DWeights::points_preset();
  add_fit3d("fit-mesh", "train a 3D SDF from a mesh (fixed strips)", "mesh", fm,
            sf::train3d::Mode::mesh);
  add_fit3d("fit-points-normals", "train from an oriented cloud (learnable strips)",
            "cloud", fpn, sf::train3d::Mode::points_normals);
  add_fit3d("fit-points", "train from a bare cloud (learnable strips)", "cloud", fp,
            sf::train3d::Mode::points);

  // extract / sample-field ---------------------------------------------------
  auto add_field_opts = [&](CLI::App* c, FieldOpts& o, bool with_iso) {
    c->configurable();
    c->add_option("checkpoint", o.ckpt, "trained checkpoint")->required();
    c->add_option("--strips", o.strips, "strip OBJ for 3D feature channels");
    c->add_option("--features", o.features, "feature FG for 2D checkpoints");
    c->add_option("--rho", o.rho, "mollifier radius");
    c->add_option("--res", o.res, "grid resolution per axis");
    c->add_option("--bbox", o.bbox, "x0,y0[,z0],x1,y1[,z1] (original units)");
    if (with_iso) c->add_option("--iso", o.iso, "iso value");
    c->add_option("--transform", o.transform, "normalization sidecar override");
    c->add_option("--threads", o.threads, "thread count (0 = auto)");
    c->add_option("-o,--out", o.out, "output directory");
  };
  FieldOpts ex, sfo;
  {
    CLI::App* c = app.add_subcommand("extract",
                                     "iso-curve (2D) / dual-contoured surface (3D)");
    add_field_opts(c, ex, true);
    c->callback([&] { rc = run_extract(ex); });
  }
  {
    CLI::App* c = app.add_subcommand("sample-field", "field values on a regular grid");
    add_field_opts(c, sfo, false);
    c->callback([&] { rc = run_sample_field(sfo); });
  }

  // boolean -------------------------------------------------------------------
  BoolOpts bo;
  {
    CLI::App* c = app.add_subcommand("boolean",
                                     "min/max composition of two trained fields");
    c->configurable();
    c->add_option("a", bo.ckpt_a, "first checkpoint")->required();
    c->add_option("b", bo.ckpt_b, "second checkpoint")->required();
    c->add_option("--op", bo.op, "union|intersect|diff-ab|diff-ba");
    c->add_option("--strips-a", bo.strips_a, "strips for the first field");
    c->add_option("--strips-b", bo.strips_b, "strips for the second field");
    c->add_option("--rho-a", bo.rho_a, "mollifier radius for the first field");
    c->add_option("--rho-b", bo.rho_b, "mollifier radius for the second field");
    c->add_option("--res", bo.res, "grid resolution per axis");
    c->add_option("--bbox", bo.bbox, "x0,y0,z0,x1,y1,z1 (shared frame)");
    c->add_option("--threads", bo.threads, "thread count (0 = auto)");
    c->add_option("-o,--out", bo.out, "output directory");
    c->callback([&] { rc = run_boolean(bo); });
  }

  // eval ----------------------------------------------------------------------
  EvalOpts ev;
  {
    CLI::App* c = app.add_subcommand("eval",
                                     "metric report between two surfaces");
    c->configurable();
    c->add_option("a", ev.a, "OBJ mesh or checkpoint")->required();
    c->add_option("b", ev.b, "OBJ mesh or checkpoint")->required();
    c->add_option("--strips-a", ev.strips_a, "strips for checkpoint a");
    c->add_option("--strips-b", ev.strips_b, "strips for checkpoint b");
    c->add_option("--rho", ev.rho, "mollifier radius");
    c->add_option("--transform-a", ev.transform_a, "normalization override for a");
    c->add_option("--transform-b", ev.transform_b, "normalization override for b");
    c->add_option("--res", ev.res, "auto-extraction resolution");
    c->add_option("--samples", ev.cfg.samples, "surface sample count");
    c->add_option("--fc-threshold", ev.cfg.fc_threshold, "F-score distance threshold");
    c->add_option("--seed", ev.cfg.seed, "sampling seed");
    c->add_option("--gt-sharp", ev.gt_sharp,
                  "XYZ with normals: also report feature metrics (FCD/FNE)");
    c->add_option("--threads", ev.threads, "thread count (0 = auto)");
    c->callback([&] { rc = run_eval(ev); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version exit 0; any usage problem exits 1
  } catch (const sf::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
