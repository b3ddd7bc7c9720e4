// Python bindings: a compact read/evaluate surface over the C++ core.
// Heavy lifting (training, extraction) stays in the CLI; these bindings load
// the artifacts it writes and evaluate fields for analysis and plotting.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>

#include "sharpfield/extract.hpp"
#include "sharpfield/featgen.hpp"
#include "sharpfield/feature.hpp"
#include "sharpfield/geom.hpp"
#include "sharpfield/io.hpp"
#include "sharpfield/metrics.hpp"
#include "sharpfield/nnet.hpp"
#include "sharpfield/partition.hpp"
#include "sharpfield/rng.hpp"

namespace py = pybind11;
using namespace sharpfield;

namespace {

nnet::Activation parse_activation(const std::string& name) {
  if (name == "softplus") return nnet::Activation::softplus;
  if (name == "relu") return nnet::Activation::relu;
  if (name == "sine") return nnet::Activation::sine;
  throw std::invalid_argument("activation must be softplus|relu|sine");
}

/// A trained (or freshly initialized) field: MLP plus optional feature set.
/// Points go in as (N, d) arrays, rows are samples.
class Field {
 public:
  static Field init(int d, int n_feat, int width, int hidden, int pe,
                    const std::string& activation, std::uint64_t seed) {
    Field f;
    f.model_.arch.d = d;
    f.model_.arch.n_feat = n_feat;
    f.model_.arch.width = width;
    f.model_.arch.hidden_layers = hidden;
    f.model_.arch.pe = pe;
    f.model_.arch.act = parse_activation(activation);
    Rng rng(seed);
    f.model_ = nnet::init_model(f.model_.arch, rng);
    f.fs_.dim = d;
    return f;
  }

  static Field load(const std::string& checkpoint, const std::string& features,
                    const std::string& strips, double rho) {
    Field f;
    f.model_ = nnet::load_model(checkpoint, &f.stamp_);
    f.fs_.dim = f.model_.arch.d;
    if (f.model_.arch.n_feat > 0) {
      feature::MollifierConfig mc;
      mc.radius = rho;
      if (f.model_.arch.d == 3) {
        if (strips.empty())
          throw std::invalid_argument(checkpoint +
                                      " uses feature channels; pass strips=");
        f.fs_ = featgen::feature_set_from_strip_mesh(load_obj(strips), mc);
      } else {
        if (features.empty())
          throw std::invalid_argument(checkpoint +
                                      " uses feature channels; pass features=");
        FgHeader header;
        FeatureGraph g = load_fg(features, &header);
        if (header.rho) mc.radius = *header.rho;
        if (g.color.empty()) g.color = partition::color_edges(g).color;
        f.fs_ = feature::feature_set_from_graph(g, mc);
        f.fs_.rebuild_acceleration();
      }
      if (f.fs_.n_channels != f.model_.arch.n_feat)
        throw std::invalid_argument("feature artifact channel count mismatch");
    }
    return f;
  }

  void save(const std::string& path) const { nnet::save_model(path, model_, &stamp_); }

  int dim() const { return model_.arch.d; }
  int n_features() const { return model_.arch.n_feat; }
  int width() const { return model_.arch.width; }
  double feature_scale() const { return model_.feature_scale; }

  Eigen::VectorXd values(const Eigen::MatrixXd& pts) const {
    const Eigen::MatrixXd X = check_points(pts);
    nnet::FieldBatch fb;
    nnet::field_forward(model_, X, feature_matrix(X), false, fb);
    return fb.phi.transpose();
  }

  std::pair<Eigen::VectorXd, Eigen::MatrixXd> gradients(const Eigen::MatrixXd& pts) const {
    const Eigen::MatrixXd X = check_points(pts);
    const int B = static_cast<int>(X.cols()), nf = model_.arch.n_feat;
    Eigen::MatrixXd F(nf, B);
    std::vector<Eigen::MatrixXd> Js(static_cast<size_t>(B));
    for (int i = 0; i < B && nf > 0; ++i) {
      Eigen::VectorXd fv;
      feature::eval_jet(X.col(i), fs_, fv, Js[static_cast<size_t>(i)], nullptr);
      F.col(i) = fv;
    }
    nnet::FieldBatch fb;
    nnet::field_forward(model_, X, F, true, fb);
    Eigen::MatrixXd G(B, model_.arch.d);
    for (int i = 0; i < B; ++i) {
      Eigen::VectorXd g = fb.grad_x.col(i);
      if (nf > 0) g += Js[static_cast<size_t>(i)].transpose() * fb.q.col(i);
      G.row(i) = g.transpose();
    }
    return {fb.phi.transpose(), G};
  }

  py::array_t<double> grid(const Eigen::VectorXd& bbox_min,
                           const Eigen::VectorXd& bbox_max,
                           const std::vector<int>& res) const {
    const extract::FieldGrid g =
        extract::sample_grid(model_, fs_, bbox_min, bbox_max, res);
    // numpy shape (nz, ny, nx) for 3D, (ny, nx) for 2D; x varies fastest in
    // memory either way, matching the grid's storage order.
    std::vector<py::ssize_t> shape;
    if (g.dim == 3) shape = {g.res[2], g.res[1], g.res[0]};
    else shape = {g.res[1], g.res[0]};
    py::array_t<double> arr(shape);
    std::copy(g.values.begin(), g.values.end(), arr.mutable_data());
    return arr;
  }

  py::dict stamp() const {
    py::dict d;
    d["seed"] = stamp_.seed;
    d["config_hash"] = stamp_.config_hash;
    return d;
  }

 private:
  Eigen::MatrixXd check_points(const Eigen::MatrixXd& pts) const {
    if (pts.cols() != model_.arch.d)
      throw std::invalid_argument("points must be (N, " +
                                  std::to_string(model_.arch.d) + ")");
    return pts.transpose();
  }

  Eigen::MatrixXd feature_matrix(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd F(model_.arch.n_feat, X.cols());
    for (int i = 0; i < X.cols() && model_.arch.n_feat > 0; ++i)
      F.col(i) = feature::eval_values(X.col(i), fs_);
    return F;
  }

  nnet::MlpModel model_;
  feature::FeatureSet fs_;
  ArtifactStamp stamp_;
};

std::pair<Eigen::MatrixXd, Eigen::MatrixXi> load_obj_py(const std::string& path) {
  const TriMesh m = load_obj(path);
  Eigen::MatrixXd V(static_cast<int>(m.v.size()), 3);
  for (size_t i = 0; i < m.v.size(); ++i) V.row(static_cast<int>(i)) = m.v[i];
  Eigen::MatrixXi F(static_cast<int>(m.f.size()), 3);
  for (size_t i = 0; i < m.f.size(); ++i)
    F.row(static_cast<int>(i)) << m.f[i][0], m.f[i][1], m.f[i][2];
  return {V, F};
}

void save_obj_py(const std::string& path, const Eigen::MatrixXd& V,
                 const Eigen::MatrixXi& F) {
  if (V.cols() != 3 || F.cols() != 3)
    throw std::invalid_argument("V must be (N,3) float and F (M,3) int");
  std::vector<Point3> v(static_cast<size_t>(V.rows()));
  for (int i = 0; i < V.rows(); ++i) v[static_cast<size_t>(i)] = V.row(i).transpose();
  std::vector<std::array<int, 3>> f(static_cast<size_t>(F.rows()));
  for (int i = 0; i < F.rows(); ++i)
    f[static_cast<size_t>(i)] = {F(i, 0), F(i, 1), F(i, 2)};
  save_obj(path, TriMesh(std::move(v), std::move(f)));
}

py::dict compare_meshes_py(const std::string& a, const std::string& b, int samples,
                           double fc_threshold, std::uint64_t seed) {
  metrics::MetricsConfig cfg;
  cfg.samples = samples;
  cfg.fc_threshold = fc_threshold;
  cfg.seed = seed;
  const metrics::MetricReport r = metrics::compare_meshes(load_obj(a), load_obj(b), cfg);
  py::dict d;
  d["cd"] = r.cd;
  d["hd"] = r.hd;
  d["ne_degrees"] = r.ne_degrees;
  d["fc_percent"] = r.fc_percent;
  d["samples"] = r.samples;
  d["fc_threshold"] = r.fc_threshold;
  d["seed"] = r.seed;
  return d;
}

py::dict read_field_grid_py(const std::string& path) {
  ArtifactStamp stamp;
  const extract::FieldGrid g = extract::read_field_grid(path, &stamp);
  std::vector<py::ssize_t> shape;
  if (g.dim == 3) shape = {g.res[2], g.res[1], g.res[0]};
  else shape = {g.res[1], g.res[0]};
  py::array_t<double> arr(shape);
  std::copy(g.values.begin(), g.values.end(), arr.mutable_data());
  py::dict d;
  d["dim"] = g.dim;
  d["bbox_min"] = Eigen::VectorXd(g.bbox_min.head(g.dim));
  d["bbox_max"] = Eigen::VectorXd(g.bbox_max.head(g.dim));
  d["values"] = arr;
  d["seed"] = stamp.seed;
  d["config_hash"] = stamp.config_hash;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "sharpfield core bindings: load checkpoints, evaluate fields, "
            "read artifacts";

  py::class_<Field>(m, "Field")
      .def_static("init", &Field::init, py::arg("d") = 2, py::arg("n_feat") = 0,
                  py::arg("width") = 32, py::arg("hidden") = 2, py::arg("pe") = 0,
                  py::arg("activation") = "softplus", py::arg("seed") = 1,
                  "Freshly initialized MLP field (no training).")
      .def_static("load", &Field::load, py::arg("checkpoint"),
                  py::arg("features") = "", py::arg("strips") = "",
                  py::arg("rho") = 0.08,
                  "Load a checkpoint; feature models need their FG (2D) or "
                  "strip OBJ (3D) artifact.")
      .def("save", &Field::save, py::arg("path"))
      .def_property_readonly("dim", &Field::dim)
      .def_property_readonly("n_features", &Field::n_features)
      .def_property_readonly("width", &Field::width)
      .def_property_readonly("feature_scale", &Field::feature_scale)
      .def("values", &Field::values, py::arg("points"),
           "Field values at an (N, d) array of points.")
      .def("gradients", &Field::gradients, py::arg("points"),
           "(values, spatial gradients) with the feature chain rule applied; "
           "gradients are one-sided on feature elements.")
      .def("grid", &Field::grid, py::arg("bbox_min"), py::arg("bbox_max"),
           py::arg("res"),
           "Sample on a regular grid; returns (ny, nx) or (nz, ny, nx).")
      .def("stamp", &Field::stamp);

  m.def("load_obj", &load_obj_py, py::arg("path"), "Mesh as (V, F) arrays.");
  m.def("save_obj", &save_obj_py, py::arg("path"), py::arg("V"), py::arg("F"));
  m.def("compare_meshes", &compare_meshes_py, py::arg("a"), py::arg("b"),
        py::arg("samples") = 100000, py::arg("fc_threshold") = 0.005,
        py::arg("seed") = 1,
        "Chamfer / Hausdorff / normal-error / F-score report as a dict.");
  m.def("read_field_grid", &read_field_grid_py, py::arg("path"),
        "Load a sampled field grid (.sfg) with its bbox and stamp.");
}
