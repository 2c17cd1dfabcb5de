#include "calib/baselines.hpp"
#include "calib/cda.hpp"
#include "calib/data.hpp"
#include "calib/error.hpp"
#include "calib/metrics.hpp"
#include "calib/simplex.hpp"
#include "calib/theory.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;
using namespace calib;

namespace {

std::vector<metrics::ScoredTrial> to_trials(const Vector& scores, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(scores.size()) != labels.size()) {
    fail(ErrorCode::CountMismatch, "scores and labels differ in length");
  }
  std::vector<metrics::ScoredTrial> t(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) t[k] = {scores(static_cast<Eigen::Index>(k)), labels[k]};
  return t;
}

py::tuple dataset_tuple(const data::Dataset& ds) { return py::make_tuple(ds.features, ds.labels); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Calibrated likelihoods on the simplex";
  py::register_exception<Error>(m, "CalibError", PyExc_ValueError);

  // Simplex operations work on plain vectors of positive parts.
  m.def("ilr", [](const Vector& x) { return simplex::ilr(simplex::Composition(x)).coords(); }, py::arg("x"));
  m.def("ilr_inv", [](const Vector& v) { return simplex::ilr_inv(simplex::IlrVector(v)).parts(); }, py::arg("v"));
  m.def("perturb",
        [](const Vector& x, const Vector& y) {
          return simplex::perturb(simplex::Composition(x), simplex::Composition(y)).parts();
        },
        py::arg("x"), py::arg("y"));
  m.def("power", [](double a, const Vector& x) { return simplex::power(a, simplex::Composition(x)).parts(); },
        py::arg("alpha"), py::arg("x"));
  m.def("a_inner",
        [](const Vector& x, const Vector& y) {
          return simplex::a_inner(simplex::Composition(x), simplex::Composition(y));
        },
        py::arg("x"), py::arg("y"));
  m.def("a_norm", [](const Vector& x) { return simplex::a_norm(simplex::Composition(x)); }, py::arg("x"));
  m.def("a_dist",
        [](const Vector& x, const Vector& y) {
          return simplex::a_dist(simplex::Composition(x), simplex::Composition(y));
        },
        py::arg("x"), py::arg("y"));

  m.def("eer_from_mu", &theory::eer_from_mu, py::arg("mu"));
  m.def("mean_chain", &theory::mean_chain, py::arg("sigma"));
  m.def("divergence_matrix",
        [](const Matrix& sigma) { return theory::divergence_matrix(theory::CalibratedFamily(sigma)); },
        py::arg("sigma"));
  m.def("sigma_from_divergences",
        [](const Matrix& delta) {
          const auto sol = theory::sigma_from_divergences(delta);
          return py::make_tuple(sol.sigma, sol.residual);
        },
        py::arg("delta"), "Returns (sigma, residual).");
  m.def("sample_family",
        [](const Matrix& sigma, int cls, int n, std::uint64_t seed) {
          return Matrix(theory::sample(theory::CalibratedFamily(sigma), cls, n, seed).transpose());
        },
        py::arg("sigma"), py::arg("cls"), py::arg("n"), py::arg("seed") = 0, "n x (D-1) draws of class cls.");

  m.def("cllr", [](const Vector& s, const std::vector<int>& l) { return metrics::cllr(to_trials(s, l)); },
        py::arg("scores"), py::arg("labels"));
  m.def("cllr_decompose",
        [](const Vector& s, const std::vector<int>& l) {
          const auto r = metrics::cllr_decompose(to_trials(s, l));
          return py::dict(py::arg("cllr") = r.cllr, py::arg("cllr_min") = r.cllr_min, py::arg("cllr_cal") = r.cllr_cal);
        },
        py::arg("scores"), py::arg("labels"));
  m.def("eer", [](const Vector& s, const std::vector<int>& l) { return metrics::eer(to_trials(s, l)); },
        py::arg("scores"), py::arg("labels"));
  m.def("c_mc",
        [](const Matrix& ll, const std::vector<int>& l) {
          const auto r = metrics::c_mc(ll, l);
          return py::dict(py::arg("cmc") = r.cmc, py::arg("accuracy") = r.accuracy);
        },
        py::arg("loglik"), py::arg("labels"));
  m.def("pairwise_trials",
        [](const Matrix& ll, const std::vector<int>& labels, int i, int j) {
          const auto t = metrics::pairwise_trials(ll, labels, i, j);
          Vector s(static_cast<Eigen::Index>(t.size()));
          std::vector<int> l(t.size());
          for (std::size_t k = 0; k < t.size(); ++k) {
            s(static_cast<Eigen::Index>(k)) = t[k].score;
            l[k] = t[k].label;
          }
          return py::make_tuple(s, l);
        },
        py::arg("loglik"), py::arg("labels"), py::arg("i"), py::arg("j"));

  py::class_<baselines::LdaModel>(m, "LdaModel")
      .def_readonly("means", &baselines::LdaModel::means)
      .def_readonly("covariance", &baselines::LdaModel::covariance)
      .def("loglik", [](const baselines::LdaModel& md, const Matrix& x) { return baselines::loglik_matrix(md, x); })
      .def("save", [](const baselines::LdaModel& md, const std::string& p) { baselines::save_lda(p, md); })
      .def_static("load", &baselines::load_lda);
  py::class_<baselines::QdaModel>(m, "QdaModel")
      .def_readonly("means", &baselines::QdaModel::means)
      .def_readonly("covariances", &baselines::QdaModel::covariances)
      .def("loglik", [](const baselines::QdaModel& md, const Matrix& x) { return baselines::loglik_matrix(md, x); })
      .def("save", [](const baselines::QdaModel& md, const std::string& p) { baselines::save_qda(p, md); })
      .def_static("load", &baselines::load_qda);
  m.def("lda_fit",
        [](const Matrix& x, const std::vector<int>& l, bool empirical) {
          return baselines::lda_fit(x, l, baselines::FitOptions{empirical});
        },
        py::arg("features"), py::arg("labels"), py::arg("empirical_priors") = false);
  m.def("qda_fit",
        [](const Matrix& x, const std::vector<int>& l, bool empirical) {
          return baselines::qda_fit(x, l, baselines::FitOptions{empirical});
        },
        py::arg("features"), py::arg("labels"), py::arg("empirical_priors") = false);

  py::class_<cda::CdaModel>(m, "CdaModel")
      .def_property_readonly("classes", &cda::CdaModel::classes)
      .def_property_readonly("dim", &cda::CdaModel::dim)
      .def_property_readonly("sigma", [](const cda::CdaModel& md) { return md.base().sigma(); })
      .def("to_base", [](const cda::CdaModel& md, const Matrix& x) { return cda::to_base(md, x); })
      .def("ilrl", [](const cda::CdaModel& md, const Matrix& x) { return cda::ilrl_matrix(md, x); })
      .def("scores", [](const cda::CdaModel& md, const Matrix& x) { return cda::score_matrix(md, x); })
      .def("divergences", [](const cda::CdaModel& md) { return cda::divergence_matrix(md); })
      .def("interpolate", &cda::interpolate, py::arg("i"), py::arg("j"), py::arg("alpha"))
      .def("save", [](const cda::CdaModel& md, const std::string& p) { cda::save(p, md); })
      .def_static("load", &cda::load);
  m.def("cda_fit",
        [](const Matrix& x, const std::vector<int>& l, int epochs, int batch_size, double learning_rate, int layers,
           int width, std::uint64_t seed) {
          cda::CdaConfig cfg;
          cfg.train.epochs = epochs;
          cfg.train.batch_size = batch_size;
          cfg.train.learning_rate = learning_rate;
          cfg.train.seed = seed;
          cfg.flow.layers = layers;
          cfg.flow.width = width;
          cfg.flow.seed = seed;
          cda::FitResult fit = [&] {
            py::gil_scoped_release release;
            return cda::cda_fit(x, l, cfg);
          }();
          return py::make_tuple(std::move(fit.model), fit.loss_trace);
        },
        py::arg("features"), py::arg("labels"), py::arg("epochs") = 100, py::arg("batch_size") = 256,
        py::arg("learning_rate") = 1e-3, py::arg("layers") = 0, py::arg("width") = 0, py::arg("seed") = 0,
        "Returns (model, loss_trace).");

  m.def("gen_moons", [](int n, double noise, std::uint64_t seed) { return dataset_tuple(data::gen_moons(n, noise, seed)); },
        py::arg("n"), py::arg("noise") = 0.2, py::arg("seed") = 0);
  m.def("gen_circles",
        [](int n, double noise, std::uint64_t seed) { return dataset_tuple(data::gen_circles(n, noise, seed)); },
        py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 0);
  m.def("gen_gaussians", [](int n, std::uint64_t seed) { return dataset_tuple(data::gen_gaussians(n, seed)); },
        py::arg("n"), py::arg("seed") = 0);
  m.def("gen_gaussians3", [](int n, std::uint64_t seed) { return dataset_tuple(data::gen_gaussians3(n, seed)); },
        py::arg("n"), py::arg("seed") = 0);
}
