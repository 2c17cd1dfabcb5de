#include "calib/cda.hpp"

#include "calib/baselines.hpp"
#include "calib/error.hpp"
#include "calib/serialize.hpp"
#include "calib/theory.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace calib::cda {

CdaModel::CdaModel(flow::FlowModel flow, flow::ScaleParam scale, std::vector<int> label_table)
    : flow_(std::move(flow)),
      scale_(std::move(scale)),
      labels_(std::move(label_table)),
      base_(static_cast<int>(labels_.size()), flow_.dim(), scale_) {}

Matrix lda_divergences(const Matrix& features, std::span<const int> labels) {
  const baselines::LdaModel lda = baselines::lda_fit(features, labels);
  const int classes = lda.classes();
  const auto& llt = lda.components.front().cholesky();
  Matrix delta = Matrix::Zero(classes, classes);
  for (int i = 0; i < classes; ++i)
    for (int j = i + 1; j < classes; ++j) {
      const Vector w = llt.matrixL().solve(lda.means[i] - lda.means[j]);
      delta(i, j) = delta(j, i) = 0.5 * w.squaredNorm();
    }
  return delta;
}

Matrix initial_sigma(const Matrix& features, std::span<const int> labels, double min_variance) {
  const int classes = baselines::count_classes(labels);
  Matrix sigma;
  try {
    sigma = theory::sigma_from_divergences(lda_divergences(features, labels)).sigma;
  } catch (const Error&) {
    return Matrix::Identity(classes - 1, classes - 1);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  const Vector lambda = es.eigenvalues().cwiseMax(min_variance);
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

FitResult cda_fit(const Matrix& features, std::span<const int> labels, const CdaConfig& config,
                  const flow::EpochCallback& on_epoch) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "features and labels differ in length");
  }
  if (!features.allFinite()) fail(ErrorCode::InvalidArgument, "features must be finite");
  const int classes = baselines::count_classes(labels);
  if (classes < 2) fail(ErrorCode::SingleClassInput, "CDA needs at least two classes");
  const int d = static_cast<int>(features.cols());
  if (d < classes - 1) fail(ErrorCode::TooFewDimensions, "feature dimension must be at least D - 1");

  flow::FlowConfig fc = config.flow;
  fc.dim = d;
  flow::FlowModel model(fc);
  const Vector mean = features.colwise().mean().transpose();
  Vector sd = ((features.rowwise() - mean.transpose()).colwise().squaredNorm() / double(features.rows()))
                  .transpose()
                  .cwiseSqrt();
  for (Eigen::Index k = 0; k < sd.size(); ++k)
    if (!(sd(k) > 1e-12)) sd(k) = 1.0;
  model.set_standardization(mean, sd);

  const Matrix sigma0 = config.init_sigma_from_lda ? initial_sigma(features, labels, config.min_initial_variance)
                                                   : Matrix::Identity(classes - 1, classes - 1);
  flow::ScaleParam scale = flow::ScaleParam::from_sigma(sigma0);
  flow::TrainResult tr = flow::train(model, scale, classes, features, labels, config.train, on_epoch);

  std::vector<int> table(static_cast<std::size_t>(classes));
  for (int k = 0; k < classes; ++k) table[static_cast<std::size_t>(k)] = k;
  CdaModel cda(std::move(model), std::move(scale), std::move(table));
  Matrix delta = divergence_matrix(cda);
  return FitResult{std::move(cda), std::move(tr.loss_trace), sigma0, std::move(delta)};
}

Matrix to_base(const CdaModel& model, const Matrix& features) { return flow::forward(model.flow(), features).z; }

Matrix ilrl_matrix(const CdaModel& model, const Matrix& features) {
  return to_base(model, features).leftCols(model.classes() - 1);
}

simplex::IlrVector ilrl(const CdaModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.dim()) fail(ErrorCode::DimensionMismatch, "feature vector has the wrong dimension");
  return simplex::IlrVector(ilrl_matrix(model, x.transpose()).row(0).transpose());
}

Matrix score_matrix(const CdaModel& model, const Matrix& features) {
  const Matrix l = ilrl_matrix(model, features);
  Matrix out(l.rows(), model.classes());
  for (Eigen::Index r = 0; r < l.rows(); ++r) out.row(r) = simplex::ilr_inv_log(l.row(r).transpose()).transpose();
  return out;
}

Decision classify(const CdaModel& model, const Eigen::Ref<const Vector>& x, const simplex::Composition& prior) {
  if (prior.size() != model.classes()) fail(ErrorCode::DimensionMismatch, "prior must have D parts");
  const Vector coords = ilrl(model, x).coords() + simplex::ilr(prior).coords();
  Vector logp = simplex::ilr_inv_log(coords);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < logp.size(); ++k)
    if (logp(k) > logp(best)) best = k;
  const double floor = std::log(std::numeric_limits<double>::min());
  Vector parts = logp.cwiseMax(floor).array().exp();
  return Decision{static_cast<int>(best), std::move(logp), simplex::Composition(parts)};
}

Vector interpolate(const CdaModel& model, int i, int j, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::AlphaOutOfRange, "alpha must lie in [0, 1]");
  const Vector z = alpha * model.base().mean(i) + (1.0 - alpha) * model.base().mean(j);
  return flow::inverse(model.flow(), z.transpose()).row(0).transpose();
}

Matrix divergence_matrix(const CdaModel& model) {
  const int classes = model.classes();
  const auto& means = model.base().ilr_means();
  const Eigen::LLT<Matrix> llt = linalg::checked_cholesky(model.base().sigma(), "Sigma");
  Matrix delta = Matrix::Zero(classes, classes);
  for (int i = 0; i < classes; ++i)
    for (int j = i + 1; j < classes; ++j) {
      const Vector w = llt.matrixL().solve(means[i] - means[j]);
      delta(i, j) = delta(j, i) = 0.5 * w.squaredNorm();
    }
  return delta;
}

ResidualStats residual_stats(const CdaModel& model, const Matrix& features, std::span<const int> labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "features and labels differ in length");
  }
  const int classes = model.classes();
  const int n = classes - 1;
  const Matrix z = to_base(model, features);
  const Eigen::Index rd = z.cols() - n;
  ResidualStats s;
  s.means.assign(classes, Vector::Zero(rd));
  s.covariances.assign(classes, Matrix::Zero(rd, rd));
  std::vector<int> counts(classes, 0);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int l = labels[static_cast<std::size_t>(r)];
    if (l < 0 || l >= classes) fail(ErrorCode::InvalidArgument, "label out of range");
    s.means[l] += z.row(r).tail(rd).transpose();
    ++counts[l];
  }
  for (int k = 0; k < classes; ++k) {
    if (counts[k] < 2) fail(ErrorCode::MissingClass, "class " + std::to_string(k) + " needs at least two samples");
    s.means[k] /= counts[k];
  }
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int l = labels[static_cast<std::size_t>(r)];
    const Vector c = z.row(r).tail(rd).transpose() - s.means[l];
    s.covariances[l] += c * c.transpose();
  }
  for (int k = 0; k < classes; ++k) s.covariances[k] /= counts[k] - 1;
  return s;
}

void save(const std::string& path, const CdaModel& model) {
  const flow::FlowModel& f = model.flow();
  io::CheckpointWriter w(path, io::ModelKind::Cda);
  w.put_u64(static_cast<std::uint64_t>(f.dim()));
  w.put_u64(static_cast<std::uint64_t>(model.classes()));
  w.put_u64(f.layers().size());
  w.put_f64(f.scale_clamp());
  for (const flow::CouplingLayer& l : f.layers()) {
    for (long v : {long(l.cond_begin), long(l.cond_size), long(l.act_begin), long(l.act_size), long(l.width),
                   long(l.offset)})
      w.put_u64(static_cast<std::uint64_t>(v));
  }
  w.put_vector(f.params());
  w.put_vector(f.input_shift());
  w.put_vector(f.input_scale());
  w.put_vector(model.scale().theta());
  for (int l : model.label_table()) w.put_u64(static_cast<std::uint64_t>(l));
  w.finish();
}

CdaModel load(const std::string& path) {
  io::CheckpointReader r(path);
  if (r.kind() != io::ModelKind::Cda) fail(ErrorCode::FormatError, path + " holds a " + io::to_string(r.kind()) + " model");
  constexpr std::uint64_t kMax = 1u << 16;
  const std::uint64_t dim = r.get_u64();
  const std::uint64_t classes = r.get_u64();
  const std::uint64_t count = r.get_u64();
  if (dim < 1 || dim > kMax || classes < 2 || classes > dim + 1 || count > 1024) {
    fail(ErrorCode::FormatError, "checkpoint declares an invalid architecture");
  }
  const double clamp = r.get_f64();
  std::vector<flow::CouplingLayer> layers(count);
  std::uint64_t total = 0;
  for (flow::CouplingLayer& l : layers) {
    std::uint64_t v[6];
    for (auto& e : v) e = r.get_u64();
    if (v[0] > dim || v[1] > dim || v[2] > dim || v[3] > dim || v[4] > kMax) {
      fail(ErrorCode::FormatError, "checkpoint declares an invalid coupling layer");
    }
    l = {int(v[0]), int(v[1]), int(v[2]), int(v[3]), int(v[4]), Eigen::Index(v[5])};
    total += static_cast<std::uint64_t>(l.param_count());
  }
  Vector params = r.get_vector(total);
  Vector shift = r.get_vector(dim);
  Vector scale = r.get_vector(dim);
  const int n = static_cast<int>(classes) - 1;
  Vector theta = r.get_vector(static_cast<std::uint64_t>(n) * (n + 1) / 2);
  std::vector<int> table;
  for (std::uint64_t k = 0; k < classes; ++k) table.push_back(static_cast<int>(r.get_u64()));
  r.expect_end();
  flow::FlowModel f(static_cast<int>(dim), clamp, std::move(layers), std::move(params), shift, scale);
  return CdaModel(std::move(f), flow::ScaleParam::from_theta(n, std::move(theta)), std::move(table));
}

}  // namespace calib::cda
