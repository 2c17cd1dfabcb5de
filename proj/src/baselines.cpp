#include "calib/baselines.hpp"

#include "calib/error.hpp"
#include "calib/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace calib::baselines {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Adds 1e-6 * trace / d to the diagonal when the plain factorization fails.
Matrix regularized(const Matrix& cov, const std::string& what) {
  const Matrix sym = 0.5 * (cov + cov.transpose());
  if (linalg::is_spd(sym)) return sym;
  const double d = static_cast<double>(sym.rows());
  const double ridge = 1e-6 * sym.trace() / d;
  if (!(ridge > 0.0) || !std::isfinite(ridge)) {
    fail(ErrorCode::DegenerateCovariance, what + " has non-positive trace");
  }
  Matrix fixed = sym;
  fixed.diagonal().array() += ridge;
  if (!linalg::is_spd(fixed)) fail(ErrorCode::DegenerateCovariance, what + " stays singular after ridge");
  return fixed;
}

void check_inputs(const Matrix& features, std::span<const int> labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "features and labels differ in length");
  }
  if (features.rows() == 0 || features.cols() == 0) fail(ErrorCode::InvalidSize, "empty feature matrix");
  if (!features.allFinite()) fail(ErrorCode::InvalidArgument, "features must be finite");
}

std::vector<Vector> class_means(const Matrix& features, std::span<const int> labels, int classes,
                                std::vector<int>& counts) {
  const Eigen::Index d = features.cols();
  std::vector<Vector> means(classes, Vector::Zero(d));
  counts.assign(classes, 0);
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const int l = labels[static_cast<std::size_t>(r)];
    means[l] += features.row(r).transpose();
    ++counts[l];
  }
  for (int k = 0; k < classes; ++k) means[k] /= counts[k];
  return means;
}

Vector make_log_priors(const std::vector<int>& counts, bool empirical) {
  const int classes = static_cast<int>(counts.size());
  Vector lp(classes);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (int k = 0; k < classes; ++k) lp(k) = empirical ? std::log(counts[k] / total) : -std::log(double(classes));
  return lp;
}

template <class Model>
Matrix loglik_impl(const Model& model, const Matrix& features) {
  if (features.cols() != model.dim()) fail(ErrorCode::DimensionMismatch, "feature dimension differs from model");
  Matrix out(features.rows(), model.classes());
  for (int k = 0; k < model.classes(); ++k) out.col(k) = model.components[k].log_density_rows(features);
  return out;
}

}  // namespace

GaussianComponent::GaussianComponent(Vector mean, const Matrix& cov)
    : mean_(std::move(mean)), cov_(cov), llt_(linalg::checked_cholesky(cov, "covariance")) {
  if (mean_.size() != cov_.rows()) fail(ErrorCode::DimensionMismatch, "mean and covariance sizes differ");
  log_det_ = linalg::log_det_from_cholesky(llt_);
}

double GaussianComponent::log_density(const Eigen::Ref<const Vector>& x) const {
  const Vector r = llt_.matrixL().solve(x - mean_);
  return -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + log_det_ + r.squaredNorm());
}

Vector GaussianComponent::log_density_rows(const Matrix& x) const {
  Matrix centered = x.transpose();
  centered.colwise() -= mean_;
  llt_.matrixL().solveInPlace(centered);
  const double c = static_cast<double>(mean_.size()) * kLog2Pi + log_det_;
  return (-0.5 * (centered.colwise().squaredNorm().array() + c)).transpose();
}

int count_classes(std::span<const int> labels) {
  if (labels.empty()) fail(ErrorCode::InvalidSize, "no labels");
  int top = -1;
  for (int l : labels) {
    if (l < 0) fail(ErrorCode::InvalidArgument, "negative label " + std::to_string(l));
    top = std::max(top, l);
  }
  std::vector<char> seen(static_cast<std::size_t>(top) + 1, 0);
  for (int l : labels) seen[static_cast<std::size_t>(l)] = 1;
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k]) fail(ErrorCode::MissingClass, "class " + std::to_string(k) + " has no samples");
  return top + 1;
}

LdaModel lda_fit(const Matrix& features, std::span<const int> labels, const FitOptions& opts) {
  check_inputs(features, labels);
  const int classes = count_classes(labels);
  const Eigen::Index n = features.rows(), d = features.cols();
  if (n <= d + classes) fail(ErrorCode::InvalidSize, "LDA needs N > d + D samples");
  std::vector<int> counts;
  std::vector<Vector> means = class_means(features, labels, classes, counts);
  Matrix centered = features;
  for (Eigen::Index r = 0; r < n; ++r) centered.row(r) -= means[labels[static_cast<std::size_t>(r)]].transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - classes);
  return lda_from_parameters(std::move(means), regularized(cov, "pooled covariance"),
                             make_log_priors(counts, opts.empirical_priors));
}

LdaModel lda_from_parameters(std::vector<Vector> means, const Matrix& covariance, Vector log_priors) {
  if (means.size() < 2) fail(ErrorCode::InvalidSize, "need at least two classes");
  if (log_priors.size() != static_cast<Eigen::Index>(means.size())) {
    fail(ErrorCode::DimensionMismatch, "one log prior per class expected");
  }
  LdaModel m;
  m.means = std::move(means);
  m.covariance = covariance;
  m.log_priors = std::move(log_priors);
  for (const Vector& mu : m.means) m.components.emplace_back(mu, m.covariance);
  return m;
}

QdaModel qda_fit(const Matrix& features, std::span<const int> labels, const FitOptions& opts) {
  check_inputs(features, labels);
  const int classes = count_classes(labels);
  const Eigen::Index d = features.cols();
  std::vector<int> counts;
  std::vector<Vector> means = class_means(features, labels, classes, counts);
  std::vector<Matrix> covs(classes, Matrix::Zero(d, d));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const int l = labels[static_cast<std::size_t>(r)];
    const Vector c = features.row(r).transpose() - means[l];
    covs[l].selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  for (int k = 0; k < classes; ++k) {
    if (counts[k] <= d) {
      fail(ErrorCode::DegenerateCovariance, "class " + std::to_string(k) + " has too few samples for its covariance");
    }
    covs[k] = covs[k].selfadjointView<Eigen::Lower>();
    covs[k] /= static_cast<double>(counts[k] - 1);
    covs[k] = regularized(covs[k], "covariance of class " + std::to_string(k));
  }
  return qda_from_parameters(std::move(means), std::move(covs), make_log_priors(counts, opts.empirical_priors));
}

QdaModel qda_from_parameters(std::vector<Vector> means, std::vector<Matrix> covariances, Vector log_priors) {
  if (means.size() < 2) fail(ErrorCode::InvalidSize, "need at least two classes");
  if (covariances.size() != means.size() || log_priors.size() != static_cast<Eigen::Index>(means.size())) {
    fail(ErrorCode::DimensionMismatch, "one covariance and log prior per class expected");
  }
  QdaModel m;
  m.means = std::move(means);
  m.covariances = std::move(covariances);
  m.log_priors = std::move(log_priors);
  for (std::size_t k = 0; k < m.means.size(); ++k) m.components.emplace_back(m.means[k], m.covariances[k]);
  return m;
}

double lda_llr(const LdaModel& model, const Eigen::Ref<const Vector>& x) {
  if (model.classes() != 2) fail(ErrorCode::NotBinary, "lda_llr needs a two-class model");
  if (x.size() != model.dim()) fail(ErrorCode::DimensionMismatch, "feature dimension differs from model");
  const auto& llt = model.components.front().cholesky();
  const Vector w = llt.solve(model.means[0] - model.means[1]);
  const double offset = 0.5 * (model.means[0].dot(llt.solve(model.means[0])) - model.means[1].dot(llt.solve(model.means[1])));
  return x.dot(w) - offset;
}

double qda_llr(const QdaModel& model, const Eigen::Ref<const Vector>& x, int i, int j) {
  if (i < 0 || j < 0 || i >= model.classes() || j >= model.classes()) {
    fail(ErrorCode::InvalidArgument, "class index out of range");
  }
  if (x.size() != model.dim()) fail(ErrorCode::DimensionMismatch, "feature dimension differs from model");
  const GaussianComponent& ci = model.components[i];
  const GaussianComponent& cj = model.components[j];
  const Vector pi_x = ci.cholesky().solve(x);
  const Vector pj_x = cj.cholesky().solve(x);
  const Vector pi_m = ci.cholesky().solve(ci.mean());
  const Vector pj_m = cj.cholesky().solve(cj.mean());
  return 0.5 * x.dot(pj_x - pi_x) + x.dot(pi_m - pj_m) - 0.5 * ci.mean().dot(pi_m) + 0.5 * cj.mean().dot(pj_m) -
         0.5 * ci.log_det() + 0.5 * cj.log_det();
}

Matrix loglik_matrix(const LdaModel& model, const Matrix& features) { return loglik_impl(model, features); }
Matrix loglik_matrix(const QdaModel& model, const Matrix& features) { return loglik_impl(model, features); }

Matrix decision_scores(const LdaModel& model, const Matrix& features) {
  Matrix s = loglik_matrix(model, features);
  s.rowwise() += model.log_priors.transpose();
  return s;
}

Matrix decision_scores(const QdaModel& model, const Matrix& features) {
  Matrix s = loglik_matrix(model, features);
  s.rowwise() += model.log_priors.transpose();
  return s;
}

LdaProjector lda_projector(const LdaModel& model) {
  const int classes = model.classes();
  const Eigen::Index d = model.dim();
  if (classes > d + 1) fail(ErrorCode::TooFewDimensions, "LDA projection needs D <= d + 1");
  LdaProjector p;
  p.center = Vector::Zero(d);
  for (const Vector& m : model.means) p.center += m;
  p.center /= classes;
  Matrix between = Matrix::Zero(d, d);
  for (const Vector& m : model.means) between += (m - p.center) * (m - p.center).transpose();
  between /= classes;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(between, model.covariance);
  if (es.info() != Eigen::Success) fail(ErrorCode::NotSPD, "generalized eigenproblem failed");
  // Eigen returns increasing eigenvalues; reverse them.
  p.eigenvalues = es.eigenvalues().reverse();
  p.directions = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index c = 0; c < d; ++c) {
    Eigen::Index k;
    p.directions.col(c).cwiseAbs().maxCoeff(&k);
    if (p.directions(k, c) < 0.0) p.directions.col(c) *= -1.0;
  }
  p.discriminant_dims = classes - 1;
  return p;
}

Projection lda_project(const LdaProjector& projector, const Matrix& features) {
  if (features.cols() != projector.center.size()) fail(ErrorCode::DimensionMismatch, "feature dimension differs");
  const Matrix coords = (features.rowwise() - projector.center.transpose()) * projector.directions;
  const Eigen::Index k = projector.discriminant_dims;
  return {coords.leftCols(k), coords.rightCols(coords.cols() - k)};
}

Projection lda_project(const LdaModel& model, const Matrix& features) {
  return lda_project(lda_projector(model), features);
}

namespace {

constexpr std::uint64_t kMaxDim = 1u << 16;

void put_common(io::CheckpointWriter& w, int classes, int dim, const std::vector<Vector>& means, const Vector& lp) {
  w.put_u64(static_cast<std::uint64_t>(classes));
  w.put_u64(static_cast<std::uint64_t>(dim));
  for (const Vector& m : means) w.put_vector(m);
  w.put_vector(lp);
}

void get_shape(io::CheckpointReader& r, std::uint64_t& classes, std::uint64_t& dim) {
  classes = r.get_u64();
  dim = r.get_u64();
  if (classes < 2 || classes > kMaxDim || dim < 1 || dim > kMaxDim) {
    fail(ErrorCode::FormatError, "checkpoint declares an invalid shape");
  }
}

}  // namespace

void save_lda(const std::string& path, const LdaModel& model) {
  io::CheckpointWriter w(path, io::ModelKind::Lda);
  put_common(w, model.classes(), model.dim(), model.means, model.log_priors);
  w.put_matrix(model.covariance);
  w.finish();
}

void save_qda(const std::string& path, const QdaModel& model) {
  io::CheckpointWriter w(path, io::ModelKind::Qda);
  put_common(w, model.classes(), model.dim(), model.means, model.log_priors);
  for (const Matrix& c : model.covariances) w.put_matrix(c);
  w.finish();
}

LdaModel load_lda(const std::string& path) {
  io::CheckpointReader r(path);
  if (r.kind() != io::ModelKind::Lda) fail(ErrorCode::FormatError, path + " holds a " + to_string(r.kind()) + " model");
  std::uint64_t classes, dim;
  get_shape(r, classes, dim);
  std::vector<Vector> means;
  for (std::uint64_t k = 0; k < classes; ++k) means.push_back(r.get_vector(dim));
  Vector lp = r.get_vector(classes);
  Matrix cov = r.get_matrix(dim, dim);
  r.expect_end();
  return lda_from_parameters(std::move(means), cov, std::move(lp));
}

QdaModel load_qda(const std::string& path) {
  io::CheckpointReader r(path);
  if (r.kind() != io::ModelKind::Qda) fail(ErrorCode::FormatError, path + " holds a " + to_string(r.kind()) + " model");
  std::uint64_t classes, dim;
  get_shape(r, classes, dim);
  std::vector<Vector> means;
  for (std::uint64_t k = 0; k < classes; ++k) means.push_back(r.get_vector(dim));
  Vector lp = r.get_vector(classes);
  std::vector<Matrix> covs;
  for (std::uint64_t k = 0; k < classes; ++k) covs.push_back(r.get_matrix(dim, dim));
  r.expect_end();
  return qda_from_parameters(std::move(means), std::move(covs), std::move(lp));
}

}  // namespace calib::baselines
