#pragma once

// Linear and quadratic discriminant analysis. Features are N x d (one sample
// per row), labels are 0-based class indices and every class in 0..D-1 must
// occur.

#include "calib/linalg.hpp"

#include <span>
#include <string>
#include <vector>

namespace calib::baselines {

struct FitOptions {
  bool empirical_priors = false;  // default: uniform priors
};

// One Gaussian component with a cached Cholesky factor.
class GaussianComponent {
 public:
  GaussianComponent() = default;
  GaussianComponent(Vector mean, const Matrix& cov);

  const Vector& mean() const noexcept { return mean_; }
  const Matrix& covariance() const noexcept { return cov_; }
  const Eigen::LLT<Matrix>& cholesky() const noexcept { return llt_; }
  double log_det() const noexcept { return log_det_; }

  double log_density(const Eigen::Ref<const Vector>& x) const;
  // Log densities of every row of `x`.
  Vector log_density_rows(const Matrix& x) const;

 private:
  Vector mean_;
  Matrix cov_;
  Eigen::LLT<Matrix> llt_;
  double log_det_ = 0.0;
};

struct LdaModel {
  std::vector<Vector> means;
  Matrix covariance;     // pooled within-class, divisor N - D
  Vector log_priors;     // used by decision_scores only
  std::vector<GaussianComponent> components;  // shared covariance

  int classes() const noexcept { return static_cast<int>(means.size()); }
  int dim() const noexcept { return static_cast<int>(covariance.rows()); }
};

struct QdaModel {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;  // per class, divisor n_k - 1
  Vector log_priors;
  std::vector<GaussianComponent> components;

  int classes() const noexcept { return static_cast<int>(means.size()); }
  int dim() const noexcept { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
};

// Number of classes implied by labels (max + 1). Throws MissingClass when a
// class in between has no sample and InvalidArgument for negative labels.
int count_classes(std::span<const int> labels);

LdaModel lda_fit(const Matrix& features, std::span<const int> labels, const FitOptions& opts = {});
QdaModel qda_fit(const Matrix& features, std::span<const int> labels, const FitOptions& opts = {});

// Rebuild cached factors after loading raw parameters.
LdaModel lda_from_parameters(std::vector<Vector> means, const Matrix& covariance, Vector log_priors);
QdaModel qda_from_parameters(std::vector<Vector> means, std::vector<Matrix> covariances, Vector log_priors);

// log f(x | class 0) - log f(x | class 1) through the linear closed form.
// Throws NotBinary unless the model has exactly two classes.
double lda_llr(const LdaModel& model, const Eigen::Ref<const Vector>& x);
// log f(x | i) - log f(x | j) through the quadratic closed form.
double qda_llr(const QdaModel& model, const Eigen::Ref<const Vector>& x, int i, int j);

// N x D class-conditional log-likelihoods.
Matrix loglik_matrix(const LdaModel& model, const Matrix& features);
Matrix loglik_matrix(const QdaModel& model, const Matrix& features);

// Log-likelihoods plus log priors; argmax gives the Bayes decision.
Matrix decision_scores(const LdaModel& model, const Matrix& features);
Matrix decision_scores(const QdaModel& model, const Matrix& features);

// Generalized eigenvectors of (Sigma_B, Sigma_W), sorted by decreasing
// eigenvalue and normalized so that V^T Sigma_W V = I. The first D-1 columns
// are the discriminant directions, the rest span the residual.
struct LdaProjector {
  Vector center;       // mean of the class means
  Matrix directions;   // d x d
  Vector eigenvalues;  // d, decreasing
  int discriminant_dims = 0;
};

struct Projection {
  Matrix discriminant;  // N x (D-1)
  Matrix residual;      // N x (d-D+1)
};

LdaProjector lda_projector(const LdaModel& model);
Projection lda_project(const LdaProjector& projector, const Matrix& features);
Projection lda_project(const LdaModel& model, const Matrix& features);

// Checkpoints (see serialize.hpp). Loading validates the kind and shapes.
void save_lda(const std::string& path, const LdaModel& model);
void save_qda(const std::string& path, const QdaModel& model);
LdaModel load_lda(const std::string& path);
QdaModel load_qda(const std::string& path);

}  // namespace calib::baselines
