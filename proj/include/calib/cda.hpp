#pragma once

// Compositional discriminant analysis: a flow whose base space carries the
// calibrated class densities N([mu_k; 0], blockdiag(Sigma, I)), so the first
// D-1 base coordinates of a sample are its ILR likelihood vector (ILRL).
// Class order is the bifurcation-tree order of the ILR basis.

#include "calib/flow.hpp"
#include "calib/simplex.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace calib::cda {

struct CdaConfig {
  flow::FlowConfig flow;    // dim is taken from the data
  flow::TrainConfig train;
  bool init_sigma_from_lda = true;  // otherwise Sigma starts at I
  // Eigenvalues of the initial Sigma are raised to at least this value; the
  // LDA divergences vanish when class means coincide (e.g. nested circles).
  double min_initial_variance = 1.0;
};

class CdaModel {
 public:
  CdaModel(flow::FlowModel flow, flow::ScaleParam scale, std::vector<int> label_table);

  int classes() const noexcept { return static_cast<int>(labels_.size()); }
  int dim() const noexcept { return flow_.dim(); }
  const flow::FlowModel& flow() const noexcept { return flow_; }
  const flow::ScaleParam& scale() const noexcept { return scale_; }
  const flow::BaseDensity& base() const noexcept { return base_; }
  // Original label value of every class index.
  const std::vector<int>& label_table() const noexcept { return labels_; }

 private:
  flow::FlowModel flow_;
  flow::ScaleParam scale_;
  std::vector<int> labels_;
  flow::BaseDensity base_;
};

struct FitResult {
  CdaModel model;
  std::vector<double> loss_trace;
  Matrix initial_sigma;
  Matrix divergences;  // D x D, from the learned Sigma
};

// Pairwise KL divergences of a shared-covariance Gaussian fit in feature space.
Matrix lda_divergences(const Matrix& features, std::span<const int> labels);
// Sigma for the base density from those divergences; identity when the
// least-squares solution is not SPD. Eigenvalues below `min_variance` are
// raised to it.
Matrix initial_sigma(const Matrix& features, std::span<const int> labels, double min_variance = 0.0);

// Throws TooFewDimensions when d < D - 1 and Diverged when training fails.
FitResult cda_fit(const Matrix& features, std::span<const int> labels, const CdaConfig& config,
                  const flow::EpochCallback& on_epoch = {});

// Base-space image g^-1(x), N x d.
Matrix to_base(const CdaModel& model, const Matrix& features);
// N x (D-1) ILRLs: leading base coordinates.
Matrix ilrl_matrix(const CdaModel& model, const Matrix& features);
simplex::IlrVector ilrl(const CdaModel& model, const Eigen::Ref<const Vector>& x);

// N x D log-likelihoods normalized per row, log ilr_inv(ilrl(x)); row
// differences are the pairwise LLRs.
Matrix score_matrix(const CdaModel& model, const Matrix& features);

struct Decision {
  int cls = 0;
  Vector log_posterior;           // normalized
  simplex::Composition posterior; // parts below the smallest normal double are clamped
};

// Posterior by ILR translation, ilr_inv(ilrl(x) + ilr(prior)); ties go to the
// lowest class index. Throws DimensionMismatch for a prior of the wrong size.
Decision classify(const CdaModel& model, const Eigen::Ref<const Vector>& x, const simplex::Composition& prior);

// g(alpha m_i + (1 - alpha) m_j); throws AlphaOutOfRange outside [0, 1].
Vector interpolate(const CdaModel& model, int i, int j, double alpha);

Matrix divergence_matrix(const CdaModel& model);

// Per-class moments of the residual base coordinates (D-1 .. d-1).
struct ResidualStats {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
};
ResidualStats residual_stats(const CdaModel& model, const Matrix& features, std::span<const int> labels);

void save(const std::string& path, const CdaModel& model);
CdaModel load(const std::string& path);

}  // namespace calib::cda
