#pragma once

// Closed-form distributions of calibrated log-likelihood-ratios (binary case)
// and of calibrated ILR likelihood vectors (ILRLs, any number of classes).
//
// Conventions used throughout:
//  * classes are indexed 0..D-1 in code; class k corresponds to hypothesis
//    H_{k+1} and to part k+1 of the likelihood composition;
//  * vec() is column-major, vech() is the lower triangle column by column;
//  * the divergence vector orders pairs (0,1), (0,2), ..., (D-2,D-1).

#include "calib/linalg.hpp"

#include <cstdint>
#include <vector>

namespace calib::theory {

// LLR under H1 ~ N(mu, 2 mu), under H2 ~ N(-mu, 2 mu). mu = 0 is the
// degenerate point mass at zero for both hypotheses.
class BinaryCalibratedFamily {
 public:
  explicit BinaryCalibratedFamily(double mu);

  double mu() const noexcept { return mu_; }
  double sigma2() const noexcept { return sigma2_; }
  bool is_point_mass() const noexcept { return mu_ == 0.0; }

  // Log density of the LLR under H1 / H2. Throws DegenerateDensity for the
  // point-mass family.
  double log_density_h1(double llr) const;
  double log_density_h2(double llr) const;

  // D_KL(f1 || f2); equals mu by idempotence.
  double kl_divergence() const noexcept { return mu_; }

 private:
  double mu_;
  double sigma2_;
};

BinaryCalibratedFamily binary_family(double mu);

// EER of the pair N(mu, 2mu) / N(-mu, 2mu): Phi(-sqrt(mu / 2)).
double eer_from_mu(double mu);

// Lower-triangular system matrix A of size (D-1).
Matrix matrix_A(int parts);
// Block matrix B of size (D-1) x (D-1)^2 such that A mu_1 = B vec(Sigma).
Matrix matrix_B(int parts);

// a_i = sqrt((i+1)/i) e_i for i = 1..D-1 (returned 0-based: a[0] = a_1).
std::vector<Vector> shift_vectors(int parts);
// c_k with mu_k = mu_1 - Sigma c_k (k = 1..D, returned 0-based):
// c_k = a_{k-1} + sum_{j=1}^{k-2} a_j / (j+1), c_1 = 0.
std::vector<Vector> mean_offsets(int parts);

// Closed form: mu_1 = A^{-1} B vec(Sigma), mu_k = mu_1 - Sigma c_k.
std::vector<Vector> mean_chain(const Matrix& sigma);
// Recursion: mu_{k+1} = (1/k) sum_{j<=k} mu_j - Sigma a_k, seeded with the
// closed-form mu_1.
std::vector<Vector> mean_chain_recursive(const Matrix& sigma);

// (D-1) x (D-1)^2 matrices G_k with mu_k = G_k vec(Sigma) for symmetric Sigma.
std::vector<Matrix> mean_maps(int parts);

class CalibratedFamily {
 public:
  // Validates Sigma (NotSPD) and the constant quadratic form invariant.
  explicit CalibratedFamily(const Matrix& sigma);

  int parts() const noexcept { return static_cast<int>(sigma_.rows()) + 1; }
  const Matrix& sigma() const noexcept { return sigma_; }
  const std::vector<Vector>& means() const noexcept { return means_; }
  const Eigen::LLT<Matrix>& cholesky() const noexcept { return llt_; }

  double log_density(int cls, const Eigen::Ref<const Vector>& l) const;
  // mu_k^T Sigma^{-1} mu_k for every class.
  Vector quadratic_forms() const;

 private:
  Matrix sigma_;
  Eigen::LLT<Matrix> llt_;
  std::vector<Vector> means_;
  double log_norm_ = 0.0;
};

CalibratedFamily family_from_sigma(const Matrix& sigma);

// Square map M with vech_offdiag(Delta) = M vech(Sigma).
Matrix divergence_map(int parts);

// Divergence matrix through the M-matrix path.
Matrix divergence_matrix(const CalibratedFamily& family);
// Divergence matrix through the Gaussian KL formula.
Matrix divergence_matrix_direct(const CalibratedFamily& family);

struct SigmaSolution {
  Matrix sigma;
  double residual = 0.0;  // || M vech(Sigma) - vech_offdiag(Delta) ||_2
};

// Least-squares inverse of the divergence map. Throws NotSPDResult when the
// solution is not SPD and InvalidArgument for a malformed divergence matrix.
SigmaSolution sigma_from_divergences(const Matrix& delta);

// n draws from N(mu_cls, Sigma), one per column.
Matrix sample(const CalibratedFamily& family, int cls, int n, std::uint64_t seed);

// Residual ilr([f_1(l) ... f_D(l)]) - l for each column of `points`.
Matrix idempotence_residual(const CalibratedFamily& family, const Matrix& points);

}  // namespace calib::theory
