#include "calib/theory.hpp"

#include "calib/error.hpp"
#include "calib/simplex.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace calib::theory {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

void require_parts(int parts) {
  if (parts < 2) fail(ErrorCode::InvalidDimension, "D must be >= 2, got " + std::to_string(parts));
}

double gaussian_log_density(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

}  // namespace

BinaryCalibratedFamily::BinaryCalibratedFamily(double mu) : mu_(mu), sigma2_(2.0 * mu) {
  if (!std::isfinite(mu) || mu < 0.0) fail(ErrorCode::NegativeMu, "mu must be finite and >= 0");
}

double BinaryCalibratedFamily::log_density_h1(double llr) const {
  if (is_point_mass()) fail(ErrorCode::DegenerateDensity, "mu = 0 is a point mass at 0");
  return gaussian_log_density(llr, mu_, sigma2_);
}

double BinaryCalibratedFamily::log_density_h2(double llr) const {
  if (is_point_mass()) fail(ErrorCode::DegenerateDensity, "mu = 0 is a point mass at 0");
  return gaussian_log_density(llr, -mu_, sigma2_);
}

BinaryCalibratedFamily binary_family(double mu) { return BinaryCalibratedFamily(mu); }

double eer_from_mu(double mu) {
  if (!std::isfinite(mu) || mu < 0.0) fail(ErrorCode::NegativeMu, "mu must be finite and >= 0");
  return linalg::normal_cdf(-std::sqrt(mu / 2.0));
}

Matrix matrix_A(int parts) {
  require_parts(parts);
  const int n = parts - 1;
  Matrix a = Matrix::Zero(n, n);
  for (int i = 1; i <= n; ++i) {
    a(i - 1, i - 1) = 2.0 * std::sqrt((i + 1.0) / i);
    for (int j = 1; j < i; ++j) a(i - 1, j - 1) = 2.0 / std::sqrt(j * (j + 1.0));
  }
  return a;
}

Matrix matrix_B(int parts) {
  require_parts(parts);
  const int n = parts - 1;
  Matrix b = Matrix::Zero(n, n * n);
  for (int i = 1; i <= n; ++i) {
    for (int blk = 1; blk <= n; ++blk) {
      for (int j = 1; j <= n; ++j) {
        double v = 0.0;
        if (i == j && j == blk) {
          v = (blk + 1.0) / blk;
        } else if (i == j && blk < i) {
          v = 2.0 * std::sqrt((i + 1.0) / (i * blk * (blk + 1.0)));
        } else if (blk < i && j < i) {
          // Entry c_j c_b of c c^T with c = a_i + sum_{k<i} a_k / (k+1).
          v = 1.0 / std::sqrt(j * (j + 1.0) * blk * (blk + 1.0));
        }
        b(i - 1, (blk - 1) * n + (j - 1)) = v;
      }
    }
  }
  return b;
}

std::vector<Vector> shift_vectors(int parts) {
  require_parts(parts);
  const int n = parts - 1;
  std::vector<Vector> a;
  a.reserve(n);
  for (int i = 1; i <= n; ++i) {
    Vector v = Vector::Zero(n);
    v(i - 1) = std::sqrt((i + 1.0) / i);
    a.push_back(std::move(v));
  }
  return a;
}

std::vector<Vector> mean_offsets(int parts) {
  const std::vector<Vector> a = shift_vectors(parts);
  const int n = parts - 1;
  std::vector<Vector> c(parts, Vector::Zero(n));
  for (int k = 2; k <= parts; ++k) {
    Vector v = a[k - 2];
    for (int j = 1; j <= k - 2; ++j) v += a[j - 1] / (j + 1.0);
    c[k - 1] = std::move(v);
  }
  return c;
}

namespace {

Vector first_mean(const Matrix& sigma) {
  const int parts = static_cast<int>(sigma.rows()) + 1;
  const Matrix a = matrix_A(parts);
  const Vector rhs = matrix_B(parts) * linalg::vec(sigma);
  return a.triangularView<Eigen::Lower>().solve(rhs);
}

}  // namespace

std::vector<Vector> mean_chain(const Matrix& sigma) {
  linalg::checked_cholesky(sigma, "Sigma");
  const int parts = static_cast<int>(sigma.rows()) + 1;
  const Vector mu1 = first_mean(sigma);
  std::vector<Vector> means;
  means.reserve(parts);
  for (const Vector& c : mean_offsets(parts)) means.push_back(mu1 - sigma * c);
  return means;
}

std::vector<Vector> mean_chain_recursive(const Matrix& sigma) {
  linalg::checked_cholesky(sigma, "Sigma");
  const int parts = static_cast<int>(sigma.rows()) + 1;
  const std::vector<Vector> a = shift_vectors(parts);
  std::vector<Vector> means;
  means.reserve(parts);
  means.push_back(first_mean(sigma));
  Vector running = means.front();
  for (int k = 1; k < parts; ++k) {
    Vector next = running / k - sigma * a[k - 1];
    running += next;
    means.push_back(std::move(next));
  }
  return means;
}

std::vector<Matrix> mean_maps(int parts) {
  require_parts(parts);
  const int n = parts - 1;
  const Matrix base = matrix_A(parts).triangularView<Eigen::Lower>().solve(matrix_B(parts));
  std::vector<Matrix> maps;
  maps.reserve(parts);
  for (const Vector& c : mean_offsets(parts)) {
    Matrix g = base;
    // (Sigma c)_r = sum_s Sigma(r, s) c_s and Sigma(r, s) sits at vec index s n + r.
    for (int s = 0; s < n; ++s)
      for (int r = 0; r < n; ++r) g(r, s * n + r) -= c(s);
    maps.push_back(std::move(g));
  }
  return maps;
}

CalibratedFamily::CalibratedFamily(const Matrix& sigma)
    : sigma_(0.5 * (sigma + sigma.transpose())), llt_(linalg::checked_cholesky(sigma, "Sigma")) {
  means_ = mean_chain(sigma_);
  const double n = static_cast<double>(sigma_.rows());
  log_norm_ = -0.5 * (n * kLog2Pi + linalg::log_det_from_cholesky(llt_));
  const Vector q = quadratic_forms();
  const double spread = q.maxCoeff() - q.minCoeff();
  if (spread > 1e-6 * std::max(1.0, q.cwiseAbs().maxCoeff())) {
    fail(ErrorCode::NotSPD, "Sigma is too ill-conditioned for the mean chain (quadratic forms differ by " +
                                std::to_string(spread) + ")");
  }
}

double CalibratedFamily::log_density(int cls, const Eigen::Ref<const Vector>& l) const {
  if (cls < 0 || cls >= parts()) fail(ErrorCode::InvalidArgument, "class index out of range");
  if (l.size() != sigma_.rows()) fail(ErrorCode::DimensionMismatch, "point has wrong dimension");
  const Vector r = llt_.matrixL().solve(l - means_[cls]);
  return log_norm_ - 0.5 * r.squaredNorm();
}

Vector CalibratedFamily::quadratic_forms() const {
  Vector q(parts());
  for (int k = 0; k < parts(); ++k) q(k) = llt_.matrixL().solve(means_[k]).squaredNorm();
  return q;
}

CalibratedFamily family_from_sigma(const Matrix& sigma) { return CalibratedFamily(sigma); }

Matrix divergence_map(int parts) {
  require_parts(parts);
  const int n = parts - 1;
  const Matrix mean_map = matrix_A(parts).triangularView<Eigen::Lower>().solve(matrix_B(parts));
  const std::vector<Vector> c = mean_offsets(parts);
  const int pairs = parts * (parts - 1) / 2;
  Matrix rows(pairs, n * n);
  int r = 0;
  for (int i = 0; i < parts; ++i) {
    for (int j = i + 1; j < parts; ++j) {
      const Matrix outer = c[i] * c[j].transpose();
      rows.row(r++) = (c[i] + c[j]).transpose() * mean_map - linalg::vec(outer).transpose();
    }
  }
  return rows * linalg::duplication_matrix(n);
}

Matrix divergence_matrix(const CalibratedFamily& family) {
  const int parts = family.parts();
  const Vector d = divergence_map(parts) * linalg::vech(family.sigma());
  return linalg::unvech_offdiag(d, parts);
}

Matrix divergence_matrix_direct(const CalibratedFamily& family) {
  const int parts = family.parts();
  Matrix delta = Matrix::Zero(parts, parts);
  for (int i = 0; i < parts; ++i) {
    for (int j = i + 1; j < parts; ++j) {
      const Vector r = family.cholesky().matrixL().solve(family.means()[i] - family.means()[j]);
      delta(i, j) = delta(j, i) = 0.5 * r.squaredNorm();
    }
  }
  return delta;
}

SigmaSolution sigma_from_divergences(const Matrix& delta) {
  if (delta.rows() != delta.cols() || delta.rows() < 2) {
    fail(ErrorCode::InvalidArgument, "divergence matrix must be square with D >= 2");
  }
  if (!delta.allFinite()) fail(ErrorCode::InvalidArgument, "divergence matrix has non-finite entries");
  const Eigen::Index parts = delta.rows();
  for (Eigen::Index i = 0; i < parts; ++i) {
    if (delta(i, i) != 0.0) fail(ErrorCode::InvalidArgument, "divergence matrix diagonal must be zero");
    for (Eigen::Index j = 0; j < parts; ++j) {
      if (delta(i, j) < 0.0) fail(ErrorCode::InvalidArgument, "divergences must be nonnegative");
      if (std::abs(delta(i, j) - delta(j, i)) > 1e-12 * std::max(1.0, std::abs(delta(i, j)))) {
        fail(ErrorCode::InvalidArgument, "divergence matrix must be symmetric");
      }
    }
  }
  const Matrix m = divergence_map(static_cast<int>(parts));
  const Vector target = linalg::vech_offdiag(delta);
  const Vector x = m.completeOrthogonalDecomposition().solve(target);
  SigmaSolution out;
  out.sigma = linalg::unvech(x, parts - 1);
  out.residual = (m * x - target).norm();
  if (!linalg::is_spd(out.sigma)) {
    fail(ErrorCode::NotSPDResult, "least-squares covariance is not positive definite (residual " +
                                      std::to_string(out.residual) + ")");
  }
  return out;
}

Matrix sample(const CalibratedFamily& family, int cls, int n, std::uint64_t seed) {
  if (cls < 0 || cls >= family.parts()) fail(ErrorCode::InvalidArgument, "class index out of range");
  if (n < 1) fail(ErrorCode::InvalidSize, "sample count must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index dim = family.sigma().rows();
  Matrix eps(dim, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < dim; ++r) eps(r, c) = normal(rng);
  Matrix out = family.cholesky().matrixL() * eps;
  out.colwise() += family.means()[cls];
  return out;
}

Matrix idempotence_residual(const CalibratedFamily& family, const Matrix& points) {
  const int parts = family.parts();
  if (points.rows() != parts - 1) fail(ErrorCode::DimensionMismatch, "points must have D-1 rows");
  Matrix out(points.rows(), points.cols());
  Vector logs(parts);
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    for (int k = 0; k < parts; ++k) logs(k) = family.log_density(k, points.col(c));
    out.col(c) = simplex::ilr_from_log(logs) - points.col(c);
  }
  return out;
}

}  // namespace calib::theory
