#include "calib/linalg.hpp"

#include "calib/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace calib {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonPositivePart: return "NonPositivePart";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidDimension: return "InvalidDimension";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::NegativeMu: return "NegativeMu";
    case ErrorCode::DegenerateDensity: return "DegenerateDensity";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::NotSPDResult: return "NotSPDResult";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::MissingClass: return "MissingClass";
    case ErrorCode::NotBinary: return "NotBinary";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::TooFewDimensions: return "TooFewDimensions";
    case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

namespace linalg {

Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    fail(ErrorCode::NotSPD, std::string(what) + " must be a non-empty square matrix");
  }
  if (!m.allFinite()) fail(ErrorCode::NotSPD, std::string(what) + " has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    fail(ErrorCode::NotSPD, std::string(what) + " is not symmetric");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::NotSPD, std::string(what) + " is not positive definite");
  }
  // LLT only fails on a non-positive pivot; reject pivots that are positive
  // but numerically zero as well.
  const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() <= 1e-150 || !diag.allFinite()) {
    fail(ErrorCode::NotSPD, std::string(what) + " is numerically singular");
  }
  return llt;
}

bool is_spd(const Matrix& m) {
  try {
    checked_cholesky(m);
    return true;
  } catch (const Error&) {
    return false;
  }
}

double log_det_from_cholesky(const Eigen::LLT<Matrix>& llt) {
  const Matrix& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Vector vech(const Matrix& m) {
  const Eigen::Index n = m.rows();
  Vector out(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) out(k++) = m(i, j);
  return out;
}

Vector vech_offdiag(const Matrix& m) {
  const Eigen::Index n = m.rows();
  Vector out(n * (n - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) out(k++) = m(i, j);
  return out;
}

Matrix unvech(const Vector& v, Eigen::Index n) {
  if (v.size() != n * (n + 1) / 2) fail(ErrorCode::DimensionMismatch, "unvech: wrong length");
  Matrix m(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) m(i, j) = m(j, i) = v(k++);
  return m;
}

Matrix unvech_offdiag(const Vector& v, Eigen::Index n) {
  if (v.size() != n * (n - 1) / 2) fail(ErrorCode::DimensionMismatch, "unvech_offdiag: wrong length");
  Matrix m = Matrix::Zero(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) m(i, j) = m(j, i) = v(k++);
  return m;
}

Matrix duplication_matrix(Eigen::Index n) {
  Matrix dup = Matrix::Zero(n * n, n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      dup(j * n + i, k) = 1.0;
      dup(i * n + j, k) = 1.0;
      ++k;
    }
  }
  return dup;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double softplus(double x) {
  if (std::isinf(x)) return x > 0 ? x : 0.0;
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace linalg
}  // namespace calib
