#include "calib/simplex.hpp"

#include "calib/error.hpp"

#include <cmath>
#include <string>

namespace calib::simplex {

namespace {

void require_same_size(const Composition& x, const Composition& y, const char* op) {
  if (x.size() != y.size()) {
    fail(ErrorCode::DimensionMismatch, std::string(op) + ": compositions have " +
                                           std::to_string(x.size()) + " and " +
                                           std::to_string(y.size()) + " parts");
  }
}

Vector closed(const Vector& x) {
  if (x.size() < 2) fail(ErrorCode::InvalidDimension, "a composition needs at least 2 parts");
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i)) || x(i) <= 0.0) {
      fail(ErrorCode::NonPositivePart, "part " + std::to_string(i) + " = " + std::to_string(x(i)));
    }
  }
  const double total = x.sum();
  if (!std::isfinite(total)) fail(ErrorCode::Overflow, "sum of parts is not finite");
  return x / total;
}

}  // namespace

Composition::Composition(const Vector& parts) : parts_(closed(parts)) {}

Composition::Composition(std::initializer_list<double> parts)
    : Composition(Eigen::Map<const Vector>(parts.begin(), static_cast<Eigen::Index>(parts.size()))) {}

Composition Composition::uniform(int parts) {
  if (parts < 2) fail(ErrorCode::InvalidDimension, "a composition needs at least 2 parts");
  return Composition(Vector::Ones(parts));
}

bool Composition::approx_equal(const Composition& other, double tol) const {
  return size() == other.size() && (parts_ - other.parts_).cwiseAbs().maxCoeff() <= tol;
}

IlrVector::IlrVector(std::initializer_list<double> coords)
    : coords_(Eigen::Map<const Vector>(coords.begin(), static_cast<Eigen::Index>(coords.size()))) {}

Composition closure(const Vector& x) { return Composition(x); }

Composition perturb(const Composition& x, const Composition& y) {
  require_same_size(x, y, "perturb");
  // Work in log space so that products of tiny parts do not underflow.
  const Vector logs = x.log_parts() + y.log_parts();
  return Composition((logs.array() - logs.maxCoeff()).exp().matrix());
}

Composition power(double alpha, const Composition& x) {
  if (!std::isfinite(alpha)) fail(ErrorCode::InvalidArgument, "power: non-finite exponent");
  const Vector logs = alpha * x.log_parts();
  return Composition((logs.array() - logs.maxCoeff()).exp().matrix());
}

double a_inner(const Composition& x, const Composition& y) {
  require_same_size(x, y, "a_inner");
  const Vector lx = x.log_parts();
  const Vector ly = y.log_parts();
  const int n = x.size();
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += (lx(i) - lx(j)) * (ly(i) - ly(j));
  return s / (2.0 * n);
}

double a_norm(const Composition& x) { return std::sqrt(std::max(0.0, a_inner(x, x))); }

double a_dist(const Composition& x, const Composition& y) {
  require_same_size(x, y, "a_dist");
  return a_norm(perturb(x, power(-1.0, y)));
}

Vector basis_clr(int parts, int i) {
  if (parts < 2) fail(ErrorCode::InvalidDimension, "basis needs at least 2 parts");
  if (i < 1 || i > parts - 1) fail(ErrorCode::InvalidArgument, "basis index out of range");
  Vector v = Vector::Zero(parts);
  const double di = static_cast<double>(i);
  v.head(i).setConstant(1.0 / std::sqrt(di * (di + 1.0)));
  v(i) = -std::sqrt(di / (di + 1.0));
  return v;
}

Matrix ilr_contrast_matrix(int parts) {
  Matrix psi(parts, parts - 1);
  for (int i = 1; i < parts; ++i) psi.col(i - 1) = basis_clr(parts, i);
  return psi;
}

AitchisonBasis gs_basis(int parts) {
  if (parts < 2) fail(ErrorCode::InvalidDimension, "gs_basis: D must be >= 2");
  AitchisonBasis basis;
  basis.parts = parts;
  basis.vectors.reserve(parts - 1);
  for (int i = 1; i < parts; ++i) {
    const Vector logs = basis_clr(parts, i);
    basis.vectors.emplace_back((logs.array() - logs.maxCoeff()).exp().matrix());
  }
  return basis;
}

Vector ilr_from_log(const Eigen::Ref<const Vector>& log_parts) {
  const Eigen::Index n = log_parts.size();
  if (n < 2) fail(ErrorCode::InvalidDimension, "ilr needs at least 2 parts");
  Vector out(n - 1);
  double prefix = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) {
    prefix += log_parts(i - 1);
    const double di = static_cast<double>(i);
    out(i - 1) = (prefix - di * log_parts(i)) / std::sqrt(di * (di + 1.0));
  }
  return out;
}

IlrVector ilr(const Composition& x) { return IlrVector(ilr_from_log(x.log_parts())); }

IlrVector ilr_by_projection(const Composition& x, const AitchisonBasis& basis) {
  if (basis.parts != x.size()) fail(ErrorCode::DimensionMismatch, "ilr_by_projection: basis size");
  Vector out(basis.parts - 1);
  for (int i = 0; i < basis.parts - 1; ++i) out(i) = a_inner(x, basis.vectors[i]);
  return IlrVector(std::move(out));
}

Vector ilr_inv_log(const Eigen::Ref<const Vector>& coords) {
  if (!coords.allFinite()) fail(ErrorCode::Overflow, "ilr_inv: non-finite coordinates");
  const int parts = static_cast<int>(coords.size()) + 1;
  if (parts < 2) fail(ErrorCode::InvalidDimension, "ilr_inv needs at least one coordinate");
  // Apply the contrast matrix without materializing it.
  Vector logs = Vector::Zero(parts);
  double tail = 0.0;  // sum over k >= i of coords(k-1) / sqrt(k(k+1))
  for (int i = parts - 1; i >= 1; --i) {
    const double di = static_cast<double>(i);
    logs(i) = tail - std::sqrt(di / (di + 1.0)) * coords(i - 1);
    tail += coords(i - 1) / std::sqrt(di * (di + 1.0));
  }
  logs(0) = tail;
  return logs.array() - linalg::log_sum_exp(logs);
}

Composition ilr_inv(const IlrVector& v) {
  const Vector logs = ilr_inv_log(v.coords());
  Vector parts = logs.unaryExpr([](double x) { return std::exp(x); });
  if (!parts.allFinite() || parts.minCoeff() <= 0.0) {
    fail(ErrorCode::Overflow, "ilr_inv: parts leave the representable range");
  }
  return Composition(parts);
}

Composition bayes_update(const Composition& prior, const Composition& likelihood) {
  require_same_size(prior, likelihood, "bayes_update");
  return perturb(likelihood, prior);
}

double strength_of_evidence(const Composition& w) {
  const Vector l = w.log_parts();
  const int n = w.size();
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s += (l(i) - l(j)) * (l(i) - l(j));
  return std::sqrt(s / n);
}

Composition replace_zeros(const Vector& x, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    fail(ErrorCode::InvalidArgument, "replace_zeros: epsilon must be positive");
  }
  if (x.size() < 2) fail(ErrorCode::InvalidDimension, "a composition needs at least 2 parts");
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i)) || x(i) < 0.0) {
      fail(ErrorCode::NonPositivePart, "replace_zeros: part " + std::to_string(i) + " is negative or non-finite");
    }
    total += x(i);
  }
  if (total <= 0.0) fail(ErrorCode::NonPositivePart, "replace_zeros: all parts are zero");
  Vector y = x / total;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) <= 0.0) y(i) = epsilon;
  return Composition(y);
}

}  // namespace calib::simplex
