#pragma once

// Aitchison geometry of the probability/likelihood simplex.
//
// A Composition is a strictly positive D-part vector stored in its closed form
// (parts sum to one). Perturbation and powering make the simplex a (D-1)
// dimensional vector space; the isometric log-ratio (ILR) transform maps it
// onto R^(D-1) using the Gram-Schmidt basis whose bifurcation tree compares
// part i+1 against the group of parts 1..i.

#include "calib/linalg.hpp"

#include <initializer_list>
#include <span>
#include <vector>

namespace calib::simplex {

// Tolerance used by Composition::approx_equal on closed parts.
inline constexpr double kEqualityTolerance = 1e-12;

class Composition {
 public:
  // Closes `parts`; throws NonPositivePart on zero, negative or non-finite
  // entries and InvalidDimension for fewer than two parts.
  explicit Composition(const Vector& parts);
  Composition(std::initializer_list<double> parts);

  static Composition uniform(int parts);

  const Vector& parts() const noexcept { return parts_; }
  int size() const noexcept { return static_cast<int>(parts_.size()); }
  double operator[](int i) const { return parts_(i); }
  Vector log_parts() const { return parts_.array().log().matrix(); }

  bool approx_equal(const Composition& other, double tol = kEqualityTolerance) const;

 private:
  Vector parts_;
};

class IlrVector {
 public:
  IlrVector() = default;
  explicit IlrVector(Vector coords) : coords_(std::move(coords)) {}
  IlrVector(std::initializer_list<double> coords);

  const Vector& coords() const noexcept { return coords_; }
  // Number of parts of the composition these coordinates describe.
  int parts() const noexcept { return static_cast<int>(coords_.size()) + 1; }
  double operator[](int i) const { return coords_(i); }

 private:
  Vector coords_;
};

struct AitchisonBasis {
  int parts = 0;
  std::vector<Composition> vectors;  // parts - 1 orthonormal elements
};

Composition closure(const Vector& x);
Composition perturb(const Composition& x, const Composition& y);
Composition power(double alpha, const Composition& x);

// <x, y>_A computed from the double sum over all log-ratio pairs.
double a_inner(const Composition& x, const Composition& y);
double a_norm(const Composition& x);
double a_dist(const Composition& x, const Composition& y);

AitchisonBasis gs_basis(int parts);

// Centred log-ratio coordinates of the i-th basis element (1-based i), i.e.
// the row that maps ILR coordinates back to log-parts.
Vector basis_clr(int parts, int i);
// (parts x parts-1) matrix whose columns are basis_clr(parts, 1..parts-1).
Matrix ilr_contrast_matrix(int parts);

IlrVector ilr(const Composition& x);
// ILR of an unclosed positive vector given by its logarithms; any common
// offset cancels, so this accepts log-likelihoods directly.
Vector ilr_from_log(const Eigen::Ref<const Vector>& log_parts);
// Projection on gs_basis through a_inner; independent of the closed form.
IlrVector ilr_by_projection(const Composition& x, const AitchisonBasis& basis);

// Inverse ILR. Log-parts are shifted by their maximum before exponentiation;
// throws Overflow when a part still under- or overflows.
Composition ilr_inv(const IlrVector& v);
// Normalized log-parts of ilr_inv(v); never underflows.
Vector ilr_inv_log(const Eigen::Ref<const Vector>& coords);

Composition bayes_update(const Composition& prior, const Composition& likelihood);

double strength_of_evidence(const Composition& w);

// Optional preprocessing for data with zeros: replaces every part <= 0 by
// `epsilon` times the total mass and re-closes.
Composition replace_zeros(const Vector& x, double epsilon = 1e-6);

}  // namespace calib::simplex
