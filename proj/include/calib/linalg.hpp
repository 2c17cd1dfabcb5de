#pragma once

#include <Eigen/Dense>

#include <vector>

namespace calib {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace linalg {

// Cholesky factor of a symmetric positive-definite matrix. Throws NotSPD when
// the matrix is not symmetric (relative tolerance 1e-10) or the factorization
// fails.
Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, const char* what = "matrix");

bool is_spd(const Matrix& m);

double log_det_from_cholesky(const Eigen::LLT<Matrix>& llt);

// Column-major vectorization.
Vector vec(const Matrix& m);
// Lower-triangle half-vectorization, column by column (diagonal included).
Vector vech(const Matrix& m);
// Strictly-lower half-vectorization, column by column: for a symmetric
// divergence matrix this orders pairs as (1,2), (1,3), ..., (D-1,D).
Vector vech_offdiag(const Matrix& m);
Matrix unvech(const Vector& v, Eigen::Index n);
Matrix unvech_offdiag(const Vector& v, Eigen::Index n);

// Duplication matrix: vec(S) = D_n vech(S) for symmetric S.
Matrix duplication_matrix(Eigen::Index n);

// Standard normal CDF.
double normal_cdf(double x);

// log(1 + exp(x)) that stays finite for large |x| and handles +-inf.
double softplus(double x);

double log_sum_exp(const Eigen::Ref<const Vector>& v);

}  // namespace linalg
}  // namespace calib
