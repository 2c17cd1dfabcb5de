#pragma once

// Calibration and discrimination metrics.
//
// Binary trials carry an LLR (nats) and a 0/1 label; label 1 is the
// hypothesis that positive LLRs support. C_llr uses base-2 logs, a balanced
// two-class average and prior log-odds 0.

#include "calib/linalg.hpp"

#include <span>
#include <vector>

namespace calib::metrics {

struct ScoredTrial {
  double score = 0.0;
  int label = 0;
};

struct CllrReport {
  double cllr = 0.0;      // bits
  double cllr_min = 0.0;  // bits
  double cllr_cal = 0.0;  // bits
};

struct CmcReport {
  double cmc = 0.0;       // nats
  double accuracy = 0.0;  // fraction
};

// Monotone step map from score to P(label = 1). Breakpoints are the distinct
// input scores in increasing order.
class PavMap {
 public:
  PavMap(std::vector<double> scores, std::vector<double> posteriors);

  const std::vector<double>& scores() const noexcept { return scores_; }
  const std::vector<double>& posteriors() const noexcept { return posteriors_; }

  // Value of the step containing `score`: the breakpoint at or below it, or
  // the first breakpoint for scores below the range.
  double operator()(double score) const;

 private:
  std::vector<double> scores_;
  std::vector<double> posteriors_;
};

// Pool-adjacent-violators fit of P(label = 1 | score). Equal scores are pooled
// into one block first. Throws SingleClassInput unless both labels occur.
PavMap pav_calibrate(std::span<const ScoredTrial> trials);
// PAV posteriors for each trial in input order.
std::vector<double> pav_posteriors(std::span<const ScoredTrial> trials);

double cllr(std::span<const ScoredTrial> trials);
CllrReport cllr_decompose(std::span<const ScoredTrial> trials);

// Equal error rate with linear interpolation between adjacent ROC points.
double eer(std::span<const ScoredTrial> trials);

// Balanced multiclass cross-entropy with a uniform prior:
// -(1/D) sum_k mean_{x in class k} log softmax(ll(x))_k, plus maximum
// likelihood accuracy (ties go to the lowest class index).
CmcReport c_mc(const Matrix& loglik, std::span<const int> labels);
// Trial-weighted variant: -(1/N) sum_n log softmax(ll(x_n))_{label_n}.
double c_mc_trial_weighted(const Matrix& loglik, std::span<const int> labels);

// Row-wise argmax, lowest index on ties.
std::vector<int> argmax_rows(const Matrix& m);
double accuracy(const Matrix& loglik, std::span<const int> labels);

// Binary trials for class i against class j from a log-likelihood matrix:
// score = ll(:, i) - ll(:, j), label 1 for class i, rows of other classes are
// discarded.
std::vector<ScoredTrial> pairwise_trials(const Matrix& loglik, std::span<const int> labels, int i, int j);

}  // namespace calib::metrics
