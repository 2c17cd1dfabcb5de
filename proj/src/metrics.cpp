#include "calib/metrics.hpp"

#include "calib/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace calib::metrics {

namespace {

struct Block {
  double score;  // smallest score in the block
  double ones;   // number of label-1 trials
  double weight; // number of trials
};

void check_binary(std::span<const ScoredTrial> trials, std::size_t& n0, std::size_t& n1) {
  n0 = n1 = 0;
  for (const ScoredTrial& t : trials) {
    if (t.label == 0) {
      ++n0;
    } else if (t.label == 1) {
      ++n1;
    } else {
      fail(ErrorCode::InvalidArgument, "binary trials need labels 0 or 1, got " + std::to_string(t.label));
    }
    if (std::isnan(t.score)) fail(ErrorCode::InvalidArgument, "score is NaN");
  }
  if (n0 == 0 || n1 == 0) fail(ErrorCode::SingleClassInput, "both labels must be present");
}

std::vector<std::size_t> order_by_score(std::span<const ScoredTrial> trials) {
  std::vector<std::size_t> idx(trials.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return trials[a].score < trials[b].score; });
  return idx;
}

// Equal scores pooled, ascending.
std::vector<Block> tie_blocks(std::span<const ScoredTrial> trials, const std::vector<std::size_t>& order) {
  std::vector<Block> blocks;
  for (std::size_t k : order) {
    const ScoredTrial& t = trials[k];
    if (!blocks.empty() && blocks.back().score == t.score) {
      blocks.back().ones += t.label;
      blocks.back().weight += 1.0;
    } else {
      blocks.push_back({t.score, static_cast<double>(t.label), 1.0});
    }
  }
  return blocks;
}

struct PavResult {
  std::vector<double> breakpoints;  // distinct scores
  std::vector<double> values;       // posterior for each breakpoint
};

PavResult run_pav(std::span<const ScoredTrial> trials) {
  std::size_t n0 = 0, n1 = 0;
  check_binary(trials, n0, n1);
  const std::vector<Block> ties = tie_blocks(trials, order_by_score(trials));

  struct Pool {
    double ones;
    double weight;
    std::size_t count;  // number of tie blocks merged
  };
  std::vector<Pool> stack;
  stack.reserve(ties.size());
  for (const Block& b : ties) {
    stack.push_back({b.ones, b.weight, 1});
    while (stack.size() > 1) {
      const Pool& cur = stack.back();
      const Pool& prev = stack[stack.size() - 2];
      if (prev.ones * cur.weight <= cur.ones * prev.weight) break;
      Pool merged{prev.ones + cur.ones, prev.weight + cur.weight, prev.count + cur.count};
      stack.pop_back();
      stack.back() = merged;
    }
  }

  PavResult out;
  out.breakpoints.reserve(ties.size());
  out.values.reserve(ties.size());
  std::size_t t = 0;
  for (const Pool& p : stack) {
    const double value = p.ones / p.weight;
    for (std::size_t k = 0; k < p.count; ++k, ++t) {
      out.breakpoints.push_back(ties[t].score);
      out.values.push_back(value);
    }
  }
  return out;
}

}  // namespace

PavMap::PavMap(std::vector<double> scores, std::vector<double> posteriors)
    : scores_(std::move(scores)), posteriors_(std::move(posteriors)) {
  if (scores_.empty() || scores_.size() != posteriors_.size()) {
    fail(ErrorCode::InvalidArgument, "PavMap needs matching non-empty breakpoints");
  }
}

double PavMap::operator()(double score) const {
  auto it = std::upper_bound(scores_.begin(), scores_.end(), score);
  if (it == scores_.begin()) return posteriors_.front();
  return posteriors_[static_cast<std::size_t>(std::distance(scores_.begin(), it)) - 1];
}

PavMap pav_calibrate(std::span<const ScoredTrial> trials) {
  PavResult r = run_pav(trials);
  return PavMap(std::move(r.breakpoints), std::move(r.values));
}

std::vector<double> pav_posteriors(std::span<const ScoredTrial> trials) {
  const PavMap map = pav_calibrate(trials);
  std::vector<double> out;
  out.reserve(trials.size());
  for (const ScoredTrial& t : trials) out.push_back(map(t.score));
  return out;
}

double cllr(std::span<const ScoredTrial> trials) {
  std::size_t n0 = 0, n1 = 0;
  check_binary(trials, n0, n1);
  // Terms are converted to bits before summing so that zero scores give
  // exactly 1 bit each.
  double s1 = 0.0, s0 = 0.0;
  for (const ScoredTrial& t : trials) {
    if (t.label == 1) {
      s1 += linalg::softplus(-t.score) / std::numbers::ln2;
    } else {
      s0 += linalg::softplus(t.score) / std::numbers::ln2;
    }
  }
  return 0.5 * (s1 / n1 + s0 / n0);
}

CllrReport cllr_decompose(std::span<const ScoredTrial> trials) {
  std::size_t n0 = 0, n1 = 0;
  check_binary(trials, n0, n1);
  const std::vector<double> post = pav_posteriors(trials);
  const double prior_log_odds = std::log(static_cast<double>(n1) / static_cast<double>(n0));
  std::vector<ScoredTrial> recal(trials.size());
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const double p = post[k];
    double llr;
    if (p <= 0.0) {
      llr = -std::numeric_limits<double>::infinity();
    } else if (p >= 1.0) {
      llr = std::numeric_limits<double>::infinity();
    } else {
      llr = std::log(p) - std::log1p(-p) - prior_log_odds;
    }
    recal[k] = {llr, trials[k].label};
  }
  CllrReport r;
  r.cllr = cllr(trials);
  r.cllr_min = cllr(recal);
  r.cllr_cal = r.cllr - r.cllr_min;
  return r;
}

double eer(std::span<const ScoredTrial> trials) {
  std::size_t n0 = 0, n1 = 0;
  check_binary(trials, n0, n1);
  const std::vector<Block> ties = tie_blocks(trials, order_by_score(trials));
  // Threshold sweeps upward; trials at or above it are accepted as label 1.
  double pmiss = 0.0, pfa = 1.0;
  for (const Block& b : ties) {
    const double next_miss = pmiss + b.ones / static_cast<double>(n1);
    const double next_fa = pfa - (b.weight - b.ones) / static_cast<double>(n0);
    if (next_miss >= next_fa) {
      const double denom = (next_miss - pmiss) - (next_fa - pfa);
      const double a = denom > 0.0 ? (pfa - pmiss) / denom : 0.0;
      return pmiss + a * (next_miss - pmiss);
    }
    pmiss = next_miss;
    pfa = next_fa;
  }
  return pmiss;  // not reached: the last ROC point is (1, 0)
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c)
      if (m(r, c) > m(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

namespace {

void check_multiclass(const Matrix& loglik, std::span<const int> labels, bool require_all) {
  if (static_cast<std::size_t>(loglik.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "log-likelihood rows and labels differ in length");
  }
  if (loglik.rows() == 0 || loglik.cols() < 2) fail(ErrorCode::InvalidSize, "need N >= 1 rows and D >= 2 columns");
  if (!loglik.allFinite()) fail(ErrorCode::InvalidArgument, "log-likelihoods must be finite");
  std::vector<int> seen(static_cast<std::size_t>(loglik.cols()), 0);
  for (int l : labels) {
    if (l < 0 || l >= loglik.cols()) fail(ErrorCode::InvalidArgument, "label out of range: " + std::to_string(l));
    seen[static_cast<std::size_t>(l)] = 1;
  }
  if (require_all) {
    for (std::size_t k = 0; k < seen.size(); ++k)
      if (!seen[k]) fail(ErrorCode::MissingClass, "class " + std::to_string(k) + " has no trials");
  }
}

double log_posterior(const Matrix& loglik, Eigen::Index row, int cls) {
  const Vector r = loglik.row(row).transpose();
  return r(cls) - linalg::log_sum_exp(r);
}

}  // namespace

double accuracy(const Matrix& loglik, std::span<const int> labels) {
  check_multiclass(loglik, labels, false);
  const std::vector<int> pred = argmax_rows(loglik);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) hits += pred[k] == labels[k];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

CmcReport c_mc(const Matrix& loglik, std::span<const int> labels) {
  check_multiclass(loglik, labels, true);
  const Eigen::Index classes = loglik.cols();
  Vector sums = Vector::Zero(classes);
  Vector counts = Vector::Zero(classes);
  for (Eigen::Index r = 0; r < loglik.rows(); ++r) {
    const int l = labels[static_cast<std::size_t>(r)];
    sums(l) += log_posterior(loglik, r, l);
    counts(l) += 1.0;
  }
  CmcReport out;
  out.cmc = -(sums.array() / counts.array()).sum() / static_cast<double>(classes);
  out.accuracy = accuracy(loglik, labels);
  return out;
}

double c_mc_trial_weighted(const Matrix& loglik, std::span<const int> labels) {
  check_multiclass(loglik, labels, false);
  double s = 0.0;
  for (Eigen::Index r = 0; r < loglik.rows(); ++r) s += log_posterior(loglik, r, labels[static_cast<std::size_t>(r)]);
  return -s / static_cast<double>(loglik.rows());
}

std::vector<ScoredTrial> pairwise_trials(const Matrix& loglik, std::span<const int> labels, int i, int j) {
  if (static_cast<std::size_t>(loglik.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "log-likelihood rows and labels differ in length");
  }
  if (i == j || i < 0 || j < 0 || i >= loglik.cols() || j >= loglik.cols()) {
    fail(ErrorCode::InvalidArgument, "pairwise_trials: bad class pair");
  }
  std::vector<ScoredTrial> out;
  for (Eigen::Index r = 0; r < loglik.rows(); ++r) {
    const int l = labels[static_cast<std::size_t>(r)];
    if (l == i || l == j) out.push_back({loglik(r, i) - loglik(r, j), l == i ? 1 : 0});
  }
  return out;
}

}  // namespace calib::metrics
