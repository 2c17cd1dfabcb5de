#include "calib/error.hpp"
#include "calib/flow.hpp"
#include "calib/theory.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace calib;
using namespace calib::flow;

namespace {

FlowModel random_flow(int dim, int layers, int width, std::uint64_t seed, double amplitude = 0.3) {
  FlowModel f(FlowConfig{dim, layers, width, 5.0, seed});
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> nd(0.0, amplitude);
  for (Eigen::Index k = 0; k < f.params().size(); ++k) f.params()(k) += nd(rng);
  Vector shift(dim), scale(dim);
  for (int k = 0; k < dim; ++k) shift(k) = 0.1 * k, scale(k) = 1.0 + 0.2 * k;
  f.set_standardization(shift, scale);
  return f;
}

Matrix random_points(int n, int dim, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  Matrix x(n, dim);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < dim; ++c) x(r, c) = nd(rng);
  return x;
}

// log |det| of the central-difference Jacobian of the forward map at x.
double fd_logdet(const FlowModel& f, const Vector& x, double h = 1e-5) {
  const int d = static_cast<int>(x.size());
  Matrix j(d, d);
  for (int c = 0; c < d; ++c) {
    Matrix p = x.transpose(), m = x.transpose();
    p(0, c) += h;
    m(0, c) -= h;
    j.col(c) = ((forward(f, p).z - forward(f, m).z) / (2.0 * h)).transpose();
  }
  return std::log(std::abs(j.determinant()));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST(Flow, IdentityAtInitialization) {
  const FlowModel f(FlowConfig{3, 0, 0, 5.0, 1});
  EXPECT_EQ(f.layers().size(), 8u);
  EXPECT_EQ(f.layers().front().width, 32);
  EXPECT_EQ(FlowModel(FlowConfig{5}).layers().size(), 12u);
  const Matrix x = random_points(20, 3, 2);
  const FlowOutput out = forward(f, x);
  EXPECT_LT((out.z - x).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(out.logdet.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((inverse(f, x) - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Flow, ConstantScaleLayer) {
  FlowModel f(FlowConfig{4, 1, 8, 5.0, 3});
  const CouplingLayer& l = f.layers().front();
  const Eigen::Index b3 = l.offset + Eigen::Index(l.width) * l.cond_size + l.width + Eigen::Index(l.width) * l.width +
                          l.width + Eigen::Index(2) * l.act_size * l.width;
  const double s = 0.7;
  for (int k = 0; k < l.act_size; ++k) f.params()(b3 + k) = s;
  const Matrix x = random_points(10, 4, 4);
  const FlowOutput out = forward(f, x);
  const double eff = 5.0 * std::tanh(s / 5.0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) EXPECT_NEAR(out.logdet(r), l.act_size * eff, 1e-12);
  for (int k = 0; k < l.act_size; ++k)
    EXPECT_NEAR(out.z(0, l.act_begin + k), x(0, l.act_begin + k) * std::exp(eff), 1e-12);
}

TEST(Flow, LogdetMatchesFiniteDifferences) {
  for (int dim : {2, 3, 5}) {
    const FlowModel f = random_flow(dim, 4, 16, 10 + dim);
    const Matrix x = random_points(20, dim, 11);
    const FlowOutput out = forward(f, x);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      EXPECT_NEAR(out.logdet(r), fd_logdet(f, x.row(r).transpose()), 1e-4) << "dim " << dim;
  }
}

TEST(Flow, InverseRoundTrip) {
  for (int dim : {2, 7, 50}) {
    const FlowModel f = random_flow(dim, dim <= 4 ? 8 : 12, 0, 20 + dim, 0.1);
    const Matrix x = random_points(1000, dim, 21, 2.0);
    const Matrix z = forward(f, x).z;
    EXPECT_LT((inverse(f, z) - x).cwiseAbs().maxCoeff(), 1e-6) << "dim " << dim;
  }
}

TEST(Flow, NonFiniteInput) {
  const FlowModel f(FlowConfig{2});
  Matrix x = Matrix::Zero(1, 2);
  x(0, 0) = std::nan("");
  try {
    forward(f, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteActivation);
  }
}

TEST(ScaleParam, RoundTrip) {
  std::mt19937_64 rng(30);
  const Matrix sigma = oracle::random_spd(4, rng);
  const ScaleParam p = ScaleParam::from_sigma(sigma);
  EXPECT_LT((p.sigma() - sigma).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix l = p.lower();
  EXPECT_NEAR(p.theta()(0), std::log(l(0, 0)), 1e-14);
  EXPECT_NEAR(p.theta()(1), l(1, 0), 1e-14);
  EXPECT_EQ(ScaleParam::from_theta(4, p.theta()).sigma(), p.sigma());
  EXPECT_EQ(ScaleParam(3).sigma(), Matrix::Identity(3, 3));
}

TEST(Base, ModeAndFactorization) {
  std::mt19937_64 rng(31);
  const Matrix sigma = oracle::random_spd(2, rng);
  const ScaleParam sp = ScaleParam::from_sigma(sigma);
  const BaseDensity base(3, 5, sp);
  const theory::CalibratedFamily fam(sigma);
  Matrix cov = Matrix::Identity(5, 5);
  cov.topLeftCorner(2, 2) = sigma;
  for (int k = 0; k < 3; ++k) {
    const Vector m = base.mean(k);
    EXPECT_LT((m.head(2) - fam.means()[k]).norm(), 1e-12);
    EXPECT_EQ(m.tail(3), Vector::Zero(3));
    EXPECT_NEAR(base.log_prob(m, k), -2.5 * std::log(2.0 * M_PI) - 0.5 * std::log(cov.determinant()), 1e-12);
  }
  const Matrix z = random_points(30, 5, 32);
  const Matrix lp = base.log_prob_matrix(z);
  const FlowModel id(FlowConfig{5});
  const Matrix lx = class_logprob_matrix(id, base, z);
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (int k = 0; k < 3; ++k) {
      const Vector zr = z.row(r).transpose();
      const double expect = fam.log_density(k, zr.head(2)) - 0.5 * zr.tail(3).squaredNorm() - 1.5 * std::log(2.0 * M_PI);
      EXPECT_NEAR(lp(r, k), expect, 1e-10);
      EXPECT_NEAR(lx(r, k), expect, 1e-10);
      EXPECT_NEAR(class_logprob(id, base, zr, k), expect, 1e-10);
    }
}

TEST(Gradient, MatchesFiniteDifferences) {
  struct Case {
    int dim, classes, layers, width;
  };
  for (const Case c : {Case{2, 2, 2, 6}, Case{3, 3, 3, 5}, Case{4, 3, 2, 4}}) {
    FlowModel f = random_flow(c.dim, c.layers, c.width, 40 + c.dim);
    std::mt19937_64 rng(41);
    ScaleParam sp = ScaleParam::from_sigma(oracle::random_spd(c.classes - 1, rng, 0.5));
    const Matrix x = random_points(25, c.dim, 42);
    std::vector<int> labels(25);
    for (int r = 0; r < 25; ++r) labels[r] = r % c.classes;

    const Gradient g = nll_gradient(f, sp, c.classes, x, labels);
    EXPECT_NEAR(g.loss, nll(f, sp, c.classes, x, labels), 1e-12);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < f.params().size(); ++k) {
      const double keep = f.params()(k);
      f.params()(k) = keep + h;
      const double up = nll(f, sp, c.classes, x, labels);
      f.params()(k) = keep - h;
      const double dn = nll(f, sp, c.classes, x, labels);
      f.params()(k) = keep;
      ASSERT_LT(rel_err(g.flow(k), (up - dn) / (2 * h)), 1e-4) << "flow param " << k;
    }
    for (Eigen::Index k = 0; k < sp.theta().size(); ++k) {
      const double keep = sp.theta()(k);
      sp.theta()(k) = keep + h;
      const double up = nll(f, sp, c.classes, x, labels);
      sp.theta()(k) = keep - h;
      const double dn = nll(f, sp, c.classes, x, labels);
      sp.theta()(k) = keep;
      ASSERT_LT(rel_err(g.theta(k), (up - dn) / (2 * h)), 1e-4) << "theta " << k;
    }
  }
}

TEST(Train, InitialLossIsBaseNll) {
  const FlowModel f(FlowConfig{3});
  std::mt19937_64 rng(50);
  const Matrix sigma = oracle::random_spd(1, rng);
  const ScaleParam sp = ScaleParam::from_sigma(sigma);
  const Matrix x = random_points(40, 3, 51);
  std::vector<int> labels(40);
  for (int r = 0; r < 40; ++r) labels[r] = r % 2;
  const auto mu = theory::mean_chain(sigma);
  Matrix cov = Matrix::Identity(3, 3);
  cov(0, 0) = sigma(0, 0);
  double expect = 0.0;
  for (int r = 0; r < 40; ++r) {
    Vector m = Vector::Zero(3);
    m(0) = mu[labels[r]](0);
    expect -= oracle::mvn_logpdf(x.row(r).transpose(), m, cov);
  }
  EXPECT_NEAR(nll(f, sp, 2, x, labels), expect / 40.0, 1e-12);
}

TEST(Train, ReachesAnalyticOptimumOnBaseData) {
  // Data drawn from the base densities: the identity flow with the true Sigma
  // is optimal, with expected NLL equal to the Gaussian entropy.
  Matrix sigma(2, 2);
  sigma << 3.0, 0.5, 0.5, 2.0;
  const ScaleParam truth = ScaleParam::from_sigma(sigma);
  const BaseDensity base(3, 3, truth);
  const int n = 3000;
  std::mt19937_64 rng(60);
  std::normal_distribution<double> nd;
  Matrix cov = Matrix::Identity(3, 3);
  cov.topLeftCorner(2, 2) = sigma;
  const Matrix l = cov.llt().matrixL();
  Matrix x(n, 3);
  std::vector<int> labels(n);
  for (int r = 0; r < n; ++r) {
    labels[r] = r % 3;
    Vector e(3);
    for (int k = 0; k < 3; ++k) e(k) = nd(rng);
    x.row(r) = (base.mean(labels[r]) + l * e).transpose();
  }
  const double optimum = nll(FlowModel(FlowConfig{3}), truth, 3, x, labels);
  const double entropy = 0.5 * 3.0 * std::log(2.0 * M_PI * M_E) + 0.5 * std::log(cov.determinant());
  EXPECT_NEAR(optimum, entropy, 0.05);

  FlowModel f(FlowConfig{3, 2, 8, 5.0, 61});
  ScaleParam sp(2);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.learning_rate = 1e-2;
  cfg.seed = 62;
  const TrainResult tr = train(f, sp, 3, x, labels, cfg);
  ASSERT_EQ(tr.loss_trace.size(), 60u);
  EXPECT_LT(std::abs(nll(f, sp, 3, x, labels) - optimum) / optimum, 0.01);
  EXPECT_LT((sp.sigma() - sigma).norm() / sigma.norm(), 0.15);
}

TEST(Train, Deterministic) {
  const Matrix x = random_points(300, 2, 70);
  std::vector<int> labels(300);
  for (int r = 0; r < 300; ++r) labels[r] = x(r, 0) > 0 ? 1 : 0;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  auto run = [&] {
    FlowModel f(FlowConfig{2, 2, 8, 5.0, 71});
    ScaleParam sp(1);
    train(f, sp, 2, x, labels, cfg);
    return std::make_pair(f.params(), sp.theta());
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}
