#include "calib/flow.hpp"

#include "calib/error.hpp"
#include "calib/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

namespace calib::flow {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

using ConstMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Vector>;
using MutMap = Eigen::Map<Matrix>;
using MutVecMap = Eigen::Map<Vector>;

template <class M, class V, class Ptr>
struct NetView {
  M w1, w2, w3;
  V b1, b2, b3;

  NetView(const CouplingLayer& l, Ptr base)
      : w1(base + l.offset, l.width, l.cond_size),
        w2(base + l.offset + l.width * (l.cond_size + 1), l.width, l.width),
        w3(base + l.offset + l.width * (l.cond_size + l.width + 2), 2 * l.act_size, l.width),
        b1(base + l.offset + l.width * l.cond_size, l.width),
        b2(base + l.offset + l.width * (l.cond_size + l.width + 1), l.width),
        b3(base + l.offset + l.width * (l.cond_size + l.width + 2) + 2 * l.act_size * l.width, 2 * l.act_size) {}
};

using ConstNet = NetView<ConstMap, ConstVecMap, const double*>;
using MutNet = NetView<MutMap, MutVecMap, double*>;

struct LayerCache {
  Matrix input;   // layer input, d x N
  Matrix h1, h2;  // hidden activations
  Matrix tanh_s;  // tanh(raw / c), act x N
};

void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) fail(ErrorCode::NonFiniteActivation, std::string("non-finite values in ") + where);
}

// x: d x N in data space, returns d x N in base space.
Matrix forward_cols(const FlowModel& flow, const Matrix& x, Vector& logdet, std::vector<LayerCache>* tape) {
  const double c = flow.scale_clamp();
  Matrix h = (x.colwise() - flow.input_shift()).array().colwise() / flow.input_scale().array();
  logdet = Vector::Constant(x.cols(), -flow.input_scale().array().log().sum());
  if (tape) tape->clear();
  for (const CouplingLayer& l : flow.layers()) {
    const ConstNet n(l, flow.params().data());
    const auto xa = h.middleRows(l.cond_begin, l.cond_size);
    Matrix h1 = ((n.w1 * xa).colwise() + n.b1).array().tanh();
    Matrix h2 = ((n.w2 * h1).colwise() + n.b2).array().tanh();
    const Matrix o = (n.w3 * h2).colwise() + n.b3;
    Matrix ts = (o.topRows(l.act_size) / c).array().tanh();
    if (tape) tape->push_back({h, std::move(h1), std::move(h2), ts});
    const Matrix s = c * ts;
    h.middleRows(l.act_begin, l.act_size).array() =
        h.middleRows(l.act_begin, l.act_size).array() * s.array().exp() + o.bottomRows(l.act_size).array();
    logdet += s.colwise().sum().transpose();
  }
  require_finite(h, "flow forward pass");
  return h;
}

Matrix inverse_cols(const FlowModel& flow, Matrix z) {
  const double c = flow.scale_clamp();
  for (auto it = flow.layers().rbegin(); it != flow.layers().rend(); ++it) {
    const CouplingLayer& l = *it;
    const ConstNet n(l, flow.params().data());
    const auto xa = z.middleRows(l.cond_begin, l.cond_size);
    const Matrix h1 = ((n.w1 * xa).colwise() + n.b1).array().tanh();
    const Matrix h2 = ((n.w2 * h1).colwise() + n.b2).array().tanh();
    const Matrix o = (n.w3 * h2).colwise() + n.b3;
    const Matrix s = c * (o.topRows(l.act_size) / c).array().tanh();
    z.middleRows(l.act_begin, l.act_size).array() =
        (z.middleRows(l.act_begin, l.act_size) - o.bottomRows(l.act_size)).array() * (-s.array()).exp();
  }
  Matrix x = (z.array().colwise() * flow.input_scale().array()).matrix().colwise() + flow.input_shift();
  require_finite(x, "flow inverse pass");
  return x;
}

// gz: gradient with respect to the base-space output (d x N); gld: gradient
// with respect to every sample's log-determinant. Accumulates into grad.
void backward(const FlowModel& flow, const std::vector<LayerCache>& tape, Matrix gz, double gld, Vector& grad) {
  const double c = flow.scale_clamp();
  for (std::size_t k = flow.layers().size(); k-- > 0;) {
    const CouplingLayer& l = flow.layers()[k];
    const LayerCache& cache = tape[k];
    const ConstNet n(l, flow.params().data());
    MutNet g(l, grad.data());
    const Matrix ts2 = cache.tanh_s.array().square();
    const Matrix es = (c * cache.tanh_s).array().exp();
    const Matrix gzb = gz.middleRows(l.act_begin, l.act_size);
    const auto xb = cache.input.middleRows(l.act_begin, l.act_size);
    const auto xa = cache.input.middleRows(l.cond_begin, l.cond_size);

    Matrix go(2 * l.act_size, gz.cols());
    go.topRows(l.act_size) = ((gzb.array() * xb.array() * es.array() + gld) * (1.0 - ts2.array())).matrix();
    go.bottomRows(l.act_size) = gzb;
    gz.middleRows(l.act_begin, l.act_size) = gzb.cwiseProduct(es);

    g.w3.noalias() += go * cache.h2.transpose();
    g.b3 += go.rowwise().sum();
    const Matrix ga2 = ((n.w3.transpose() * go).array() * (1.0 - cache.h2.array().square())).matrix();
    g.w2.noalias() += ga2 * cache.h1.transpose();
    g.b2 += ga2.rowwise().sum();
    const Matrix ga1 = ((n.w2.transpose() * ga2).array() * (1.0 - cache.h1.array().square())).matrix();
    g.w1.noalias() += ga1 * xa.transpose();
    g.b1 += ga1.rowwise().sum();
    gz.middleRows(l.cond_begin, l.cond_size) += n.w1.transpose() * ga1;
  }
}

std::vector<CouplingLayer> default_layers(int dim, int count, int width) {
  std::vector<CouplingLayer> layers;
  const int h = dim / 2;
  Eigen::Index offset = 0;
  for (int k = 0; k < count; ++k) {
    CouplingLayer l;
    if (h == 0) {
      l.cond_begin = 0;
      l.cond_size = 0;
      l.act_begin = 0;
      l.act_size = dim;
    } else if (k % 2 == 0) {
      l.cond_begin = 0;
      l.cond_size = h;
      l.act_begin = h;
      l.act_size = dim - h;
    } else {
      l.cond_begin = h;
      l.cond_size = dim - h;
      l.act_begin = 0;
      l.act_size = h;
    }
    l.width = width;
    l.offset = offset;
    offset += l.param_count();
    layers.push_back(l);
  }
  return layers;
}

void check_labels(int classes, int dim, const Matrix& x, std::span<const int> labels) {
  if (classes < 2) fail(ErrorCode::InvalidArgument, "need at least two classes");
  if (dim < classes - 1) fail(ErrorCode::TooFewDimensions, "feature dimension must be at least D - 1");
  if (x.cols() != dim) fail(ErrorCode::DimensionMismatch, "feature dimension differs from the flow");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "features and labels differ in length");
  }
  if (x.rows() == 0) fail(ErrorCode::InvalidSize, "empty batch");
  for (int l : labels)
    if (l < 0 || l >= classes) fail(ErrorCode::InvalidArgument, "label out of range: " + std::to_string(l));
}

Eigen::Index packed_index(int n, int r, int c) {
  // Column-major lower triangle: columns 0..c-1 hold n + (n-1) + ... entries.
  return static_cast<Eigen::Index>(c) * n - static_cast<Eigen::Index>(c) * (c - 1) / 2 + (r - c);
}

}  // namespace

Eigen::Index CouplingLayer::param_count() const noexcept {
  const Eigen::Index w = width;
  return w * cond_size + w + w * w + w + 2 * act_size * w + 2 * act_size;
}

FlowModel::FlowModel(const FlowConfig& config) : dim_(config.dim), clamp_(config.scale_clamp) {
  if (dim_ < 1) fail(ErrorCode::InvalidDimension, "flow dimension must be >= 1");
  if (!(clamp_ > 0.0)) fail(ErrorCode::InvalidArgument, "scale clamp must be positive");
  const int count = config.layers > 0 ? config.layers : (dim_ <= 4 ? 8 : 12);
  const int width = config.width > 0 ? config.width : std::max(32, 4 * dim_);
  layers_ = default_layers(dim_, count, width);
  Eigen::Index total = 0;
  for (const CouplingLayer& l : layers_) total += l.param_count();
  params_ = Vector::Zero(total);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const CouplingLayer& l : layers_) {
    MutNet n(l, params_.data());
    const double s1 = l.cond_size > 0 ? 1.0 / std::sqrt(double(l.cond_size)) : 0.0;
    const double s2 = 1.0 / std::sqrt(double(l.width));
    for (Eigen::Index i = 0; i < n.w1.size(); ++i) n.w1.data()[i] = s1 * normal(rng);
    for (Eigen::Index i = 0; i < n.w2.size(); ++i) n.w2.data()[i] = s2 * normal(rng);
  }
  shift_ = Vector::Zero(dim_);
  scale_ = Vector::Ones(dim_);
}

FlowModel::FlowModel(int dim, double scale_clamp, std::vector<CouplingLayer> layers, Vector params, Vector shift,
                     Vector scale)
    : dim_(dim), clamp_(scale_clamp), layers_(std::move(layers)), params_(std::move(params)) {
  if (dim_ < 1) fail(ErrorCode::InvalidDimension, "flow dimension must be >= 1");
  if (!(clamp_ > 0.0) || !std::isfinite(clamp_)) fail(ErrorCode::FormatError, "scale clamp must be positive");
  Eigen::Index offset = 0;
  for (const CouplingLayer& l : layers_) {
    const bool ok = l.width > 0 && l.cond_size >= 0 && l.act_size > 0 && l.cond_begin >= 0 && l.act_begin >= 0 &&
                    l.cond_begin + l.cond_size <= dim_ && l.act_begin + l.act_size <= dim_ &&
                    (l.cond_size == 0 || l.cond_begin + l.cond_size <= l.act_begin ||
                     l.act_begin + l.act_size <= l.cond_begin) &&
                    l.offset == offset;
    if (!ok) fail(ErrorCode::FormatError, "invalid coupling layer descriptor");
    offset += l.param_count();
  }
  if (params_.size() != offset) fail(ErrorCode::FormatError, "parameter count does not match the architecture");
  set_standardization(shift, scale);
}

void FlowModel::set_standardization(const Vector& shift, const Vector& scale) {
  if (shift.size() != dim_ || scale.size() != dim_) fail(ErrorCode::DimensionMismatch, "standardization size");
  if (!shift.allFinite() || !scale.allFinite() || scale.minCoeff() <= 0.0) {
    fail(ErrorCode::InvalidArgument, "standardization needs finite shifts and positive scales");
  }
  shift_ = shift;
  scale_ = scale;
}

FlowOutput forward(const FlowModel& flow, const Matrix& x) {
  if (x.cols() != flow.dim()) fail(ErrorCode::DimensionMismatch, "input dimension differs from the flow");
  require_finite(x, "flow input");
  FlowOutput out;
  out.z = forward_cols(flow, x.transpose(), out.logdet, nullptr).transpose();
  return out;
}

Matrix inverse(const FlowModel& flow, const Matrix& z) {
  if (z.cols() != flow.dim()) fail(ErrorCode::DimensionMismatch, "input dimension differs from the flow");
  require_finite(z, "flow input");
  return inverse_cols(flow, z.transpose()).transpose();
}

ScaleParam::ScaleParam(int n) : n_(n), theta_(Vector::Zero(static_cast<Eigen::Index>(n) * (n + 1) / 2)) {
  if (n < 1) fail(ErrorCode::InvalidDimension, "scale parameter needs n >= 1");
}

ScaleParam ScaleParam::from_sigma(const Matrix& sigma) {
  const Eigen::LLT<Matrix> llt = linalg::checked_cholesky(sigma, "Sigma");
  const Matrix l = llt.matrixL();
  ScaleParam p(static_cast<int>(sigma.rows()));
  for (int c = 0; c < p.n_; ++c)
    for (int r = c; r < p.n_; ++r) p.theta_(packed_index(p.n_, r, c)) = r == c ? std::log(l(r, c)) : l(r, c);
  return p;
}

ScaleParam ScaleParam::from_theta(int n, Vector theta) {
  ScaleParam p(n);
  if (theta.size() != p.theta_.size()) fail(ErrorCode::DimensionMismatch, "theta has the wrong length");
  if (!theta.allFinite()) fail(ErrorCode::InvalidArgument, "theta must be finite");
  p.theta_ = std::move(theta);
  return p;
}

Matrix ScaleParam::lower() const {
  Matrix l = Matrix::Zero(n_, n_);
  for (int c = 0; c < n_; ++c)
    for (int r = c; r < n_; ++r) {
      const double t = theta_(packed_index(n_, r, c));
      l(r, c) = r == c ? std::exp(t) : t;
    }
  return l;
}

Matrix ScaleParam::sigma() const {
  const Matrix l = lower();
  return l * l.transpose();
}

BaseDensity::BaseDensity(int classes, int dim, const ScaleParam& scale)
    : classes_(classes), dim_(dim), sigma_(scale.sigma()) {
  if (classes < 2) fail(ErrorCode::InvalidArgument, "need at least two classes");
  if (scale.size() != classes - 1) fail(ErrorCode::DimensionMismatch, "Sigma must be (D-1) x (D-1)");
  if (dim < classes - 1) fail(ErrorCode::TooFewDimensions, "base dimension must be at least D - 1");
  llt_ = linalg::checked_cholesky(sigma_, "Sigma");
  means_ = theory::mean_chain(sigma_);
  log_norm_ = -0.5 * (dim * kLog2Pi + linalg::log_det_from_cholesky(llt_));
}

Vector BaseDensity::mean(int cls) const {
  if (cls < 0 || cls >= classes_) fail(ErrorCode::InvalidArgument, "class index out of range");
  Vector m = Vector::Zero(dim_);
  m.head(classes_ - 1) = means_[cls];
  return m;
}

double BaseDensity::log_prob(const Eigen::Ref<const Vector>& z, int cls) const {
  if (cls < 0 || cls >= classes_) fail(ErrorCode::InvalidArgument, "class index out of range");
  if (z.size() != dim_) fail(ErrorCode::DimensionMismatch, "base point has the wrong dimension");
  const int n = classes_ - 1;
  const Vector w = llt_.matrixL().solve(z.head(n) - means_[cls]);
  return log_norm_ - 0.5 * (w.squaredNorm() + z.tail(dim_ - n).squaredNorm());
}

Matrix BaseDensity::log_prob_matrix(const Matrix& z) const {
  if (z.cols() != dim_) fail(ErrorCode::DimensionMismatch, "base points have the wrong dimension");
  const int n = classes_ - 1;
  const Vector resid = z.rightCols(dim_ - n).rowwise().squaredNorm();
  Matrix out(z.rows(), classes_);
  for (int k = 0; k < classes_; ++k) {
    Matrix r = z.leftCols(n).transpose();
    r.colwise() -= means_[k];
    llt_.matrixL().solveInPlace(r);
    out.col(k) = (log_norm_ - 0.5 * (r.colwise().squaredNorm().transpose() + resid).array()).matrix();
  }
  return out;
}

double class_logprob(const FlowModel& flow, const BaseDensity& base, const Eigen::Ref<const Vector>& x, int cls) {
  const FlowOutput f = forward(flow, x.transpose());
  return base.log_prob(f.z.row(0).transpose(), cls) + f.logdet(0);
}

Matrix class_logprob_matrix(const FlowModel& flow, const BaseDensity& base, const Matrix& x) {
  const FlowOutput f = forward(flow, x);
  Matrix out = base.log_prob_matrix(f.z);
  out.colwise() += f.logdet;
  return out;
}

Gradient nll_gradient(const FlowModel& flow, const ScaleParam& scale, int classes, const Matrix& x,
                      std::span<const int> labels) {
  check_labels(classes, flow.dim(), x, labels);
  if (scale.size() != classes - 1) fail(ErrorCode::DimensionMismatch, "Sigma must be (D-1) x (D-1)");
  const int n = classes - 1;
  const int d = flow.dim();
  const double batch = static_cast<double>(x.rows());

  std::vector<LayerCache> tape;
  Vector logdet;
  const Matrix z = forward_cols(flow, x.transpose(), logdet, &tape);

  const Matrix l = scale.lower();
  const Matrix sigma = l * l.transpose();
  const Vector vs = linalg::vec(sigma);
  const std::vector<Matrix> maps = theory::mean_maps(classes);
  std::vector<Vector> means;
  for (const Matrix& g : maps) means.push_back(g * vs);

  Matrix r = z.topRows(n);
  for (Eigen::Index c = 0; c < r.cols(); ++c) r.col(c) -= means[labels[static_cast<std::size_t>(c)]];
  const auto tri = l.triangularView<Eigen::Lower>();
  const Matrix w = tri.solve(r);
  const Matrix pr = tri.transpose().solve(w);  // Sigma^-1 r

  const double log_det_sigma = 2.0 * l.diagonal().array().log().sum();
  const Matrix z2 = z.bottomRows(d - n);
  const double total = 0.5 * (batch * (d * kLog2Pi + log_det_sigma) + w.squaredNorm() + z2.squaredNorm()) - logdet.sum();

  Gradient g;
  g.loss = total / batch;
  g.flow = Vector::Zero(flow.params().size());
  Matrix gz(d, z.cols());
  gz.topRows(n) = pr / batch;
  gz.bottomRows(d - n) = z2 / batch;
  backward(flow, tape, std::move(gz), -1.0 / batch, g.flow);

  const Matrix linv = tri.solve(Matrix::Identity(n, n));
  const Matrix precision = linv.transpose() * linv;
  Matrix gsigma = 0.5 * precision - 0.5 * (pr * pr.transpose()) / batch;
  std::vector<Vector> sums(classes, Vector::Zero(n));
  for (Eigen::Index c = 0; c < pr.cols(); ++c) sums[labels[static_cast<std::size_t>(c)]] += pr.col(c);
  Vector gvec = Vector::Zero(static_cast<Eigen::Index>(n) * n);
  for (int k = 0; k < classes; ++k) gvec -= maps[k].transpose() * sums[k];
  gsigma += Eigen::Map<const Matrix>(gvec.data(), n, n) / batch;
  const Matrix gl = (gsigma + gsigma.transpose()) * l;
  g.theta = Vector::Zero(scale.theta().size());
  for (int c = 0; c < n; ++c)
    for (int rr = c; rr < n; ++rr) g.theta(packed_index(n, rr, c)) = rr == c ? gl(rr, c) * l(rr, c) : gl(rr, c);
  return g;
}

double nll(const FlowModel& flow, const ScaleParam& scale, int classes, const Matrix& x, std::span<const int> labels) {
  check_labels(classes, flow.dim(), x, labels);
  const BaseDensity base(classes, flow.dim(), scale);
  const Matrix ll = class_logprob_matrix(flow, base, x);
  double s = 0.0;
  for (Eigen::Index r = 0; r < ll.rows(); ++r) s -= ll(r, labels[static_cast<std::size_t>(r)]);
  return s / static_cast<double>(ll.rows());
}

TrainResult train(FlowModel& flow, ScaleParam& scale, int classes, const Matrix& x, std::span<const int> labels,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  check_labels(classes, flow.dim(), x, labels);
  if (config.epochs < 1 || config.batch_size < 1) fail(ErrorCode::InvalidArgument, "epochs and batch size must be >= 1");
  if (!(config.learning_rate > 0.0) || !(config.clip_norm > 0.0)) {
    fail(ErrorCode::InvalidArgument, "learning rate and clip norm must be positive");
  }
  const Eigen::Index np = flow.params().size();
  const Eigen::Index nt = scale.theta().size();
  Vector m1 = Vector::Zero(np + nt), m2 = Vector::Zero(np + nt), grad(np + nt);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  const Eigen::Index rows = x.rows();
  const Eigen::Index batch = std::min<Eigen::Index>(config.batch_size, rows);
  const Eigen::Index per_epoch = (rows + batch - 1) / batch;
  const double total_steps = static_cast<double>(per_epoch * config.epochs);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(config.seed);

  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < rows; start += batch) {
      const Eigen::Index len = std::min(batch, rows - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      const Matrix xb = x(idx, Eigen::all);
      std::vector<int> lb(static_cast<std::size_t>(len));
      for (Eigen::Index k = 0; k < len; ++k) lb[static_cast<std::size_t>(k)] = labels[static_cast<std::size_t>(idx[k])];

      Gradient g;
      try {
        g = nll_gradient(flow, scale, classes, xb, lb);
      } catch (const Error& e) {
        fail(ErrorCode::Diverged, "epoch " + std::to_string(epoch) + ": " + e.what());
      }
      grad.head(np) = g.flow;
      grad.tail(nt) = config.learn_sigma ? g.theta : Vector::Zero(nt);
      if (!std::isfinite(g.loss) || !grad.allFinite()) {
        fail(ErrorCode::Diverged, "non-finite loss or gradient at epoch " + std::to_string(epoch));
      }
      const double norm = grad.norm();
      if (norm > config.clip_norm) grad *= config.clip_norm / norm;

      ++step;
      const double progress = static_cast<double>(step - 1) / total_steps;
      const double lr = config.learning_rate *
                        (config.final_lr_fraction +
                         (1.0 - config.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      m1 = beta1 * m1 + (1.0 - beta1) * grad;
      m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(beta1, double(step));
      const double c2 = 1.0 - std::pow(beta2, double(step));
      const Vector update = lr * (m1 / c1).array() / ((m2 / c2).array().sqrt() + eps);
      flow.params() -= update.head(np);
      scale.theta() -= update.tail(nt);
      epoch_loss += g.loss * static_cast<double>(len);
    }
    epoch_loss /= static_cast<double>(rows);
    result.loss_trace.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

}  // namespace calib::flow
