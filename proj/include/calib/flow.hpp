#pragma once

// RealNVP-style normalizing flow with affine coupling layers, the
// log-Cholesky covariance parameter of the calibrated base density, and a
// hand-written reverse pass for maximum-likelihood training.
//
// forward() maps data to the base space (x -> z) and returns the log
// Jacobian determinant of that map; inverse() is the generator z -> x.
// Public functions take one sample per row.

#include "calib/linalg.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace calib::flow {

struct FlowConfig {
  int dim = 2;
  int layers = 0;            // 0: 8 layers for dim <= 4, 12 otherwise
  int width = 0;             // 0: max(32, 4 dim)
  double scale_clamp = 5.0;  // scales pass through c tanh(s / c)
  std::uint64_t seed = 0;    // hidden-layer initialization
};

// Layout of one coupling layer inside the flat parameter vector. The
// conditioner reads rows [cond_begin, cond_begin + cond_size) and the layer
// transforms rows [act_begin, act_begin + act_size):
//   z_act = x_act * exp(s(x_cond)) + t(x_cond).
// Parameters, in order: W1 (width x cond), b1, W2 (width x width), b2,
// W3 (2 act x width), b3; matrices column-major. Output rows [0, act) of the
// last layer are the raw scales, rows [act, 2 act) the shifts.
struct CouplingLayer {
  int cond_begin = 0;
  int cond_size = 0;
  int act_begin = 0;
  int act_size = 0;
  int width = 0;
  Eigen::Index offset = 0;

  Eigen::Index param_count() const noexcept;
};

class FlowModel {
 public:
  // Random hidden weights, zero output layer: the flow starts as the identity.
  explicit FlowModel(const FlowConfig& config);
  // Rebuilds a model from stored pieces; validates every shape.
  FlowModel(int dim, double scale_clamp, std::vector<CouplingLayer> layers, Vector params, Vector shift,
            Vector scale);

  int dim() const noexcept { return dim_; }
  double scale_clamp() const noexcept { return clamp_; }
  const std::vector<CouplingLayer>& layers() const noexcept { return layers_; }
  const Vector& params() const noexcept { return params_; }
  Vector& params() noexcept { return params_; }

  // Fixed input standardization applied before the first coupling layer:
  // u = (x - shift) / scale.
  const Vector& input_shift() const noexcept { return shift_; }
  const Vector& input_scale() const noexcept { return scale_; }
  void set_standardization(const Vector& shift, const Vector& scale);

 private:
  int dim_;
  double clamp_;
  std::vector<CouplingLayer> layers_;
  Vector params_;
  Vector shift_;
  Vector scale_;
};

struct FlowOutput {
  Matrix z;       // N x d
  Vector logdet;  // N, log |det dz/dx|
};

// Throws NonFiniteActivation when any activation is NaN or infinite.
FlowOutput forward(const FlowModel& flow, const Matrix& x);
Matrix inverse(const FlowModel& flow, const Matrix& z);

// Lower-triangular L with Sigma = L L^T. theta packs the lower triangle
// column by column; diagonal entries are stored as log L_kk.
class ScaleParam {
 public:
  explicit ScaleParam(int n);  // identity
  static ScaleParam from_sigma(const Matrix& sigma);
  static ScaleParam from_theta(int n, Vector theta);

  int size() const noexcept { return n_; }
  const Vector& theta() const noexcept { return theta_; }
  Vector& theta() noexcept { return theta_; }

  Matrix lower() const;
  Matrix sigma() const;

 private:
  int n_;
  Vector theta_;
};

// Class-conditional base densities N([mu_k; 0], blockdiag(Sigma, I)) with the
// calibrated mean chain mu_k derived from Sigma.
class BaseDensity {
 public:
  BaseDensity(int classes, int dim, const ScaleParam& scale);

  int classes() const noexcept { return classes_; }
  int dim() const noexcept { return dim_; }
  const Matrix& sigma() const noexcept { return sigma_; }
  const std::vector<Vector>& ilr_means() const noexcept { return means_; }
  // Full d-dimensional mean [mu_k; 0].
  Vector mean(int cls) const;

  double log_prob(const Eigen::Ref<const Vector>& z, int cls) const;
  // N x D matrix of log f_{Z_k}(z_n) for rows of z.
  Matrix log_prob_matrix(const Matrix& z) const;

 private:
  int classes_;
  int dim_;
  Matrix sigma_;
  Eigen::LLT<Matrix> llt_;
  std::vector<Vector> means_;
  double log_norm_ = 0.0;
};

// log f_{X_k}(x) = log f_{Z_k}(g^-1(x)) + log |det|.
double class_logprob(const FlowModel& flow, const BaseDensity& base, const Eigen::Ref<const Vector>& x, int cls);
Matrix class_logprob_matrix(const FlowModel& flow, const BaseDensity& base, const Matrix& x);

struct Gradient {
  double loss = 0.0;  // mean negative log-likelihood per sample
  Vector flow;        // same layout as FlowModel::params()
  Vector theta;       // same layout as ScaleParam::theta()
};

// Mean NLL over the rows of x and its gradient with respect to every
// parameter. `classes` fixes D; labels must lie in [0, D).
Gradient nll_gradient(const FlowModel& flow, const ScaleParam& scale, int classes, const Matrix& x,
                      std::span<const int> labels);
double nll(const FlowModel& flow, const ScaleParam& scale, int classes, const Matrix& x, std::span<const int> labels);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.1;  // cosine decay down to this fraction
  double clip_norm = 10.0;
  bool learn_sigma = true;
  std::uint64_t seed = 0;  // minibatch order
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean NLL per sample, one entry per epoch
};

// Called after each epoch with (epoch, mean loss).
using EpochCallback = std::function<void(int, double)>;

// Adam on minibatches. Deterministic for fixed inputs and seed. Throws
// Diverged when a loss or gradient becomes non-finite.
TrainResult train(FlowModel& flow, ScaleParam& scale, int classes, const Matrix& x, std::span<const int> labels,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace calib::flow
