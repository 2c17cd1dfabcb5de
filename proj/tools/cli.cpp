#include "cli.hpp"

#include "svg.hpp"

#include "calib/baselines.hpp"
#include "calib/cda.hpp"
#include "calib/data.hpp"
#include "calib/error.hpp"
#include "calib/metrics.hpp"
#include "calib/serialize.hpp"
#include "calib/simplex.hpp"
#include "calib/theory.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace calib::cli {

namespace fs = std::filesystem;

namespace {

// Raised for bad flags, bad config files and unusable paths.
class UsageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotSPD:
    case ErrorCode::NotSPDResult:
    case ErrorCode::Overflow:
    case ErrorCode::NegativeMu:
    case ErrorCode::DegenerateDensity:
    case ErrorCode::DegenerateCovariance:
    case ErrorCode::NonFiniteActivation:
    case ErrorCode::Diverged:
      return kNumericError;
    case ErrorCode::InvalidK:
    case ErrorCode::AlphaOutOfRange:
    case ErrorCode::InvalidArgument:
      return kUsage;
    default:
      return kDataError;
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Rows separated by ';', entries by ','.
std::string fmt(const Matrix& m) {
  std::string s;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) s += ';';
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) s += ',';
      s += fmt(m(r, c));
    }
  }
  return s;
}

std::string fmt_row(const Vector& v) { return fmt(Matrix(v.transpose())); }

// Ordered key=value report.
class Report {
 public:
  void add(const std::string& key, const std::string& value) { lines_.push_back(key + "=" + value); }
  void add(const std::string& key, double value) { add(key, fmt(value)); }
  void add(const std::string& key, const Matrix& value) { add(key, fmt(value)); }

  void print(std::ostream& out) const {
    for (const auto& l : lines_) out << l << '\n';
  }
  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
    print(f);
  }

 private:
  std::vector<std::string> lines_;
};

std::string default_out_dir() {
  const char* env = std::getenv("CALIB_OUT_DIR");
  return env && *env ? env : ".";
}

// Creates the directory and checks that a file can be written there.
fs::path prepare_out_dir(const std::string& dir) {
  const fs::path p = dir.empty() ? fs::path(default_out_dir()) : fs::path(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw UsageFailure("output directory " + p.string() + " cannot be created");
  const fs::path probe = p / ".calib_write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw UsageFailure("output directory " + p.string() + " is not writable");
  }
  fs::remove(probe, ec);
  return p;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageFailure(std::string(what) + " " + path + " does not exist");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Whitespace or comma separated numbers, one matrix row per line; '#' starts
// a comment.
Matrix read_matrix_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> row;
    std::string tok;
    while (ss >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') fail(ErrorCode::FormatError, "bad number '" + tok + "' in " + path);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) fail(ErrorCode::FormatError, "ragged matrix in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorCode::FormatError, path + " holds no matrix");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

// Training configuration file: key=value lines, '#' comments.
struct RunConfig {
  baselines::FitOptions baseline;
  cda::CdaConfig cda;
};

void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw UsageFailure("cannot open config " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageFailure(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto where = path + ":" + std::to_string(lineno) + ": ";
    auto as_double = [&] {
      char* end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (value.empty() || *end != '\0' || !std::isfinite(v)) throw UsageFailure(where + "bad number for " + key);
      return v;
    };
    auto as_int = [&] {
      const double v = as_double();
      if (v != std::floor(v) || v < 0) throw UsageFailure(where + key + " must be a nonnegative integer");
      return static_cast<long long>(v);
    };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw UsageFailure(where + key + " must be true or false");
    };
    auto& t = cfg.cda.train;
    auto& f = cfg.cda.flow;
    if (key == "epochs") t.epochs = static_cast<int>(as_int());
    else if (key == "batch_size") t.batch_size = static_cast<int>(as_int());
    else if (key == "learning_rate") t.learning_rate = as_double();
    else if (key == "final_lr_fraction") t.final_lr_fraction = as_double();
    else if (key == "clip_norm") t.clip_norm = as_double();
    else if (key == "learn_sigma") t.learn_sigma = as_bool();
    else if (key == "layers") f.layers = static_cast<int>(as_int());
    else if (key == "width") f.width = static_cast<int>(as_int());
    else if (key == "scale_clamp") f.scale_clamp = as_double();
    else if (key == "seed") t.seed = f.seed = static_cast<std::uint64_t>(as_int());
    else if (key == "init_sigma_from_lda") cfg.cda.init_sigma_from_lda = as_bool();
    else if (key == "min_initial_variance") cfg.cda.min_initial_variance = as_double();
    else if (key == "empirical_priors") cfg.baseline.empirical_priors = as_bool();
    else throw UsageFailure(where + "unknown key '" + key + "'");
  }
}

// A checkpoint of any classifier kind.
struct LoadedModel {
  io::ModelKind kind;
  std::optional<baselines::LdaModel> lda;
  std::optional<baselines::QdaModel> qda;
  std::optional<cda::CdaModel> cda;

  int classes() const {
    if (lda) return static_cast<int>(lda->means.size());
    if (qda) return static_cast<int>(qda->means.size());
    return cda->classes();
  }
  int dim() const {
    if (lda) return static_cast<int>(lda->covariance.rows());
    if (qda) return static_cast<int>(qda->covariances.front().rows());
    return cda->dim();
  }
  // N x D class log-likelihoods; row differences are pairwise LLRs.
  Matrix loglik(const Matrix& x) const {
    if (x.cols() != dim()) {
      fail(ErrorCode::DimensionMismatch,
           "data has " + std::to_string(x.cols()) + " features, model expects " + std::to_string(dim()));
    }
    if (lda) return baselines::loglik_matrix(*lda, x);
    if (qda) return baselines::loglik_matrix(*qda, x);
    return cda::score_matrix(*cda, x);
  }
};

LoadedModel load_model(const std::string& path) {
  require_file(path, "checkpoint");
  LoadedModel m{io::peek_kind(path), {}, {}, {}};
  switch (m.kind) {
    case io::ModelKind::Lda: m.lda = baselines::load_lda(path); break;
    case io::ModelKind::Qda: m.qda = baselines::load_qda(path); break;
    case io::ModelKind::Cda: m.cda = cda::load(path); break;
    default: fail(ErrorCode::FormatError, path + " is not a classifier checkpoint");
  }
  return m;
}

data::Dataset load_data(const std::string& path) {
  require_file(path, "data file");
  return data::read_csv(path);
}

void check_labels(std::span<const int> labels, int classes) {
  for (int l : labels)
    if (l < 0 || l >= classes) fail(ErrorCode::MissingClass, "label " + std::to_string(l) + " outside model classes");
}

std::optional<simplex::Composition> parse_prior(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream ss(s);
  std::vector<double> parts;
  double v;
  while (ss >> v) parts.push_back(v);
  if (!ss.eof()) throw UsageFailure("malformed --prior '" + text + "'");
  try {
    return simplex::Composition(Eigen::Map<const Vector>(parts.data(), static_cast<Eigen::Index>(parts.size())));
  } catch (const Error& e) {
    throw UsageFailure(std::string("--prior: ") + e.what());
  }
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f << body;
}

// Binary P5 graymap; values clamped to [0, 1].
void write_pgm(const fs::path& path, const Vector& pixels, int rows, int cols) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (Eigen::Index k = 0; k < pixels.size(); ++k) {
    const double v = std::clamp(pixels(k), 0.0, 1.0);
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

// ---------------------------------------------------------------- commands

struct GenerateArgs {
  std::string dataset;
  int n = 12000;
  int train = 10000;
  double noise = -1.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string mnist_dir;
  int pca = 40;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const fs::path dir = prepare_out_dir(a.out);
  Report r;
  if (a.dataset == "mnist") {
    if (a.mnist_dir.empty()) throw UsageFailure("--mnist-dir is required for the mnist dataset");
    const fs::path m(a.mnist_dir);
    const fs::path files[] = {m / "train-images-idx3-ubyte", m / "train-labels-idx1-ubyte",
                              m / "t10k-images-idx3-ubyte", m / "t10k-labels-idx1-ubyte"};
    for (const auto& f : files) require_file(f.string(), "MNIST file");
    data::Dataset tr = data::mnist_load(files[0].string(), files[1].string());
    data::Dataset te = data::mnist_load(files[2].string(), files[3].string());
    tr.name = "mnist_train";
    te.name = "mnist_test";
    if (a.pca > 0) {
      const data::PcaModel pca = data::pca_fit(tr.features, a.pca);
      tr.features = data::pca_transform(pca, tr.features);
      te.features = data::pca_transform(pca, te.features);
      data::save_pca((dir / "mnist_pca.ckpt").string(), pca);
      r.add("pca", (dir / "mnist_pca.ckpt").string());
      r.add("explained_variance", pca.explained.sum());
    }
    data::write_csv((dir / "mnist_train.csv").string(), tr);
    data::write_csv((dir / "mnist_test.csv").string(), te);
    r.add("dataset", "mnist");
    r.add("train_rows", std::to_string(tr.size()));
    r.add("test_rows", std::to_string(te.size()));
    r.add("dim", std::to_string(tr.dim()));
    r.print(out);
    return kOk;
  }

  if (a.n < 2) throw UsageFailure("--n must be at least 2");
  if (a.train <= 0 || a.train >= a.n) throw UsageFailure("--train must lie strictly between 0 and --n");
  data::Dataset ds;
  double noise = a.noise;
  if (a.dataset == "moons") {
    if (noise < 0) noise = 0.2;
    ds = data::gen_moons(a.n, noise, a.seed);
  } else if (a.dataset == "circles") {
    if (noise < 0) noise = 0.1;
    ds = data::gen_circles(a.n, noise, a.seed);
  } else if (a.dataset == "gaussians") {
    ds = data::gen_gaussians(a.n, a.seed);
  } else if (a.dataset == "gaussians3") {
    ds = data::gen_gaussians3(a.n, a.seed);
  } else {
    throw UsageFailure("unknown dataset '" + a.dataset + "'");
  }
  auto [tr, te] = data::split(ds, a.train);
  data::write_csv((dir / (a.dataset + ".csv")).string(), ds);
  data::write_csv((dir / (a.dataset + "_train.csv")).string(), tr);
  data::write_csv((dir / (a.dataset + "_test.csv")).string(), te);
  r.add("dataset", a.dataset);
  r.add("rows", std::to_string(ds.size()));
  r.add("train_rows", std::to_string(tr.size()));
  r.add("test_rows", std::to_string(te.size()));
  r.add("dim", std::to_string(ds.dim()));
  r.add("seed", std::to_string(a.seed));
  if (noise >= 0) r.add("noise", noise);
  r.print(out);
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string model;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  if (!a.config.empty()) apply_config_file(a.config, cfg);
  if (a.seed) cfg.cda.train.seed = cfg.cda.flow.seed = *a.seed;
  if (a.model != "lda" && a.model != "qda" && a.model != "cda") throw UsageFailure("unknown model '" + a.model + "'");
  require_file(a.data, "data file");
  const fs::path dir = prepare_out_dir(a.out);

  const data::Dataset ds = data::read_csv(a.data);
  const fs::path ckpt = dir / (a.model + ".ckpt");
  Report r;
  r.add("model", a.model);
  r.add("data", a.data);
  r.add("n", std::to_string(ds.size()));
  r.add("dim", std::to_string(ds.dim()));
  if (a.model == "lda") {
    const auto m = baselines::lda_fit(ds.features, ds.labels, cfg.baseline);
    baselines::save_lda(ckpt.string(), m);
    r.add("classes", std::to_string(m.means.size()));
    r.add("train_accuracy", metrics::accuracy(baselines::loglik_matrix(m, ds.features), ds.labels));
  } else if (a.model == "qda") {
    const auto m = baselines::qda_fit(ds.features, ds.labels, cfg.baseline);
    baselines::save_qda(ckpt.string(), m);
    r.add("classes", std::to_string(m.means.size()));
    r.add("train_accuracy", metrics::accuracy(baselines::loglik_matrix(m, ds.features), ds.labels));
  } else {
    flow::EpochCallback progress;
    if (a.verbose) progress = [&err](int epoch, double loss) { err << "epoch=" << epoch << " loss=" << fmt(loss) << '\n'; };
    const cda::FitResult fit = cda::cda_fit(ds.features, ds.labels, cfg.cda, progress);
    cda::save(ckpt.string(), fit.model);
    std::string trace = "epoch,loss\n";
    for (std::size_t e = 0; e < fit.loss_trace.size(); ++e) trace += std::to_string(e + 1) + "," + fmt(fit.loss_trace[e]) + "\n";
    write_text(dir / "cda_loss.csv", trace);
    r.add("classes", std::to_string(fit.model.classes()));
    r.add("epochs", std::to_string(fit.loss_trace.size()));
    if (!fit.loss_trace.empty()) {
      const double first = fit.loss_trace.front(), last = fit.loss_trace.back();
      r.add("loss_first", first);
      r.add("loss_last", last);
      r.add("loss_decrease", first != 0.0 ? (first - last) / std::abs(first) : 0.0);
    }
    r.add("initial_sigma", fit.initial_sigma);
    r.add("sigma", fit.model.base().sigma());
    r.add("divergences", fit.divergences);
    r.add("loss_trace", (dir / "cda_loss.csv").string());
  }
  r.add("checkpoint", ckpt.string());
  r.save((dir / (a.model + "_report.txt")).string());
  r.print(out);
  return kOk;
}

void metrics_report(Report& r, const Matrix& ll, std::span<const int> labels,
                    const std::optional<simplex::Composition>& prior) {
  const int classes = static_cast<int>(ll.cols());
  check_labels(labels, classes);
  r.add("n", std::to_string(labels.size()));
  r.add("classes", std::to_string(classes));
  if (classes == 2) {
    const auto trials = metrics::pairwise_trials(ll, labels, 1, 0);
    const auto c = metrics::cllr_decompose(trials);
    r.add("cllr", c.cllr);
    r.add("cllr_min", c.cllr_min);
    r.add("cllr_cal", c.cllr_cal);
    r.add("eer", metrics::eer(trials));
  }
  const auto mc = metrics::c_mc(ll, labels);
  r.add("cmc", mc.cmc);
  r.add("cmc_trial_weighted", metrics::c_mc_trial_weighted(ll, labels));
  r.add("accuracy", mc.accuracy);
  if (classes > 2) {
    for (int i = 0; i < classes; ++i)
      for (int j = i + 1; j < classes; ++j) {
        const auto trials = metrics::pairwise_trials(ll, labels, i, j);
        const std::string tag = std::to_string(i) + "_" + std::to_string(j);
        r.add("cllr_" + tag, metrics::cllr(trials));
        r.add("eer_" + tag, metrics::eer(trials));
      }
  }
  if (prior) {
    if (prior->size() != classes) throw UsageFailure("--prior must have one part per class");
    const Matrix post = ll.rowwise() + prior->log_parts().transpose();
    r.add("accuracy_prior", metrics::accuracy(post, labels));
  }
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string scores;
  std::string prior;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto prior = parse_prior(a.prior);
  Report r;
  if (!a.scores.empty()) {
    if (!a.checkpoint.empty() || !a.data.empty()) throw UsageFailure("--scores excludes --checkpoint and --data");
    require_file(a.scores, "score file");
    const data::ScoreFile sf = data::read_scores(a.scores);
    Matrix ll = sf.scores;
    if (ll.cols() == 1) {
      // A single LLR column supports class 1 when positive.
      Matrix two(ll.rows(), 2);
      two.col(0).setZero();
      two.col(1) = ll.col(0);
      ll = two;
    }
    r.add("source", a.scores);
    metrics_report(r, ll, sf.labels, prior);
  } else {
    if (a.checkpoint.empty() || a.data.empty()) throw UsageFailure("eval needs --checkpoint and --data, or --scores");
    const LoadedModel m = load_model(a.checkpoint);
    const data::Dataset ds = load_data(a.data);
    r.add("model", io::to_string(m.kind));
    metrics_report(r, m.loglik(ds.features), ds.labels, prior);
    if (m.cda) {
      r.add("sigma", m.cda->base().sigma());
      r.add("divergences", cda::divergence_matrix(*m.cda));
    }
  }
  if (!a.out.empty()) r.save((prepare_out_dir(a.out) / "eval.txt").string());
  r.print(out);
  return kOk;
}

struct ScoreArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  bool llr = false;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const LoadedModel m = load_model(a.checkpoint);
  const data::Dataset ds = load_data(a.data);
  const fs::path dir = prepare_out_dir(a.out);
  Matrix ll = m.loglik(ds.features);
  if (a.llr) {
    if (ll.cols() != 2) fail(ErrorCode::NotBinary, "--llr needs a two-class model");
    ll = (ll.col(1) - ll.col(0)).eval();
  }
  const fs::path path = dir / "scores.csv";
  data::write_scores(path.string(), ds.labels, ll);
  Report r;
  r.add("scores", path.string());
  r.add("n", std::to_string(ll.rows()));
  r.add("columns", std::to_string(ll.cols()));
  r.print(out);
  return kOk;
}

struct TheoryArgs {
  int parts = 0;
  std::string sigma;
  std::string divergences;
};

int cmd_theory(const TheoryArgs& a, std::ostream& out) {
  if (!a.sigma.empty() && !a.divergences.empty()) throw UsageFailure("--sigma and --divergences are exclusive");
  Matrix sigma;
  std::optional<double> residual;
  if (!a.sigma.empty()) {
    require_file(a.sigma, "sigma file");
    sigma = read_matrix_text(a.sigma);
    if (sigma.rows() != sigma.cols()) fail(ErrorCode::FormatError, "sigma must be square");
    if (!linalg::is_spd(sigma)) fail(ErrorCode::NotSPD, "sigma in " + a.sigma + " is not symmetric positive definite");
  } else if (!a.divergences.empty()) {
    require_file(a.divergences, "divergence file");
    const auto sol = theory::sigma_from_divergences(read_matrix_text(a.divergences));
    sigma = sol.sigma;
    residual = sol.residual;
  } else {
    if (a.parts < 2) throw UsageFailure("theory needs --D >= 2, --sigma or --divergences");
    sigma = Matrix::Identity(a.parts - 1, a.parts - 1);
  }
  const int parts = static_cast<int>(sigma.rows()) + 1;
  if (a.parts != 0 && a.parts != parts) {
    throw UsageFailure("--D " + std::to_string(a.parts) + " disagrees with a " + std::to_string(parts - 1) +
                       "x" + std::to_string(parts - 1) + " sigma");
  }
  const theory::CalibratedFamily fam(sigma);
  const Matrix delta = theory::divergence_matrix(fam);
  Report r;
  r.add("D", std::to_string(parts));
  r.add("sigma", sigma);
  if (residual) r.add("sigma_residual", *residual);
  r.add("A", theory::matrix_A(parts));
  r.add("B", theory::matrix_B(parts));
  r.add("M", theory::divergence_map(parts));
  for (int k = 0; k < parts; ++k) r.add("mu_" + std::to_string(k), fmt_row(fam.means()[k]));
  r.add("divergences", delta);
  for (int i = 0; i < parts; ++i)
    for (int j = i + 1; j < parts; ++j)
      r.add("eer_" + std::to_string(i) + "_" + std::to_string(j), theory::eer_from_mu(delta(i, j)));
  r.add("quadratic_forms", fmt_row(fam.quadratic_forms()));
  r.print(out);
  return kOk;
}

struct InterpolateArgs {
  std::string checkpoint;
  int i = 0;
  int j = 1;
  int steps = 11;
  std::string pca;
  std::string out;
};

int cmd_interpolate(const InterpolateArgs& a, std::ostream& out) {
  if (a.steps < 2) throw UsageFailure("--steps must be at least 2");
  const LoadedModel m = load_model(a.checkpoint);
  if (!m.cda) throw UsageFailure("interpolate needs a cda checkpoint");
  const int classes = m.cda->classes();
  if (a.i < 0 || a.i >= classes || a.j < 0 || a.j >= classes) throw UsageFailure("class index out of range");
  std::optional<data::PcaModel> pca;
  if (!a.pca.empty()) {
    require_file(a.pca, "PCA checkpoint");
    pca = data::load_pca(a.pca);
    if (pca->components.cols() != m.cda->dim()) fail(ErrorCode::DimensionMismatch, "PCA and model dimensions differ");
  }
  const fs::path dir = prepare_out_dir(a.out);
  const std::string stem = "interp_" + std::to_string(a.i) + "_" + std::to_string(a.j);

  Matrix rows(a.steps, pca ? pca->mean.size() : m.cda->dim());
  for (int k = 0; k < a.steps; ++k) {
    const double alpha = double(k) / double(a.steps - 1);
    Vector x = cda::interpolate(*m.cda, a.i, a.j, alpha);
    if (pca) x = data::pca_inverse(*pca, x.transpose()).row(0).transpose();
    rows.row(k) = x.transpose();
  }
  std::string text = "alpha";
  for (Eigen::Index c = 0; c < rows.cols(); ++c) text += ",f" + std::to_string(c + 1);
  text += '\n';
  for (int k = 0; k < a.steps; ++k) {
    text += fmt(double(k) / double(a.steps - 1));
    for (Eigen::Index c = 0; c < rows.cols(); ++c) text += "," + fmt(rows(k, c));
    text += '\n';
  }
  write_text(dir / (stem + ".csv"), text);

  Report r;
  r.add("steps", std::to_string(a.steps));
  r.add("vectors", (dir / (stem + ".csv")).string());
  if (rows.cols() == 784) {
    for (int k = 0; k < a.steps; ++k) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%02d.pgm", stem.c_str(), k);
      write_pgm(dir / name, rows.row(k).transpose(), 28, 28);
    }
    r.add("images", std::to_string(a.steps));
  }
  r.print(out);
  return kOk;
}

struct PlotArgs {
  std::string kind;
  std::string checkpoint;
  std::string data;
  std::string out;
  int bins = 50;
  int lines = 11;
};

struct Bounds {
  double xmin, xmax, ymin, ymax;
};

Bounds bounds_of(const Matrix& pts) {
  Bounds b{pts.col(0).minCoeff(), pts.col(0).maxCoeff(), pts.col(1).minCoeff(), pts.col(1).maxCoeff()};
  const double px = 0.05 * (b.xmax - b.xmin), py = 0.05 * (b.ymax - b.ymin);
  return {b.xmin - px, b.xmax + px, b.ymin - py, b.ymax + py};
}

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (a.kind != "scatter" && a.kind != "hist" && a.kind != "grid") throw UsageFailure("unknown plot kind '" + a.kind + "'");
  if (a.bins < 1 || a.lines < 2) throw UsageFailure("--bins must be positive and --lines at least 2");
  const LoadedModel m = load_model(a.checkpoint);
  const data::Dataset ds = load_data(a.data);
  const fs::path dir = prepare_out_dir(a.out);
  const Matrix ll = m.loglik(ds.features);
  check_labels(ds.labels, m.classes());
  Report r;

  if (a.kind == "scatter") {
    if (ds.dim() != 2) throw UsageFailure("scatter needs 2-D features");
    const auto pred = metrics::argmax_rows(ll);
    std::string csv = "x,y,label,predicted\n";
    const Bounds b = bounds_of(ds.features);
    svg::Canvas canvas(b.xmin, b.xmax, b.ymin, b.ymax);
    canvas.title("maximum likelihood classification");
    for (Eigen::Index n = 0; n < ds.size(); ++n) {
      csv += fmt(ds.features(n, 0)) + "," + fmt(ds.features(n, 1)) + "," + std::to_string(ds.labels[n]) + "," +
             std::to_string(pred[n]) + "\n";
      canvas.dot({ds.features(n, 0), ds.features(n, 1)}, pred[n]);
    }
    write_text(dir / "scatter.csv", csv);
    canvas.save((dir / "scatter.svg").string());
    r.add("files", (dir / "scatter.csv").string() + "," + (dir / "scatter.svg").string());
  } else if (a.kind == "hist") {
    const int classes = m.classes();
    for (int i = 0; i < classes; ++i)
      for (int j = i + 1; j < classes; ++j) {
        const auto trials = metrics::pairwise_trials(ll, ds.labels, i, j);
        if (trials.empty()) continue;
        double lo = trials.front().score, hi = lo;
        for (const auto& t : trials) lo = std::min(lo, t.score), hi = std::max(hi, t.score);
        if (!(hi > lo)) hi = lo + 1.0;
        const double w = (hi - lo) / a.bins;
        std::vector<double> c1(a.bins, 0.0), c0(a.bins, 0.0);
        for (const auto& t : trials) {
          const int k = std::min(a.bins - 1, static_cast<int>((t.score - lo) / w));
          (t.label == 1 ? c1 : c0)[k] += 1.0;
        }
        const std::string tag = std::to_string(i) + "_" + std::to_string(j);
        std::string csv = "bin_center,count_class_" + std::to_string(i) + ",count_class_" + std::to_string(j) + "\n";
        double peak = 1.0;
        for (int k = 0; k < a.bins; ++k) {
          csv += fmt(lo + (k + 0.5) * w) + "," + fmt(c1[k]) + "," + fmt(c0[k]) + "\n";
          peak = std::max({peak, c1[k], c0[k]});
        }
        svg::Canvas canvas(lo, hi, 0.0, peak * 1.05);
        canvas.title("LLR class " + std::to_string(i) + " vs " + std::to_string(j));
        for (int k = 0; k < a.bins; ++k) {
          canvas.bar(lo + k * w, lo + (k + 1) * w, c1[k], i);
          canvas.bar(lo + k * w, lo + (k + 1) * w, c0[k], j);
        }
        write_text(dir / ("hist_" + tag + ".csv"), csv);
        canvas.save((dir / ("hist_" + tag + ".svg")).string());
      }
    r.add("pairs", std::to_string(classes * (classes - 1) / 2));
  } else {
    if (!m.cda) throw UsageFailure("grid needs a cda checkpoint");
    if (ds.dim() != 2) throw UsageFailure("grid needs 2-D features");
    const Matrix z = cda::to_base(*m.cda, ds.features);
    const Bounds zb = bounds_of(z);
    constexpr int kSamples = 100;
    std::string csv = "line,t,x,y\n";
    std::vector<std::vector<svg::Point>> polylines;
    int line = 0;
    for (int axis = 0; axis < 2; ++axis)
      for (int l = 0; l < a.lines; ++l, ++line) {
        const double u = double(l) / (a.lines - 1);
        Matrix grid(kSamples, 2);
        for (int s = 0; s < kSamples; ++s) {
          const double t = double(s) / (kSamples - 1);
          const double gx = zb.xmin + (axis == 0 ? u : t) * (zb.xmax - zb.xmin);
          const double gy = zb.ymin + (axis == 0 ? t : u) * (zb.ymax - zb.ymin);
          grid.row(s) << gx, gy;
        }
        const Matrix x = flow::inverse(m.cda->flow(), grid);
        std::vector<svg::Point> pts;
        for (int s = 0; s < kSamples; ++s) {
          csv += std::to_string(line) + "," + fmt(double(s) / (kSamples - 1)) + "," + fmt(x(s, 0)) + "," + fmt(x(s, 1)) + "\n";
          pts.push_back({x(s, 0), x(s, 1)});
        }
        polylines.push_back(std::move(pts));
      }
    const Bounds b = bounds_of(ds.features);
    svg::Canvas canvas(b.xmin, b.xmax, b.ymin, b.ymax);
    canvas.title("base-space grid mapped to feature space");
    for (Eigen::Index n = 0; n < ds.size(); ++n) canvas.dot({ds.features(n, 0), ds.features(n, 1)}, ds.labels[n], 1.0);
    for (const auto& p : polylines) canvas.polyline(p, 7, 0.8);
    write_text(dir / "grid.csv", csv);
    canvas.save((dir / "grid.svg").string());
    r.add("lines", std::to_string(line));
  }
  r.add("kind", a.kind);
  r.print(out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibrated likelihoods on the probability simplex", "calib"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a dataset as CSV (full, train and test splits)");
  g->add_option("--dataset", gen.dataset, "moons, circles, gaussians, gaussians3 or mnist")->required();
  g->add_option("--n", gen.n, "Total sample count")->capture_default_str();
  g->add_option("--train", gen.train, "Rows in the training split")->capture_default_str();
  g->add_option("--noise", gen.noise, "Noise level (moons 0.2, circles 0.1 when omitted)");
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory (default $CALIB_OUT_DIR or .)");
  g->add_option("--mnist-dir", gen.mnist_dir, "Directory with the four MNIST IDX files");
  g->add_option("--pca", gen.pca, "PCA components for mnist, 0 keeps raw pixels")->capture_default_str();

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Fit a model and write a checkpoint and report");
  t->add_option("--data", tr.data, "Training CSV")->required();
  t->add_option("--model", tr.model, "lda, qda or cda")->required();
  t->add_option("--config", tr.config, "key=value training configuration");
  auto* seed_opt = t->add_option("--seed", train_seed, "Seed for initialization and minibatch order");
  t->add_option("--out", tr.out, "Output directory (default $CALIB_OUT_DIR or .)");
  t->add_flag("--verbose", tr.verbose, "Print the loss after every epoch");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Compute calibration metrics");
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
  e->add_option("--data", ev.data, "Evaluation CSV");
  e->add_option("--scores", ev.scores, "Score file instead of a model");
  e->add_option("--prior", ev.prior, "Comma separated class prior for Bayes decisions");
  e->add_option("--out", ev.out, "Directory for eval.txt");

  ScoreArgs sc;
  auto* s = app.add_subcommand("score", "Write per-class log-likelihoods");
  s->add_option("--checkpoint", sc.checkpoint, "Model checkpoint")->required();
  s->add_option("--data", sc.data, "Input CSV")->required();
  s->add_option("--out", sc.out, "Output directory (default $CALIB_OUT_DIR or .)");
  s->add_flag("--llr", sc.llr, "Write one LLR column (class 1 over class 0)");

  TheoryArgs th;
  auto* h = app.add_subcommand("theory", "Print the calibrated-family constructions for a Sigma");
  h->add_option("--D", th.parts, "Number of classes (Sigma = I when no file is given)");
  h->add_option("--sigma", th.sigma, "Text file holding Sigma");
  h->add_option("--divergences", th.divergences, "Text file holding a divergence matrix");

  InterpolateArgs ip;
  auto* i = app.add_subcommand("interpolate", "Decode points between two class means");
  i->add_option("--checkpoint", ip.checkpoint, "CDA checkpoint")->required();
  i->add_option("--i", ip.i, "Class at alpha = 1")->capture_default_str();
  i->add_option("--j", ip.j, "Class at alpha = 0")->capture_default_str();
  i->add_option("--steps", ip.steps, "Number of alpha values")->capture_default_str();
  i->add_option("--pca", ip.pca, "PCA checkpoint used to map back to pixels");
  i->add_option("--out", ip.out, "Output directory (default $CALIB_OUT_DIR or .)");

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "Emit plot data as CSV and SVG");
  p->add_option("--kind", pl.kind, "scatter, hist or grid")->required();
  p->add_option("--checkpoint", pl.checkpoint, "Model checkpoint")->required();
  p->add_option("--data", pl.data, "Input CSV")->required();
  p->add_option("--out", pl.out, "Output directory (default $CALIB_OUT_DIR or .)");
  p->add_option("--bins", pl.bins, "Histogram bins")->capture_default_str();
  p->add_option("--lines", pl.lines, "Grid lines per axis")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*t) {
      if (*seed_opt) tr.seed = train_seed;
      return cmd_train(tr, out, err);
    }
    if (*e) return cmd_eval(ev, out);
    if (*s) return cmd_score(sc, out);
    if (*h) return cmd_theory(th, out);
    if (*i) return cmd_interpolate(ip, out);
    if (*p) return cmd_plot(pl, out);
  } catch (const UsageFailure& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_code(ex.code());
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace calib::cli
