#include "calib/data.hpp"

#include "calib/error.hpp"
#include "calib/serialize.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace calib::data {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

void shuffle_rows(Dataset& ds, std::mt19937_64& rng) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(ds.size()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix f(ds.features.rows(), ds.features.cols());
  std::vector<int> l(ds.labels.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    f.row(static_cast<Eigen::Index>(k)) = ds.features.row(perm[k]);
    l[k] = ds.labels[static_cast<std::size_t>(perm[k])];
  }
  ds.features = std::move(f);
  ds.labels = std::move(l);
}

void add_noise(Matrix& x, double noise, std::mt19937_64& rng) {
  if (noise == 0.0) return;
  std::normal_distribution<double> normal(0.0, noise);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) += normal(rng);
}

void check_generator(int n, double noise) {
  if (n < 2) fail(ErrorCode::InvalidSize, "generators need n >= 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) fail(ErrorCode::InvalidArgument, "noise must be >= 0");
}

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) fail(ErrorCode::TruncatedFile, path + ": header ends early");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
  return out;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& v) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  errno = 0;
  v = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno != ERANGE;
}

bool parse_label(const std::string& text, int& v) {
  double d;
  if (!parse_double(text, d) || d != std::floor(d) || d < 0 || d > 1e9) return false;
  v = static_cast<int>(d);
  return true;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int Dataset::classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

Dataset gen_moons(int n, double noise, std::uint64_t seed) {
  check_generator(n, noise);
  const int n_out = n / 2, n_in = n - n_out;
  Dataset ds;
  ds.name = "moons";
  ds.seed = seed;
  ds.features.resize(n, 2);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n_out; ++k) {
    const double t = n_out > 1 ? std::numbers::pi * k / (n_out - 1) : 0.0;
    ds.features.row(k) << std::cos(t), std::sin(t);
    ds.labels[static_cast<std::size_t>(k)] = 0;
  }
  for (int k = 0; k < n_in; ++k) {
    const double t = n_in > 1 ? std::numbers::pi * k / (n_in - 1) : 0.0;
    ds.features.row(n_out + k) << 1.0 - std::cos(t), 1.0 - std::sin(t) - 0.5;
    ds.labels[static_cast<std::size_t>(n_out + k)] = 1;
  }
  std::mt19937_64 rng(seed);
  shuffle_rows(ds, rng);
  add_noise(ds.features, noise, rng);
  return ds;
}

Dataset gen_circles(int n, double noise, std::uint64_t seed, double factor) {
  check_generator(n, noise);
  if (!(factor > 0.0 && factor < 1.0)) fail(ErrorCode::InvalidArgument, "factor must lie in (0, 1)");
  const int n_out = n / 2, n_in = n - n_out;
  Dataset ds;
  ds.name = "circles";
  ds.seed = seed;
  ds.features.resize(n, 2);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n_out; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n_out;
    ds.features.row(k) << std::cos(t), std::sin(t);
    ds.labels[static_cast<std::size_t>(k)] = 0;
  }
  for (int k = 0; k < n_in; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n_in;
    ds.features.row(n_out + k) << factor * std::cos(t), factor * std::sin(t);
    ds.labels[static_cast<std::size_t>(n_out + k)] = 1;
  }
  std::mt19937_64 rng(seed);
  shuffle_rows(ds, rng);
  add_noise(ds.features, noise, rng);
  return ds;
}

Dataset gen_gaussian_classes(const std::vector<Vector>& means, const std::vector<Matrix>& covariances,
                             int n_per_class, std::uint64_t seed) {
  if (means.empty() || means.size() != covariances.size()) {
    fail(ErrorCode::DimensionMismatch, "one covariance per mean expected");
  }
  if (n_per_class < 1) fail(ErrorCode::InvalidSize, "n_per_class must be >= 1");
  const Eigen::Index d = means.front().size();
  const int classes = static_cast<int>(means.size());
  std::vector<Matrix> factors;
  for (int k = 0; k < classes; ++k) {
    if (means[k].size() != d || covariances[k].rows() != d) fail(ErrorCode::DimensionMismatch, "inconsistent dims");
    factors.push_back(linalg::checked_cholesky(covariances[k], "class covariance").matrixL());
  }
  Dataset ds;
  ds.name = "gaussian_classes";
  ds.seed = seed;
  ds.features.resize(static_cast<Eigen::Index>(classes) * n_per_class, d);
  ds.labels.resize(static_cast<std::size_t>(classes) * n_per_class);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(d);
  Eigen::Index row = 0;
  for (int k = 0; k < classes; ++k)
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (Eigen::Index c = 0; c < d; ++c) e(c) = normal(rng);
      ds.features.row(row) = (means[k] + factors[k] * e).transpose();
      ds.labels[static_cast<std::size_t>(row)] = k;
    }
  shuffle_rows(ds, rng);
  return ds;
}

Dataset gen_gaussians(int n, std::uint64_t seed) {
  if (n < 2) fail(ErrorCode::InvalidSize, "generators need n >= 2");
  Vector m0(2), m1(2);
  m0 << -1.0, 0.0;
  m1 << 1.0, 1.0;
  Matrix c0(2, 2), c1(2, 2);
  c0 << 1.0, 0.6, 0.6, 1.0;
  c1 << 0.6, -0.2, -0.2, 1.2;
  Dataset ds = gen_gaussian_classes({m0, m1}, {c0, c1}, n / 2, seed);
  if (n % 2) {
    // Odd n: one extra class-1 draw from an independent stream.
    Dataset extra = gen_gaussian_classes({m1}, {c1}, 1, seed ^ 0x9e3779b97f4a7c15ull);
    ds.features.conservativeResize(n, 2);
    ds.features.row(n - 1) = extra.features.row(0);
    ds.labels.push_back(1);
  }
  ds.name = "gaussians";
  return ds;
}

Dataset gen_gaussians3(int n, std::uint64_t seed) {
  if (n < 3) fail(ErrorCode::InvalidSize, "gen_gaussians3 needs n >= 3");
  Vector m0(4), m1(4), m2(4);
  m0 << 2.0, 0.0, 0.5, 0.0;
  m1 << -1.0, 1.8, 0.0, -0.5;
  m2 << -1.0, -1.8, -0.5, 0.5;
  Matrix c0 = Matrix::Identity(4, 4), c1 = Matrix::Identity(4, 4), c2 = Matrix::Identity(4, 4);
  c0(0, 1) = c0(1, 0) = 0.3;
  c1.diagonal() << 1.3, 0.8, 1.0, 1.2;
  c2(2, 3) = c2(3, 2) = -0.4;
  c2(0, 0) = 0.8;
  Dataset ds = gen_gaussian_classes({m0, m1, m2}, {c0, c1, c2}, n / 3, seed);
  ds.name = "gaussians3";
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, Eigen::Index n_train) {
  if (n_train <= 0 || n_train >= ds.size()) fail(ErrorCode::InvalidSize, "split point must lie inside the dataset");
  Dataset a = ds, b = ds;
  a.features = ds.features.topRows(n_train);
  a.labels.assign(ds.labels.begin(), ds.labels.begin() + n_train);
  b.features = ds.features.bottomRows(ds.size() - n_train);
  b.labels.assign(ds.labels.begin() + n_train, ds.labels.end());
  return {std::move(a), std::move(b)};
}

Matrix read_idx_images(const std::string& path) {
  std::ifstream in = open_in(path);
  if (read_be32(in, path) != kImageMagic) fail(ErrorCode::BadMagic, path + " is not an IDX image file");
  const std::uint32_t count = read_be32(in, path);
  const std::uint32_t rows = read_be32(in, path);
  const std::uint32_t cols = read_be32(in, path);
  const std::uint64_t pixels = std::uint64_t(rows) * cols;
  if (pixels == 0 || pixels > (1u << 20) || count > (1u << 24)) fail(ErrorCode::FormatError, path + ": bad dimensions");
  std::vector<unsigned char> buf(static_cast<std::size_t>(pixels) * count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail(ErrorCode::TruncatedFile, path + ": pixel data ends early");
  Matrix out(count, static_cast<Eigen::Index>(pixels));
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::uint64_t p = 0; p < pixels; ++p) out(i, static_cast<Eigen::Index>(p)) = buf[i * pixels + p] / 255.0;
  return out;
}

std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in = open_in(path);
  if (read_be32(in, path) != kLabelMagic) fail(ErrorCode::BadMagic, path + " is not an IDX label file");
  const std::uint32_t count = read_be32(in, path);
  if (count > (1u << 24)) fail(ErrorCode::FormatError, path + ": bad label count");
  std::vector<unsigned char> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) fail(ErrorCode::TruncatedFile, path + ": labels end early");
  return std::vector<int>(buf.begin(), buf.end());
}

Dataset mnist_load(const std::string& images_path, const std::string& labels_path) {
  Dataset ds;
  ds.features = read_idx_images(images_path);
  ds.labels = read_idx_labels(labels_path);
  if (static_cast<std::size_t>(ds.features.rows()) != ds.labels.size()) {
    fail(ErrorCode::CountMismatch, "image and label counts differ");
  }
  ds.name = "mnist";
  return ds;
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols) {
  if (pixels.size() != std::size_t(count) * rows * cols) fail(ErrorCode::InvalidSize, "pixel buffer size mismatch");
  std::ofstream out = open_out(path);
  for (std::uint32_t v : {kImageMagic, count, rows, cols}) write_be32(out, v);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) fail(ErrorCode::IoError, "failed writing " + path);
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out = open_out(path);
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) fail(ErrorCode::IoError, "failed writing " + path);
}

PcaModel pca_fit(const Matrix& features, int k) {
  const Eigen::Index n = features.rows(), d = features.cols();
  if (k < 1 || k > d || n <= k) fail(ErrorCode::InvalidK, "PCA needs 1 <= k <= d and N > k");
  PcaModel pca;
  pca.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - pca.mean.transpose();
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) fail(ErrorCode::InvalidArgument, "PCA eigendecomposition failed");
  pca.components = es.eigenvectors().rightCols(k).rowwise().reverse();
  pca.explained = es.eigenvalues().tail(k).reverse().cwiseMax(0.0);
  for (int c = 0; c < k; ++c) {
    Eigen::Index idx;
    pca.components.col(c).cwiseAbs().maxCoeff(&idx);
    if (pca.components(idx, c) < 0.0) pca.components.col(c) *= -1.0;
  }
  return pca;
}

Matrix pca_transform(const PcaModel& pca, const Matrix& features) {
  if (features.cols() != pca.mean.size()) fail(ErrorCode::DimensionMismatch, "feature dimension differs from PCA");
  return (features.rowwise() - pca.mean.transpose()) * pca.components;
}

Matrix pca_inverse(const PcaModel& pca, const Matrix& scores) {
  if (scores.cols() != pca.components.cols()) fail(ErrorCode::DimensionMismatch, "score dimension differs from PCA");
  return (scores * pca.components.transpose()).rowwise() + pca.mean.transpose();
}

void save_pca(const std::string& path, const PcaModel& pca) {
  io::CheckpointWriter w(path, io::ModelKind::Pca);
  w.put_u64(static_cast<std::uint64_t>(pca.components.rows()));
  w.put_u64(static_cast<std::uint64_t>(pca.components.cols()));
  w.put_vector(pca.mean);
  w.put_matrix(pca.components);
  w.put_vector(pca.explained);
  w.finish();
}

PcaModel load_pca(const std::string& path) {
  io::CheckpointReader r(path);
  if (r.kind() != io::ModelKind::Pca) fail(ErrorCode::FormatError, path + " does not hold a PCA model");
  const std::uint64_t d = r.get_u64(), k = r.get_u64();
  if (d < 1 || d > (1u << 20) || k < 1 || k > d) fail(ErrorCode::FormatError, path + ": invalid PCA shape");
  PcaModel pca;
  pca.mean = r.get_vector(d);
  pca.components = r.get_matrix(d, k);
  pca.explained = r.get_vector(k);
  r.expect_end();
  return pca;
}

void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out = open_out(path);
  out << "label";
  for (int c = 1; c <= ds.dim(); ++c) out << ",f" << c;
  out << '\n';
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    out << ds.labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) out << ',' << format_double(ds.features(r, c));
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path);
}

Dataset read_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::SchemaError, path + " is empty");
  const std::vector<std::string> header = split_commas(line);
  if (header.empty() || trim(header.front()) != "label") {
    fail(ErrorCode::SchemaError, path + ": header must start with a 'label' column");
  }
  const std::size_t d = header.size() - 1;
  if (d == 0) fail(ErrorCode::SchemaError, path + ": no feature columns");
  std::vector<double> values;
  Dataset ds;
  ds.name = path;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_commas(line);
    if (cells.size() != d + 1) {
      fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": expected " + std::to_string(d + 1) + " fields");
    }
    int label;
    if (!parse_label(cells[0], label)) fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": bad label");
    ds.labels.push_back(label);
    for (std::size_t c = 1; c <= d; ++c) {
      double v;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": bad value in column " + std::to_string(c));
      }
      values.push_back(v);
    }
  }
  if (ds.labels.empty()) fail(ErrorCode::InvalidSize, path + " has no rows");
  ds.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(ds.labels.size()), static_cast<Eigen::Index>(d));
  return ds;
}

ScoreFile read_scores(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::vector<double> values;
  ScoreFile sf;
  std::size_t width = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_commas(line);
    int label;
    if (sf.labels.empty() && width == 0 && !parse_label(cells[0], label)) continue;  // header
    if (cells.size() < 2) fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": need label and score");
    if (width == 0) width = cells.size() - 1;
    if (cells.size() - 1 != width) fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": ragged row");
    if (!parse_label(cells[0], label)) fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": bad label");
    sf.labels.push_back(label);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v;
      if (!parse_double(cells[c], v)) fail(ErrorCode::FormatError, path + ":" + std::to_string(lineno) + ": bad score");
      values.push_back(v);
    }
  }
  if (sf.labels.empty()) fail(ErrorCode::InvalidSize, path + " has no trials");
  sf.scores = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(sf.labels.size()), static_cast<Eigen::Index>(width));
  return sf;
}

void write_scores(const std::string& path, const std::vector<int>& labels, const Matrix& scores) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) fail(ErrorCode::DimensionMismatch, "score rows");
  std::ofstream out = open_out(path);
  out << "label";
  if (scores.cols() == 1) {
    out << ",score";
  } else {
    for (Eigen::Index c = 1; c <= scores.cols(); ++c) out << ",ll" << c;
  }
  out << '\n';
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    out << labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < scores.cols(); ++c) out << ',' << format_double(scores(r, c));
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path);
}

}  // namespace calib::data
