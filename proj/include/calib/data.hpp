#pragma once

// Datasets: synthetic generators, MNIST IDX files, PCA, splitting and text
// persistence.

#include "calib/linalg.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace calib::data {

struct Dataset {
  Matrix features;          // N x d
  std::vector<int> labels;  // N, 0-based
  std::string name;
  std::uint64_t seed = 0;

  Eigen::Index size() const noexcept { return features.rows(); }
  int dim() const noexcept { return static_cast<int>(features.cols()); }
  int classes() const;  // max label + 1
};

// Rows follow the generator; labels are balanced (n/2 per class, the extra
// sample going to class 1 for odd n) and the rows are shuffled.
// Two interleaving half circles (noise: Gaussian std added to both axes).
Dataset gen_moons(int n, double noise, std::uint64_t seed);
// Outer circle of radius 1 (class 0) around an inner one of radius `factor`.
Dataset gen_circles(int n, double noise, std::uint64_t seed, double factor = 0.5);
// Two 2-D Gaussians with different means and covariances (fixed preset).
Dataset gen_gaussians(int n, std::uint64_t seed);
// Three 4-D Gaussian classes with different means and covariances (preset).
Dataset gen_gaussians3(int n, std::uint64_t seed);

// n_per_class draws from N(means[k], covariances[k]) for every k. Throws
// NotSPD for a covariance that is not SPD.
Dataset gen_gaussian_classes(const std::vector<Vector>& means, const std::vector<Matrix>& covariances,
                             int n_per_class, std::uint64_t seed);

// First n_train rows and the rest. Throws InvalidSize unless 0 < n_train < N.
std::pair<Dataset, Dataset> split(const Dataset& ds, Eigen::Index n_train);

// IDX files: big-endian magic 2051 (u8 images: count, rows, cols) and 2049
// (u8 labels: count). Pixels are scaled to [0, 1].
Matrix read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);
Dataset mnist_load(const std::string& images_path, const std::string& labels_path);
void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

struct PcaModel {
  Vector mean;
  Matrix components;  // d x k, orthonormal columns
  Vector explained;   // k variances, nonincreasing
};

// Covariance eigendecomposition, no whitening; the largest-magnitude entry of
// every component is made positive. Throws InvalidK unless 1 <= k <= d and
// N > k.
PcaModel pca_fit(const Matrix& features, int k);
Matrix pca_transform(const PcaModel& pca, const Matrix& features);
Matrix pca_inverse(const PcaModel& pca, const Matrix& scores);
void save_pca(const std::string& path, const PcaModel& pca);
PcaModel load_pca(const std::string& path);

// Text format: header "label,f1,...,fd" then one "label,x1,...,xd" row per
// sample, reals printed with 17 significant digits.
void write_csv(const std::string& path, const Dataset& ds);
// Throws SchemaError when the header does not start with a label column and
// FormatError on malformed rows.
Dataset read_csv(const std::string& path);

// Score files: "label,score" (binary LLR) or "label,ll_1,...,ll_D" per line;
// a header line is optional.
struct ScoreFile {
  std::vector<int> labels;
  Matrix scores;  // N x 1 or N x D
};
ScoreFile read_scores(const std::string& path);
void write_scores(const std::string& path, const std::vector<int>& labels, const Matrix& scores);

}  // namespace calib::data
