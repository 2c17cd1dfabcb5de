#include "calib/data.hpp"
#include "calib/error.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace calib;
using namespace calib::data;

namespace {

class TempDir {
 public:
  TempDir() : path_(std::filesystem::temp_directory_path() / ("calib_data_" + std::to_string(::getpid()))) {
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Generators, MoonsOnArcs) {
  const Dataset ds = gen_moons(1001, 0.0, 1);
  EXPECT_EQ(ds.size(), 1001);
  int c1 = 0;
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    const double x = ds.features(r, 0), y = ds.features(r, 1);
    if (ds.labels[r] == 0) {
      EXPECT_NEAR(x * x + y * y, 1.0, 1e-12);
      EXPECT_GE(y, -1e-12);
    } else {
      ++c1;
      EXPECT_NEAR((x - 1) * (x - 1) + (y - 0.5) * (y - 0.5), 1.0, 1e-12);
      EXPECT_LE(y, 0.5 + 1e-12);
    }
  }
  EXPECT_EQ(c1, 501);
}

TEST(Generators, CirclesRadii) {
  const Dataset ds = gen_circles(400, 0.0, 2, 0.5);
  for (Eigen::Index r = 0; r < ds.size(); ++r)
    EXPECT_NEAR(ds.features.row(r).norm(), ds.labels[r] == 0 ? 1.0 : 0.5, 1e-12);
}

TEST(Generators, ReproducibleAndBalanced) {
  const Dataset a = gen_moons(12000, 0.2, 7), b = gen_moons(12000, 0.2, 7), c = gen_moons(12000, 0.2, 8);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, c.features);
  const Dataset g = gen_gaussians3(3000, 3);
  EXPECT_EQ(g.classes(), 3);
  EXPECT_EQ(g.dim(), 4);
  EXPECT_EQ(std::count(g.labels.begin(), g.labels.end(), 2), 1000);
  const auto [tr, te] = split(a, 10000);
  EXPECT_EQ(tr.size(), 10000);
  EXPECT_EQ(te.size(), 2000);
  EXPECT_EQ(te.features.row(0), a.features.row(10000));
  EXPECT_THROW(split(a, 12000), Error);
  EXPECT_THROW(gen_moons(1, 0.1, 1), Error);
  EXPECT_THROW(gen_moons(10, -0.1, 1), Error);
}

TEST(Generators, GaussianClassesMoments) {
  Vector m(2);
  m << 3.0, -1.0;
  Matrix c(2, 2);
  c << 2.0, 0.5, 0.5, 1.0;
  const Dataset ds = gen_gaussian_classes({m}, {c}, 40000, 4);
  const Vector mean = ds.features.colwise().mean().transpose();
  EXPECT_LT((mean - m).cwiseAbs().maxCoeff(), 0.03);
  const Matrix centered = ds.features.rowwise() - mean.transpose();
  EXPECT_LT(((centered.transpose() * centered) / 39999.0 - c).cwiseAbs().maxCoeff(), 0.05);
  Matrix bad(2, 2);
  bad << 1, 3, 3, 1;
  EXPECT_EQ(code_of([&] { gen_gaussian_classes({m}, {bad}, 10, 1); }), ErrorCode::NotSPD);
}

TEST(Idx, RoundTripAndErrors) {
  TempDir dir;
  std::vector<std::uint8_t> pixels(3 * 2 * 2);
  for (std::size_t k = 0; k < pixels.size(); ++k) pixels[k] = static_cast<std::uint8_t>(k * 20);
  write_idx_images(dir.file("img"), pixels, 3, 2, 2);
  write_idx_labels(dir.file("lab"), {7, 0, 9});
  const Matrix img = read_idx_images(dir.file("img"));
  ASSERT_EQ(img.rows(), 3);
  ASSERT_EQ(img.cols(), 4);
  EXPECT_DOUBLE_EQ(img(1, 2), 120.0 / 255.0);
  EXPECT_EQ(read_idx_labels(dir.file("lab")), (std::vector<int>{7, 0, 9}));
  const Dataset ds = mnist_load(dir.file("img"), dir.file("lab"));
  EXPECT_EQ(ds.size(), 3);

  EXPECT_EQ(code_of([&] { read_idx_images(dir.file("lab")); }), ErrorCode::BadMagic);
  write_idx_labels(dir.file("lab2"), {1, 2});
  EXPECT_EQ(code_of([&] { mnist_load(dir.file("img"), dir.file("lab2")); }), ErrorCode::CountMismatch);
  std::filesystem::resize_file(dir.file("img"), 20);
  EXPECT_EQ(code_of([&] { read_idx_images(dir.file("img")); }), ErrorCode::TruncatedFile);
}

TEST(Pca, Properties) {
  std::mt19937_64 rng(5);
  const Matrix cov = oracle::random_spd(6, rng);
  const Dataset ds = gen_gaussian_classes({Vector::LinSpaced(6, 0.0, 5.0)}, {cov}, 2000, 6);
  const PcaModel p = pca_fit(ds.features, 3);
  EXPECT_LT((p.components.transpose() * p.components - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  for (int k = 1; k < 3; ++k) EXPECT_GE(p.explained(k - 1), p.explained(k));
  for (int k = 0; k < 3; ++k) {
    Eigen::Index at;
    p.components.col(k).cwiseAbs().maxCoeff(&at);
    EXPECT_GT(p.components(at, k), 0.0);
  }
  const Matrix scores = pca_transform(p, ds.features);
  const Matrix centered = scores.rowwise() - scores.colwise().mean();
  const Matrix sc = centered.transpose() * centered / double(ds.size() - 1);
  EXPECT_LT((sc.diagonal() - p.explained).cwiseAbs().maxCoeff(), 1e-8);
  const PcaModel full = pca_fit(ds.features, 6);
  EXPECT_LT((pca_inverse(full, pca_transform(full, ds.features)) - ds.features).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(code_of([&] { pca_fit(ds.features, 7); }), ErrorCode::InvalidK);
  EXPECT_EQ(code_of([&] { pca_fit(ds.features, 0); }), ErrorCode::InvalidK);

  TempDir dir;
  save_pca(dir.file("pca"), p);
  const PcaModel back = load_pca(dir.file("pca"));
  EXPECT_EQ(back.components, p.components);
  EXPECT_EQ(back.mean, p.mean);
}

TEST(Csv, RoundTripIsExact) {
  TempDir dir;
  const Dataset ds = gen_gaussians3(50, 8);
  write_csv(dir.file("a.csv"), ds);
  const Dataset back = read_csv(dir.file("a.csv"));
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  std::ifstream in(dir.file("a.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "label,f1,f2,f3,f4");
}

TEST(Csv, Errors) {
  TempDir dir;
  std::ofstream(dir.file("h.csv")) << "x,y\n1,2\n";
  EXPECT_EQ(code_of([&] { read_csv(dir.file("h.csv")); }), ErrorCode::SchemaError);
  std::ofstream(dir.file("r.csv")) << "label,f1,f2\n0,1\n";
  EXPECT_EQ(code_of([&] { read_csv(dir.file("r.csv")); }), ErrorCode::FormatError);
  std::ofstream(dir.file("n.csv")) << "label,f1\n0,abc\n";
  EXPECT_EQ(code_of([&] { read_csv(dir.file("n.csv")); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([&] { read_csv(dir.file("missing.csv")); }), ErrorCode::IoError);
}

TEST(Scores, WithAndWithoutHeader) {
  TempDir dir;
  Matrix s(3, 2);
  s << 0.5, -1.0, 2.0, 3.0, -4.25, 1e-300;
  write_scores(dir.file("s.csv"), {0, 1, 1}, s);
  const ScoreFile back = read_scores(dir.file("s.csv"));
  EXPECT_EQ(back.scores, s);
  EXPECT_EQ(back.labels, (std::vector<int>{0, 1, 1}));
  std::ofstream(dir.file("t.csv")) << "1,0.25\n0,-2\n";
  const ScoreFile plain = read_scores(dir.file("t.csv"));
  ASSERT_EQ(plain.scores.cols(), 1);
  EXPECT_EQ(plain.scores(1, 0), -2.0);
}
