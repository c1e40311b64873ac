#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "monosoup/monosoup_all.hpp"
#include "monosoup/synthetic.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using monosoup::Checkpoint;
using monosoup::DType;
using monosoup::Matrix;
using monosoup::Shape;
using monosoup::Tensor;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("monosoup-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }
  [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::vector<double> gaussian_values(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  const auto v = gaussian_values(rng, static_cast<std::size_t>(rows * cols), scale);
  return monosoup::to_matrix(v, {rows, cols});
}

/// Random m×k matrix with orthonormal columns.
inline Matrix random_orthonormal(std::mt19937_64& rng, Eigen::Index m, Eigen::Index k) {
  const Matrix g = random_matrix(rng, m, k);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(m, k);
}

/// U·diag(s)·Vᵀ for random orthonormal U (m×len) and V (n×len).
inline Matrix with_singular_values(std::mt19937_64& rng, Eigen::Index m, Eigen::Index n, const std::vector<double>& s) {
  const auto k = static_cast<Eigen::Index>(s.size());
  const Matrix u = random_orthonormal(rng, m, k);
  const Matrix v = random_orthonormal(rng, n, k);
  Matrix d = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) d(i, i) = s[static_cast<std::size_t>(i)];
  return u * d * v.transpose();
}

/// Six tensors: three block-indexed matrices, a block vector, an input-side
/// embedding and an output head.
inline std::vector<std::pair<std::string, Shape>> small_layout() {
  return {{"embed.weight", {12, 5}},
          {"blocks.0.attn.weight", {8, 6}},
          {"blocks.0.norm.bias", {6}},
          {"blocks.1.attn.weight", {6, 6}},
          {"blocks.1.mlp.weight", {10, 6}},
          {"head.weight", {3, 6}}};
}

inline Checkpoint random_checkpoint(std::uint64_t seed, DType dtype = DType::F64,
                                    const std::vector<std::pair<std::string, Shape>>& layout = small_layout(),
                                    double scale = 1.0) {
  std::mt19937_64 rng(seed);
  Checkpoint c;
  for (const auto& [name, shape] : layout) {
    const auto v = gaussian_values(rng, static_cast<std::size_t>(monosoup::element_count(shape)), scale);
    c.tensors.emplace(name, Tensor::from_f64(dtype, shape, v));
  }
  return c;
}

/// pre plus a seeded perturbation of relative size `scale`.
inline Checkpoint perturbed(const Checkpoint& pre, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  Checkpoint out;
  out.metadata = pre.metadata;
  for (const auto& [name, t] : pre.tensors) {
    auto v = t.to_f64();
    const auto noise = gaussian_values(rng, v.size(), scale);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += noise[i];
    out.tensors.emplace(name, Tensor::from_f64(t.dtype(), t.shape(), v));
  }
  return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing_support
