#pragma once

// Thin SVD and the spectral quantities built on it: energy-threshold rank,
// entropy effective rank, the high/low partition of an update matrix, the
// spectral decay ratio and the low-energy fraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "monosoup/error.hpp"
#include "monosoup/tensor.hpp"

namespace monosoup {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// W = U diag(S) Vᵀ with r = min(m, n) columns in U and V.
struct ThinSVD {
  Matrix U;
  Vector S;
  Matrix V;

  [[nodiscard]] Eigen::Index rows() const { return U.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return V.rows(); }
  [[nodiscard]] Eigen::Index rank_bound() const { return S.size(); }
  [[nodiscard]] std::span<const double> singular_values() const {
    return {S.data(), static_cast<std::size_t>(S.size())};
  }
};

/// Below this many columns on the small side one-sided Jacobi is used;
/// above it, bidiagonalization with divide and conquer.
inline constexpr Eigen::Index kJacobiSvdMaxDim = 64;

namespace detail {

// Flip each (u_i, v_i) so the largest-magnitude entry of u_i is positive.
// Entries within rounding of the maximum count as tied and the lowest row
// index wins.
inline void canonicalize_signs(ThinSVD& svd) {
  constexpr double kTieTolerance = 1e-12;
  for (Eigen::Index i = 0; i < svd.U.cols(); ++i) {
    const double best = svd.U.col(i).cwiseAbs().maxCoeff();
    Eigen::Index arg = 0;
    while (arg + 1 < svd.U.rows() && std::abs(svd.U(arg, i)) < best * (1.0 - kTieTolerance)) ++arg;
    if (svd.U(arg, i) < 0.0) {
      svd.U.col(i) *= -1.0;
      svd.V.col(i) *= -1.0;
    }
  }
}

template <typename Solver>
ThinSVD unpack(const Solver& solver) {
  return ThinSVD{solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

}  // namespace detail

inline ThinSVD thin_svd(const Matrix& w) {
  if (w.rows() == 0 || w.cols() == 0) fail(ErrorCode::InvalidArgument, "thin_svd needs a non-empty matrix");
  if (!w.allFinite()) fail(ErrorCode::NonFiniteInput, "matrix contains NaN or Inf");
  ThinSVD out;
  if (std::min(w.rows(), w.cols()) <= kJacobiSvdMaxDim) {
    Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> solver(
        w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out = detail::unpack(solver);
  } else {
    Eigen::BDCSVD<Matrix> solver(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out = detail::unpack(solver);
  }
  detail::canonicalize_signs(out);
  return out;
}

namespace detail {

inline double energy_sum(std::span<const double> s, std::size_t begin, std::size_t end) {
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) acc += s[i] * s[i];
  return acc;
}

inline double tail_fraction(std::span<const double> s, std::size_t k) {
  const double high = energy_sum(s, 0, k);
  const double tail = energy_sum(s, k, s.size());
  return tail / (high + tail);
}

inline void require_spectrum(std::span<const double> s) {
  if (s.empty()) fail(ErrorCode::AllZeroSpectrum, "empty spectrum");
  if (!(s.front() > 0.0)) fail(ErrorCode::AllZeroSpectrum, "leading singular value is zero");
}

}  // namespace detail

/// Smallest k whose leading k squared singular values hold at least a
/// fraction `r` of the total energy.
inline int energy_rank(std::span<const double> s, double r) {
  if (!(r > 0.0 && r <= 1.0)) fail(ErrorCode::OutOfRange, "energy fraction must lie in (0, 1]");
  detail::require_spectrum(s);
  const double total = detail::energy_sum(s, 0, s.size());
  const double target = r * total;
  double cumulative = 0.0;
  std::size_t k = s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    cumulative += s[i] * s[i];
    if (cumulative >= target) {
      k = i + 1;
      break;
    }
  }
  // Settle rounding ties on the tail fraction exactly as split_spectrum
  // reports it, so the chosen k always satisfies cos²α ≤ 1 − r.
  const double bound = 1.0 - r;
  while (k < s.size() && detail::tail_fraction(s, k) > bound) ++k;
  while (k > 1 && detail::tail_fraction(s, k - 1) <= bound) --k;
  return static_cast<int>(k);
}

/// Default zero floor for effective_rank, relative to σ_1: the usual
/// numerical-rank tolerance for a spectrum of this length.
inline double default_rank_tolerance(std::size_t dim) {
  return static_cast<double>(std::max<std::size_t>(dim, 1)) * std::numeric_limits<double>::epsilon();
}

/// ceil(exp(H)) where H is the Shannon entropy of σ normalized to sum 1.
/// Singular values at or below `zero_tol * σ_1` are numerical noise and count
/// as exact zeros (0·ln 0 = 0).
inline int effective_rank(std::span<const double> s, double zero_tol) {
  detail::require_spectrum(s);
  const double floor = zero_tol * s.front();
  double sum = 0.0;
  for (double v : s) {
    if (v > floor) sum += v;
  }
  double entropy = 0.0;
  for (double v : s) {
    if (v <= floor) continue;
    const double p = v / sum;
    entropy -= p * std::log(p);
  }
  const double x = std::exp(entropy);
  // ln/exp round-off can push an exact integer such as exp(ln 2) just past
  // it; do not let that bump the ceiling.
  const double k = std::ceil(x * (1.0 - 1e-10));
  return static_cast<int>(std::clamp(k, 1.0, static_cast<double>(s.size())));
}

inline int effective_rank(std::span<const double> s) {
  return effective_rank(s, default_rank_tolerance(s.size()));
}

/// Same as above with the tolerance scaled by the larger matrix dimension.
inline int effective_rank(const ThinSVD& svd) {
  return effective_rank(svd.singular_values(),
                        default_rank_tolerance(static_cast<std::size_t>(std::max(svd.rows(), svd.cols()))));
}

/// (σ_{k+1} / σ_1)², or 0 when k covers the whole spectrum.
inline double spectral_decay(std::span<const double> s, int k) {
  detail::require_spectrum(s);
  if (k < 1 || static_cast<std::size_t>(k) > s.size()) {
    fail(ErrorCode::IndexOutOfRange, "split index " + std::to_string(k) + " outside [1, " +
                                         std::to_string(s.size()) + "]");
  }
  if (static_cast<std::size_t>(k) == s.size()) return 0.0;
  const double ratio = s[static_cast<std::size_t>(k)] / s.front();
  return ratio * ratio;
}

struct SpectralSplit {
  ThinSVD svd;
  int k = 1;
  double energy_high = 0.0;
  double energy_total = 0.0;
  double rho = 0.0;
  double cos2_alpha = 0.0;

  [[nodiscard]] int r() const { return static_cast<int>(svd.S.size()); }
};

/// Σσ² below this (times m·n) is treated as a zero update.
inline constexpr double kZeroSpectrumThreshold = 1e-24;

inline bool is_degenerate_spectrum(std::span<const double> s, Eigen::Index rows, Eigen::Index cols) {
  return detail::energy_sum(s, 0, s.size()) <
         kZeroSpectrumThreshold * static_cast<double>(rows) * static_cast<double>(cols);
}

inline SpectralSplit split_spectrum(ThinSVD svd, int k) {
  const auto s = svd.singular_values();
  if (k < 1 || static_cast<std::size_t>(k) > s.size()) {
    fail(ErrorCode::IndexOutOfRange, "split index " + std::to_string(k) + " outside [1, " +
                                         std::to_string(s.size()) + "]");
  }
  if (is_degenerate_spectrum(s, svd.rows(), svd.cols())) {
    fail(ErrorCode::AllZeroSpectrum, "update energy below the degeneracy threshold");
  }
  SpectralSplit split;
  split.k = k;
  split.energy_high = detail::energy_sum(s, 0, static_cast<std::size_t>(k));
  const double tail = detail::energy_sum(s, static_cast<std::size_t>(k), s.size());
  split.energy_total = split.energy_high + tail;
  split.cos2_alpha = tail / split.energy_total;
  split.rho = spectral_decay(s, k);
  split.svd = std::move(svd);
  return split;
}

/// Σ_{i≤k} σ_i u_i v_iᵀ.
inline Matrix high_component(const SpectralSplit& split) {
  const auto k = static_cast<Eigen::Index>(split.k);
  return split.svd.U.leftCols(k) * split.svd.S.head(k).asDiagonal() * split.svd.V.leftCols(k).transpose();
}

/// Σ_{i>k} σ_i u_i v_iᵀ, built from the tail of the decomposition.
inline Matrix low_component(const SpectralSplit& split) {
  const auto k = static_cast<Eigen::Index>(split.k);
  const auto tail = split.svd.S.size() - k;
  return split.svd.U.rightCols(tail) * split.svd.S.tail(tail).asDiagonal() *
         split.svd.V.rightCols(tail).transpose();
}

struct MatrixShape {
  Eigen::Index rows;
  Eigen::Index cols;
};

/// Rank-2 shapes map as-is; higher ranks collapse to (extent_0, rest).
/// Rank 0/1 and empty tensors are not matrices.
inline std::optional<MatrixShape> matrix_shape(const Shape& shape) {
  if (shape.size() < 2) return std::nullopt;
  const auto rows = shape.front();
  std::int64_t cols = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) cols *= shape[i];
  if (rows == 0 || cols == 0) return std::nullopt;
  return MatrixShape{static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline Matrix to_matrix(std::span<const double> values, MatrixShape ms) {
  return Eigen::Map<const RowMajorMatrix>(values.data(), ms.rows, ms.cols);
}

inline std::optional<Matrix> flatten_to_matrix(const Tensor& t) {
  const auto ms = matrix_shape(t.shape());
  if (!ms) return std::nullopt;
  const auto values = t.to_f64();
  return to_matrix(values, *ms);
}

/// Row-major copy of `m`, the inverse of to_matrix.
inline std::vector<double> to_row_major(const Matrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  Eigen::Map<RowMajorMatrix>(out.data(), m.rows(), m.cols()) = m;
  return out;
}

}  // namespace monosoup
