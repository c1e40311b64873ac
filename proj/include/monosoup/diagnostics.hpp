#pragma once

// Analysis passes over checkpoints and edit reports: per-layer spectra and
// rank statistics, pairwise task-vector alignment, truncation sweeps, linear
// CKA between activation matrices and λ distributions.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "monosoup/blocks.hpp"
#include "monosoup/checkpoint_io.hpp"
#include "monosoup/merge.hpp"
#include "monosoup/monosoup.hpp"
#include "monosoup/parallel.hpp"
#include "monosoup/spectral.hpp"

namespace monosoup {

struct LayerSpectrum {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool degenerate = false;
  std::vector<double> singulars;
  int k_effective = 0;
  std::map<double, int> k_at_R;
  double rho_at_keff = 0.0;
  double cos2_alpha_at_keff = 0.0;
  double energy_total = 0.0;

  friend bool operator==(const LayerSpectrum&, const LayerSpectrum&) = default;
};

struct SpectrumReport {
  std::vector<double> fractions;
  /// Matrix layers only, in name order.
  std::vector<LayerSpectrum> layers;

  friend bool operator==(const SpectrumReport&, const SpectrumReport&) = default;
};

inline void check_fractions(const std::vector<double>& rs) {
  for (double r : rs) {
    if (!(r > 0.0 && r <= 1.0)) fail(ErrorCode::OutOfRange, "energy fractions must lie in (0, 1]");
  }
}

inline SpectrumReport spectrum_report(const Checkpoint& pre, const Checkpoint& ft, std::vector<double> rs,
                                      Parallelism par = {}) {
  check_fractions(rs);
  validate_compatibility({&pre, &ft});
  std::vector<const std::string*> names;
  for (const auto& [name, t] : ft.tensors) {
    if (matrix_shape(t.shape())) names.push_back(&name);
  }
  std::vector<LayerSpectrum> layers(names.size());
  parallel_for(names.size(), par, [&](std::size_t i) {
    const auto& name = *names[i];
    const auto ms = *matrix_shape(ft.tensors.at(name).shape());
    const auto a = pre.tensors.at(name).to_f64();
    auto b = ft.tensors.at(name).to_f64();
    for (std::size_t j = 0; j < b.size(); ++j) b[j] -= a[j];
    LayerSpectrum ls;
    ls.name = name;
    ls.rows = static_cast<int>(ms.rows);
    ls.cols = static_cast<int>(ms.cols);
    const Matrix delta = to_matrix(b, ms);
    ThinSVD svd = thin_svd(delta);
    ls.singulars.assign(svd.S.data(), svd.S.data() + svd.S.size());
    ls.energy_total = detail::energy_sum(ls.singulars, 0, ls.singulars.size());
    if (is_degenerate_spectrum(ls.singulars, ms.rows, ms.cols)) {
      ls.degenerate = true;
    } else {
      ls.k_effective = effective_rank(svd);
      for (double r : rs) ls.k_at_R[r] = energy_rank(ls.singulars, r);
      const auto split = split_spectrum(std::move(svd), ls.k_effective);
      ls.rho_at_keff = split.rho;
      ls.cos2_alpha_at_keff = split.cos2_alpha;
    }
    layers[i] = std::move(ls);
  });
  return SpectrumReport{std::move(rs), std::move(layers)};
}

struct PairwiseAlignmentTable {
  std::vector<std::string> ids;
  /// T×T, row-major: mean per-layer cosine for every pair.
  std::vector<std::vector<double>> mean_cos;
  /// (i, j) with i < j -> per-layer cosine histogram, when requested.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> histograms;
};

/// Counts of `values` in `bins` uniform bins over [−1, 1]; 1 lands in the
/// last bin.
inline std::vector<std::size_t> cosine_histogram(const std::map<std::string, double>& values, int bins) {
  if (bins < 1) fail(ErrorCode::InvalidArgument, "histogram needs at least one bin");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (const auto& [name, v] : values) {
    auto b = static_cast<long>(std::floor((v + 1.0) / 2.0 * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  return counts;
}

inline PairwiseAlignmentTable pairwise_alignment(const CandidatePool& pool, std::optional<int> histogram_bins = std::nullopt,
                                                 Parallelism par = {}) {
  if (pool.candidates.size() < 2) fail(ErrorCode::EmptyPool, "pairwise alignment needs at least two candidates");
  const std::size_t t = pool.candidates.size();
  std::vector<TaskVector> tvs(t);
  parallel_for(t, par, [&](std::size_t i) { tvs[i] = task_vector(pool.pre, pool.candidates[i].ckpt); });

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i; j < t; ++j) pairs.emplace_back(i, j);
  }
  std::vector<AlignmentProfile> profiles(pairs.size());
  parallel_for(pairs.size(), par, [&](std::size_t p) {
    profiles[p] = layer_cosine(tvs[pairs[p].first], tvs[pairs[p].second]);
  });

  PairwiseAlignmentTable table;
  table.mean_cos.assign(t, std::vector<double>(t, 0.0));
  for (const auto& c : pool.candidates) table.ids.push_back(c.id);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    table.mean_cos[i][j] = table.mean_cos[j][i] = profiles[p].mean;
    if (histogram_bins && i != j) table.histograms[pairs[p]] = cosine_histogram(profiles[p].per_layer, *histogram_bins);
  }
  return table;
}

struct SweepRow {
  double fraction;
  std::string layer;
  int k;
  double retained_energy;
};

struct SweepOutput {
  double fraction;
  std::filesystem::path path;
};

struct TruncationSweep {
  std::vector<SweepOutput> outputs;
  std::vector<SweepRow> rows;
};

inline std::string format_fraction(double r) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r);
  return std::string(buf, ptr);
}

/// In-memory part of the sweep: one checkpoint per R where each matrix delta
/// keeps only its top energy_rank(S, R) directions.
inline std::vector<std::pair<Checkpoint, std::vector<SweepRow>>> truncate_spectra(
    const Checkpoint& pre, const Checkpoint& ft, const std::vector<double>& rs, Parallelism par = {}) {
  check_fractions(rs);
  validate_compatibility({&pre, &ft});
  std::vector<const std::string*> names;
  for (const auto& [name, t] : ft.tensors) names.push_back(&name);

  // per R, per tensor
  std::vector<std::vector<Tensor>> tensors(rs.size(), std::vector<Tensor>(names.size()));
  std::vector<std::vector<std::optional<SweepRow>>> rows(rs.size(), std::vector<std::optional<SweepRow>>(names.size()));

  parallel_for(names.size(), par, [&](std::size_t i) {
    const auto& name = *names[i];
    const Tensor& tf = ft.tensors.at(name);
    const auto ms = matrix_shape(tf.shape());
    if (!ms) {
      for (auto& per_r : tensors) per_r[i] = tf;
      return;
    }
    const auto a = pre.tensors.at(name).to_f64();
    auto b = tf.to_f64();
    for (std::size_t j = 0; j < b.size(); ++j) b[j] -= a[j];
    const Matrix w0 = to_matrix(a, *ms);
    ThinSVD svd = thin_svd(to_matrix(b, *ms));
    if (is_degenerate_spectrum(svd.singular_values(), ms->rows, ms->cols)) {
      for (std::size_t r = 0; r < rs.size(); ++r) {
        tensors[r][i] = tf;
        rows[r][i] = SweepRow{rs[r], name, 0, 1.0};
      }
      return;
    }
    const double total = detail::energy_sum(svd.singular_values(), 0, svd.singular_values().size());
    for (std::size_t r = 0; r < rs.size(); ++r) {
      const int k = energy_rank(svd.singular_values(), rs[r]);
      const auto ki = static_cast<Eigen::Index>(k);
      const Matrix high = svd.U.leftCols(ki) * svd.S.head(ki).asDiagonal() * svd.V.leftCols(ki).transpose();
      tensors[r][i] = Tensor::from_f64(tf.dtype(), tf.shape(), to_row_major(w0 + high));
      rows[r][i] = SweepRow{rs[r], name, k, detail::energy_sum(svd.singular_values(), 0, static_cast<std::size_t>(k)) / total};
    }
  });

  std::vector<std::pair<Checkpoint, std::vector<SweepRow>>> out(rs.size());
  for (std::size_t r = 0; r < rs.size(); ++r) {
    out[r].first.metadata = pre.metadata;
    for (std::size_t i = 0; i < names.size(); ++i) {
      out[r].first.tensors.emplace(*names[i], std::move(tensors[r][i]));
      if (rows[r][i]) out[r].second.push_back(std::move(*rows[r][i]));
    }
  }
  return out;
}

/// Writes `out_dir/truncate_R<R>.safetensors` for every R.
inline TruncationSweep truncation_sweep(const Checkpoint& pre, const Checkpoint& ft, const std::vector<double>& rs,
                                        const std::filesystem::path& out_dir, Parallelism par = {}) {
  auto results = truncate_spectra(pre, ft, rs, par);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create '" + out_dir.string() + "'");
  TruncationSweep sweep;
  for (std::size_t r = 0; r < rs.size(); ++r) {
    auto path = out_dir / ("truncate_R" + format_fraction(rs[r]) + ".safetensors");
    write_archive(results[r].first, path);
    sweep.outputs.push_back({rs[r], path});
    for (auto& row : results[r].second) sweep.rows.push_back(std::move(row));
  }
  return sweep;
}

/// Samples × features.
using ActivationMatrix = Matrix;

/// ‖Ycᵀ Xc‖²_F / (‖Xcᵀ Xc‖_F ‖Ycᵀ Yc‖_F) on column-centered inputs.
inline double linear_cka(const ActivationMatrix& x, const ActivationMatrix& y) {
  if (x.rows() != y.rows()) {
    fail(ErrorCode::SampleCountMismatch, std::to_string(x.rows()) + " vs " + std::to_string(y.rows()) + " samples");
  }
  if (x.rows() < 2) fail(ErrorCode::InvalidArgument, "CKA needs at least two samples");
  if (!x.allFinite() || !y.allFinite()) fail(ErrorCode::NonFiniteInput, "activation matrix contains NaN or Inf");
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Matrix yc = y.rowwise() - y.colwise().mean();
  if (xc.norm() < kZeroNormThreshold || yc.norm() < kZeroNormThreshold) return 0.0;
  const double cross = (yc.transpose() * xc).squaredNorm();
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  return std::clamp(cross / (xx * yy), 0.0, 1.0);
}

enum class LambdaGrouping { LayerIndex, NamePrefix };

/// Group key for a layer name. LayerIndex yields the block number ("other"
/// outside blocks); NamePrefix yields the dotted prefix through the block
/// token, or the parent module path outside blocks.
inline std::string lambda_group_key(const std::string& name, LambdaGrouping g) {
  std::smatch m;
  const bool in_block = std::regex_search(name, m, block_token_regex());
  if (g == LambdaGrouping::LayerIndex) return in_block ? m[1].str() : "other";
  if (in_block) {
    auto end = static_cast<std::size_t>(m.position(0) + m.length(0));
    if (end > 0 && name[end - 1] == '.') --end;
    return name.substr(0, end);
  }
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

struct Stat {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const Stat&, const Stat&) = default;
};

struct LambdaGroupStats {
  std::string group;
  std::size_t layers = 0;
  Stat lambda_high;
  Stat lambda_low;
  Stat gap;

  friend bool operator==(const LambdaGroupStats&, const LambdaGroupStats&) = default;
};

/// Per-group statistics of λ_high, λ_low and λ_high − λ_low over edited
/// layers; other statuses are skipped.
inline std::vector<LambdaGroupStats> lambda_distribution(const EditReport& report, LambdaGrouping grouping) {
  struct Acc {
    std::vector<double> hi, lo, gap;
  };
  std::map<std::string, Acc> groups;
  for (const auto& l : report.layers) {
    if (l.status != LayerStatus::Edited) continue;
    auto& a = groups[lambda_group_key(l.name, grouping)];
    a.hi.push_back(l.lambda_high);
    a.lo.push_back(l.lambda_low);
    a.gap.push_back(l.lambda_high - l.lambda_low);
  }
  auto stat = [](const std::vector<double>& v) {
    Stat s{0.0, v.front(), v.front()};
    for (double x : v) {
      s.mean += x;
      s.min = std::min(s.min, x);
      s.max = std::max(s.max, x);
    }
    s.mean /= static_cast<double>(v.size());
    return s;
  };
  std::vector<LambdaGroupStats> out;
  for (const auto& [key, a] : groups) out.push_back({key, a.hi.size(), stat(a.hi), stat(a.lo), stat(a.gap)});
  if (grouping == LambdaGrouping::LayerIndex) {
    auto numeric = [](const std::string& s) {
      return s == "other" ? std::numeric_limits<long>::max() : std::stol(s);
    };
    std::stable_sort(out.begin(), out.end(),
                     [&](const auto& a, const auto& b) { return numeric(a.group) < numeric(b.group); });
  }
  return out;
}

}  // namespace monosoup
