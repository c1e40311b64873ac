#pragma once

// Single-checkpoint spectral edit. Each matrix layer's fine-tuning update is
// split at rank k into high- and low-energy parts, which are re-weighted by
// per-layer coefficients derived from the spectrum itself:
//
//   W_edited = W0 + λ_high·W_High + λ_low·W_Low
//   λ_low    = ρ + (1 − ρ)·cos α,   λ_high = 1 − λ_low
//
// ρ = (σ_{k+1}/σ_1)² and cos²α = ‖W_Low‖²/‖W‖².

#include <charconv>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "monosoup/error.hpp"
#include "monosoup/parallel.hpp"
#include "monosoup/spectral.hpp"
#include "monosoup/tensor.hpp"

namespace monosoup {

class RankRule {
 public:
  enum class Kind { EffectiveRank, FixedEnergy };

  static RankRule effective() { return RankRule(Kind::EffectiveRank, 0.0); }

  static RankRule fixed_energy(double r) {
    if (!(r > 0.0 && r < 1.0)) fail(ErrorCode::OutOfRange, "energy fraction R must lie in (0, 1)");
    return RankRule(Kind::FixedEnergy, r);
  }

  /// Accepts "effective" or "energy:<R>".
  static RankRule parse(std::string_view text) {
    if (text == "effective") return effective();
    constexpr std::string_view prefix = "energy:";
    if (text.starts_with(prefix)) {
      const auto num = text.substr(prefix.size());
      double r = 0.0;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), r);
      if (ec != std::errc{} || ptr != num.data() + num.size()) {
        fail(ErrorCode::InvalidArgument, "cannot parse energy fraction in '" + std::string(text) + "'");
      }
      return fixed_energy(r);
    }
    fail(ErrorCode::InvalidArgument, "rank rule must be 'effective' or 'energy:<R>', got '" + std::string(text) + "'");
  }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] double energy() const noexcept { return energy_; }

  [[nodiscard]] std::string to_string() const {
    if (kind_ == Kind::EffectiveRank) return "effective";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, energy_);
    return "energy:" + std::string(buf, ptr);
  }

  /// Split index for a decomposed update.
  [[nodiscard]] int select(const ThinSVD& svd) const {
    if (kind_ == Kind::EffectiveRank) return effective_rank(svd);
    return energy_rank(svd.singular_values(), energy_);
  }

  friend bool operator==(const RankRule&, const RankRule&) = default;

 private:
  RankRule(Kind kind, double energy) : kind_(kind), energy_(energy) {}

  Kind kind_;
  double energy_;
};

enum class LayerStatus { Edited, PassThroughVector, DegenerateZeroDelta };

constexpr std::string_view to_string(LayerStatus s) noexcept {
  switch (s) {
    case LayerStatus::Edited: return "Edited";
    case LayerStatus::PassThroughVector: return "PassThroughVector";
    case LayerStatus::DegenerateZeroDelta: return "DegenerateZeroDelta";
  }
  return "?";
}

inline LayerStatus parse_layer_status(std::string_view s) {
  if (s == "Edited") return LayerStatus::Edited;
  if (s == "PassThroughVector") return LayerStatus::PassThroughVector;
  if (s == "DegenerateZeroDelta") return LayerStatus::DegenerateZeroDelta;
  fail(ErrorCode::InvalidArgument, "unknown layer status '" + std::string(s) + "'");
}

struct LayerEditReport {
  std::string name;
  int k = 0;
  int r = 0;
  double rho = 0.0;
  double cos2_alpha = 0.0;
  double lambda_low = 0.0;
  double lambda_high = 0.0;
  double energy_total = 0.0;
  LayerStatus status = LayerStatus::Edited;

  friend bool operator==(const LayerEditReport&, const LayerEditReport&) = default;
};

struct EditReport {
  std::vector<LayerEditReport> layers;
  RankRule rank_rule = RankRule::effective();
  /// How rank-0/1 tensors were handled: "pass" or "wise:<λ>".
  std::string vector_policy = "pass";

  [[nodiscard]] std::map<LayerStatus, std::size_t> totals() const {
    std::map<LayerStatus, std::size_t> t{{LayerStatus::Edited, 0},
                                         {LayerStatus::PassThroughVector, 0},
                                         {LayerStatus::DegenerateZeroDelta, 0}};
    for (const auto& l : layers) ++t[l.status];
    return t;
  }

  friend bool operator==(const EditReport&, const EditReport&) = default;
};

struct MixingCoefficients {
  double low;
  double high;
};

/// λ_low = ρ + (1 − ρ)·cos α. This form keeps all four boundary values
/// (f(0,0)=0, f(1,c)=1, f(ρ,1)=1, f(ρ,0)=ρ, f(0,c)=c) exact in floating point.
inline MixingCoefficients mixing_coefficients(double rho, double cos_alpha) {
  if (!(rho >= 0.0 && rho <= 1.0)) fail(ErrorCode::OutOfRange, "rho must lie in [0, 1]");
  if (!(cos_alpha >= 0.0 && cos_alpha <= 1.0)) fail(ErrorCode::OutOfRange, "cos alpha must lie in [0, 1]");
  const double low = rho + (1.0 - rho) * cos_alpha;
  return {low, 1.0 - low};
}

/// W0 + λ_high·W_High + λ_low·(Δ − W_High).
inline Matrix apply_mix(const Matrix& w0, const Matrix& delta, const SpectralSplit& split,
                        MixingCoefficients lambdas) {
  const Matrix high = high_component(split);
  return w0 + lambdas.high * high + lambdas.low * (delta - high);
}

struct LayerEdit {
  Matrix edited;
  LayerEditReport report;
};

inline LayerEdit edit_layer(const Matrix& w0, const Matrix& wft, const RankRule& rule,
                            std::string name = {}) {
  if (w0.rows() != wft.rows() || w0.cols() != wft.cols()) {
    fail(ErrorCode::ShapeMismatch, "layer '" + name + "': pre-trained and fine-tuned shapes differ");
  }
  LayerEdit out;
  out.report.name = std::move(name);
  out.report.r = static_cast<int>(std::min(w0.rows(), w0.cols()));

  const Matrix delta = wft - w0;
  const double energy = delta.squaredNorm();
  out.report.energy_total = energy;
  auto degenerate = [&] {
    out.edited = wft;
    out.report.status = LayerStatus::DegenerateZeroDelta;
    out.report.k = 0;
    out.report.lambda_low = 1.0;
    out.report.lambda_high = 1.0;
    return out;
  };
  if (std::isfinite(energy) &&
      energy < kZeroSpectrumThreshold * static_cast<double>(delta.rows()) * static_cast<double>(delta.cols())) {
    return degenerate();
  }

  ThinSVD svd = thin_svd(delta);
  if (is_degenerate_spectrum(svd.singular_values(), svd.rows(), svd.cols())) return degenerate();
  const int k = rule.select(svd);
  const SpectralSplit split = split_spectrum(std::move(svd), k);
  const auto lambdas = mixing_coefficients(split.rho, std::sqrt(split.cos2_alpha));

  out.edited = apply_mix(w0, delta, split, lambdas);
  out.report.k = split.k;
  out.report.rho = split.rho;
  out.report.cos2_alpha = split.cos2_alpha;
  out.report.lambda_low = lambdas.low;
  out.report.lambda_high = lambdas.high;
  out.report.energy_total = split.energy_total;
  out.report.status = LayerStatus::Edited;
  return out;
}

/// How rank-0/1 tensors are treated: copied from the fine-tuned model, or
/// interpolated (1 − λ)·pre + λ·ft.
struct VectorPolicy {
  enum class Kind { PassThrough, Wise };
  Kind kind = Kind::PassThrough;
  double lambda = 1.0;

  static VectorPolicy pass_through() { return {}; }
  static VectorPolicy wise(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorCode::OutOfRange, "vector interpolation λ must lie in [0, 1]");
    return {Kind::Wise, lambda};
  }

  /// Accepts "pass" or "wise:<λ>".
  static VectorPolicy parse(std::string_view text) {
    if (text == "pass") return pass_through();
    constexpr std::string_view prefix = "wise:";
    if (text.starts_with(prefix)) {
      const auto num = text.substr(prefix.size());
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
      if (ec != std::errc{} || ptr != num.data() + num.size()) {
        fail(ErrorCode::InvalidArgument, "cannot parse λ in '" + std::string(text) + "'");
      }
      return wise(v);
    }
    fail(ErrorCode::InvalidArgument, "vector policy must be 'pass' or 'wise:<λ>', got '" + std::string(text) + "'");
  }

  [[nodiscard]] std::string to_string() const {
    if (kind == Kind::PassThrough) return "pass";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, lambda);
    return "wise:" + std::string(buf, ptr);
  }
};

struct EditOptions {
  RankRule rule = RankRule::effective();
  VectorPolicy vectors = VectorPolicy::pass_through();
  Parallelism parallelism{};
};

struct EditResult {
  Checkpoint edited;
  EditReport report;
};

inline EditResult edit_checkpoint(const Checkpoint& pre, const Checkpoint& ft, const EditOptions& opts = {}) {
  validate_compatibility({&pre, &ft});

  std::vector<const std::string*> names;
  names.reserve(ft.tensors.size());
  for (const auto& [name, t] : ft.tensors) names.push_back(&name);

  std::vector<Tensor> tensors(names.size());
  std::vector<LayerEditReport> reports(names.size());

  parallel_for(names.size(), opts.parallelism, [&](std::size_t i) {
    const std::string& name = *names[i];
    const Tensor& tp = pre.tensors.at(name);
    const Tensor& tf = ft.tensors.at(name);
    const auto ms = matrix_shape(tf.shape());
    if (!ms) {
      LayerEditReport rep;
      rep.name = name;
      rep.status = LayerStatus::PassThroughVector;
      if (opts.vectors.kind == VectorPolicy::Kind::Wise) {
        const auto a = tp.to_f64();
        const auto b = tf.to_f64();
        std::vector<double> mixed(a.size());
        const double lam = opts.vectors.lambda;
        for (std::size_t j = 0; j < a.size(); ++j) mixed[j] = (1.0 - lam) * a[j] + lam * b[j];
        tensors[i] = Tensor::from_f64(tf.dtype(), tf.shape(), mixed);
        rep.lambda_low = rep.lambda_high = lam;
      } else {
        tensors[i] = tf;
        rep.lambda_low = rep.lambda_high = 1.0;
      }
      reports[i] = std::move(rep);
      return;
    }
    const auto a = tp.to_f64();
    const auto b = tf.to_f64();
    auto result = edit_layer(to_matrix(a, *ms), to_matrix(b, *ms), opts.rule, name);
    if (result.report.status == LayerStatus::DegenerateZeroDelta) {
      tensors[i] = tf;
    } else {
      tensors[i] = Tensor::from_f64(tf.dtype(), tf.shape(), to_row_major(result.edited));
    }
    reports[i] = std::move(result.report);
  });

  EditResult out;
  out.edited.metadata = pre.metadata;
  for (std::size_t i = 0; i < names.size(); ++i) out.edited.tensors.emplace(*names[i], std::move(tensors[i]));
  out.report.layers = std::move(reports);
  out.report.rank_rule = opts.rule;
  out.report.vector_policy = opts.vectors.to_string();
  return out;
}

}  // namespace monosoup
