#pragma once

// Seeded synthetic checkpoints for fixtures, demos and scale tests. Nothing
// here is used by the merge or edit paths.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "monosoup/spectral.hpp"
#include "monosoup/tensor.hpp"

namespace monosoup::synthetic {

using Rng = std::mt19937_64;

inline std::vector<double> gaussian(Rng& rng, std::size_t n, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Tensor gaussian_tensor(Rng& rng, const Shape& shape, DType dtype, double scale) {
  return Tensor::from_f64(dtype, shape, gaussian(rng, static_cast<std::size_t>(element_count(shape)), scale));
}

/// Layer names and shapes of a ViT-style image encoder. width 768 with 12
/// blocks lands at about 88M parameters.
inline std::vector<std::pair<std::string, Shape>> vit_layout(int blocks, std::int64_t width, std::int64_t patch = 32,
                                                              std::int64_t tokens = 50, std::int64_t embed_dim = 512) {
  std::vector<std::pair<std::string, Shape>> out;
  out.push_back({"visual.conv1.weight", {width, 3, patch, patch}});
  out.push_back({"visual.class_embedding", {width}});
  out.push_back({"visual.positional_embedding", {tokens, width}});
  out.push_back({"visual.ln_pre.weight", {width}});
  out.push_back({"visual.ln_pre.bias", {width}});
  for (int b = 0; b < blocks; ++b) {
    const std::string p = "visual.transformer.resblocks." + std::to_string(b) + ".";
    out.push_back({p + "ln_1.weight", {width}});
    out.push_back({p + "ln_1.bias", {width}});
    out.push_back({p + "attn.in_proj_weight", {3 * width, width}});
    out.push_back({p + "attn.in_proj_bias", {3 * width}});
    out.push_back({p + "attn.out_proj.weight", {width, width}});
    out.push_back({p + "attn.out_proj.bias", {width}});
    out.push_back({p + "ln_2.weight", {width}});
    out.push_back({p + "ln_2.bias", {width}});
    out.push_back({p + "mlp.c_fc.weight", {4 * width, width}});
    out.push_back({p + "mlp.c_fc.bias", {4 * width}});
    out.push_back({p + "mlp.c_proj.weight", {width, 4 * width}});
    out.push_back({p + "mlp.c_proj.bias", {width}});
  }
  out.push_back({"visual.ln_post.weight", {width}});
  out.push_back({"visual.ln_post.bias", {width}});
  out.push_back({"visual.proj", {width, embed_dim}});
  return out;
}

inline Checkpoint random_checkpoint(const std::vector<std::pair<std::string, Shape>>& layout, std::uint64_t seed,
                                    DType dtype = DType::F32, double scale = 0.02) {
  Rng rng(seed);
  Checkpoint c;
  for (const auto& [name, shape] : layout) c.tensors.emplace(name, gaussian_tensor(rng, shape, dtype, scale));
  return c;
}

/// pre + (low-rank dominant update + dense small noise) on every matrix,
/// plus a small shift on vectors. Mimics the shape of a fine-tuning delta:
/// a few strong directions over a flat tail.
inline Checkpoint fine_tune(const Checkpoint& pre, std::uint64_t seed, int dominant_rank = 8,
                            double dominant_scale = 1e-2, double noise_scale = 1e-3) {
  Rng rng(seed);
  Checkpoint ft;
  ft.metadata = pre.metadata;
  for (const auto& [name, t] : pre.tensors) {
    auto values = t.to_f64();
    if (const auto ms = matrix_shape(t.shape())) {
      const auto r = std::min<Eigen::Index>(dominant_rank, std::min(ms->rows, ms->cols));
      const auto a = gaussian(rng, static_cast<std::size_t>(ms->rows * r), dominant_scale);
      const auto b = gaussian(rng, static_cast<std::size_t>(r * ms->cols), 1.0 / std::sqrt(static_cast<double>(ms->cols)));
      const Matrix low_rank = Eigen::Map<const RowMajorMatrix>(a.data(), ms->rows, r) *
                              Eigen::Map<const RowMajorMatrix>(b.data(), r, ms->cols);
      const auto noise = gaussian(rng, values.size(), noise_scale / std::sqrt(static_cast<double>(ms->cols)));
      const auto lr = to_row_major(low_rank);
      for (std::size_t i = 0; i < values.size(); ++i) values[i] += lr[i] + noise[i];
    } else {
      const auto noise = gaussian(rng, values.size(), noise_scale);
      for (std::size_t i = 0; i < values.size(); ++i) values[i] += noise[i];
    }
    ft.tensors.emplace(name, Tensor::from_f64(t.dtype(), t.shape(), values));
  }
  return ft;
}

}  // namespace monosoup::synthetic
