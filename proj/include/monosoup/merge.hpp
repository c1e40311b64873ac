#pragma once

// Multi-checkpoint baselines: task vectors, layer-wise alignment, uniform
// soup, Model Stock, Wise-FT, LiNeS, validation-based greedy soup and
// similarity-filtered greedy soup (SFGS).

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "monosoup/blocks.hpp"
#include "monosoup/error.hpp"
#include "monosoup/parallel.hpp"
#include "monosoup/tensor.hpp"

namespace monosoup {

struct DeltaTensor {
  Shape shape;
  std::vector<double> values;
};

/// Elementwise ft − pre, kept in float64.
struct TaskVector {
  std::map<std::string, DeltaTensor> deltas;
};

inline TaskVector task_vector(const Checkpoint& pre, const Checkpoint& ft) {
  validate_compatibility({&pre, &ft});
  TaskVector tv;
  for (const auto& [name, tf] : ft.tensors) {
    auto a = pre.tensors.at(name).to_f64();
    auto b = tf.to_f64();
    for (std::size_t i = 0; i < a.size(); ++i) b[i] -= a[i];
    tv.deltas.emplace(name, DeltaTensor{tf.shape(), std::move(b)});
  }
  return tv;
}

/// Norms below this make a layer's cosine undefined; it is reported as 0.
inline constexpr double kZeroNormThreshold = 1e-24;

struct AlignmentProfile {
  std::map<std::string, double> per_layer;
  /// Mean over layers where both task vectors have non-negligible norm.
  double mean = 0.0;
  std::vector<std::string> zero_norm_layers;
};

/// Cosine of two flattened vectors, clamped to [−1, 1]. nullopt when either
/// norm is negligible. sqrt(|a|²|b|²) keeps cos(a, a) at exactly 1.
inline std::optional<double> flat_cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (std::sqrt(na) < kZeroNormThreshold || std::sqrt(nb) < kZeroNormThreshold) return std::nullopt;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

inline AlignmentProfile layer_cosine(const TaskVector& a, const TaskVector& b) {
  AlignmentProfile prof;
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& [name, da] : a.deltas) {
    auto it = b.deltas.find(name);
    if (it == b.deltas.end()) throw SchemaMismatchError(name, "missing from second task vector");
    if (it->second.shape != da.shape) throw SchemaMismatchError(name, "task vector shapes differ");
    const auto c = flat_cosine(da.values, it->second.values);
    if (c) {
      prof.per_layer[name] = *c;
      sum += *c;
      ++counted;
    } else {
      prof.per_layer[name] = 0.0;
      prof.zero_norm_layers.push_back(name);
    }
  }
  if (b.deltas.size() != a.deltas.size()) {
    for (const auto& [name, db] : b.deltas) {
      if (!a.deltas.contains(name)) throw SchemaMismatchError(name, "missing from first task vector");
    }
  }
  prof.mean = counted ? sum / static_cast<double>(counted) : 0.0;
  return prof;
}

namespace detail {

// Applies fn(name, pre_values, ft_values) -> merged values per tensor and
// re-encodes in the fine-tuned tensor's dtype.
template <typename Fn>
Checkpoint map_pair(const Checkpoint& pre, const Checkpoint& ft, Fn&& fn) {
  validate_compatibility({&pre, &ft});
  Checkpoint out;
  out.metadata = pre.metadata;
  for (const auto& [name, tf] : ft.tensors) {
    const auto a = pre.tensors.at(name).to_f64();
    const auto b = tf.to_f64();
    out.tensors.emplace(name, Tensor::from_f64(tf.dtype(), tf.shape(), fn(name, a, b)));
  }
  return out;
}

}  // namespace detail

/// (1 − λ)·pre + λ·ft.
inline Checkpoint wise_ft(const Checkpoint& pre, const Checkpoint& ft, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorCode::OutOfRange, "Wise-FT λ must lie in [0, 1]");
  return detail::map_pair(pre, ft, [lambda](const std::string&, const std::vector<double>& a,
                                            const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - lambda) * a[i] + lambda * b[i];
    return out;
  });
}

/// Per-depth scale α + (β − α)·ℓ/(L − 1) for ℓ = 0..L−1; β when L = 1.
inline double lines_scale(int depth, int count, double alpha, double beta) {
  if (count <= 1) return beta;
  return alpha + (beta - alpha) * static_cast<double>(depth) / static_cast<double>(count - 1);
}

/// pre + s_ℓ·τ with a linear depth schedule from α (shallowest) to β
/// (deepest). Blocks are auto-detected unless `blocks` is supplied.
inline Checkpoint lines(const Checkpoint& pre, const Checkpoint& ft, double alpha, double beta,
                        const std::optional<BlockAssignment>& blocks = std::nullopt) {
  if (!(alpha >= 0.0 && alpha <= beta && beta <= 1.0)) {
    fail(ErrorCode::OutOfRange, "LiNeS needs 0 <= alpha <= beta <= 1");
  }
  validate_compatibility({&pre, &ft});
  const BlockAssignment assign = blocks ? *blocks : detect_blocks(ft);
  return detail::map_pair(pre, ft, [&](const std::string& name, const std::vector<double>& a,
                                       const std::vector<double>& b) {
    auto it = assign.depth.find(name);
    if (it == assign.depth.end()) fail(ErrorCode::UnknownBlockStructure, "no block for tensor '" + name + "'");
    const double s = lines_scale(it->second, assign.count, alpha, beta);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * (b[i] - a[i]);
    return out;
  });
}

struct ModelStockResult {
  Checkpoint merged;
  AlignmentProfile alignment;
  std::map<std::string, double> lambdas;
  /// Layers whose raw λ fell outside [0, 1] (negative alignment).
  std::vector<std::string> clamped_layers;
};

/// λ = 2c / (1 + c), clamped to [0, 1].
inline double model_stock_lambda(double cos_alpha) {
  if (cos_alpha <= -1.0 + 1e-12) fail(ErrorCode::DegenerateAngle, "cos alpha too close to -1");
  return std::clamp(2.0 * cos_alpha / (1.0 + cos_alpha), 0.0, 1.0);
}

/// Per layer: W0 + λ·(τ1 + τ2)/2 with λ from the layer's task-vector cosine.
inline ModelStockResult model_stock(const Checkpoint& pre, const Checkpoint& ft1, const Checkpoint& ft2) {
  validate_compatibility({&pre, &ft1, &ft2});
  const TaskVector t1 = task_vector(pre, ft1);
  const TaskVector t2 = task_vector(pre, ft2);
  ModelStockResult res;
  res.alignment = layer_cosine(t1, t2);
  res.merged.metadata = pre.metadata;
  for (const auto& [name, tp] : pre.tensors) {
    const double c = res.alignment.per_layer.at(name);
    if (c <= -1.0 + 1e-12) {
      fail(ErrorCode::DegenerateAngle, "layer '" + name + "': task vectors are antipodal");
    }
    const double raw = 2.0 * c / (1.0 + c);
    const double lambda = model_stock_lambda(c);
    if (raw < 0.0 || raw > 1.0) res.clamped_layers.push_back(name);
    res.lambdas[name] = lambda;
    const auto w0 = tp.to_f64();
    const auto& d1 = t1.deltas.at(name).values;
    const auto& d2 = t2.deltas.at(name).values;
    std::vector<double> out(w0.size());
    for (std::size_t i = 0; i < w0.size(); ++i) out[i] = w0[i] + lambda * ((d1[i] + d2[i]) / 2.0);
    res.merged.tensors.emplace(name, Tensor::from_f64(ft1.tensors.at(name).dtype(), tp.shape(), out));
  }
  return res;
}

struct Candidate {
  std::string id;
  Checkpoint ckpt;
};

/// Fine-tuned candidates sharing one pre-trained model. `ranking` (id ->
/// score, higher first) sets the visiting order of the greedy procedures.
struct CandidatePool {
  Checkpoint pre;
  std::vector<Candidate> candidates;
  std::optional<std::map<std::string, double>> ranking;

  /// Candidate indices by descending score; ties keep pool order.
  [[nodiscard]] std::vector<std::size_t> ranked_order() const {
    if (!ranking) fail(ErrorCode::InvalidArgument, "candidate pool has no ranking");
    std::vector<std::size_t> idx(candidates.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (const auto& c : candidates) {
      if (!ranking->contains(c.id)) fail(ErrorCode::InvalidArgument, "no ranking score for candidate '" + c.id + "'");
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return ranking->at(candidates[a].id) > ranking->at(candidates[b].id);
    });
    return idx;
  }

  [[nodiscard]] const Candidate& find(const std::string& id) const {
    for (const auto& c : candidates) {
      if (c.id == id) return c;
    }
    fail(ErrorCode::InvalidArgument, "no candidate with id '" + id + "'");
  }
};

/// Elementwise mean of the given checkpoints. Inputs are summed in id order,
/// so any permutation of the same set gives bit-identical output.
inline Checkpoint uniform_soup(std::vector<const Candidate*> members) {
  if (members.empty()) fail(ErrorCode::EmptyPool, "cannot average an empty set of checkpoints");
  std::sort(members.begin(), members.end(), [](const Candidate* a, const Candidate* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i]->id == members[i - 1]->id) {
      fail(ErrorCode::InvalidArgument, "duplicate candidate id '" + members[i]->id + "'");
    }
  }
  std::vector<const Checkpoint*> ckpts;
  for (const auto* m : members) ckpts.push_back(&m->ckpt);
  validate_compatibility(std::span<const Checkpoint* const>(ckpts));

  const Checkpoint& first = members.front()->ckpt;
  const double count = static_cast<double>(members.size());
  Checkpoint out;
  out.metadata = first.metadata;
  for (const auto& [name, t0] : first.tensors) {
    std::vector<double> acc(static_cast<std::size_t>(t0.numel()), 0.0);
    for (const auto* m : members) {
      const auto v = m->ckpt.tensors.at(name).to_f64();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    }
    for (auto& x : acc) x /= count;
    out.tensors.emplace(name, Tensor::from_f64(t0.dtype(), t0.shape(), acc));
  }
  return out;
}

inline Checkpoint uniform_soup(const CandidatePool& pool) {
  if (pool.candidates.empty()) fail(ErrorCode::EmptyPool, "candidate pool is empty");
  std::vector<const Candidate*> members;
  for (const auto& c : pool.candidates) members.push_back(&c);
  return uniform_soup(std::move(members));
}

/// Comma-joined sorted ids: the key a scores file uses for a candidate set.
inline std::string id_set_digest(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ",";
    out += ids[i];
  }
  return out;
}

/// Scores a tentative soup. `soup` builds the averaged checkpoint on demand,
/// so table lookups never pay for it.
using Evaluator =
    std::function<double(const std::vector<std::string>& ids, const std::function<const Checkpoint&()>& soup)>;

inline Evaluator scores_table_evaluator(std::map<std::string, double> table) {
  return [table = std::move(table)](const std::vector<std::string>& ids, const auto&) {
    const auto key = id_set_digest(ids);
    auto it = table.find(key);
    if (it == table.end()) fail(ErrorCode::EvaluatorFailure, "scores file has no entry for {" + key + "}");
    if (!std::isfinite(it->second)) fail(ErrorCode::EvaluatorFailure, "non-finite score for {" + key + "}");
    return it->second;
  };
}

struct SelectionStep {
  std::string id;
  double score = 0.0;
  bool accepted = false;
};

struct SelectionResult {
  Checkpoint soup;
  std::vector<std::string> selected;
  std::vector<SelectionStep> trace;
};

/// Visits candidates by ranking; keeps each one iff the tentative soup scores
/// at least as well as the best so far.
inline SelectionResult greedy_soup(const CandidatePool& pool, const Evaluator& eval) {
  if (pool.candidates.empty()) fail(ErrorCode::EmptyPool, "candidate pool is empty");
  const auto order = pool.ranked_order();
  SelectionResult res;
  std::vector<const Candidate*> members;
  double best = 0.0;
  for (std::size_t step = 0; step < order.size(); ++step) {
    const Candidate& c = pool.candidates[order[step]];
    auto tentative = members;
    tentative.push_back(&c);
    std::vector<std::string> ids;
    for (const auto* m : tentative) ids.push_back(m->id);
    std::optional<Checkpoint> built;
    auto provider = [&]() -> const Checkpoint& {
      if (!built) built = uniform_soup(tentative);
      return *built;
    };
    const double score = eval(ids, provider);
    const bool accept = step == 0 || score >= best;
    res.trace.push_back({c.id, score, accept});
    if (accept) {
      members = std::move(tentative);
      best = score;
      res.selected.push_back(c.id);
    }
  }
  res.soup = uniform_soup(members);
  return res;
}

/// Starting from the top-ranked candidate, includes each further candidate
/// iff the mean over current members j of meanlayer-cos(τ, τ_j) is ≥ δ.
inline SelectionResult sfgs(const CandidatePool& pool, double delta, Parallelism par = {}) {
  if (!(delta >= -1.0 && delta <= 1.0)) fail(ErrorCode::OutOfRange, "SFGS threshold must lie in [-1, 1]");
  if (pool.candidates.empty()) fail(ErrorCode::EmptyPool, "candidate pool is empty");
  const auto order = pool.ranked_order();

  std::vector<TaskVector> tvs(pool.candidates.size());
  parallel_for(tvs.size(), par, [&](std::size_t i) { tvs[i] = task_vector(pool.pre, pool.candidates[i].ckpt); });

  SelectionResult res;
  std::vector<std::size_t> members{order.front()};
  res.selected.push_back(pool.candidates[order.front()].id);
  res.trace.push_back({pool.candidates[order.front()].id, 1.0, true});
  for (std::size_t step = 1; step < order.size(); ++step) {
    const std::size_t cand = order[step];
    double sum = 0.0;
    for (std::size_t j : members) sum += layer_cosine(tvs[cand], tvs[j]).mean;
    const double score = sum / static_cast<double>(members.size());
    const bool accept = score >= delta;
    res.trace.push_back({pool.candidates[cand].id, score, accept});
    if (accept) {
      members.push_back(cand);
      res.selected.push_back(pool.candidates[cand].id);
    }
  }
  std::vector<const Candidate*> chosen;
  for (std::size_t j : members) chosen.push_back(&pool.candidates[j]);
  res.soup = uniform_soup(std::move(chosen));
  return res;
}

}  // namespace monosoup
