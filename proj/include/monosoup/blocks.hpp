#pragma once

// Depth structure of a checkpoint, used by depth-scaled merges.
//
// A tensor belongs to block i when its dotted name contains one of the
// repeated-container tokens followed by an integer, e.g.
//
//   visual.transformer.resblocks.7.attn.in_proj_weight   -> 7
//   model.layers.12.mlp.down_proj.weight                 -> 12
//   transformer.h.3.attn.c_attn.weight                   -> 3
//   stages.2.blocks.5.conv_dw.weight                     -> 2 (stage level)
//
// The first such token in the name wins. Tensors outside any block go to the
// shallowest block when their name looks like an input-side parameter
// (embeddings, patch stem, class token, pre-norm) and to the deepest block
// otherwise (final norms, projections, heads).

#include <algorithm>
#include <filesystem>
#include <map>
#include <regex>
#include <set>
#include <string>

#include <json.hpp>

#include "monosoup/error.hpp"
#include "monosoup/tensor.hpp"

namespace monosoup {

struct BlockAssignment {
  /// Tensor name -> 0-based depth ordinal.
  std::map<std::string, int> depth;
  int count = 0;
};

inline const std::regex& block_token_regex() {
  static const std::regex re(
      R"((?:^|\.)(?:resblocks|layers|layer|h|blocks|block|stages|stage|encoder_layers|decoder_layers)\.(\d+)(?:\.|$))");
  return re;
}

inline bool is_input_side_name(const std::string& name) {
  static const std::regex re(
      R"((embed|wte|wpe|patch|conv1|class_embedding|positional_embedding|pos_embed|cls_token|ln_pre|stem|token))",
      std::regex::icase);
  return std::regex_search(name, re);
}

/// Block index token of `name`, or -1 when the tensor is outside any block.
inline long block_index_of(const std::string& name) {
  std::smatch m;
  if (!std::regex_search(name, m, block_token_regex())) return -1;
  return std::stol(m[1].str());
}

namespace detail {

inline BlockAssignment ordinalize(const std::map<std::string, long>& raw) {
  std::set<long> distinct;
  for (const auto& [name, idx] : raw) distinct.insert(idx);
  std::map<long, int> ordinal;
  int next = 0;
  for (long idx : distinct) ordinal[idx] = next++;
  BlockAssignment out;
  out.count = next;
  for (const auto& [name, idx] : raw) out.depth[name] = ordinal.at(idx);
  return out;
}

}  // namespace detail

inline BlockAssignment detect_blocks(const Checkpoint& ckpt) {
  std::map<std::string, long> raw;
  std::set<long> found;
  for (const auto& [name, t] : ckpt.tensors) {
    const long idx = block_index_of(name);
    if (idx >= 0) {
      raw[name] = idx;
      found.insert(idx);
    }
  }
  if (found.empty()) {
    fail(ErrorCode::UnknownBlockStructure,
         "no tensor name matches a known block pattern; supply an explicit block map");
  }
  const long first = *found.begin();
  const long last = *found.rbegin();
  for (const auto& [name, t] : ckpt.tensors) {
    if (raw.contains(name)) continue;
    raw[name] = is_input_side_name(name) ? first : last;
  }
  return detail::ordinalize(raw);
}

/// Block map from a JSON object {tensor name: block index}. Every tensor in
/// `ckpt` must be listed.
inline BlockAssignment blocks_from_map(const Checkpoint& ckpt, const nlohmann::json& map) {
  if (!map.is_object()) fail(ErrorCode::InvalidArgument, "block map must be a JSON object");
  std::map<std::string, long> raw;
  for (const auto& [name, t] : ckpt.tensors) {
    auto it = map.find(name);
    if (it == map.end() || !it->is_number_integer()) {
      fail(ErrorCode::UnknownBlockStructure, "block map has no integer entry for tensor '" + name + "'");
    }
    raw[name] = it->get<long>();
  }
  return detail::ordinalize(raw);
}

}  // namespace monosoup
