#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "monosoup/dtype.hpp"
#include "monosoup/error.hpp"

namespace monosoup {

using Shape = std::vector<std::int64_t>;

inline std::int64_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major tensor stored in its on-disk element type. Arithmetic
/// goes through `to_f64` / `from_f64`.
class Tensor {
 public:
  Tensor() = default;

  Tensor(DType dtype, Shape shape, std::vector<std::byte> data)
      : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {
    for (auto e : shape_) {
      if (e < 0) fail(ErrorCode::InvalidArgument, "negative extent in shape " + shape_string(shape_));
    }
    if (data_.size() != static_cast<std::size_t>(element_count(shape_)) * element_size(dtype_)) {
      fail(ErrorCode::InvalidArgument, "buffer of " + std::to_string(data_.size()) +
                                           " bytes does not match shape " + shape_string(shape_) +
                                           " of " + std::string(dtype_name(dtype_)));
    }
  }

  /// Encodes float64 values into `dtype` with round-to-nearest-even.
  static Tensor from_f64(DType dtype, Shape shape, std::span<const double> values) {
    if (static_cast<std::int64_t>(values.size()) != element_count(shape)) {
      fail(ErrorCode::InvalidArgument, "value count does not match shape " + shape_string(shape));
    }
    std::vector<std::byte> buf(values.size() * element_size(dtype));
    for (std::size_t i = 0; i < values.size(); ++i) {
      store_element(dtype, buf.data() + i * element_size(dtype), values[i]);
    }
    return Tensor(dtype, std::move(shape), std::move(buf));
  }

  [[nodiscard]] std::vector<double> to_f64() const {
    std::vector<double> out(static_cast<std::size_t>(numel()));
    const auto stride = element_size(dtype_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_element(dtype_, data_.data() + i * stride);
    return out;
  }

  [[nodiscard]] DType dtype() const noexcept { return dtype_; }
  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::int64_t numel() const { return element_count(shape_); }
  [[nodiscard]] std::span<const std::byte> bytes() const noexcept { return data_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  DType dtype_ = DType::F32;
  Shape shape_;
  std::vector<std::byte> data_ = std::vector<std::byte>(4);
};

/// Named tensors plus free-form string metadata. std::map gives the
/// lexicographic iteration order every writer and merge relies on.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct SchemaEntry {
  std::string name;
  Shape shape;
  DType dtype;

  friend bool operator==(const SchemaEntry&, const SchemaEntry&) = default;
};

struct LayerSchema {
  std::vector<SchemaEntry> entries;

  friend bool operator==(const LayerSchema&, const LayerSchema&) = default;
};

inline LayerSchema schema_of(const Checkpoint& c) {
  LayerSchema s;
  s.entries.reserve(c.tensors.size());
  for (const auto& [name, t] : c.tensors) s.entries.push_back({name, t.shape(), t.dtype()});
  return s;
}

/// Checks that every checkpoint has the same tensor names, shapes and
/// dtypes, and returns the shared schema.
inline LayerSchema validate_compatibility(std::span<const Checkpoint* const> ckpts) {
  if (ckpts.empty()) fail(ErrorCode::InvalidArgument, "validate_compatibility needs at least one checkpoint");
  const Checkpoint& ref = *ckpts.front();
  for (std::size_t c = 1; c < ckpts.size(); ++c) {
    const Checkpoint& other = *ckpts[c];
    for (const auto& [name, t] : ref.tensors) {
      auto it = other.tensors.find(name);
      if (it == other.tensors.end()) {
        throw SchemaMismatchError(name, "missing from checkpoint #" + std::to_string(c));
      }
      if (it->second.shape() != t.shape()) {
        throw SchemaMismatchError(name, "shape " + shape_string(t.shape()) + " vs " +
                                            shape_string(it->second.shape()) + " in checkpoint #" +
                                            std::to_string(c));
      }
      if (it->second.dtype() != t.dtype()) {
        throw SchemaMismatchError(name, "dtype " + std::string(dtype_name(t.dtype())) + " vs " +
                                            std::string(dtype_name(it->second.dtype())) +
                                            " in checkpoint #" + std::to_string(c));
      }
    }
    for (const auto& [name, t] : other.tensors) {
      if (!ref.tensors.contains(name)) {
        throw SchemaMismatchError(name, "present in checkpoint #" + std::to_string(c) +
                                            " but missing from checkpoint #0");
      }
    }
  }
  return schema_of(ref);
}

inline LayerSchema validate_compatibility(std::initializer_list<const Checkpoint*> ckpts) {
  return validate_compatibility(std::span<const Checkpoint* const>(ckpts.begin(), ckpts.size()));
}

inline LayerSchema validate_compatibility(std::span<const Checkpoint> ckpts) {
  std::vector<const Checkpoint*> ptrs;
  ptrs.reserve(ckpts.size());
  for (const auto& c : ckpts) ptrs.push_back(&c);
  return validate_compatibility(std::span<const Checkpoint* const>(ptrs));
}

}  // namespace monosoup
