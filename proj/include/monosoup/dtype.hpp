#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <string_view>

namespace monosoup {

enum class DType : std::uint8_t { F16, BF16, F32, F64 };

constexpr std::size_t element_size(DType t) noexcept {
  switch (t) {
    case DType::F16:
    case DType::BF16: return 2;
    case DType::F32: return 4;
    case DType::F64: return 8;
  }
  return 0;
}

constexpr std::string_view dtype_name(DType t) noexcept {
  switch (t) {
    case DType::F16: return "F16";
    case DType::BF16: return "BF16";
    case DType::F32: return "F32";
    case DType::F64: return "F64";
  }
  return "?";
}

constexpr std::optional<DType> parse_dtype(std::string_view s) noexcept {
  if (s == "F16") return DType::F16;
  if (s == "BF16") return DType::BF16;
  if (s == "F32") return DType::F32;
  if (s == "F64") return DType::F64;
  return std::nullopt;
}

namespace detail {

// Binary16-like formats described by mantissa bits and exponent bias.
struct HalfFormat {
  int mantissa_bits;
  int exponent_bits;
  [[nodiscard]] constexpr int bias() const { return (1 << (exponent_bits - 1)) - 1; }
  [[nodiscard]] constexpr int min_normal_exp() const { return 1 - bias(); }
  [[nodiscard]] constexpr int max_exp() const { return bias(); }
};

inline constexpr HalfFormat kF16{10, 5};
inline constexpr HalfFormat kBF16{7, 8};

inline double decode_half(std::uint16_t bits, HalfFormat f) {
  const bool negative = (bits >> 15) & 1u;
  const unsigned exp_field = (bits >> f.mantissa_bits) & ((1u << f.exponent_bits) - 1);
  const unsigned mant = bits & ((1u << f.mantissa_bits) - 1);
  const unsigned exp_max = (1u << f.exponent_bits) - 1;
  double value;
  if (exp_field == exp_max) {
    value = mant == 0 ? std::numeric_limits<double>::infinity()
                      : std::numeric_limits<double>::quiet_NaN();
  } else if (exp_field == 0) {
    value = std::ldexp(static_cast<double>(mant), f.min_normal_exp() - f.mantissa_bits);
  } else {
    value = std::ldexp(static_cast<double>(mant | (1u << f.mantissa_bits)),
                       static_cast<int>(exp_field) - f.bias() - f.mantissa_bits);
  }
  return negative ? -value : value;
}

// Round-to-nearest-even straight from double; going through float first
// would double-round.
inline std::uint16_t encode_half(double x, HalfFormat f) {
  const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
  const std::uint16_t exp_max = static_cast<std::uint16_t>((1u << f.exponent_bits) - 1);
  const std::uint16_t inf_bits = static_cast<std::uint16_t>(exp_max << f.mantissa_bits);
  if (std::isnan(x)) {
    return static_cast<std::uint16_t>(sign | inf_bits | (1u << (f.mantissa_bits - 1)));
  }
  const double a = std::fabs(x);
  if (std::isinf(a)) return sign | inf_bits;
  if (a == 0.0) return sign;

  int e = std::ilogb(a);
  if (e < f.min_normal_exp()) e = f.min_normal_exp();
  const int quantum_exp = e - f.mantissa_bits;
  // Scaling by a power of two is exact; nearbyint uses the default
  // round-half-even mode.
  const double q = std::nearbyint(std::ldexp(a, -quantum_exp));
  const double r = std::ldexp(q, quantum_exp);

  const double max_finite =
      std::ldexp(static_cast<double>((2u << f.mantissa_bits) - 1), f.max_exp() - f.mantissa_bits);
  if (r > max_finite) return sign | inf_bits;

  int re = std::ilogb(r);
  if (re < f.min_normal_exp()) {
    const auto mant = static_cast<std::uint16_t>(std::ldexp(r, f.mantissa_bits - f.min_normal_exp()));
    return sign | mant;
  }
  const auto exp_field = static_cast<std::uint16_t>(re + f.bias());
  const auto mant = static_cast<std::uint16_t>(
      static_cast<std::uint32_t>(std::ldexp(r, f.mantissa_bits - re)) & ((1u << f.mantissa_bits) - 1));
  return static_cast<std::uint16_t>(sign | (exp_field << f.mantissa_bits) | mant);
}

template <typename T>
T load_le(const std::byte* p) noexcept {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store_le(std::byte* p, T v) noexcept {
  std::memcpy(p, &v, sizeof(T));
}

}  // namespace detail

inline double f16_to_double(std::uint16_t bits) { return detail::decode_half(bits, detail::kF16); }
inline double bf16_to_double(std::uint16_t bits) { return detail::decode_half(bits, detail::kBF16); }
inline std::uint16_t double_to_f16(double x) { return detail::encode_half(x, detail::kF16); }
inline std::uint16_t double_to_bf16(double x) { return detail::encode_half(x, detail::kBF16); }

/// Decodes one little-endian element of type `t` at `p`.
inline double load_element(DType t, const std::byte* p) {
  switch (t) {
    case DType::F16: return f16_to_double(detail::load_le<std::uint16_t>(p));
    case DType::BF16: return bf16_to_double(detail::load_le<std::uint16_t>(p));
    case DType::F32: return static_cast<double>(detail::load_le<float>(p));
    case DType::F64: return detail::load_le<double>(p);
  }
  return 0.0;
}

/// Encodes `x` as type `t` with round-to-nearest-even.
inline void store_element(DType t, std::byte* p, double x) {
  switch (t) {
    case DType::F16: detail::store_le(p, double_to_f16(x)); break;
    case DType::BF16: detail::store_le(p, double_to_bf16(x)); break;
    case DType::F32: detail::store_le(p, static_cast<float>(x)); break;
    case DType::F64: detail::store_le(p, x); break;
  }
}

}  // namespace monosoup
