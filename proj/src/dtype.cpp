#include "expo/dtype.hpp"

#include <bit>
#include <cmath>

#include "expo/errors.hpp"

namespace expo {

std::string_view dtype_name(DType dt) {
  switch (dt) {
    case DType::F32: return "F32";
    case DType::F16: return "F16";
    case DType::BF16: return "BF16";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  if (name == "F32") return DType::F32;
  if (name == "F16") return DType::F16;
  if (name == "BF16") return DType::BF16;
  throw FormatError("unknown dtype string \"" + std::string(name) + "\"");
}

float f32_from_f16(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // subnormal: value = mant * 2^-24, renormalize into f32
      int top = std::bit_width(mant) - 1;
      const std::uint32_t fexp = static_cast<std::uint32_t>(top - 24 + 127);
      const std::uint32_t fmant = (mant << (23 - top)) & 0x7FFFFFu;
      bits = sign | (fexp << 23) | fmant;
    }
  } else if (exp == 31) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

std::uint16_t f16_from_f32(float value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  std::int32_t exp = static_cast<std::int32_t>((bits >> 23) & 0xFFu) - 127;
  std::uint32_t mant = bits & 0x007FFFFFu;

  if (exp == 128) {  // inf / nan
    if (mant == 0) return static_cast<std::uint16_t>(sign | 0x7C00u);
    std::uint32_t payload = mant >> 13;
    if (payload == 0) payload = 0x200u;  // must stay NaN after the cut
    return static_cast<std::uint16_t>(sign | 0x7C00u | payload);
  }
  if (exp > 15) return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow

  std::uint64_t sig = mant;
  if (exp > -127) {
    sig |= 0x00800000u;  // implicit leading one
  } else {
    exp = -126;  // f32 subnormals are far below half range; they round to 0
  }

  // Express the value in units of the target ulp (2^(exp-10) for normals,
  // 2^-24 in the subnormal range), then round to nearest even.
  const std::int32_t ulp_exp = (exp >= -14) ? (exp - 10) : -24;
  const std::int32_t shift = ulp_exp - (exp - 23);  // always > 0
  std::uint32_t q;
  if (shift >= 64) {
    q = 0;
  } else {
    const std::uint64_t floor_part = sig >> shift;
    const std::uint64_t rem = sig & ((std::uint64_t{1} << shift) - 1);
    const std::uint64_t half = std::uint64_t{1} << (shift - 1);
    q = static_cast<std::uint32_t>(floor_part);
    if (rem > half || (rem == half && (q & 1u))) ++q;
  }

  if (exp >= -14) {
    std::uint32_t biased = static_cast<std::uint32_t>(exp + 15);
    if (q == 2048) {  // rounding carried into the next binade
      ++biased;
      q = 1024;
    }
    if (biased >= 31) return static_cast<std::uint16_t>(sign | 0x7C00u);
    return static_cast<std::uint16_t>(sign | (biased << 10) | (q & 0x3FFu));
  }
  // Subnormal result: bits == q, and q == 1024 lands on the smallest normal.
  return static_cast<std::uint16_t>(sign | q);
}

float f32_from_bf16(std::uint16_t bits) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

std::uint16_t bf16_from_f32(float value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t upper = bits >> 16;
  if (std::isnan(value)) {
    std::uint16_t out = static_cast<std::uint16_t>(upper);
    if ((out & 0x7Fu) == 0) out |= 0x40u;  // truncation must not produce inf
    return out;
  }
  const std::uint32_t lower = bits & 0xFFFFu;
  const std::uint32_t round_up =
      (lower > 0x8000u || (lower == 0x8000u && (upper & 1u))) ? 1u : 0u;
  return static_cast<std::uint16_t>(upper + round_up);  // carry into inf is correct
}

namespace {

inline std::uint16_t load_le16(const std::byte* p) {
  return static_cast<std::uint16_t>(std::to_integer<unsigned>(p[0]) |
                                    (std::to_integer<unsigned>(p[1]) << 8));
}

inline std::uint32_t load_le32(const std::byte* p) {
  return std::to_integer<std::uint32_t>(p[0]) |
         (std::to_integer<std::uint32_t>(p[1]) << 8) |
         (std::to_integer<std::uint32_t>(p[2]) << 16) |
         (std::to_integer<std::uint32_t>(p[3]) << 24);
}

inline void store_le16(std::uint16_t v, std::byte* p) {
  p[0] = static_cast<std::byte>(v & 0xFFu);
  p[1] = static_cast<std::byte>((v >> 8) & 0xFFu);
}

inline void store_le32(std::uint32_t v, std::byte* p) {
  p[0] = static_cast<std::byte>(v & 0xFFu);
  p[1] = static_cast<std::byte>((v >> 8) & 0xFFu);
  p[2] = static_cast<std::byte>((v >> 16) & 0xFFu);
  p[3] = static_cast<std::byte>((v >> 24) & 0xFFu);
}

}  // namespace

void widen_bytes(std::span<const std::byte> raw, DType dt, std::vector<float>& out) {
  const std::size_t width = byte_width(dt);
  if (raw.size() % width != 0) throw FormatError("tensor byte length not a multiple of the element width");
  const std::size_t n = raw.size() / width;
  out.resize(n);
  const std::byte* p = raw.data();
  switch (dt) {
    case DType::F32:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(load_le32(p + 4 * i));
      break;
    case DType::F16:
      for (std::size_t i = 0; i < n; ++i) out[i] = f32_from_f16(load_le16(p + 2 * i));
      break;
    case DType::BF16:
      for (std::size_t i = 0; i < n; ++i) out[i] = f32_from_bf16(load_le16(p + 2 * i));
      break;
  }
}

void quantize_values(std::span<const float> values, DType dt, std::vector<std::byte>& out) {
  const std::size_t n = values.size();
  out.resize(n * byte_width(dt));
  std::byte* p = out.data();
  switch (dt) {
    case DType::F32:
      for (std::size_t i = 0; i < n; ++i) store_le32(std::bit_cast<std::uint32_t>(values[i]), p + 4 * i);
      break;
    case DType::F16:
      for (std::size_t i = 0; i < n; ++i) store_le16(f16_from_f32(values[i]), p + 2 * i);
      break;
    case DType::BF16:
      for (std::size_t i = 0; i < n; ++i) store_le16(bf16_from_f32(values[i]), p + 2 * i);
      break;
  }
}

}  // namespace expo
