#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expo {

enum class DType { F32, F16, BF16 };

constexpr std::size_t byte_width(DType dt) {
  switch (dt) {
    case DType::F32: return 4;
    case DType::F16: return 2;
    case DType::BF16: return 2;
  }
  return 0;
}

std::string_view dtype_name(DType dt);

// Throws FormatError on unknown dtype strings.
DType parse_dtype(std::string_view name);

// Half/bfloat16 conversions. Widening is exact; narrowing rounds to
// nearest-even and keeps NaN payloads where they survive the mantissa cut.
float f32_from_f16(std::uint16_t bits);
std::uint16_t f16_from_f32(float value);
float f32_from_bf16(std::uint16_t bits);
std::uint16_t bf16_from_f32(float value);

// Raw little-endian tensor bytes -> f32 values and back.
void widen_bytes(std::span<const std::byte> raw, DType dt, std::vector<float>& out);
void quantize_values(std::span<const float> values, DType dt, std::vector<std::byte>& out);

}  // namespace expo
