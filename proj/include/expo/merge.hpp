#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>

#include "expo/archive.hpp"

namespace expo {

enum class CastPolicy { PreserveInput, ForceF32 };

struct Interpolate {
  double gamma = 0.5;
};
struct Extrapolate {
  double alpha = 0.3;
};
struct LinComb {
  double c0 = 0.0;
  double c1 = 1.0;
};

// out = c0 * base + c1 * tuned, per tensor. Interpolate(g) is LinComb(1-g, g);
// Extrapolate(a) is LinComb(-a, 1+a).
struct MergeSpec {
  std::variant<Interpolate, Extrapolate, LinComb> mode = LinComb{};
  CastPolicy cast = CastPolicy::PreserveInput;

  LinComb coefficients() const;
};

struct MergeStats {
  int peak_resident_buffers = 0;  // tensor-sized buffers alive at once
  std::uint64_t tensors = 0;
  std::uint64_t elements = 0;
};

// Streams tensor by tensor: at most one tensor from each input plus one
// output staging buffer are resident at any time. Returns the written
// archive reopened for reading.
TensorArchive lincomb(const TensorArchive& base, const TensorArchive& tuned,
                      const MergeSpec& spec, const std::filesystem::path& out,
                      MergeStats* stats = nullptr);

TensorArchive extrapolate(const TensorArchive& base, const TensorArchive& tuned, double alpha,
                          const std::filesystem::path& out,
                          CastPolicy cast = CastPolicy::PreserveInput,
                          MergeStats* stats = nullptr);

TensorArchive interpolate(const TensorArchive& base, const TensorArchive& tuned, double gamma,
                          const std::filesystem::path& out,
                          CastPolicy cast = CastPolicy::PreserveInput,
                          MergeStats* stats = nullptr);

}  // namespace expo
