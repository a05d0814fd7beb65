#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "expo/archive.hpp"
#include "expo/merge.hpp"
#include "json.hpp"

namespace expo {

// Neumaier-compensated accumulator; keeps the Table-1-scale normalized norms
// (~1e-6 over billions of elements) out of naive-summation noise.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// sqrt(sum of squares), accumulated in compensated double precision.
// Throws FormatError on non-finite elements, naming the tensor when given.
double frobenius_norm(std::span<const float> values, std::string_view name = {});
double frobenius_norm(std::span<const double> values, std::string_view name = {});

// frobenius / sqrt(element count); the RMS of the elements. Empty -> 0.
double normalized_frobenius_norm(std::span<const float> values, std::string_view name = {});
double normalized_frobenius_norm(std::span<const double> values, std::string_view name = {});

struct NormRow {
  std::string name;
  double frobenius = 0.0;
  double normalized = 0.0;
  std::uint64_t elements = 0;
};

struct NormReport {
  std::vector<NormRow> rows;
  double global_frobenius = 0.0;
  double global_normalized = 0.0;
  std::uint64_t total_elements = 0;

  // name,frobenius,normalized,elements
  void write_csv(std::ostream& os) const;
  nlohmann::json aggregate_json() const;
};

// Per-tensor and aggregate Frobenius norms of a - b, streamed one tensor at
// a time. Archives must be compatible.
NormReport norm_report(const TensorArchive& a, const TensorArchive& b,
                       MergeStats* stats = nullptr);

}  // namespace expo
