#include "expo/norms.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "expo/errors.hpp"

namespace expo {

namespace {

template <typename T>
double sum_of_squares(std::span<const T> values, std::string_view name) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = static_cast<double>(values[i]);
    if (!std::isfinite(v)) {
      std::string where = name.empty() ? std::string("tensor") : "tensor \"" + std::string(name) + "\"";
      throw FormatError(where + " has a non-finite element at index " + std::to_string(i));
    }
    acc.add(v * v);
  }
  return acc.value();
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double frobenius_norm(std::span<const float> values, std::string_view name) {
  return std::sqrt(sum_of_squares(values, name));
}

double frobenius_norm(std::span<const double> values, std::string_view name) {
  return std::sqrt(sum_of_squares(values, name));
}

double normalized_frobenius_norm(std::span<const float> values, std::string_view name) {
  if (values.empty()) return 0.0;
  return std::sqrt(sum_of_squares(values, name) / static_cast<double>(values.size()));
}

double normalized_frobenius_norm(std::span<const double> values, std::string_view name) {
  if (values.empty()) return 0.0;
  return std::sqrt(sum_of_squares(values, name) / static_cast<double>(values.size()));
}

void NormReport::write_csv(std::ostream& os) const {
  os << "name,frobenius,normalized,elements\n";
  for (const NormRow& row : rows) {
    os << row.name << ',' << format_value(row.frobenius) << ',' << format_value(row.normalized)
       << ',' << row.elements << '\n';
  }
}

nlohmann::json NormReport::aggregate_json() const {
  return nlohmann::json{{"frobenius", global_frobenius},
                        {"normalized", global_normalized},
                        {"elements", total_elements},
                        {"tensors", rows.size()}};
}

NormReport norm_report(const TensorArchive& a, const TensorArchive& b, MergeStats* stats) {
  require_compatible(a, b);
  NormReport report;
  CompensatedSum global_sq;
  int live = 0;
  auto bump = [&](int delta) {
    live += delta;
    if (stats && live > stats->peak_resident_buffers) stats->peak_resident_buffers = live;
  };

  for (const std::string& name : a.names()) {
    std::vector<float> va;
    bump(+1);
    a.read_into(name, va);
    double sq = 0.0;
    {
      std::vector<float> vb;
      bump(+1);
      b.read_into(name, vb);
      CompensatedSum acc;
      for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = static_cast<double>(va[i]) - static_cast<double>(vb[i]);
        if (!std::isfinite(d)) {
          throw FormatError("tensor \"" + name + "\" difference has a non-finite element at index " +
                            std::to_string(i));
        }
        acc.add(d * d);
      }
      sq = acc.value();
      bump(-1);
    }
    bump(-1);

    NormRow row;
    row.name = name;
    row.elements = va.size();
    row.frobenius = std::sqrt(sq);
    row.normalized = va.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(va.size()));
    global_sq.add(sq);
    report.total_elements += row.elements;
    report.rows.push_back(std::move(row));
    if (stats) ++stats->tensors;
  }

  report.global_frobenius = std::sqrt(global_sq.value());
  report.global_normalized =
      report.total_elements == 0
          ? 0.0
          : std::sqrt(global_sq.value() / static_cast<double>(report.total_elements));
  if (stats) stats->elements = report.total_elements;
  return report;
}

}  // namespace expo
