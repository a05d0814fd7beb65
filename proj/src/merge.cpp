#include "expo/merge.hpp"

#include <cmath>
#include <stdexcept>

#include "expo/errors.hpp"

namespace expo {

namespace {

// Tracks how many tensor-sized buffers are alive inside one streaming pass.
class BufferGauge {
 public:
  explicit BufferGauge(MergeStats* stats) : stats_(stats) {}

  class Token {
   public:
    explicit Token(BufferGauge& g) : gauge_(&g) { gauge_->enter(); }
    ~Token() {
      if (gauge_) gauge_->leave();
    }
    Token(const Token&) = delete;
    Token& operator=(const Token&) = delete;

   private:
    BufferGauge* gauge_;
  };

  void enter() {
    ++live_;
    if (stats_ && live_ > stats_->peak_resident_buffers) stats_->peak_resident_buffers = live_;
  }
  void leave() { --live_; }

 private:
  MergeStats* stats_;
  int live_ = 0;
};

bool copy_whole_file(const std::filesystem::path& from, const std::filesystem::path& to) {
  std::error_code ec;
  std::filesystem::copy_file(from, to, std::filesystem::copy_options::overwrite_existing, ec);
  return !ec;
}

}  // namespace

LinComb MergeSpec::coefficients() const {
  if (const auto* interp = std::get_if<Interpolate>(&mode)) {
    if (!(interp->gamma >= 0.0 && interp->gamma <= 1.0)) {
      throw std::invalid_argument("interpolation gamma must lie in [0,1], got " +
                                  std::to_string(interp->gamma) +
                                  " (use extrapolate for gamma > 1)");
    }
    return LinComb{1.0 - interp->gamma, interp->gamma};
  }
  if (const auto* extra = std::get_if<Extrapolate>(&mode)) {
    if (!(extra->alpha >= 0.0)) {
      throw std::invalid_argument("extrapolation alpha must be >= 0, got " +
                                  std::to_string(extra->alpha));
    }
    return LinComb{-extra->alpha, 1.0 + extra->alpha};
  }
  const LinComb lc = std::get<LinComb>(mode);
  if (!std::isfinite(lc.c0) || !std::isfinite(lc.c1)) {
    throw std::invalid_argument("lincomb coefficients must be finite");
  }
  return lc;
}

TensorArchive lincomb(const TensorArchive& base, const TensorArchive& tuned,
                      const MergeSpec& spec, const std::filesystem::path& out,
                      MergeStats* stats) {
  const LinComb c = spec.coefficients();
  require_compatible(base, tuned);

  const bool identity_base = (c.c0 == 1.0 && c.c1 == 0.0);
  const bool identity_tuned = (c.c0 == 0.0 && c.c1 == 1.0);

  // Exact passthrough keeps the input bytes (and for single-file inputs the
  // whole file, header included).
  if (spec.cast == CastPolicy::PreserveInput && (identity_base || identity_tuned)) {
    const TensorArchive& src = identity_base ? base : tuned;
    if (src.single_file() && !src.backing_file().empty() &&
        copy_whole_file(src.backing_file(), out)) {
      if (stats) {
        stats->tensors = src.tensor_count();
        for (const std::string& name : src.names()) {
          stats->elements += static_cast<std::uint64_t>(src.meta(name).numel());
        }
        stats->peak_resident_buffers = 0;
      }
      return TensorArchive::open(out);
    }
    std::vector<TensorSpec> layout;
    for (const std::string& name : src.names()) {
      const TensorMeta& m = src.meta(name);
      layout.push_back({name, m.dtype, m.shape});
    }
    ArchiveWriter writer(out, std::move(layout), src.metadata());
    BufferGauge gauge(stats);
    for (const std::string& name : src.names()) {
      BufferGauge::Token t(gauge);
      writer.append_raw(src.read_raw(name));
      if (stats) {
        ++stats->tensors;
        stats->elements += static_cast<std::uint64_t>(src.meta(name).numel());
      }
    }
    writer.finish();
    return TensorArchive::open(out);
  }

  std::vector<TensorSpec> layout;
  layout.reserve(base.tensor_count());
  for (const std::string& name : base.names()) {
    const TensorMeta& m = base.meta(name);
    const DType out_dtype = spec.cast == CastPolicy::ForceF32 ? DType::F32 : m.dtype;
    layout.push_back({name, out_dtype, m.shape});
  }

  ArchiveWriter writer(out, std::move(layout));
  BufferGauge gauge(stats);
  for (const std::string& name : base.names()) {
    std::vector<float> merged;
    BufferGauge::Token hold_merged(gauge);
    base.read_into(name, merged);
    {
      BufferGauge::Token hold_tuned(gauge);
      std::vector<float> tuned_vals;
      tuned.read_into(name, tuned_vals);
      // Elementwise in double on the widened values, one rounding back to f32.
      for (std::size_t i = 0; i < merged.size(); ++i) {
        merged[i] = static_cast<float>(c.c0 * static_cast<double>(merged[i]) +
                                       c.c1 * static_cast<double>(tuned_vals[i]));
      }
    }
    {
      BufferGauge::Token hold_staged(gauge);
      std::vector<std::byte> staged;
      const DType out_dtype =
          spec.cast == CastPolicy::ForceF32 ? DType::F32 : base.meta(name).dtype;
      quantize_values(merged, out_dtype, staged);
      writer.append_raw(staged);
    }
    if (stats) {
      ++stats->tensors;
      stats->elements += merged.size();
    }
  }
  writer.finish();
  return TensorArchive::open(out);
}

TensorArchive extrapolate(const TensorArchive& base, const TensorArchive& tuned, double alpha,
                          const std::filesystem::path& out, CastPolicy cast, MergeStats* stats) {
  return lincomb(base, tuned, MergeSpec{Extrapolate{alpha}, cast}, out, stats);
}

TensorArchive interpolate(const TensorArchive& base, const TensorArchive& tuned, double gamma,
                          const std::filesystem::path& out, CastPolicy cast, MergeStats* stats) {
  return lincomb(base, tuned, MergeSpec{Interpolate{gamma}, cast}, out, stats);
}

}  // namespace expo
