#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "expo/byte_source.hpp"
#include "expo/dtype.hpp"

namespace expo {

using StringMap = std::map<std::string, std::string>;

struct TensorMeta {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  // Byte range inside the data section, [begin, end).
  std::uint64_t begin = 0;
  std::uint64_t end = 0;

  std::int64_t numel() const;
  std::uint64_t byte_size() const { return end - begin; }
};

// A checkpoint container opened for reading. Header metadata is parsed
// eagerly; tensor data is fetched per read() call. Immutable after open,
// safe to read from multiple threads.
class TensorArchive {
 public:
  // Container file, or a shard index when the path ends in ".json"
  // ({"weight_map": {tensor: shard_file}} with shard paths relative to it).
  static TensorArchive open(const std::filesystem::path& path);
  static TensorArchive open_source(std::shared_ptr<const ByteSource> source,
                                   std::string label = "<bytes>");

  const std::vector<std::string>& names() const { return names_; }
  std::size_t tensor_count() const { return names_.size(); }
  bool contains(std::string_view name) const;
  const TensorMeta& meta(std::string_view name) const;
  const StringMap& metadata() const { return metadata_; }
  const std::string& label() const { return label_; }

  // Element values widened to f32 regardless of the stored dtype.
  std::vector<float> read(std::string_view name) const;
  void read_into(std::string_view name, std::vector<float>& out) const;
  // The exact stored bytes.
  std::vector<std::byte> read_raw(std::string_view name) const;

  // Offset of the data section; only meaningful for single-file archives.
  std::uint64_t data_section_begin() const;
  bool single_file() const { return sources_.size() == 1; }
  // Path of the backing file when opened from one (empty for byte sources).
  const std::filesystem::path& backing_file() const { return backing_file_; }

 private:
  struct Entry {
    TensorMeta meta;
    std::size_t source = 0;
    std::uint64_t data_begin = 0;  // source-absolute start of the data section
  };

  const Entry& entry(std::string_view name) const;
  static void parse_header(TensorArchive& ar, const ByteSource& src,
                           std::size_t source_index, const std::string& label);

  std::vector<std::shared_ptr<const ByteSource>> sources_;
  std::vector<std::uint64_t> data_begins_;
  std::vector<std::string> names_;  // header order
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  StringMap metadata_;
  std::string label_;
  std::filesystem::path backing_file_;
};

struct TensorSpec {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
};

// Streaming writer: the layout is declared up front (the header carries the
// offsets), then tensor data is appended in declaration order.
class ArchiveWriter {
 public:
  ArchiveWriter(const std::filesystem::path& path, std::vector<TensorSpec> layout,
                StringMap metadata = {});
  ~ArchiveWriter();
  ArchiveWriter(const ArchiveWriter&) = delete;
  ArchiveWriter& operator=(const ArchiveWriter&) = delete;

  void append(std::span<const float> values);
  void append_raw(std::span<const std::byte> bytes);
  void finish();

 private:
  std::vector<TensorSpec> layout_;
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t next_ = 0;
  bool finished_ = false;
};

struct NamedTensor {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

void write_archive(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
                   StringMap metadata = {});

enum class DataScan { MetadataOnly, WithData };

struct CompatReport {
  struct Mismatch {
    std::string name;
    std::string in_a;
    std::string in_b;
  };
  struct NonFiniteNote {
    std::string archive;  // "a" or "b"
    std::string name;
    std::uint64_t count = 0;
  };

  std::vector<std::string> missing_in_a;
  std::vector<std::string> missing_in_b;
  std::vector<Mismatch> shape_mismatches;
  std::vector<Mismatch> dtype_mismatches;
  std::vector<NonFiniteNote> nonfinite;  // informational, does not affect compatible()

  bool compatible() const {
    return missing_in_a.empty() && missing_in_b.empty() && shape_mismatches.empty() &&
           dtype_mismatches.empty();
  }
  std::string summary() const;
};

CompatReport validate_compatibility(const TensorArchive& a, const TensorArchive& b,
                                    DataScan scan = DataScan::MetadataOnly);

// Throws FormatError with the report summary when the archives do not match.
void require_compatible(const TensorArchive& a, const TensorArchive& b);

std::string shape_to_string(std::span<const std::int64_t> shape);

}  // namespace expo
