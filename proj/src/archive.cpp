#include "expo/archive.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "expo/errors.hpp"
#include "json.hpp"

namespace expo {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kHeaderLenBytes = 8;

std::uint64_t checked_numel(std::span<const std::int64_t> shape, const std::string& name,
                            const std::string& label) {
  std::uint64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) {
      throw FormatError(label + ": tensor \"" + name + "\" has a negative shape entry");
    }
    n *= static_cast<std::uint64_t>(d);
  }
  return n;
}

}  // namespace

std::int64_t TensorMeta::numel() const {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(std::span<const std::int64_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void TensorArchive::parse_header(TensorArchive& ar, const ByteSource& src,
                                 std::size_t source_index, const std::string& label) {
  if (src.size() < kHeaderLenBytes) {
    throw FormatError(label + ": malformed header length (file shorter than 8 bytes)");
  }
  std::byte len_bytes[kHeaderLenBytes];
  src.read_at(0, len_bytes);
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) {
    header_len = (header_len << 8) | std::to_integer<std::uint64_t>(len_bytes[i]);
  }
  if (header_len > src.size() - kHeaderLenBytes) {
    throw FormatError(label + ": malformed header length (" + std::to_string(header_len) +
                      " bytes declared, " + std::to_string(src.size() - kHeaderLenBytes) +
                      " available)");
  }

  std::vector<std::byte> header_raw(header_len);
  src.read_at(kHeaderLenBytes, header_raw);
  ordered_json header;
  try {
    header = ordered_json::parse(header_raw.begin(), header_raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(label + ": header is not valid JSON: " + e.what());
  }
  if (!header.is_object()) {
    throw FormatError(label + ": header is not a JSON object");
  }

  const std::uint64_t data_begin = kHeaderLenBytes + header_len;
  const std::uint64_t data_size = src.size() - data_begin;

  std::vector<std::pair<std::uint64_t, std::string>> ranges;
  for (auto it = header.begin(); it != header.end(); ++it) {
    const std::string& name = it.key();
    if (name == "__metadata__") {
      if (source_index == 0) {
        for (auto m = it->begin(); m != it->end(); ++m) {
          if (m->is_string()) ar.metadata_[m.key()] = m->get<std::string>();
        }
      }
      continue;
    }
    if (ar.index_.count(name)) {
      throw FormatError(label + ": duplicate tensor name \"" + name + "\"");
    }
    const ordered_json& info = *it;
    if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
        !info.contains("data_offsets")) {
      throw FormatError(label + ": tensor \"" + name +
                        "\" is missing dtype/shape/data_offsets");
    }

    TensorMeta meta;
    meta.name = name;
    meta.dtype = parse_dtype(info.at("dtype").get<std::string>());
    for (const auto& d : info.at("shape")) {
      if (!d.is_number_integer() && !d.is_number_unsigned()) {
        throw FormatError(label + ": tensor \"" + name + "\" has a non-integer shape entry");
      }
      meta.shape.push_back(d.get<std::int64_t>());
    }
    const auto& offsets = info.at("data_offsets");
    if (!offsets.is_array() || offsets.size() != 2) {
      throw FormatError(label + ": tensor \"" + name + "\" data_offsets must be [begin, end]");
    }
    meta.begin = offsets[0].get<std::uint64_t>();
    meta.end = offsets[1].get<std::uint64_t>();
    if (meta.end < meta.begin) {
      throw FormatError(label + ": tensor \"" + name + "\" has end < begin");
    }
    if (meta.end > data_size) {
      throw FormatError(label + ": out-of-bounds range for tensor \"" + name + "\" (end " +
                        std::to_string(meta.end) + " beyond data section of " +
                        std::to_string(data_size) + " bytes)");
    }
    const std::uint64_t expect = checked_numel(meta.shape, name, label) * byte_width(meta.dtype);
    if (meta.byte_size() != expect) {
      throw FormatError(label + ": tensor \"" + name + "\" declares " +
                        std::to_string(meta.byte_size()) + " bytes but shape " +
                        shape_to_string(meta.shape) + " needs " + std::to_string(expect));
    }

    if (meta.byte_size() > 0) ranges.emplace_back(meta.begin, name);
    ar.index_.emplace(name, ar.entries_.size());
    ar.names_.push_back(name);
    ar.entries_.push_back(Entry{std::move(meta), source_index, data_begin});
  }

  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    const TensorMeta& prev = ar.entries_[ar.index_.at(ranges[i - 1].second)].meta;
    if (ranges[i].first < prev.end) {
      throw FormatError(label + ": overlapping byte ranges for tensors \"" +
                        ranges[i - 1].second + "\" and \"" + ranges[i].second + "\"");
    }
  }
  ar.data_begins_.push_back(data_begin);
}

TensorArchive TensorArchive::open_source(std::shared_ptr<const ByteSource> source,
                                         std::string label) {
  TensorArchive ar;
  ar.label_ = std::move(label);
  ar.sources_.push_back(source);
  parse_header(ar, *source, 0, ar.label_);
  return ar;
}

TensorArchive TensorArchive::open(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    // Shard index: every shard is an independent container with disjoint names.
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open shard index \"" + path.string() + "\"");
    nlohmann::ordered_json idx;
    try {
      in >> idx;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("shard index \"" + path.string() + "\" is not valid JSON: " + e.what());
    }
    if (!idx.is_object() || !idx.contains("weight_map") || !idx["weight_map"].is_object()) {
      throw FormatError("shard index \"" + path.string() + "\" has no weight_map object");
    }

    TensorArchive ar;
    ar.label_ = path.string();
    const auto dir = path.parent_path();

    std::vector<std::string> shard_files;
    std::map<std::string, std::size_t> shard_of;
    for (auto it = idx["weight_map"].begin(); it != idx["weight_map"].end(); ++it) {
      const std::string shard = it->get<std::string>();
      if (!shard_of.count(shard)) {
        shard_of[shard] = shard_files.size();
        shard_files.push_back(shard);
      }
    }
    for (const std::string& shard : shard_files) {
      const std::size_t src_idx = ar.sources_.size();
      auto src = std::make_shared<FileSource>(dir / shard);
      ar.sources_.push_back(src);
      parse_header(ar, *src, src_idx, (dir / shard).string());
    }
    // The index must agree with what the shards actually contain.
    for (auto it = idx["weight_map"].begin(); it != idx["weight_map"].end(); ++it) {
      if (!ar.contains(it.key())) {
        throw FormatError("shard index lists tensor \"" + it.key() +
                          "\" but shard \"" + it->get<std::string>() + "\" does not contain it");
      }
    }
    return ar;
  }

  TensorArchive ar = open_source(std::make_shared<FileSource>(path), path.string());
  ar.backing_file_ = path;
  return ar;
}

bool TensorArchive::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const TensorArchive::Entry& TensorArchive::entry(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw FormatError(label_ + ": unknown tensor \"" + std::string(name) + "\"");
  }
  return entries_[it->second];
}

const TensorMeta& TensorArchive::meta(std::string_view name) const { return entry(name).meta; }

std::vector<std::byte> TensorArchive::read_raw(std::string_view name) const {
  const Entry& e = entry(name);
  std::vector<std::byte> raw(e.meta.byte_size());
  if (!raw.empty()) {
    sources_[e.source]->read_at(e.data_begin + e.meta.begin, raw);
  }
  return raw;
}

void TensorArchive::read_into(std::string_view name, std::vector<float>& out) const {
  const std::vector<std::byte> raw = read_raw(name);
  widen_bytes(raw, entry(name).meta.dtype, out);
}

std::vector<float> TensorArchive::read(std::string_view name) const {
  std::vector<float> out;
  read_into(name, out);
  return out;
}

std::uint64_t TensorArchive::data_section_begin() const {
  if (sources_.size() != 1) {
    throw FormatError(label_ + ": data_section_begin is only defined for single-file archives");
  }
  return data_begins_.front();
}

ArchiveWriter::ArchiveWriter(const std::filesystem::path& path, std::vector<TensorSpec> layout,
                             StringMap metadata)
    : layout_(std::move(layout)), path_(path) {
  ordered_json header = ordered_json::object();
  if (!metadata.empty()) {
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : metadata) meta[k] = v;
    header["__metadata__"] = std::move(meta);
  }
  std::uint64_t offset = 0;
  for (const TensorSpec& spec : layout_) {
    if (header.contains(spec.name)) {
      throw FormatError("duplicate tensor name \"" + spec.name + "\" in writer layout");
    }
    const std::uint64_t bytes =
        checked_numel(spec.shape, spec.name, path.string()) * byte_width(spec.dtype);
    ordered_json info = ordered_json::object();
    info["dtype"] = std::string(dtype_name(spec.dtype));
    info["shape"] = spec.shape;
    info["data_offsets"] = {offset, offset + bytes};
    header[spec.name] = std::move(info);
    offset += bytes;
  }

  const std::string header_str = header.dump();
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw FormatError("cannot open \"" + path.string() + "\" for writing");
  const std::uint64_t n = header_str.size();
  char len[8];
  for (int i = 0; i < 8; ++i) len[i] = static_cast<char>((n >> (8 * i)) & 0xFF);
  out_.write(len, 8);
  out_.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  if (!out_) throw FormatError("write failure on \"" + path.string() + "\"");
}

ArchiveWriter::~ArchiveWriter() {
  if (!finished_ && out_.is_open()) out_.close();
}

void ArchiveWriter::append_raw(std::span<const std::byte> bytes) {
  if (next_ >= layout_.size()) throw FormatError("writer layout exhausted");
  const TensorSpec& spec = layout_[next_];
  const std::uint64_t expect =
      checked_numel(spec.shape, spec.name, path_.string()) * byte_width(spec.dtype);
  if (bytes.size() != expect) {
    throw FormatError("tensor \"" + spec.name + "\": got " + std::to_string(bytes.size()) +
                      " bytes, layout declares " + std::to_string(expect));
  }
  out_.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw FormatError("write failure on \"" + path_.string() + "\"");
  ++next_;
}

void ArchiveWriter::append(std::span<const float> values) {
  if (next_ >= layout_.size()) throw FormatError("writer layout exhausted");
  const TensorSpec& spec = layout_[next_];
  const std::uint64_t expect = checked_numel(spec.shape, spec.name, path_.string());
  if (values.size() != expect) {
    throw FormatError("tensor \"" + spec.name + "\": got " + std::to_string(values.size()) +
                      " values, shape " + shape_to_string(spec.shape) + " needs " +
                      std::to_string(expect));
  }
  std::vector<std::byte> raw;
  quantize_values(values, spec.dtype, raw);
  append_raw(raw);
}

void ArchiveWriter::finish() {
  if (finished_) return;
  if (next_ != layout_.size()) {
    throw FormatError("writer finished after " + std::to_string(next_) + " of " +
                      std::to_string(layout_.size()) + " tensors");
  }
  out_.close();
  if (out_.fail()) throw FormatError("close failure on \"" + path_.string() + "\"");
  finished_ = true;
}

void write_archive(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
                   StringMap metadata) {
  std::vector<TensorSpec> layout;
  layout.reserve(tensors.size());
  for (const NamedTensor& t : tensors) layout.push_back({t.name, t.dtype, t.shape});
  ArchiveWriter w(path, std::move(layout), std::move(metadata));
  for (const NamedTensor& t : tensors) w.append(t.values);
  w.finish();
}

namespace {

void scan_nonfinite(const TensorArchive& ar, const char* tag, CompatReport& report) {
  std::vector<float> buf;
  for (const std::string& name : ar.names()) {
    ar.read_into(name, buf);
    std::uint64_t bad = 0;
    for (float v : buf) {
      if (!std::isfinite(v)) ++bad;
    }
    if (bad) report.nonfinite.push_back({tag, name, bad});
  }
}

}  // namespace

CompatReport validate_compatibility(const TensorArchive& a, const TensorArchive& b,
                                    DataScan scan) {
  CompatReport report;
  for (const std::string& name : a.names()) {
    if (!b.contains(name)) {
      report.missing_in_b.push_back(name);
      continue;
    }
    const TensorMeta& ma = a.meta(name);
    const TensorMeta& mb = b.meta(name);
    if (ma.shape != mb.shape) {
      report.shape_mismatches.push_back(
          {name, shape_to_string(ma.shape), shape_to_string(mb.shape)});
    }
    if (ma.dtype != mb.dtype) {
      report.dtype_mismatches.push_back(
          {name, std::string(dtype_name(ma.dtype)), std::string(dtype_name(mb.dtype))});
    }
  }
  for (const std::string& name : b.names()) {
    if (!a.contains(name)) report.missing_in_a.push_back(name);
  }
  if (scan == DataScan::WithData) {
    scan_nonfinite(a, "a", report);
    scan_nonfinite(b, "b", report);
  }
  return report;
}

std::string CompatReport::summary() const {
  if (compatible() && nonfinite.empty()) return "compatible";
  std::ostringstream os;
  os << (compatible() ? "compatible" : "incompatible");
  auto list = [&os](const char* what, const std::vector<std::string>& names) {
    if (names.empty()) return;
    os << "; " << what << ":";
    for (const std::string& n : names) os << " \"" << n << "\"";
  };
  list("missing in a", missing_in_a);
  list("missing in b", missing_in_b);
  for (const Mismatch& m : shape_mismatches) {
    os << "; shape mismatch on \"" << m.name << "\" (" << m.in_a << " vs " << m.in_b << ")";
  }
  for (const Mismatch& m : dtype_mismatches) {
    os << "; dtype mismatch on \"" << m.name << "\" (" << m.in_a << " vs " << m.in_b << ")";
  }
  for (const NonFiniteNote& n : nonfinite) {
    os << "; non-finite values in " << n.archive << ":\"" << n.name << "\" (" << n.count << ")";
  }
  return os.str();
}

void require_compatible(const TensorArchive& a, const TensorArchive& b) {
  const CompatReport report = validate_compatibility(a, b, DataScan::MetadataOnly);
  if (!report.compatible()) {
    throw FormatError("archives \"" + a.label() + "\" and \"" + b.label() +
                      "\" are not compatible: " + report.summary());
  }
}

}  // namespace expo
