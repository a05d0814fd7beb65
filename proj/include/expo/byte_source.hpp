#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace expo {

// Random-access byte provider behind an opened archive. Implementations must
// support concurrent read_at calls on an immutable source.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::uint64_t size() const = 0;
  virtual void read_at(std::uint64_t offset, std::span<std::byte> dst) const = 0;
};

// Positional reads (pread) over an open file descriptor; no shared seek state.
class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path);
  ~FileSource() override;
  FileSource(const FileSource&) = delete;
  FileSource& operator=(const FileSource&) = delete;

  std::uint64_t size() const override { return size_; }
  void read_at(std::uint64_t offset, std::span<std::byte> dst) const override;

 private:
  int fd_ = -1;
  std::uint64_t size_ = 0;
  std::string path_;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(std::vector<std::byte> bytes) : bytes_(std::move(bytes)) {}
  std::uint64_t size() const override { return bytes_.size(); }
  void read_at(std::uint64_t offset, std::span<std::byte> dst) const override;

 private:
  std::vector<std::byte> bytes_;
};

// Instrumentation wrapper: counts reads and remembers the furthest byte
// touched, so tests can prove that opening an archive never reaches the
// data section.
class CountingSource final : public ByteSource {
 public:
  explicit CountingSource(std::shared_ptr<const ByteSource> inner) : inner_(std::move(inner)) {}

  std::uint64_t size() const override { return inner_->size(); }
  void read_at(std::uint64_t offset, std::span<std::byte> dst) const override;

  std::uint64_t reads() const { return reads_.load(); }
  std::uint64_t bytes_read() const { return bytes_.load(); }
  std::uint64_t max_offset_touched() const { return max_end_.load(); }

 private:
  std::shared_ptr<const ByteSource> inner_;
  mutable std::atomic<std::uint64_t> reads_{0};
  mutable std::atomic<std::uint64_t> bytes_{0};
  mutable std::atomic<std::uint64_t> max_end_{0};
};

}  // namespace expo
