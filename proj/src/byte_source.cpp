#include "expo/byte_source.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "expo/errors.hpp"

namespace expo {

FileSource::FileSource(const std::filesystem::path& path) : path_(path.string()) {
  fd_ = ::open(path_.c_str(), O_RDONLY);
  if (fd_ < 0) {
    throw FormatError("cannot open \"" + path_ + "\": " + std::strerror(errno));
  }
  struct stat st{};
  if (::fstat(fd_, &st) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw FormatError("cannot stat \"" + path_ + "\": " + std::strerror(errno));
  }
  size_ = static_cast<std::uint64_t>(st.st_size);
}

FileSource::~FileSource() {
  if (fd_ >= 0) ::close(fd_);
}

void FileSource::read_at(std::uint64_t offset, std::span<std::byte> dst) const {
  if (offset + dst.size() > size_) {
    throw FormatError("read past end of \"" + path_ + "\"");
  }
  std::size_t done = 0;
  while (done < dst.size()) {
    const ssize_t got = ::pread(fd_, dst.data() + done, dst.size() - done,
                                static_cast<off_t>(offset + done));
    if (got < 0) {
      if (errno == EINTR) continue;
      throw FormatError("read error on \"" + path_ + "\": " + std::strerror(errno));
    }
    if (got == 0) throw FormatError("unexpected end of \"" + path_ + "\"");
    done += static_cast<std::size_t>(got);
  }
}

void MemorySource::read_at(std::uint64_t offset, std::span<std::byte> dst) const {
  if (offset + dst.size() > bytes_.size()) {
    throw FormatError("read past end of in-memory source");
  }
  std::memcpy(dst.data(), bytes_.data() + offset, dst.size());
}

void CountingSource::read_at(std::uint64_t offset, std::span<std::byte> dst) const {
  reads_.fetch_add(1, std::memory_order_relaxed);
  bytes_.fetch_add(dst.size(), std::memory_order_relaxed);
  const std::uint64_t end = offset + dst.size();
  std::uint64_t prev = max_end_.load(std::memory_order_relaxed);
  while (prev < end && !max_end_.compare_exchange_weak(prev, end, std::memory_order_relaxed)) {
  }
  inner_->read_at(offset, dst);
}

}  // namespace expo
