#include "disent/binary_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "disent/error.hpp"

namespace disent::io {

namespace {

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

constexpr std::size_t kHeader = 8;
constexpr std::size_t kTrailer = 8;

}  // namespace

Writer::Writer(std::string_view magic, std::uint32_t version) {
  buf_.append(magic.substr(0, 4));
  u32(version);
}

void Writer::u32(std::uint32_t v) { put(buf_, v); }
void Writer::u64(std::uint64_t v) { put(buf_, v); }
void Writer::i32(std::int32_t v) { put(buf_, v); }
void Writer::f64(double v) { put(buf_, v); }

void Writer::str(std::string_view s) {
  u64(s.size());
  buf_.append(s);
}

void Writer::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) u64(d);
  buf_.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
}

void Writer::i32s(const std::vector<int>& v) {
  u64(v.size());
  for (int x : v) i32(x);
}

std::string Writer::bytes() const {
  std::string out = buf_;
  put(out, hash_bytes(buf_.data() + kHeader, buf_.size() - kHeader));
  return out;
}

void Writer::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    const std::string b = bytes();
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Reader::Reader(const std::filesystem::path& path, std::string_view magic, std::uint32_t version, std::string what)
    : what_(std::move(what)), version_(version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + what_ + " file " + path.string());
  buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (buf_.size() < kHeader + kTrailer || buf_.compare(0, 4, magic) != 0) {
    fail("not a " + what_ + " file or truncated header: " + path.string());
  }
  std::uint32_t file_version = 0;
  std::memcpy(&file_version, buf_.data() + 4, sizeof(file_version));
  if (file_version != version) {
    throw LoadError(what_ + " format version " + std::to_string(file_version) + " is not supported (expected " +
                    std::to_string(version) + ")");
  }
  end_ = buf_.size() - kTrailer;
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf_.data() + end_, sizeof(stored));
  if (stored != hash_bytes(buf_.data() + kHeader, end_ - kHeader)) {
    fail("checksum mismatch (truncated or corrupt file): " + path.string());
  }
  pos_ = kHeader;
}

void Reader::fail(const std::string& msg) const {
  throw LoadError(what_ + " (format version " + std::to_string(version_) + "): " + msg);
}

void Reader::need(std::size_t n) const {
  if (end_ - pos_ < n) fail("unexpected end of payload");
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::int32_t Reader::i32() { return static_cast<std::int32_t>(u32()); }

double Reader::f64() {
  need(8);
  double v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string Reader::str() {
  const auto n = u64();
  need(n);
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

Tensor Reader::tensor() {
  const auto rank = u32();
  if (rank > 8) fail("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = u64();
    if (d != 0 && count > (end_ - pos_) / d) fail("tensor extent exceeds payload");
    count *= d;
  }
  need(count * sizeof(double));
  std::vector<double> data(count);
  std::memcpy(data.data(), buf_.data() + pos_, count * sizeof(double));
  pos_ += count * sizeof(double);
  return Tensor(std::move(shape), std::move(data));
}

std::vector<int> Reader::i32s() {
  const auto n = u64();
  if (n > (end_ - pos_) / 4) fail("label array exceeds payload");
  std::vector<int> v(n);
  for (auto& x : v) x = i32();
  return v;
}

void Reader::finish() const {
  if (pos_ != end_) fail("trailing bytes after payload");
}

}  // namespace disent::io
