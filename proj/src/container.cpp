// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cse/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "container i/o assumes a little-endian host");

namespace cse {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'E', '1'};
constexpr uint32_t kVersion = 1;

int64_t dims_numel(const std::vector<int64_t>& dims) {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  const size_t at = out.size();
  out.resize(at + sizeof(T));
  std::memcpy(out.data() + at, &v, sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& in, size_t& pos) {
  check(pos + sizeof(T) <= in.size(), ErrorKind::Format, "container: truncated file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

int64_t TensorFileReader::Info::numel() const { return dims_numel(dims); }

void TensorFileWriter::add_f32(const std::string& name, std::vector<int64_t> dims,
                               const float* data) {
  Record r;
  r.name = name;
  r.dtype = ContainerDtype::F32;
  const int64_t n = dims_numel(dims);
  r.dims = std::move(dims);
  r.payload.resize(static_cast<size_t>(n) * 4);
  std::memcpy(r.payload.data(), data, r.payload.size());
  records_.push_back(std::move(r));
}

void TensorFileWriter::add_i64(const std::string& name, std::vector<int64_t> dims,
                               const int64_t* data) {
  Record r;
  r.name = name;
  r.dtype = ContainerDtype::I64;
  const int64_t n = dims_numel(dims);
  r.dims = std::move(dims);
  r.payload.resize(static_cast<size_t>(n) * 8);
  std::memcpy(r.payload.data(), data, r.payload.size());
  records_.push_back(std::move(r));
}

void TensorFileWriter::add_blob(const std::string& name, const std::string& utf8) {
  std::vector<int64_t> bytes(utf8.begin(), utf8.end());
  add_i64(name, {static_cast<int64_t>(bytes.size())}, bytes.data());
}

void TensorFileWriter::write(const std::string& path) const {
  // Table size first, so payload offsets are known up front.
  size_t table_size = 4 + 4 + 8;
  for (const auto& r : records_) table_size += 4 + r.name.size() + 4 + 4 + 8 * r.dims.size() + 8;

  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put<uint32_t>(out, kVersion);
  put<uint64_t>(out, records_.size());
  uint64_t offset = table_size;
  for (const auto& r : records_) {
    put<uint32_t>(out, static_cast<uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put<uint32_t>(out, static_cast<uint32_t>(r.dtype));
    put<uint32_t>(out, static_cast<uint32_t>(r.dims.size()));
    for (int64_t d : r.dims) put<uint64_t>(out, static_cast<uint64_t>(d));
    put<uint64_t>(out, offset);
    offset += r.payload.size();
  }
  check(out.size() == table_size, ErrorKind::State, "container: table size bookkeeping error");
  for (const auto& r : records_) out.insert(out.end(), r.payload.begin(), r.payload.end());

  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "container: cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::Io, "container: short write: " + path);
}

TensorFileReader::TensorFileReader(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "container: file not found: " + path);
  bytes_.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  check(bytes_.size() >= 16, ErrorKind::Format, "container: truncated file");
  check(std::memcmp(bytes_.data(), kMagic, 4) == 0, ErrorKind::Format,
        "container: bad magic in " + path);
  size_t pos = 4;
  const uint32_t version = get<uint32_t>(bytes_, pos);
  check(version == kVersion, ErrorKind::Format,
        "container: unsupported format version " + std::to_string(version));
  const uint64_t count = get<uint64_t>(bytes_, pos);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = get<uint32_t>(bytes_, pos);
    check(pos + name_len <= bytes_.size(), ErrorKind::Format, "container: truncated name");
    std::string name(reinterpret_cast<const char*>(bytes_.data() + pos), name_len);
    pos += name_len;
    Record rec;
    const uint32_t dtype = get<uint32_t>(bytes_, pos);
    check(dtype == 1 || dtype == 2, ErrorKind::Format, "container: unknown dtype code");
    rec.info.dtype = static_cast<ContainerDtype>(dtype);
    const uint32_t rank = get<uint32_t>(bytes_, pos);
    for (uint32_t d = 0; d < rank; ++d)
      rec.info.dims.push_back(static_cast<int64_t>(get<uint64_t>(bytes_, pos)));
    rec.offset = get<uint64_t>(bytes_, pos);
    const size_t width = rec.info.dtype == ContainerDtype::F32 ? 4 : 8;
    check(rec.offset + static_cast<uint64_t>(rec.info.numel()) * width <= bytes_.size(),
          ErrorKind::Format, "container: payload out of range for " + name);
    records_.emplace_back(std::move(name), std::move(rec));
  }
}

bool TensorFileReader::has(const std::string& name) const {
  for (const auto& [n, _] : records_)
    if (n == name) return true;
  return false;
}

std::vector<std::string> TensorFileReader::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : records_) out.push_back(n);
  return out;
}

const TensorFileReader::Record& TensorFileReader::find(const std::string& name) const {
  for (const auto& [n, r] : records_)
    if (n == name) return r;
  fail(ErrorKind::Format, "container: missing tensor '" + name + "'");
}

const TensorFileReader::Info& TensorFileReader::info(const std::string& name) const {
  return find(name).info;
}

std::vector<float> TensorFileReader::f32(const std::string& name) const {
  const Record& r = find(name);
  check(r.info.dtype == ContainerDtype::F32, ErrorKind::Format,
        "container: tensor '" + name + "' is not f32");
  std::vector<float> out(static_cast<size_t>(r.info.numel()));
  std::memcpy(out.data(), bytes_.data() + r.offset, out.size() * 4);
  return out;
}

std::vector<int64_t> TensorFileReader::i64(const std::string& name) const {
  const Record& r = find(name);
  check(r.info.dtype == ContainerDtype::I64, ErrorKind::Format,
        "container: tensor '" + name + "' is not i64");
  std::vector<int64_t> out(static_cast<size_t>(r.info.numel()));
  std::memcpy(out.data(), bytes_.data() + r.offset, out.size() * 8);
  return out;
}

std::string TensorFileReader::blob(const std::string& name) const {
  std::vector<int64_t> raw = i64(name);
  std::string out;
  out.reserve(raw.size());
  for (int64_t b : raw) {
    check(b >= 0 && b <= 255, ErrorKind::Format, "container: blob byte out of range in " + name);
    out.push_back(static_cast<char>(b));
  }
  return out;
}

}  // namespace cse
