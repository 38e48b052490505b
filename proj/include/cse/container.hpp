// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Named-tensor container, used for model checkpoints and externally computed
// feature files. Layout (all integers little-endian):
//
//   magic   "CSE1"
//   u32     format version (currently 1)
//   u64     record count
//   records name (u32 length + UTF-8 bytes), u32 dtype (f32=1, i64=2),
//           u32 rank, u64 dims..., u64 absolute byte offset of the payload
//   payloads raw little-endian values, in record order
//
// Non-tensor metadata (e.g. the config echo) is stored as a rank-1 i64
// tensor holding one byte per element.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cse {

enum class ContainerDtype : uint32_t { F32 = 1, I64 = 2 };

class TensorFileWriter {
 public:
  void add_f32(const std::string& name, std::vector<int64_t> dims, const float* data);
  void add_i64(const std::string& name, std::vector<int64_t> dims, const int64_t* data);
  void add_blob(const std::string& name, const std::string& utf8);
  void write(const std::string& path) const;

 private:
  struct Record {
    std::string name;
    ContainerDtype dtype;
    std::vector<int64_t> dims;
    std::vector<unsigned char> payload;
  };
  std::vector<Record> records_;
};

class TensorFileReader {
 public:
  explicit TensorFileReader(const std::string& path);

  struct Info {
    ContainerDtype dtype;
    std::vector<int64_t> dims;
    int64_t numel() const;
  };

  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  const Info& info(const std::string& name) const;
  std::vector<float> f32(const std::string& name) const;
  std::vector<int64_t> i64(const std::string& name) const;
  std::string blob(const std::string& name) const;

 private:
  struct Record {
    Info info;
    uint64_t offset;
  };
  const Record& find(const std::string& name) const;

  std::vector<std::pair<std::string, Record>> records_;
  std::vector<unsigned char> bytes_;
};

}  // namespace cse
