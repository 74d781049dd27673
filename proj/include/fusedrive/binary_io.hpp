// Copyright 2026 The fusedrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace fusedrive {

// Little-endian encoder used by the bundle and checkpoint formats.
class ByteWriter {
 public:
  void bytes(std::string_view raw) { out_.append(raw); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

// Bounds-checked decoder; every read names the field so truncation and
// corruption surface as kFormat errors pointing at the offending field.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::string_view bytes(std::size_t n, const char* field);
  std::uint8_t u8(const char* field);
  std::uint32_t u32(const char* field);
  std::uint64_t u64(const char* field);
  double f64(const char* field);
  std::string str(const char* field, std::size_t max_len = 1u << 24);

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const char* field, const std::string& what) const;

 private:
  std::string_view data_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::string ReadFileBytes(const std::filesystem::path& path);
// Writes via a temporary sibling file and rename.
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace fusedrive
