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

#include "fusedrive/binary_io.hpp"

#include <fstream>
#include <sstream>

#include "fusedrive/error.hpp"

namespace fusedrive {

void ByteReader::fail(const char* field, const std::string& what) const {
  std::ostringstream os;
  os << context_ << ": field '" << field << "' at offset " << pos_ << ": "
     << what;
  Fail(ErrorKind::kFormat, os.str());
}

std::string_view ByteReader::bytes(std::size_t n, const char* field) {
  if (n > data_.size() - pos_) fail(field, "unexpected end of file");
  std::string_view out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8(const char* field) {
  return static_cast<std::uint8_t>(bytes(1, field)[0]);
}

std::uint32_t ByteReader::u32(const char* field) {
  std::string_view b = bytes(4, field);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64(const char* field) {
  std::string_view b = bytes(8, field);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

double ByteReader::f64(const char* field) {
  return std::bit_cast<double>(u64(field));
}

std::string ByteReader::str(const char* field, std::size_t max_len) {
  const std::uint32_t len = u32(field);
  if (len > max_len) fail(field, "length " + std::to_string(len) + " too large");
  return std::string(bytes(len, field));
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kUsage, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorKind::kUsage, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) Fail(ErrorKind::kUsage, "write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fusedrive
