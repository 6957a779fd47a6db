// Copyright 2026 The ProtoDiff Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "protodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "protodiff/error.hpp"

namespace protodiff {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    require(pos_ + n <= bytes_.size(), ErrorKind::kFormat, "truncated checkpoint");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParameterSet& params) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params.entries()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape()) put_u64(out, extent);
    for (double v : tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParameterSet decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  require(in.take(sizeof(kCheckpointMagic)) ==
              std::string(kCheckpointMagic, sizeof(kCheckpointMagic)),
          ErrorKind::kFormat, "bad checkpoint magic");
  const auto version = in.uint(4);
  require(version == kCheckpointVersion, ErrorKind::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  const auto count = in.uint(4);
  ParameterSet params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = in.uint(4);
    auto name = in.take(name_len);
    const auto rank = in.uint(4);
    require(rank <= 8, ErrorKind::kFormat, "implausible tensor rank in checkpoint");
    Shape shape(rank);
    for (auto& extent : shape) extent = in.uint(8);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(in.uint(8));
    params.add(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  require(in.done(), ErrorKind::kFormat, "trailing bytes after checkpoint payload");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace protodiff
