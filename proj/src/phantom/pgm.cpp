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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "protodiff/error.hpp"
#include "protodiff/phantom.hpp"

namespace protodiff::phantom {

std::string encode_pgm(const Tensor& image) {
  require(image.rank() == 2, ErrorKind::kShapeMismatch,
          "PGM images must be [H,W], got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + h * w);
  for (double v : image.data()) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = static_cast<unsigned char>(bytes_[pos_]);
      if (std::isspace(c)) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      require(value < (1u << 24), ErrorKind::kFormat, "PGM header value too large");
      ++pos_;
      ++digits;
    }
    require(digits > 0, ErrorKind::kFormat, "malformed PGM header");
    return value;
  }

  std::size_t& pos() { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_pgm(const std::string& bytes) {
  require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5', ErrorKind::kFormat,
          "not a binary PGM (P5) file");
  HeaderReader header(bytes);
  header.pos() = 2;
  const std::size_t w = header.number();
  const std::size_t h = header.number();
  const std::size_t maxval = header.number();
  require(w > 0 && h > 0, ErrorKind::kFormat, "PGM extents must be positive");
  require(maxval >= 1 && maxval <= 255, ErrorKind::kFormat, "only 8-bit PGM is supported");
  auto& pos = header.pos();
  require(pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos])),
          ErrorKind::kFormat, "malformed PGM header");
  ++pos;
  require(bytes.size() - pos >= w * h, ErrorKind::kFormat, "truncated PGM payload");
  std::vector<double> values(w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    values[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) /
                static_cast<double>(maxval);
  }
  return Tensor::from({h, w}, std::move(values));
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

Tensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace protodiff::phantom
