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

// Seeded synthetic phantoms (nested ellipses with paired binary masks) and
// the dataset/manifest layer on top of them.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protodiff/tensor.hpp"

namespace protodiff::phantom {

/// Ellipse in pixel coordinates; pixel (row r, col c) has its centre at
/// (x, y) = (c + 0.5, r + 0.5). theta rotates the a-axis away from +x.
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;
  double intensity = 0.5;
};

struct PhantomParams {
  double background = 0.0;
  double texture_amplitude = 0.05;
  double noise_floor = 0.01;
  std::size_t min_ellipses = 1;
  std::size_t max_ellipses = 3;
  /// Explicit geometry. When empty, 1-3 nested ellipses are drawn from the
  /// seed; otherwise these are rendered as given.
  std::vector<Ellipse> ellipses;
};

struct Phantom {
  Tensor image;  // [size,size] in [0,1]
  Tensor mask;   // [size,size] in {0,1}
  std::uint64_t seed = 0;
  std::vector<Ellipse> ellipses;  // geometry actually rendered
};

/// Renders one phantom. The mask is the union of the ellipse interiors.
Phantom generate_phantom(std::uint64_t seed, std::size_t size, const PhantomParams& params = {});

/// 2x box downsampling of the image; a mask pixel is set when at least half
/// of its 2x2 block is set.
Phantom downsample2x(const Phantom& phantom);

/// Rounds to the 8-bit grid used on disk: round(v * 255) / 255.
Tensor quantize(const Tensor& image);

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255) I/O. Writes quantize by round(v * 255) after
// clamping to [0,1]; reads divide by maxval.

void save_image(const std::filesystem::path& path, const Tensor& image);
Tensor load_image(const std::filesystem::path& path);
std::string encode_pgm(const Tensor& image);
Tensor decode_pgm(const std::string& bytes);

// ---------------------------------------------------------------------------

struct DatasetItem {
  std::string id;
  Tensor image;
  Tensor mask;
  std::uint64_t seed = 0;
  std::string split;  // "train" or "val"
  std::string image_path;  // relative to the manifest directory
  std::string mask_path;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::string config_hash;

  std::vector<const DatasetItem*> split(const std::string& name) const;
  const DatasetItem& find(const std::string& id) const;
};

struct DatasetSpec {
  std::size_t count = 1;
  std::uint64_t seed = 0;
  std::size_t size = 32;
  PhantomParams params;
};

/// Hex digest identifying a generation config.
std::string config_hash(const DatasetSpec& spec);

/// Writes `count` phantoms (item i uses seed + i) and manifest.json under
/// out_dir. The last floor(count / 10) items form the validation split. The
/// returned images are already quantized, so they equal what loads back.
Dataset generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

/// Reads manifest.json and every image it references.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace protodiff::phantom
