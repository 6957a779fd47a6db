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

// Flat binary parameter container, little-endian throughout:
//
//   magic      8 bytes  "PDIFCKPT"
//   version    u32      (currently 1)
//   count      u32      number of tensors
//   repeated count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank     u32, extents u64[rank]
//     data     f64[product(extents)]

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "protodiff/nn.hpp"

namespace protodiff {

inline constexpr char kCheckpointMagic[8] = {'P', 'D', 'I', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
/// Loads every tensor in file order. Loaded tensors do not require grad.
ParameterSet load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(const std::string& bytes);

}  // namespace protodiff
