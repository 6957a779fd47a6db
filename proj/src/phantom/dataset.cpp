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

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "protodiff/error.hpp"
#include "protodiff/phantom.hpp"

namespace protodiff::phantom {

namespace {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string item_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "phantom_%04zu", index);
  return buf;
}

}  // namespace

std::vector<const DatasetItem*> Dataset::split(const std::string& name) const {
  std::vector<const DatasetItem*> out;
  for (const auto& item : items) {
    if (item.split == name) out.push_back(&item);
  }
  return out;
}

const DatasetItem& Dataset::find(const std::string& id) const {
  for (const auto& item : items) {
    if (item.id == id) return item;
  }
  fail(ErrorKind::kInvalidArgument, "no dataset item with id " + id);
}

std::string config_hash(const DatasetSpec& spec) {
  std::ostringstream canon;
  canon.precision(17);
  const auto& p = spec.params;
  canon << "n=" << spec.count << ";seed=" << spec.seed << ";size=" << spec.size
        << ";background=" << p.background << ";texture=" << p.texture_amplitude
        << ";noise=" << p.noise_floor << ";ellipses=" << p.min_ellipses << "-" << p.max_ellipses;
  for (const auto& e : p.ellipses) {
    canon << ";e(" << e.cx << "," << e.cy << "," << e.a << "," << e.b << "," << e.theta << ","
          << e.intensity << ")";
  }
  return fnv1a_hex(canon.str());
}

Dataset generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
  require(spec.count >= 1, ErrorKind::kInvalidArgument, "dataset needs at least one phantom");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  require(!ec, ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());

  const std::size_t val_count = spec.count / 10;
  Dataset dataset;
  dataset.config_hash = config_hash(spec);
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < spec.count; ++i) {
    DatasetItem item;
    item.id = item_id(i);
    item.seed = spec.seed + i;
    item.split = i >= spec.count - val_count ? "val" : "train";
    auto phantom = generate_phantom(item.seed, spec.size, spec.params);
    item.image = quantize(phantom.image);
    item.mask = phantom.mask;
    item.image_path = "images/" + item.id + ".pgm";
    item.mask_path = "masks/" + item.id + ".pgm";
    save_image(out_dir / item.image_path, item.image);
    save_image(out_dir / item.mask_path, item.mask);
    items.push_back({{"id", item.id},
                     {"image", item.image_path},
                     {"mask", item.mask_path},
                     {"seed", item.seed},
                     {"split", item.split}});
    dataset.items.push_back(std::move(item));
  }
  nlohmann::json manifest = {{"items", items}, {"config_hash", dataset.config_hash}};
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write manifest in " + out_dir.string());
  out << manifest.dump(2) << '\n';
  require(out.good(), ErrorKind::kIo, "failed writing manifest");
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  require(in.good(), ErrorKind::kMissingPrerequisite,
          "cannot open manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "malformed manifest: " + std::string(e.what()));
  }
  const auto base = manifest_path.parent_path();
  Dataset dataset;
  std::set<std::string> seen;
  try {
    dataset.config_hash = manifest.at("config_hash").get<std::string>();
    for (const auto& entry : manifest.at("items")) {
      DatasetItem item;
      item.id = entry.at("id").get<std::string>();
      item.image_path = entry.at("image").get<std::string>();
      item.mask_path = entry.at("mask").get<std::string>();
      item.seed = entry.at("seed").get<std::uint64_t>();
      item.split = entry.at("split").get<std::string>();
      require(seen.insert(item.id).second, ErrorKind::kFormat,
              "duplicate dataset id " + item.id);
      require(item.split == "train" || item.split == "val", ErrorKind::kFormat,
              "unknown split '" + item.split + "' for " + item.id);
      const auto image_path = base / item.image_path;
      const auto mask_path = base / item.mask_path;
      require(std::filesystem::exists(image_path) && std::filesystem::exists(mask_path),
              ErrorKind::kMissingPrerequisite, "missing image files for " + item.id);
      item.image = load_image(image_path);
      item.mask = load_image(mask_path);
      require(item.image.shape() == item.mask.shape(), ErrorKind::kFormat,
              "image and mask extents differ for " + item.id);
      dataset.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "malformed manifest: " + std::string(e.what()));
  }
  return dataset;
}

}  // namespace protodiff::phantom
