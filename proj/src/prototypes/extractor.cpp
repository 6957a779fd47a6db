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


#include <cmath>
#include <numeric>

#include "protodiff/checkpoint.hpp"
#include "protodiff/error.hpp"
#include "protodiff/optim.hpp"
#include "protodiff/prototypes.hpp"

namespace protodiff::prototypes {

namespace {

constexpr std::size_t kHidden1 = 8;
constexpr std::size_t kHidden2 = 16;

Tensor stack_images(const std::vector<Tensor>& images, const std::vector<std::size_t>& order,
                    std::size_t begin, std::size_t end) {
  const std::size_t h = images.front().dim(0), w = images.front().dim(1);
  std::vector<double> values;
  values.reserve((end - begin) * h * w);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& img = images[order[i]];
    values.insert(values.end(), img.data().begin(), img.data().end());
  }
  return Tensor::from({end - begin, 1, h, w}, std::move(values));
}

void check_images(const std::vector<Tensor>& images) {
  require(!images.empty(), ErrorKind::kInvalidArgument, "extractor needs at least one image");
  const auto shape = images.front().shape();
  require(shape.size() == 2 && shape[0] % 4 == 0 && shape[1] % 4 == 0 && shape[0] > 0 &&
              shape[1] > 0,
          ErrorKind::kShapeMismatch,
          "extractor images must be [H,W] with H and W divisible by 4, got " +
              shape_string(shape));
  for (const auto& img : images) {
    require(img.shape() == shape, ErrorKind::kShapeMismatch, "extractor images differ in shape");
  }
}

}  // namespace

FeatureExtractor::FeatureExtractor(ExtractorConfig config, Rng& rng) : config_(config) {
  require(config_.depth >= 1, ErrorKind::kConfig, "feature depth must be >= 1");
  enc1_ = Conv2dLayer::create(1, kHidden1, 3, rng);
  enc2_ = Conv2dLayer::create(kHidden1, kHidden2, 3, rng);
  enc3_ = Conv2dLayer::create(kHidden2, config_.depth, 1, rng);
  dec1_ = Conv2dLayer::create(config_.depth, kHidden2, 1, rng);
  dec2_ = Conv2dLayer::create(kHidden2, kHidden1, 3, rng);
  dec3_ = Conv2dLayer::create(kHidden1, 1, 3, rng);
  register_params();
}

void FeatureExtractor::register_params() {
  params_ = ParameterSet();
  enc1_.register_into(params_, "enc1");
  enc2_.register_into(params_, "enc2");
  enc3_.register_into(params_, "enc3");
  if (!frozen_) {
    dec1_.register_into(params_, "dec1");
    dec2_.register_into(params_, "dec2");
    dec3_.register_into(params_, "dec3");
  }
}

Tensor FeatureExtractor::encode(const Tensor& images) const {
  require(images.rank() == 4 && images.dim(1) == 1, ErrorKind::kShapeMismatch,
          "extractor expects [B,1,H,W], got " + shape_string(images.shape()));
  require(images.dim(2) % 4 == 0 && images.dim(3) % 4 == 0, ErrorKind::kShapeMismatch,
          "extractor needs extents divisible by 4");
  auto h = avg_pool2x(relu(enc1_(images)));
  h = avg_pool2x(relu(enc2_(h)));
  return enc3_(h);
}

Tensor FeatureExtractor::reconstruct(const Tensor& images) const {
  require(!frozen_, ErrorKind::kState, "decoder was discarded when the extractor was frozen");
  auto h = upsample2x(relu(dec1_(encode(images))));
  h = upsample2x(relu(dec2_(h)));
  return dec3_(h);
}

std::vector<FeatureMap> FeatureExtractor::features(const std::vector<Tensor>& images) const {
  if (images.empty()) return {};
  check_images(images);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  NoGradGuard no_grad;
  const auto encoded = encode(stack_images(images, order, 0, images.size()));
  const auto rows = nchw_to_rows(encoded);
  const std::size_t gh = encoded.dim(2), gw = encoded.dim(3), depth = encoded.dim(1);
  const std::size_t per_image = gh * gw * depth;
  std::vector<FeatureMap> maps;
  maps.reserve(images.size());
  auto values = rows.data();
  for (std::size_t i = 0; i < images.size(); ++i) {
    FeatureMap map{gh, gw, depth, {}};
    map.values.assign(values.begin() + i * per_image, values.begin() + (i + 1) * per_image);
    maps.push_back(std::move(map));
  }
  return maps;
}

FeatureMap FeatureExtractor::features(const Tensor& image) const {
  return features(std::vector<Tensor>{image}).front();
}

void FeatureExtractor::freeze() {
  for (auto* layer : {&enc1_, &enc2_, &enc3_}) {
    layer->weight = layer->weight.detach();
    layer->bias = layer->bias.detach();
  }
  dec1_ = dec2_ = dec3_ = Conv2dLayer{};
  frozen_ = true;
  register_params();
}

void FeatureExtractor::save(const std::filesystem::path& path) const {
  ParameterSet encoder;
  enc1_.register_into(encoder, "enc1");
  enc2_.register_into(encoder, "enc2");
  enc3_.register_into(encoder, "enc3");
  save_checkpoint(path, encoder);
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path,
                                        ExtractorConfig config) {
  require(std::filesystem::exists(path), ErrorKind::kMissingPrerequisite,
          "extractor checkpoint not found: " + path.string());
  const auto params = load_checkpoint(path);
  Rng unused(0);
  FeatureExtractor out(config, unused);
  out.freeze();
  ParameterSet target;
  out.enc1_.register_into(target, "enc1");
  out.enc2_.register_into(target, "enc2");
  out.enc3_.register_into(target, "enc3");
  try {
    target.assign_from(params);
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, "extractor checkpoint does not match the configuration: " +
                                 std::string(e.what()));
  }
  return out;
}

ExtractorTraining train_extractor(const std::vector<Tensor>& images, const ExtractorConfig& config,
                                  Rng& rng) {
  check_images(images);
  require(config.batch_size >= 1, ErrorKind::kConfig, "extractor batch size must be >= 1");
  FeatureExtractor extractor(config, rng);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  const auto everything = stack_images(images, order, 0, images.size());
  auto dataset_loss = [&] {
    NoGradGuard no_grad;
    return mse_loss(extractor.reconstruct(everything), everything).item();
  };

  const double initial = dataset_loss();
  Adam opt(extractor.parameters().tensors(), {.learning_rate = config.learning_rate});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const auto batch = stack_images(images, order, begin, end);
      try {
        backward(mse_loss(extractor.reconstruct(batch), batch));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kNonFinite) {
          fail(ErrorKind::kNumeric, "extractor training diverged in epoch " +
                                        std::to_string(epoch) + ": " + e.what());
        }
        throw;
      }
      opt.step();
    }
  }
  const double final_loss = dataset_loss();
  extractor.freeze();
  return {std::move(extractor), initial, final_loss};
}

}  // namespace protodiff::prototypes
