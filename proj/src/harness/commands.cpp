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
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "protodiff/checkpoint.hpp"
#include "protodiff/diffusion.hpp"
#include "protodiff/error.hpp"
#include "protodiff/harness.hpp"
#include "protodiff/phantom.hpp"

namespace protodiff::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using prototypes::HeadKind;

namespace {

enum Stream : std::uint64_t {
  kDiffusionInit = 1,
  kDiffusionTrain = 2,
  kSampling = 3,
  kTrajectory = 4,
  kExtractor = 5,
  kHeads = 6,
};

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string full(double v) { return format("%.17g", v); }
std::string six(double v) { return format("%.6g", v); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

json read_json(const fs::path& path, const std::string& produced_by) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kMissingPrerequisite,
          path.string() + " not found; run '" + produced_by + "' first");
  try {
    json out;
    in >> out;
    return out;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "malformed " + path.string() + ": " + e.what());
  }
}

void require_file(const fs::path& path, const std::string& produced_by) {
  require(fs::exists(path), ErrorKind::kMissingPrerequisite,
          path.string() + " not found; run '" + produced_by + "' first");
}

phantom::DatasetSpec dataset_spec(const DataSection& data) {
  phantom::DatasetSpec spec;
  spec.count = data.count;
  spec.seed = data.seed;
  spec.size = data.size;
  spec.params.background = data.background;
  spec.params.texture_amplitude = data.texture_amplitude;
  spec.params.noise_floor = data.noise_floor;
  return spec;
}

diffusion::NoiseSchedule schedule_of(const DiffusionSection& d) {
  return diffusion::make_schedule(d.steps, d.beta_start, d.beta_end);
}

diffusion::DenoiserConfig denoiser_config(const ExperimentConfig& c) {
  diffusion::DenoiserConfig cfg;
  cfg.image_size = c.data.size;
  cfg.base_width = c.diffusion.base_width;
  cfg.time_dim = c.diffusion.time_dim;
  cfg.output_gain = c.diffusion.output_gain;
  return cfg;
}

prototypes::ExtractorConfig extractor_config(const PrototypeSection& p) {
  prototypes::ExtractorConfig cfg;
  cfg.depth = p.feature_depth;
  cfg.epochs = p.extractor_epochs;
  cfg.batch_size = p.extractor_batch_size;
  cfg.learning_rate = p.extractor_learning_rate;
  return cfg;
}

phantom::Dataset load_data(const Layout& layout, const ExperimentConfig& config) {
  require_file(layout.manifest(), "gen-data");
  auto dataset = phantom::load_dataset(layout.manifest());
  require(dataset.config_hash == phantom::config_hash(dataset_spec(config.data)),
          ErrorKind::kMissingPrerequisite,
          "dataset in " + layout.data_dir().string() +
              " was generated with a different data configuration; rerun 'gen-data'");
  return dataset;
}

diffusion::DenoiserNet load_denoiser(const Layout& layout, const ExperimentConfig& config) {
  require_file(layout.denoiser(), "train-diffusion");
  Rng rng(0);
  diffusion::DenoiserNet net(denoiser_config(config), rng);
  try {
    net.parameters().assign_from(load_checkpoint(layout.denoiser()));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kFormat) throw;
    fail(ErrorKind::kMissingPrerequisite,
         "denoiser checkpoint does not match the configuration (" + std::string(e.what()) +
             "); rerun 'train-diffusion'");
  }
  for (const auto& t : net.parameters().tensors()) {
    Tensor handle = t;
    handle.set_requires_grad(false);
  }
  return net;
}

// Conditioning masks come from the validation split (training split when it
// is empty), cycled in order.
std::vector<const phantom::DatasetItem*> conditioning_items(const phantom::Dataset& dataset) {
  auto items = dataset.split("val");
  if (items.empty()) items = dataset.split("train");
  return items;
}

struct SampleEntry {
  std::string id;
  std::string image;  // relative to the samples directory
  std::string mask_id;
  std::uint64_t seed = 0;
};

std::vector<SampleEntry> load_samples(const Layout& layout) {
  const auto index = read_json(layout.samples_index(), "sample");
  std::vector<SampleEntry> out;
  try {
    for (const auto& s : index.at("samples")) {
      out.push_back({s.at("id").get<std::string>(), s.at("image").get<std::string>(),
                     s.at("mask_id").get<std::string>(), s.at("seed").get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "malformed samples index: " + std::string(e.what()));
  }
  require(!out.empty(), ErrorKind::kMissingPrerequisite, "no generated samples; run 'sample'");
  return out;
}

std::string extractor_fingerprint(const ExperimentConfig& c, const std::string& data_hash) {
  json info = {{"data_hash", data_hash},
               {"seed", c.data.seed},
               {"depth", c.prototypes.feature_depth},
               {"epochs", c.prototypes.extractor_epochs},
               {"batch_size", c.prototypes.extractor_batch_size},
               {"learning_rate", c.prototypes.extractor_learning_rate}};
  return info.dump();
}

prototypes::FeatureExtractor load_extractor(const Layout& layout, const ExperimentConfig& config) {
  require_file(layout.extractor(), "train-proto");
  return prototypes::FeatureExtractor::load(layout.extractor(),
                                            extractor_config(config.prototypes));
}

prototypes::PrototypeBank load_head(const Layout& layout, HeadKind head) {
  const auto stem = layout.bank(head);
  require(fs::exists(stem.string() + ".ckpt"), ErrorKind::kMissingPrerequisite,
          "no trained " + prototypes::to_string(head) + " bank; run 'train-proto --head " +
              prototypes::to_string(head) + "' first");
  return prototypes::load_bank(stem);
}

std::vector<double> mean_feature(const FeatureMap& map) {
  std::vector<double> out(map.depth, 0.0);
  for (std::size_t i = 0; i < map.cells(); ++i) {
    const auto cell = map.cell(i);
    for (std::size_t d = 0; d < map.depth; ++d) out[d] += cell[d] / static_cast<double>(map.cells());
  }
  return out;
}

// Rasterised bar chart of per-head mean faithfulness, scaled to 1/m.
Tensor render_bars(const std::vector<double>& values, double top) {
  const std::size_t bar = 24, gap = 8, height = 96;
  const std::size_t width = gap + values.size() * (bar + gap);
  std::vector<double> pixels(height * width, 1.0);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double frac = top > 0.0 ? std::clamp(values[k] / top, 0.0, 1.0) : 0.0;
    const auto filled = static_cast<std::size_t>(std::lround(frac * (height - 1)));
    for (std::size_t r = height - filled; r < height; ++r)
      for (std::size_t c = gap + k * (bar + gap); c < gap + k * (bar + gap) + bar; ++c)
        pixels[r * width + c] = 0.2;
  }
  return Tensor::from({height, width}, std::move(pixels));
}

// Histogram of NIS values over [0,1] in 20 bins, tallest bin full height.
Tensor render_histogram(const std::vector<double>& values) {
  const std::size_t bins = 20, bin_w = 8, height = 96;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) counts[std::min(bins - 1, static_cast<std::size_t>(v * bins))]++;
  const std::size_t top = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
  std::vector<double> pixels(height * bins * bin_w, 1.0);
  for (std::size_t b = 0; b < bins; ++b) {
    const auto filled = (counts[b] * (height - 1) + top / 2) / top;
    for (std::size_t r = height - filled; r < height; ++r)
      for (std::size_t c = b * bin_w; c + 1 < (b + 1) * bin_w; ++c)
        pixels[r * bins * bin_w + c] = 0.2;
  }
  return Tensor::from({height, bins * bin_w}, std::move(pixels));
}

}  // namespace

fs::path Layout::bank(HeadKind head) const {
  return checkpoints() / ("bank_" + prototypes::to_string(head));
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  layout_.root = config_.output_dir;
}

void Experiment::set_output_dir(const fs::path& dir) {
  require(!dir.empty(), ErrorKind::kConfig, "output directory must not be empty");
  config_.output_dir = dir;
  layout_.root = dir;
}

void Experiment::set_seed(std::uint64_t seed) { config_.data.seed = seed; }

// ---------------------------------------------------------------------------

std::string Experiment::gen_data() {
  const auto spec = dataset_spec(config_.data);
  const auto dataset = phantom::generate_dataset(spec, layout_.data_dir());
  return "gen-data: " + std::to_string(dataset.items.size()) + " phantoms (" +
         std::to_string(dataset.split("train").size()) + " train, " +
         std::to_string(dataset.split("val").size()) + " val) -> " + layout_.manifest().string();
}

std::string Experiment::train_diffusion() {
  const auto dataset = load_data(layout_, config_);
  const auto train = dataset.split("train");
  require(!train.empty(), ErrorKind::kMissingPrerequisite, "dataset has no training images");
  const auto& d = config_.diffusion;
  const auto schedule = schedule_of(d);
  Rng init_rng(derive_seed(config_.data.seed, kDiffusionInit));
  Rng rng(derive_seed(config_.data.seed, kDiffusionTrain));
  diffusion::DenoiserNet net(denoiser_config(config_), init_rng);
  Adam opt(net.parameters().tensors(), {.learning_rate = d.learning_rate});

  const std::size_t n = config_.data.size;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::string log = "epoch,mean_loss\n";
  double last = 0.0;
  std::size_t steps = 0;
  for (std::size_t epoch = 0; epoch < d.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += d.batch_size) {
      const std::size_t end = std::min(order.size(), begin + d.batch_size);
      std::vector<double> images, masks;
      for (std::size_t k = begin; k < end; ++k) {
        const auto* item = train[order[k]];
        images.insert(images.end(), item->image.data().begin(), item->image.data().end());
        masks.insert(masks.end(), item->mask.data().begin(), item->mask.data().end());
      }
      diffusion::Batch batch{Tensor::from({end - begin, 1, n, n}, std::move(images)),
                             Tensor::from({end - begin, 1, n, n}, std::move(masks))};
      total += diffusion::train_step(net, batch, schedule, rng, opt);
      ++batches;
      ++steps;
    }
    last = total / static_cast<double>(batches);
    log += std::to_string(epoch) + "," + full(last) + "\n";
  }
  ensure_dir(layout_.checkpoints());
  save_checkpoint(layout_.denoiser(), net.parameters());
  write_text(layout_.diffusion_log(), log);
  return "train-diffusion: " + std::to_string(d.epochs) + " epochs, " + std::to_string(steps) +
         " steps, final epoch loss " + six(last) + " -> " + layout_.denoiser().string();
}

std::string Experiment::sample(std::size_t count) {
  if (count == 0) count = config_.sampling.count;
  const auto dataset = load_data(layout_, config_);
  const auto net = load_denoiser(layout_, config_);
  const auto schedule = schedule_of(config_.diffusion);
  const auto conditions = conditioning_items(dataset);
  const auto base = derive_seed(config_.data.seed, kSampling);

  ensure_dir(layout_.samples_dir());
  // Stale samples from a larger earlier run would otherwise linger.
  for (const auto& entry : fs::directory_iterator(layout_.samples_dir())) {
    if (entry.path().extension() == ".pgm") fs::remove(entry.path());
  }
  json entries = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "sample_%04zu", i);
    const auto* cond = conditions[i % conditions.size()];
    Rng rng(base + i);
    const auto result = diffusion::sample(net, cond->mask, schedule, rng);
    const std::string file = std::string(id) + ".pgm";
    phantom::save_image(layout_.samples_dir() / file, result.image);
    entries.push_back({{"id", id}, {"image", file}, {"mask_id", cond->id}, {"seed", base + i}});
  }
  write_text(layout_.samples_index(), json{{"samples", entries}}.dump(2) + "\n");
  return "sample: " + std::to_string(count) + " images -> " + layout_.samples_dir().string();
}

std::string Experiment::trajectory() {
  const auto dataset = load_data(layout_, config_);
  const auto net = load_denoiser(layout_, config_);
  const auto schedule = schedule_of(config_.diffusion);
  const auto* cond = conditioning_items(dataset).front();
  Rng rng(derive_seed(config_.data.seed, kTrajectory));
  const auto frames =
      diffusion::trajectory(net, cond->mask, schedule, rng, config_.sampling.trajectory_stride);

  const auto dir = layout_.trajectory_dir();
  ensure_dir(dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".pgm") fs::remove(entry.path());
  }
  std::string csv = "t,eps_mag\n";
  for (const auto& frame : frames) {
    char name[40];
    std::snprintf(name, sizeof(name), "frame_t%04zu.pgm", frame.t);
    phantom::save_image(dir / name, frame.x_t);
    std::vector<double> eps(frame.eps_hat.data().begin(), frame.eps_hat.data().end());
    for (auto& v : eps) v = std::clamp(0.5 + v / 6.0, 0.0, 1.0);
    std::snprintf(name, sizeof(name), "eps_t%04zu.pgm", frame.t);
    phantom::save_image(dir / name, Tensor::from(frame.eps_hat.shape(), std::move(eps)));
    csv += std::to_string(frame.t) + "," + full(frame.eps_mag) + "\n";
  }
  write_text(dir / "trajectory.csv", csv);
  return "trajectory: " + std::to_string(frames.size()) + " frames (mask " + cond->id +
         ", eps_mag " + six(frames.front().eps_mag) + " at t=" + std::to_string(frames.front().t) +
         " -> " + six(frames.back().eps_mag) + " at t=0) -> " + dir.string();
}

std::string Experiment::train_proto(std::optional<HeadKind> head) {
  const auto dataset = load_data(layout_, config_);
  const auto train = dataset.split("train");
  require(!train.empty(), ErrorKind::kMissingPrerequisite, "dataset has no training images");
  std::vector<Tensor> images;
  std::vector<std::string> ids;
  for (const auto* item : train) {
    images.push_back(item->image);
    ids.push_back(item->id);
  }

  // The extractor is shared by all heads; reuse it when its inputs match.
  const auto fingerprint = extractor_fingerprint(config_, dataset.config_hash);
  std::optional<prototypes::FeatureExtractor> extractor;
  std::string extractor_note = "reused extractor";
  if (fs::exists(layout_.extractor()) && fs::exists(layout_.extractor_info())) {
    std::ifstream in(layout_.extractor_info());
    std::ostringstream text;
    text << in.rdbuf();
    if (text.str() == fingerprint + "\n") extractor = load_extractor(layout_, config_);
  }
  if (!extractor) {
    Rng rng(derive_seed(config_.data.seed, kExtractor));
    auto trained = prototypes::train_extractor(images, extractor_config(config_.prototypes), rng);
    ensure_dir(layout_.checkpoints());
    trained.extractor.save(layout_.extractor());
    write_text(layout_.extractor_info(), fingerprint + "\n");
    extractor_note = "extractor recon " + six(trained.initial_loss) + " -> " +
                     six(trained.final_loss);
    extractor = load_extractor(layout_, config_);
  }
  const auto maps = extractor->features(images);

  std::vector<HeadKind> heads = head ? std::vector<HeadKind>{*head} : config_.prototypes.heads;
  prototypes::HeadConfig cfg;
  cfg.prototypes = config_.prototypes.m;
  cfg.epochs = config_.prototypes.epochs;
  cfg.learning_rate = config_.prototypes.learning_rate;
  cfg.lambda_div = config_.prototypes.lambda_div;
  std::string summary = "train-proto: " + extractor_note;
  for (auto h : heads) {
    Rng rng(derive_seed(config_.data.seed, kHeads + static_cast<std::uint64_t>(h)));
    const auto result = prototypes::train_head(h, maps, ids, cfg, rng);
    prototypes::save_bank(layout_.bank(h), result.bank);
    summary += "; " + prototypes::to_string(h) + " objective " + six(result.initial_objective) +
               " -> " + six(result.final_objective);
  }
  return summary + " (m=" + std::to_string(cfg.prototypes) + ")";
}

std::string Experiment::explain(std::optional<HeadKind> head,
                                const std::vector<std::string>& image_ids) {
  const auto extractor = load_extractor(layout_, config_);
  std::vector<HeadKind> heads = head ? std::vector<HeadKind>{*head} : config_.prototypes.heads;
  std::vector<std::pair<HeadKind, prototypes::PrototypeBank>> banks;
  for (auto h : heads) banks.emplace_back(h, load_head(layout_, h));

  // Resolve targets: generated samples first, then dataset items.
  std::vector<std::pair<std::string, Tensor>> targets;
  std::vector<SampleEntry> samples;
  if (fs::exists(layout_.samples_index())) samples = load_samples(layout_);
  if (image_ids.empty()) {
    if (samples.empty()) samples = load_samples(layout_);
    for (const auto& s : samples) {
      targets.emplace_back(s.id, phantom::load_image(layout_.samples_dir() / s.image));
    }
  } else {
    std::optional<phantom::Dataset> dataset;
    for (const auto& id : image_ids) {
      auto it = std::find_if(samples.begin(), samples.end(),
                             [&](const SampleEntry& s) { return s.id == id; });
      if (it != samples.end()) {
        targets.emplace_back(id, phantom::load_image(layout_.samples_dir() / it->image));
        continue;
      }
      if (!dataset) dataset = load_data(layout_, config_);
      targets.emplace_back(id, dataset->find(id).image);
    }
  }

  ensure_dir(layout_.explanations_dir());
  double f_total = 0.0;
  for (const auto& [id, image] : targets) {
    const auto map = extractor.features(image);
    const auto path = layout_.explanations_dir() / (id + ".json");
    json doc = {{"image_id", id}, {"reports", json::object()}};
    if (fs::exists(path)) {
      auto existing = read_json(path, "explain");
      if (existing.contains("reports") && existing["reports"].is_object()) {
        doc["reports"] = existing["reports"];
      }
    }
    for (const auto& [h, bank] : banks) {
      const auto report = prototypes::explain(bank, map, id);
      doc["reports"][prototypes::to_string(h)] = prototypes::to_json(report);
      f_total += report.faithfulness;
    }
    write_text(path, doc.dump(2) + "\n");
  }
  const double mean_f = f_total / static_cast<double>(targets.size() * banks.size());
  return "explain: " + std::to_string(targets.size()) + " images x " +
         std::to_string(banks.size()) + " heads, mean faithfulness " + six(mean_f) + " -> " +
         layout_.explanations_dir().string();
}

std::string Experiment::evaluate() {
  const auto dataset = load_data(layout_, config_);
  const auto samples = load_samples(layout_);
  const auto& mc = config_.metrics.metric;
  const metrics::PerceptualNet net;

  std::string csv = "image_id,psnr,ssim,lpips,dice\n";
  std::vector<double> psnr, ssim, lpips, dice;
  std::vector<Tensor> generated;
  for (const auto& s : samples) {
    const auto image = phantom::load_image(layout_.samples_dir() / s.image);
    const auto& reference = dataset.find(s.mask_id);
    generated.push_back(image);
    psnr.push_back(metrics::psnr(reference.image, image, mc));
    ssim.push_back(metrics::ssim(reference.image, image, mc));
    lpips.push_back(metrics::lpips(reference.image, image, net, mc));
    dice.push_back(
        metrics::dice(reference.mask, metrics::threshold_mask(image, config_.metrics.dice_threshold)));
    csv += s.id + "," + six(psnr.back()) + "," + six(ssim.back()) + "," + six(lpips.back()) + "," +
           six(dice.back()) + "\n";
  }
  write_text(layout_.metrics_csv(), csv);

  auto stats = [](const std::vector<double>& v) {
    const auto s = metrics::summarize(v);
    return json{{"mean", s.mean}, {"sd", s.stddev}, {"count", s.count}};
  };
  json summary = {
      {"count", samples.size()},
      {"psnr", stats(psnr)},
      {"ssim", stats(ssim)},
      {"lpips", stats(lpips)},
      {"dice", stats(dice)},
      {"reference", "dataset image whose mask conditioned the sample"},
      {"dice_definition", "conditioning mask vs generated image thresholded at " +
                              format("%g", config_.metrics.dice_threshold)},
      {"lpips_note", "internal fixed-seed feature network; not comparable to published LPIPS"},
  };
  // Frechet distance between mean-pooled extractor features of generated and
  // training images (needs the extractor from train-proto).
  std::string frechet_note = "frechet n/a (no extractor)";
  summary["frechet_distance"] = nullptr;
  if (fs::exists(layout_.extractor()) && samples.size() >= 2) {
    const auto extractor = load_extractor(layout_, config_);
    std::vector<Tensor> real;
    for (const auto* item : dataset.split("train")) real.push_back(item->image);
    std::vector<std::vector<double>> fa, fb;
    for (const auto& map : extractor.features(real)) fa.push_back(mean_feature(map));
    for (const auto& map : extractor.features(generated)) fb.push_back(mean_feature(map));
    if (fa.size() >= 2) {
      const double fd = metrics::frechet_distance(fa, fb);
      summary["frechet_distance"] = fd;
      summary["frechet_definition"] =
          "mean-pooled extractor features, training images vs generated samples";
      frechet_note = "frechet " + six(fd);
    }
  }
  write_text(layout_.metrics_summary(), summary.dump(2) + "\n");
  return "evaluate: " + std::to_string(samples.size()) + " images, psnr " +
         six(metrics::summarize(psnr).mean) + ", ssim " + six(metrics::summarize(ssim).mean) +
         ", lpips " + six(metrics::summarize(lpips).mean) + ", dice " +
         six(metrics::summarize(dice).mean) + ", " + frechet_note + " -> " +
         layout_.metrics_csv().string();
}

std::string Experiment::compare() {
  const auto extractor = load_extractor(layout_, config_);
  const auto samples = load_samples(layout_);
  std::vector<Tensor> images;
  for (const auto& s : samples) images.push_back(phantom::load_image(layout_.samples_dir() / s.image));
  const auto maps = extractor.features(images);

  std::string f_rows = "image_id,head,faithfulness\n";
  std::string nis_rows = "image_id,head,prototype,nis\n";
  std::string csv = "head,m,count,mean_faithfulness,sd_faithfulness\n";
  json heads = json::array();
  std::vector<std::pair<double, std::string>> ranking;
  std::vector<double> means;
  double bar_top = 0.0;
  for (auto h : config_.prototypes.heads) {
    const auto bank = load_head(layout_, h);
    const auto name = prototypes::to_string(h);
    std::vector<double> f, all_nis;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto report = prototypes::explain(bank, maps[i], samples[i].id);
      f.push_back(report.faithfulness);
      f_rows += samples[i].id + "," + name + "," + full(report.faithfulness) + "\n";
      std::vector<double> by_index(report.m);
      for (const auto& r : report.records) by_index[r.prototype] = r.nis;
      for (std::size_t j = 0; j < by_index.size(); ++j) {
        nis_rows += samples[i].id + "," + name + "," + std::to_string(j) + "," + full(by_index[j]) +
                    "\n";
        all_nis.push_back(by_index[j]);
      }
    }
    const auto s = metrics::summarize(f);
    csv += name + "," + std::to_string(bank.size()) + "," + std::to_string(s.count) + "," +
           full(s.mean) + "," + full(s.stddev) + "\n";
    heads.push_back({{"head", name},
                     {"m", bank.size()},
                     {"count", s.count},
                     {"mean_faithfulness", s.mean},
                     {"sd_faithfulness", s.stddev},
                     {"upper_bound", 1.0 / static_cast<double>(bank.size())}});
    ranking.emplace_back(s.mean, name);
    means.push_back(s.mean);
    bar_top = std::max(bar_top, 1.0 / static_cast<double>(bank.size()));
    phantom::save_image(layout_.root / ("nis_hist_" + name + ".pgm"), render_histogram(all_nis));
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  json ordering = json::array();
  std::string order_text;
  for (const auto& [mean, name] : ranking) {
    ordering.push_back(name);
    order_text += (order_text.empty() ? "" : " > ") + name;
  }

  json report = {{"heads", heads},
                 {"ordering", ordering},
                 {"reference_ordering", {"eppnet", "protopool", "ppnet"}},
                 {"ordering_matches_reference",
                  ordering == json{"eppnet", "protopool", "ppnet"}},
                 {"faithfulness_definition",
                  "(1/m) * sum_j NIS_j * corr_j, corr = Pearson(prototype, matched patch) "
                  "clamped to [0,1]; a proxy, no ground-truth influence exists"}};
  if (fs::exists(layout_.metrics_summary())) {
    report["image_metrics"] = read_json(layout_.metrics_summary(), "evaluate");
  }
  write_text(layout_.comparison_csv(), csv);
  write_text(layout_.faithfulness_rows(), f_rows);
  write_text(layout_.nis_rows(), nis_rows);
  write_text(layout_.comparison_json(), report.dump(2) + "\n");
  phantom::save_image(layout_.root / "comparison_bar.pgm", render_bars(means, bar_top));
  return "compare: " + std::to_string(samples.size()) + " images, mean faithfulness " +
         order_text + " -> " + layout_.comparison_csv().string();
}

}  // namespace protodiff::harness
