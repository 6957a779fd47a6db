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
#include <fstream>

#include "protodiff/checkpoint.hpp"
#include "protodiff/error.hpp"
#include "protodiff/metrics.hpp"
#include "protodiff/optim.hpp"
#include "protodiff/prototypes.hpp"

namespace protodiff::prototypes {

namespace {

Tensor head_objective(HeadKind head, const Tensor& prototypes, const Tensor& rows,
                      std::size_t cells, const std::vector<std::vector<std::size_t>>& assigned,
                      double lambda_div) {
  switch (head) {
    case HeadKind::kPPNet:
      return ppnet_objective(prototypes, rows, cells, assigned);
    case HeadKind::kEPPNet:
      return eppnet_objective(prototypes, rows, cells, assigned, lambda_div);
    case HeadKind::kProtoPool:
      return protopool_objective(prototypes, rows);
  }
  fail(ErrorKind::kState, "unknown head");
}

}  // namespace

HeadTraining train_head(HeadKind head, const std::vector<FeatureMap>& maps,
                        const std::vector<std::string>& image_ids, const HeadConfig& config,
                        Rng& rng) {
  require(!maps.empty(), ErrorKind::kInvalidArgument, "head training needs a non-empty dataset");
  require(image_ids.size() == maps.size(), ErrorKind::kShapeMismatch,
          "one image id per feature map required");
  require(config.learning_rate > 0.0, ErrorKind::kConfig, "head learning rate must be positive");
  require(config.lambda_div >= 0.0, ErrorKind::kConfig, "lambda_div must be non-negative");

  auto bank = init_bank(head, config.prototypes, maps, rng, config.lambda_div);
  const auto rows = feature_rows(maps);
  const std::size_t cells = maps.front().cells();
  auto params = Tensor::from(bank.prototypes.shape(),
                             {bank.prototypes.data().begin(), bank.prototypes.data().end()}, true);
  Adam opt({params}, {.learning_rate = config.learning_rate});

  auto current_assignment = [&] {
    if (head == HeadKind::kProtoPool) return std::vector<std::vector<std::size_t>>{};
    PrototypeBank snapshot = bank;
    snapshot.prototypes = params.detach();
    return assign_samples(snapshot, maps);
  };
  auto evaluate = [&](const std::vector<std::vector<std::size_t>>& assigned) {
    NoGradGuard no_grad;
    return head_objective(head, params, rows, cells, assigned, config.lambda_div).item();
  };

  HeadTraining result;
  result.initial_objective = evaluate(current_assignment());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto assigned = current_assignment();
    try {
      backward(head_objective(head, params, rows, cells, assigned, config.lambda_div));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNonFinite) {
        fail(ErrorKind::kNumeric, to_string(head) + " training diverged in epoch " +
                                      std::to_string(epoch) + ": " + e.what());
      }
      throw;
    }
    opt.step();
  }
  result.final_objective = evaluate(current_assignment());
  require(std::isfinite(result.final_objective), ErrorKind::kNumeric,
          to_string(head) + " objective is not finite");

  bank.prototypes = params.detach();
  result.learned = bank.prototypes;
  if (requires_push(head)) bank = push_prototypes(std::move(bank), maps, image_ids);
  result.bank = std::move(bank);
  return result;
}

PrototypeBank push_prototypes(PrototypeBank bank, const std::vector<FeatureMap>& maps,
                              const std::vector<std::string>& image_ids) {
  require(!maps.empty(), ErrorKind::kInvalidArgument, "push needs a non-empty dataset");
  require(image_ids.size() == maps.size(), ErrorKind::kShapeMismatch,
          "one image id per feature map required");
  const std::size_t m = bank.size(), depth = bank.depth();
  std::vector<double> values(bank.prototypes.data().begin(), bank.prototypes.data().end());
  bank.provenance.assign(m, std::nullopt);
  for (std::size_t j = 0; j < m; ++j) {
    const std::span<const double> p(values.data() + j * depth, depth);
    std::size_t best_image = 0, best_cell = 0;
    double best = -1.0;
    for (std::size_t x = 0; x < maps.size(); ++x) {
      require(maps[x].depth == depth, ErrorKind::kShapeMismatch,
              "feature depth differs from prototype dimension");
      for (std::size_t c = 0; c < maps[x].cells(); ++c) {
        const double d = squared_distance(maps[x].cell(c), p);
        if (best < 0.0 || d < best) {
          best = d;
          best_image = x;
          best_cell = c;
        }
      }
    }
    const auto patch = maps[best_image].cell(best_cell);
    std::copy(patch.begin(), patch.end(), values.begin() + j * depth);
    bank.provenance[j] = PatchSource{image_ids[best_image], best_cell / maps[best_image].width,
                                     best_cell % maps[best_image].width};
  }
  bank.prototypes = Tensor::from({m, depth}, std::move(values));
  return bank;
}

ExplanationReport explain(const PrototypeBank& bank, const FeatureMap& map,
                          const std::string& image_id) {
  bank.validate();
  if (requires_push(bank.head)) {
    for (std::size_t j = 0; j < bank.size(); ++j) {
      require(bank.provenance[j].has_value(), ErrorKind::kMissingPrerequisite,
              to_string(bank.head) + " prototype " + std::to_string(j) +
                  " has no source patch; run the push step first");
    }
  }
  const std::size_t m = bank.size();
  std::vector<double> g(m), corr(m);
  std::vector<CellMatch> matches(m);
  for (std::size_t j = 0; j < m; ++j) {
    matches[j] = best_match(map, bank.prototype(j));
    g[j] = matches[j].similarity;
    corr[j] = metrics::clamped_pearson(bank.prototype(j), map.cell(matches[j].h, matches[j].w));
  }
  const auto weights = nis(g);

  ExplanationReport report;
  report.image_id = image_id;
  report.head = bank.head;
  report.m = m;
  report.faithfulness = metrics::faithfulness(weights, corr);
  for (std::size_t j = 0; j < m; ++j) {
    report.records.push_back(
        {j, g[j], weights[j], corr[j], bank.provenance[j], matches[j].h, matches[j].w});
  }
  std::stable_sort(report.records.begin(), report.records.end(),
                   [](const auto& a, const auto& b) { return a.nis > b.nis; });
  return report;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json source_json(const std::optional<PatchSource>& source) {
  if (!source) return nullptr;
  return {{"image_id", source->image_id}, {"h", source->h}, {"w", source->w}};
}

std::optional<PatchSource> source_from(const nlohmann::json& json) {
  if (json.is_null()) return std::nullopt;
  return PatchSource{json.at("image_id").get<std::string>(), json.at("h").get<std::size_t>(),
                     json.at("w").get<std::size_t>()};
}

}  // namespace

nlohmann::json to_json(const ExplanationReport& report) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) {
    records.push_back({{"prototype", r.prototype},
                       {"g", r.g},
                       {"nis", r.nis},
                       {"corr", r.corr},
                       {"match", {{"h", r.h}, {"w", r.w}}},
                       {"source", source_json(r.source)}});
  }
  return {{"image_id", report.image_id},
          {"head", to_string(report.head)},
          {"m", report.m},
          {"faithfulness", report.faithfulness},
          {"records", records}};
}

ExplanationReport report_from_json(const nlohmann::json& json) {
  try {
    ExplanationReport report;
    report.image_id = json.at("image_id").get<std::string>();
    report.head = parse_head(json.at("head").get<std::string>());
    report.m = json.at("m").get<std::size_t>();
    report.faithfulness = json.at("faithfulness").get<double>();
    for (const auto& r : json.at("records")) {
      InfluenceRecord rec;
      rec.prototype = r.at("prototype").get<std::size_t>();
      rec.g = r.at("g").get<double>();
      rec.nis = r.at("nis").get<double>();
      rec.corr = r.at("corr").get<double>();
      rec.h = r.at("match").at("h").get<std::size_t>();
      rec.w = r.at("match").at("w").get<std::size_t>();
      rec.source = source_from(r.at("source"));
      report.records.push_back(std::move(rec));
    }
    require(report.records.size() == report.m, ErrorKind::kFormat,
            "explanation record count differs from m");
    return report;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "malformed explanation: " + std::string(e.what()));
  }
}

void save_bank(const std::filesystem::path& stem, const PrototypeBank& bank) {
  bank.validate();
  ParameterSet params;
  params.add("prototypes", bank.prototypes);
  save_checkpoint(std::filesystem::path(stem.string() + ".ckpt"), params);

  nlohmann::json provenance = nlohmann::json::object();
  for (std::size_t j = 0; j < bank.size(); ++j) {
    provenance[std::to_string(j)] = source_json(bank.provenance[j]);
  }
  nlohmann::json sidecar = {{"head", to_string(bank.head)},
                            {"lambda_div", bank.lambda_div},
                            {"m", bank.size()},
                            {"depth", bank.depth()},
                            {"provenance", provenance}};
  const std::filesystem::path json_path(stem.string() + ".json");
  std::ofstream out(json_path, std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + json_path.string());
  out << sidecar.dump(2) << '\n';
  require(out.good(), ErrorKind::kIo, "failed writing " + json_path.string());
}

PrototypeBank load_bank(const std::filesystem::path& stem) {
  const std::filesystem::path ckpt(stem.string() + ".ckpt");
  const std::filesystem::path json_path(stem.string() + ".json");
  require(std::filesystem::exists(ckpt) && std::filesystem::exists(json_path),
          ErrorKind::kMissingPrerequisite, "prototype bank not found at " + stem.string());
  const auto params = load_checkpoint(ckpt);
  require(params.contains("prototypes"), ErrorKind::kFormat, "bank checkpoint lacks prototypes");

  std::ifstream in(json_path);
  nlohmann::json sidecar;
  PrototypeBank bank;
  try {
    in >> sidecar;
    bank.head = parse_head(sidecar.at("head").get<std::string>());
    bank.lambda_div = sidecar.at("lambda_div").get<double>();
    bank.prototypes = params.get("prototypes");
    require(bank.prototypes.rank() == 2 && sidecar.at("m").get<std::size_t>() == bank.size() &&
                sidecar.at("depth").get<std::size_t>() == bank.depth(),
            ErrorKind::kFormat, "bank sidecar does not match its checkpoint");
    const auto& provenance = sidecar.at("provenance");
    for (std::size_t j = 0; j < bank.size(); ++j) {
      bank.provenance.push_back(source_from(provenance.at(std::to_string(j))));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "malformed bank sidecar: " + std::string(e.what()));
  }
  bank.validate();
  return bank;
}

}  // namespace protodiff::prototypes
