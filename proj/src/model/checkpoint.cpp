// Copyright 2026 The emetts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>

#include "emetts/model/model.hpp"
#include "emetts/numerics/tensor_io.hpp"

namespace emetts {

void AcousticModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "params");
  nlohmann::json manifest = nlohmann::json::array();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    save_tensor(dir / "params" / (p.name + ".tensor"), p.value);
    manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["config"] = config_;
  j["stats"] = stats_;
  j["parameters"] = manifest;
  const auto path = dir / "model.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

AcousticModel AcousticModel::load(const std::filesystem::path& dir) {
  const auto path = dir / "model.json";
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path.string() + ": cannot open for reading");
  nlohmann::json j;
  ModelConfig config;
  NormalizationStats stats;
  std::vector<std::pair<std::string, Shape>> listed;
  try {
    j = nlohmann::json::parse(is);
    const int version = j.value("schema_version", -1);
    if (version != kCheckpointSchemaVersion) {
      throw FormatError(path.string() + ": unsupported schema version " + std::to_string(version));
    }
    config = j.at("config").get<ModelConfig>();
    stats = j.at("stats").get<NormalizationStats>();
    for (const auto& p : j.at("parameters")) {
      listed.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": corrupt header (" + e.what() + ")");
  }

  // The config determines the parameter set; the checkpoint must match it exactly.
  auto params = init_parameters<float>(config, 0);
  if (listed.size() != params.size()) {
    throw FormatError(path.string() + ": corrupt header (checkpoint lists " + std::to_string(listed.size()) +
                      " parameters, config implies " + std::to_string(params.size()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (listed[i].first != p.name || listed[i].second != p.value.shape()) {
      throw FormatError(path.string() + ": corrupt header (parameter " + listed[i].first + " " +
                        shape_str(listed[i].second) + " does not match config entry " + p.name + " " +
                        shape_str(p.value.shape()) + ")");
    }
    auto value = load_tensor(dir / "params" / (p.name + ".tensor"));
    if (value.shape() != p.value.shape()) {
      throw FormatError((dir / "params" / (p.name + ".tensor")).string() + ": corrupt header (shape " +
                        shape_str(value.shape()) + ", expected " + shape_str(p.value.shape()) + ")");
    }
    p.value = std::move(value);
  }
  return AcousticModel(config, stats, std::move(params));
}

}  // namespace emetts
