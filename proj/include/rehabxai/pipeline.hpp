#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rehabxai/dataset.hpp"
#include "rehabxai/explain.hpp"
#include "rehabxai/kinematics.hpp"
#include "rehabxai/model.hpp"

namespace rehabxai {

// "ds-" + 16 hex digits of the canonical serialization hash.
std::string dataset_id(const Dataset& d);

// Overrides from a JSON object; absent keys keep the defaults.
SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthConfig& c);

// A model trained on a whole dataset plus what explanations need from
// training: held-out predictions, feature ranges and the mean feature vector.
struct ModelBundle {
  std::string id;
  std::string dataset_id;
  Component component = Component::kRom;
  TrainedModel model;
  std::optional<LosoRecord> loso;
  FeatureRanges ranges;
  std::vector<double> baseline;
};

ModelBundle train_bundle(const FeatureTable& table, const std::string& dataset_id,
                         const ModelConfig& config, bool with_loso, Exec exec = Exec::kSerial);

nlohmann::json to_json(const ModelBundle& b);
ModelBundle bundle_from_json(const nlohmann::json& j);
ModelBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const ModelBundle& b, const std::filesystem::path& path);

enum class AttributionMode { kSampled, kExactGrouped };
std::string_view to_string(AttributionMode m);
AttributionMode parse_attribution_mode(std::string_view s);

struct ExplainRequest {
  std::string case_id;
  int k = kDefaultK;
  Metric metric = Metric::kEuclidean;
  SpaceKind space = SpaceKind::kProjected;
  bool examples = true;  // neighbor lists, set tags, global coords
  bool decision = true;  // prediction, attribution, radar
  AttributionMode attribution = AttributionMode::kSampled;
  int n_samples = 256;
  std::uint64_t seed = 0;
};

struct ExplainContext {
  const Dataset* dataset = nullptr;
  std::map<Component, const ModelBundle*> models;
  std::map<Component, const EmbeddingSpace*> spaces;
  std::map<Component, const FeatureTable*> tables;
};

// Combined payload for one case over both components. Throws ValidationError
// for a bad k and NotFoundError for an unknown case.
nlohmann::json explain_case(const ExplainContext& ctx, const ExplainRequest& request,
                            Exec exec = Exec::kSerial);

}  // namespace rehabxai
