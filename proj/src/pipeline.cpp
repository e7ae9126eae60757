#include "rehabxai/pipeline.hpp"

#include <algorithm>

namespace rehabxai {

using nlohmann::json;

std::string dataset_id(const Dataset& d) { return "ds-" + hex64(fnv1a64(serialize_dataset(d))); }

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  if (!j.is_object()) throw ParseError("synthetic config must be a JSON object");
  try {
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.trials_per_side = j.value("trials_per_side", c.trials_per_side);
    c.frames_per_trial = j.value("frames_per_trial", c.frames_per_trial);
    c.frame_rate_hz = j.value("frame_rate_hz", c.frame_rate_hz);
    c.noise_std_m = j.value("noise_std_m", c.noise_std_m);
    c.impairment = j.value("impairment", c.impairment);
    c.compensation = j.value("compensation", c.compensation);
    c.trial_jitter = j.value("trial_jitter", c.trial_jitter);
    c.annotator_disagreement = j.value("annotator_disagreement", c.annotator_disagreement);
    c.rom_ratio_threshold = j.value("rom_ratio_threshold", c.rom_ratio_threshold);
    c.comp_displacement_threshold_m =
        j.value("comp_displacement_threshold_m", c.comp_displacement_threshold_m);
    c.max_compensation_m = j.value("max_compensation_m", c.max_compensation_m);
    c.ground_truth_annotator = j.value("ground_truth_annotator", c.ground_truth_annotator);
    c.second_annotator = j.value("second_annotator", c.second_annotator);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed synthetic config: ") + e.what());
  }
  return c;
}

json to_json(const SynthConfig& c) {
  return {{"n_subjects", c.n_subjects},
          {"trials_per_side", c.trials_per_side},
          {"frames_per_trial", c.frames_per_trial},
          {"frame_rate_hz", c.frame_rate_hz},
          {"noise_std_m", c.noise_std_m},
          {"impairment", c.impairment},
          {"compensation", c.compensation},
          {"trial_jitter", c.trial_jitter},
          {"annotator_disagreement", c.annotator_disagreement},
          {"rom_ratio_threshold", c.rom_ratio_threshold},
          {"comp_displacement_threshold_m", c.comp_displacement_threshold_m},
          {"max_compensation_m", c.max_compensation_m},
          {"ground_truth_annotator", c.ground_truth_annotator},
          {"second_annotator", c.second_annotator}};
}

ModelBundle train_bundle(const FeatureTable& table, const std::string& dataset_id,
                         const ModelConfig& config, bool with_loso, Exec exec) {
  if (config.component != table.component) {
    throw ValidationError("model config is for " + std::string(to_string(config.component)) +
                          " but the feature table is " + std::string(to_string(table.component)));
  }
  ModelBundle b;
  b.dataset_id = dataset_id;
  b.component = table.component;
  if (table.size() == 0) throw ValidationError("cannot train on an empty feature table");
  std::vector<std::vector<double>> rows;
  rows.reserve(table.size());
  for (const auto& r : table.rows) rows.push_back(r.values);
  b.model = fit_model(config, rows, table.labels, table.rows.front().schema_hash);
  b.id = model_id(b.model);
  if (with_loso) b.loso = evaluate_loso(table, config, exec);
  b.ranges = feature_ranges(table);
  b.baseline.assign(table.dim(), 0.0);
  for (const auto& r : table.rows) {
    for (std::size_t j = 0; j < r.values.size(); ++j) b.baseline[j] += r.values[j];
  }
  for (double& v : b.baseline) v /= static_cast<double>(table.size());
  return b;
}

json to_json(const ModelBundle& b) {
  return {{"id", b.id},
          {"dataset_id", b.dataset_id},
          {"component", to_string(b.component)},
          {"model", to_json(b.model)},
          {"loso", b.loso ? to_json(*b.loso) : json(nullptr)},
          {"ranges", {{"min", b.ranges.min}, {"max", b.ranges.max}}},
          {"baseline", b.baseline}};
}

ModelBundle bundle_from_json(const json& j) {
  ModelBundle b;
  try {
    b.id = j.at("id").get<std::string>();
    b.dataset_id = j.value("dataset_id", "");
    b.component = parse_component(j.at("component").get<std::string>());
    b.model = model_from_json(j.at("model"));
    if (!j.at("loso").is_null()) b.loso = loso_record_from_json(j.at("loso"));
    b.ranges.min = j.at("ranges").at("min").get<std::vector<double>>();
    b.ranges.max = j.at("ranges").at("max").get<std::vector<double>>();
    b.baseline = j.at("baseline").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
  const auto dim = static_cast<std::size_t>(b.model.input_dim());
  if (b.ranges.min.size() != dim || b.ranges.max.size() != dim || b.baseline.size() != dim) {
    throw ValidationError("model file ranges/baseline do not match the model input size");
  }
  if (b.id != model_id(b.model)) throw ValidationError("model id does not match its weights");
  return b;
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return bundle_from_json(j);
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(b).dump());
}

std::string_view to_string(AttributionMode m) {
  return m == AttributionMode::kSampled ? "sampled" : "exact_grouped";
}

AttributionMode parse_attribution_mode(std::string_view s) {
  if (s == "sampled") return AttributionMode::kSampled;
  if (s == "exact_grouped") return AttributionMode::kExactGrouped;
  throw ValidationError("unknown attribution mode '" + std::string(s) +
                        "' (expected sampled or exact_grouped)");
}

namespace {

constexpr std::array<Component, 2> kComponents{Component::kRom, Component::kComp};

template <typename T>
const T& require(const std::map<Component, const T*>& m, Component c, const char* what) {
  auto it = m.find(c);
  if (it == m.end() || it->second == nullptr) {
    throw NotFoundError(std::string("no ") + what + " for " + std::string(to_string(c)));
  }
  return *it->second;
}

json coords_json(const Matrix& coords, std::size_t row) {
  return json::array({coords(row, 0), coords(row, 1)});
}

const std::vector<double>& table_row(const FeatureTable& table, const std::string& trial_id) {
  auto pos = table.position(trial_id);
  if (!pos) throw NotFoundError("trial '" + trial_id + "' is not in the feature table");
  return table.rows[*pos].values;
}

json examples_payload(const ExplainContext& ctx, const ExplainRequest& req, Exec exec) {
  std::map<Component, NeighborResult> results;
  for (Component c : kComponents) {
    const EmbeddingSpace& space = require(ctx.spaces, c, "embedding space");
    if (static_cast<std::size_t>(req.k) >= space.sample_ids.size()) {
      throw ValidationError("k=" + std::to_string(req.k) + " needs more than " +
                            std::to_string(space.sample_ids.size()) + " samples");
    }
    NeighborQuery q;
    q.sample_id = req.case_id;
    q.k = req.k;
    q.metric = req.metric;
    q.space = req.space;
    results[c] = knn(space, q, nullptr, exec);
  }
  const NeighborSets sets = common_unique_neighbors(results[Component::kRom], results[Component::kComp]);
  const auto tag = [&](const std::string& id) -> std::string {
    if (std::find(sets.common.begin(), sets.common.end(), id) != sets.common.end()) return "common";
    if (std::find(sets.unique_rom.begin(), sets.unique_rom.end(), id) != sets.unique_rom.end()) {
      return "unique_rom";
    }
    return "unique_comp";
  };

  json out = json::object();
  for (Component c : kComponents) {
    const EmbeddingSpace& space = *ctx.spaces.at(c);
    const ModelBundle& bundle = require(ctx.models, c, "model");
    if (!bundle.loso) throw ValidationError("model " + bundle.id + " has no LOSO record");
    json neighbors = json::array();
    for (const auto& n : results[c].neighbors) {
      neighbors.push_back({{"id", n.id},
                           {"distance", n.distance},
                           {"coords", {n.coords[0], n.coords[1]}},
                           {"set", tag(n.id)},
                           {"benchmark", to_json(benchmark_info(n.id, *ctx.dataset, *bundle.loso))}});
    }
    json global_coords = json::array();
    for (std::size_t i = 0; i < space.sample_ids.size(); ++i) {
      global_coords.push_back(coords_json(space.coords, i));
    }
    const std::size_t self = *space.position(req.case_id);
    out[std::string(to_string(c))] = {{"space_id", space.id},
                                      {"method", to_string(space.method)},
                                      {"query_coords", coords_json(space.coords, self)},
                                      {"neighbors", std::move(neighbors)},
                                      {"global", {{"ids", space.sample_ids}, {"coords", global_coords}}}};
  }
  out["sets"] = {{"common", sets.common}, {"unique_rom", sets.unique_rom}, {"unique_comp", sets.unique_comp}};
  return out;
}

json decision_payload(const ExplainContext& ctx, const ExplainRequest& req, Exec exec) {
  const Dataset& ds = *ctx.dataset;
  const ExerciseTrial& trial = ds.trial(req.case_id);
  const ExerciseTrial* other = ds.counterpart(trial);
  if (other == nullptr) {
    throw NotFoundError("trial '" + req.case_id + "' has no counterpart on the other side");
  }
  const std::string& affected_id = trial.side == Side::kAffected ? trial.trial_id : other->trial_id;
  const std::string& unaffected_id = trial.side == Side::kAffected ? other->trial_id : trial.trial_id;

  json out = json::object();
  for (Component c : kComponents) {
    const ModelBundle& bundle = require(ctx.models, c, "model");
    const FeatureTable& table = require(ctx.tables, c, "feature table");
    const FeatureSchema& schema = schema_for(c);
    const std::vector<double>& x = table_row(table, req.case_id);
    const Prediction p = forward(bundle.model, x);

    ShapleyOptions opts;
    opts.seed = req.seed;
    opts.exec = exec;
    if (req.attribution == AttributionMode::kSampled) {
      opts.mode = ShapleyMode::kSampled;
      opts.n_samples = req.n_samples;
      opts.player_names = schema.names();
    } else {
      opts.mode = ShapleyMode::kExact;
      opts.groups = schema.channel_groups();
      opts.player_names = schema.channels();
    }
    const FeatureAttribution attr = shapley_attribution(bundle.model, x, bundle.baseline, opts);
    std::vector<std::string> radar_features = attr.top_features;
    if (req.attribution == AttributionMode::kExactGrouped) {
      for (auto& f : radar_features) f += ".max";
    }
    const auto radar = radar_payload(radar_features, schema, table_row(table, affected_id),
                                     table_row(table, unaffected_id), bundle.ranges);
    out[std::string(to_string(c))] = {
        {"model_id", bundle.id},
        {"prediction",
         {{"label", to_string(p.label)},
          {"confidence", p.confidence},
          {"probabilities", {{"correct", p.probabilities[0]}, {"impaired", p.probabilities[1]}}}}},
        {"attribution_mode", to_string(req.attribution)},
        {"attribution", to_json(attr)},
        {"top_features", attr.top_features},
        {"radar", to_json(radar)},
        {"radar_pair", {{"affected", affected_id}, {"unaffected", unaffected_id}}}};
  }
  return out;
}

}  // namespace

json explain_case(const ExplainContext& ctx, const ExplainRequest& req, Exec exec) {
  if (ctx.dataset == nullptr) throw ValidationError("explanation needs a dataset");
  if (req.k < 1) throw ValidationError("k must be at least 1");
  ctx.dataset->trial(req.case_id);
  json out = {{"case", req.case_id},
              {"k", req.k},
              {"metric", to_string(req.metric)},
              {"space", to_string(req.space)}};
  if (req.examples) out["examples"] = examples_payload(ctx, req, exec);
  if (req.decision) out["decision"] = decision_payload(ctx, req, exec);
  return out;
}

}  // namespace rehabxai
