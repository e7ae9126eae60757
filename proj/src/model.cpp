#include "rehabxai/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace rehabxai {

using nlohmann::json;

namespace {

bool on_grid(const ModelConfig& c) {
  return std::find(kGridLayers.begin(), kGridLayers.end(), c.n_hidden_layers) !=
             kGridLayers.end() &&
         std::find(kGridUnits.begin(), kGridUnits.end(), c.hidden_units) != kGridUnits.end() &&
         std::find(kGridLearningRates.begin(), kGridLearningRates.end(), c.learning_rate) !=
             kGridLearningRates.end();
}

std::size_t parameter_count_for(int input_dim, int layers, int units) {
  std::size_t total = 0;
  int fan_in = input_dim;
  for (int l = 0; l < layers; ++l) {
    total += static_cast<std::size_t>(fan_in) * units + units;
    fan_in = units;
  }
  return total + static_cast<std::size_t>(fan_in) * kNumClasses + kNumClasses;
}

void standardize(const Standardizer& s, std::span<const double> x, std::vector<double>& out) {
  out.assign(x.begin(), x.end());
  if (s.mean.empty()) return;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - s.mean[i]) / s.scale[i];
}

// out = b + x * W, then ReLU when `hidden`.
void dense_forward(const DenseLayer& layer, const std::vector<double>& x, std::vector<double>& out,
                   bool hidden) {
  out.assign(layer.bias.begin(), layer.bias.end());
  const double* w = layer.weights.data();
  for (int i = 0; i < layer.fan_in; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;
    const double* row = w + static_cast<std::size_t>(i) * layer.fan_out;
    for (int j = 0; j < layer.fan_out; ++j) out[static_cast<std::size_t>(j)] += xi * row[j];
  }
  if (hidden) {
    for (double& v : out) v = v > 0.0 ? v : 0.0;
  }
}

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& z) {
  const double m = std::max(z[0], z[1]);
  std::array<double, kNumClasses> p{};
  double sum = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    p[k] = std::exp(z[k] - m);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(const std::array<double, kNumClasses>& z, int y) {
  const double m = std::max(z[0], z[1]);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return m + std::log(sum) - z[static_cast<std::size_t>(y)];
}

void check_input(const TrainedModel& model, std::span<const double> x) {
  if (model.layers.empty()) throw ValidationError("model has no layers");
  if (static_cast<int>(x.size()) != model.input_dim()) {
    throw ValidationError("feature dimension mismatch: model expects " +
                          std::to_string(model.input_dim()) + ", got " +
                          std::to_string(x.size()));
  }
}

// Activations of every layer (index 0 = standardized input); the last entry
// holds the logits.
void forward_all(const TrainedModel& model, std::span<const double> x,
                 std::vector<std::vector<double>>& acts) {
  acts.resize(model.layers.size() + 1);
  standardize(model.input, x, acts[0]);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    dense_forward(model.layers[l], acts[l], acts[l + 1], l + 1 < model.layers.size());
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (n_hidden_layers < 1 || n_hidden_layers > 3) {
    throw ValidationError("n_hidden_layers must be 1..3");
  }
  if (hidden_units < 1) throw ValidationError("hidden_units must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be finite and >= 0");
  }
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!off_grid && !on_grid(*this)) {
    throw ValidationError("config outside the hyperparameter grid (set off_grid to override)");
  }
}

ModelConfig ModelConfig::defaults(Component c) {
  ModelConfig cfg;
  cfg.component = c;
  cfg.n_hidden_layers = 3;
  cfg.hidden_units = c == Component::kRom ? 256 : 64;
  cfg.learning_rate = 0.005;
  return cfg;
}

json to_json(const ModelConfig& c) {
  return {{"n_hidden_layers", c.n_hidden_layers},
          {"hidden_units", c.hidden_units},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"component", to_string(c.component)},
          {"off_grid", c.off_grid}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.n_hidden_layers = j.at("n_hidden_layers").get<int>();
    c.hidden_units = j.at("hidden_units").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.value("epochs", 4);
    c.batch_size = j.value("batch_size", 1);
    c.seed = j.value("seed", std::uint64_t{0});
    c.component = parse_component(j.at("component").get<std::string>());
    c.off_grid = j.value("off_grid", false);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<double> standardize(const Standardizer& s, std::span<const double> x) {
  std::vector<double> out;
  standardize(s, x, out);
  return out;
}

Standardizer fit_standardizer(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw ValidationError("cannot fit a standardizer on zero rows");
  const std::size_t d = rows.front().size();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  for (double& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.scale[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  }
  for (double& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(rows.size()));
    // Constant features pass through centered but unscaled.
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

std::size_t TrainedModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.weights.size() + l.bias.size();
  return total;
}

TrainedModel init_model(const ModelConfig& config, int input_dim, std::string schema_hash) {
  config.validate();
  if (input_dim < 1) throw ValidationError("input_dim must be >= 1");
  TrainedModel m;
  m.config = config;
  m.schema_hash = std::move(schema_hash);
  std::mt19937_64 rng(config.seed);
  int fan_in = input_dim;
  for (int l = 0; l <= config.n_hidden_layers; ++l) {
    const int fan_out = l < config.n_hidden_layers ? config.hidden_units : kNumClasses;
    DenseLayer layer;
    layer.fan_in = fan_in;
    layer.fan_out = fan_out;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(static_cast<std::size_t>(fan_in) * fan_out);
    for (double& w : layer.weights) w = dist(rng);
    layer.bias.assign(static_cast<std::size_t>(fan_out), 0.0);
    m.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return m;
}

Prediction forward(const TrainedModel& model, std::span<const double> x) {
  check_input(model, x);
  std::vector<std::vector<double>> acts;
  forward_all(model, x, acts);
  Prediction p;
  p.logits = {acts.back()[0], acts.back()[1]};
  p.probabilities = softmax(p.logits);
  const int cls = p.probabilities[1] > p.probabilities[0] ? 1 : 0;
  p.label = label_from_index(cls);
  p.confidence = p.probabilities[static_cast<std::size_t>(cls)];
  if (model.layers.size() > 1) p.first_hidden_activation = acts[1];
  return p;
}

double class_probability(const TrainedModel& model, std::span<const double> x, int cls) {
  check_input(model, x);
  std::vector<std::vector<double>> acts;
  forward_all(model, x, acts);
  return softmax({acts.back()[0], acts.back()[1]})[static_cast<std::size_t>(cls)];
}

double loss_and_gradient(const TrainedModel& model, std::span<const double> x, Label y,
                         Gradients& grad) {
  check_input(model, x);
  std::vector<std::vector<double>> acts;
  forward_all(model, x, acts);
  const std::array<double, kNumClasses> z = {acts.back()[0], acts.back()[1]};
  const int target = class_index(y);
  const double loss = cross_entropy(z, target);

  const std::size_t n_layers = model.layers.size();
  grad.weights.resize(n_layers);
  grad.bias.resize(n_layers);

  const auto p = softmax(z);
  std::vector<double> delta = {p[0], p[1]};
  delta[static_cast<std::size_t>(target)] -= 1.0;

  for (std::size_t l = n_layers; l-- > 0;) {
    const DenseLayer& layer = model.layers[l];
    const std::vector<double>& input = acts[l];
    auto& gw = grad.weights[l];
    gw.assign(layer.weights.size(), 0.0);
    for (int i = 0; i < layer.fan_in; ++i) {
      const double xi = input[static_cast<std::size_t>(i)];
      if (xi == 0.0) continue;
      double* row = gw.data() + static_cast<std::size_t>(i) * layer.fan_out;
      for (int j = 0; j < layer.fan_out; ++j) row[j] = xi * delta[static_cast<std::size_t>(j)];
    }
    grad.bias[l] = delta;
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(layer.fan_in), 0.0);
    for (int i = 0; i < layer.fan_in; ++i) {
      // ReLU derivative: zero where the forward activation was clamped.
      if (input[static_cast<std::size_t>(i)] <= 0.0) continue;
      const double* row = layer.weights.data() + static_cast<std::size_t>(i) * layer.fan_out;
      double s = 0.0;
      for (int j = 0; j < layer.fan_out; ++j) s += row[j] * delta[static_cast<std::size_t>(j)];
      prev[static_cast<std::size_t>(i)] = s;
    }
    delta = std::move(prev);
  }
  return loss;
}

double sample_loss(const TrainedModel& model, std::span<const double> x, Label y) {
  check_input(model, x);
  std::vector<std::vector<double>> acts;
  forward_all(model, x, acts);
  return cross_entropy({acts.back()[0], acts.back()[1]}, class_index(y));
}

TrainedModel train(TrainedModel model, std::span<const std::vector<double>> rows,
                   std::span<const Label> labels) {
  const ModelConfig& cfg = model.config;
  cfg.validate();
  if (rows.empty()) throw ValidationError("training needs at least one sample");
  if (rows.size() != labels.size()) throw ValidationError("rows and labels differ in length");
  for (const auto& r : rows) check_input(model, r);

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  Gradients step, accum;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      accum.weights.assign(model.layers.size(), {});
      accum.bias.assign(model.layers.size(), {});
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        accum.weights[l].assign(model.layers[l].weights.size(), 0.0);
        accum.bias[l].assign(model.layers[l].bias.size(), 0.0);
      }
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const double loss = loss_and_gradient(model, rows[idx], labels[idx], step);
        if (!std::isfinite(loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                              std::to_string(idx) + " (learning_rate " +
                              std::to_string(cfg.learning_rate) + ")");
        }
        epoch_loss += loss;
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
          for (std::size_t q = 0; q < step.weights[l].size(); ++q) accum.weights[l][q] += step.weights[l][q];
          for (std::size_t q = 0; q < step.bias[l].size(); ++q) accum.bias[l][q] += step.bias[l][q];
        }
      }
      // Mean gradient over the (possibly short final) batch.
      const double lr = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        for (std::size_t q = 0; q < layer.weights.size(); ++q) layer.weights[q] -= lr * accum.weights[l][q];
        for (std::size_t q = 0; q < layer.bias.size(); ++q) layer.bias[q] -= lr * accum.bias[l][q];
      }
    }
    model.loss_curve.push_back(epoch_loss / static_cast<double>(rows.size()));
  }
  model.trained = true;
  return model;
}

TrainedModel train(TrainedModel model, std::span<const FeatureVector> features,
                   std::span<const Label> labels) {
  std::vector<std::vector<double>> rows;
  rows.reserve(features.size());
  for (const auto& f : features) {
    if (!model.schema_hash.empty() && f.schema_hash != model.schema_hash) {
      throw ValidationError("feature vector '" + f.trial_id + "' uses schema " + f.schema_hash +
                            ", model expects " + model.schema_hash);
    }
    rows.push_back(f.values);
  }
  return train(std::move(model), rows, labels);
}

TrainedModel fit_model(const ModelConfig& config, std::span<const std::vector<double>> rows,
                       std::span<const Label> labels, const std::string& schema_hash) {
  if (rows.empty()) throw ValidationError("training needs at least one sample");
  TrainedModel m = init_model(config, static_cast<int>(rows.front().size()), schema_hash);
  m.input = fit_standardizer(rows);
  return train(std::move(m), rows, labels);
}

ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth,
                          Label positive) {
  if (predicted.size() != truth.size()) {
    throw ValidationError("prediction and ground-truth lengths differ");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == positive;
    const bool t = truth[i] == positive;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_from_counts(const ConfusionCounts& c) {
  const double precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  const double recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double f1_score(std::span<const Label> predicted, std::span<const Label> truth, Label positive) {
  if (predicted.empty()) throw ValidationError("f1_score needs at least one prediction");
  return f1_from_counts(confusion(predicted, truth, positive));
}

const LosoEntry* LosoRecord::find(const std::string& trial_id) const {
  for (const auto& e : entries) {
    if (e.trial_id == trial_id) return &e;
  }
  return nullptr;
}

json to_json(const LosoRecord& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"trial_id", e.trial_id},
                       {"subject_id", e.subject_id},
                       {"fold", e.fold},
                       {"predicted", to_string(e.predicted)},
                       {"confidence", e.confidence},
                       {"truth", to_string(e.truth)},
                       {"right", e.right}});
  }
  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"test_subject", f.test_subject},
                     {"n_test", f.n_test},
                     {"f1", f.f1},
                     {"accuracy", f.accuracy}});
  }
  return {{"component", to_string(r.component)},
          {"config", to_json(r.config)},
          {"f1", r.f1},
          {"accuracy", r.accuracy},
          {"folds", std::move(folds)},
          {"entries", std::move(entries)}};
}

LosoRecord loso_record_from_json(const json& j) {
  LosoRecord r;
  try {
    r.component = parse_component(j.at("component").get<std::string>());
    r.config = model_config_from_json(j.at("config"));
    r.f1 = j.at("f1").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    for (const auto& f : j.at("folds")) {
      r.folds.push_back({f.at("test_subject").get<std::string>(), f.at("n_test").get<int>(),
                         f.at("f1").get<double>(), f.at("accuracy").get<double>()});
    }
    for (const auto& e : j.at("entries")) {
      LosoEntry le;
      le.trial_id = e.at("trial_id").get<std::string>();
      le.subject_id = e.at("subject_id").get<std::string>();
      le.fold = e.at("fold").get<int>();
      le.predicted = parse_label(e.at("predicted").get<std::string>());
      le.confidence = e.at("confidence").get<double>();
      le.truth = parse_label(e.at("truth").get<std::string>());
      le.right = e.at("right").get<bool>();
      r.entries.push_back(std::move(le));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed LOSO record: ") + e.what());
  }
  return r;
}

LosoRecord evaluate_loso(const FeatureTable& table, const ModelConfig& config, Exec exec) {
  config.validate();
  std::vector<std::string> subjects;
  for (const auto& s : table.subject_ids) {
    if (std::find(subjects.begin(), subjects.end(), s) == subjects.end()) subjects.push_back(s);
  }
  if (subjects.size() < 2) {
    throw ValidationError("leave-one-subject-out needs at least 2 subjects, got " +
                          std::to_string(subjects.size()));
  }
  const std::size_t n_folds = subjects.size();
  const std::string& schema = table.rows.front().schema_hash;

  struct FoldOutput {
    std::vector<std::size_t> rows;
    std::vector<Prediction> predictions;
  };
  std::vector<FoldOutput> outputs(n_folds);

  const auto run_fold = [&](std::size_t f) {
    std::vector<std::vector<double>> train_rows;
    std::vector<Label> train_labels;
    FoldOutput& out = outputs[f];
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table.subject_ids[i] == subjects[f]) {
        out.rows.push_back(i);
      } else {
        train_rows.push_back(table.rows[i].values);
        train_labels.push_back(table.labels[i]);
      }
    }
    ModelConfig fold_cfg = config;
    fold_cfg.seed = config.seed + f;
    const TrainedModel model = fit_model(fold_cfg, train_rows, train_labels, schema);
    for (std::size_t i : out.rows) out.predictions.push_back(forward(model, table.rows[i].values));
  };

  if (exec == Exec::kParallel) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(n_folds); ++f) {
      try {
        run_fold(static_cast<std::size_t>(f));
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t f = 0; f < n_folds; ++f) run_fold(f);
  }

  LosoRecord record;
  record.component = table.component;
  record.config = config;
  record.entries.resize(table.size());
  std::vector<Label> pooled_pred(table.size()), pooled_truth(table.size());
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::vector<Label> fp, ft;
    for (std::size_t k = 0; k < outputs[f].rows.size(); ++k) {
      const std::size_t i = outputs[f].rows[k];
      const Prediction& p = outputs[f].predictions[k];
      LosoEntry& e = record.entries[i];
      e.trial_id = table.trial_ids[i];
      e.subject_id = table.subject_ids[i];
      e.fold = static_cast<int>(f);
      e.predicted = p.label;
      e.confidence = p.confidence;
      e.truth = table.labels[i];
      e.right = e.predicted == e.truth;
      pooled_pred[i] = e.predicted;
      pooled_truth[i] = e.truth;
      fp.push_back(e.predicted);
      ft.push_back(e.truth);
    }
    LosoFold fold;
    fold.test_subject = subjects[f];
    fold.n_test = static_cast<int>(fp.size());
    fold.f1 = f1_score(fp, ft);
    const auto c = confusion(fp, ft);
    fold.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(fp.size());
    record.folds.push_back(fold);
  }
  record.f1 = f1_score(pooled_pred, pooled_truth);
  const auto c = confusion(pooled_pred, pooled_truth);
  record.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(table.size());
  return record;
}

std::size_t best_cell_index(const std::vector<GridCell>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const GridCell& c = cells[i];
    if (!c.f1) continue;
    if (!best) {
      best = i;
      continue;
    }
    const GridCell& b = cells[*best];
    const auto key = [](const GridCell& g) {
      return std::make_tuple(-*g.f1, g.parameters, g.learning_rate);
    };
    if (key(c) < key(b)) best = i;
  }
  if (!best) throw TrainingError("every grid cell failed to train");
  return *best;
}

GridResult grid_search(const FeatureTable& table, const GridSpec& grid, const ModelConfig& base,
                       Exec exec) {
  if (grid.cell_count() == 0) throw ValidationError("grid is empty");
  if (table.size() == 0) throw ValidationError("grid search needs data");
  GridResult result;
  for (int layers : grid.layers) {
    for (int units : grid.units) {
      for (double lr : grid.learning_rates) {
        GridCell cell;
        cell.n_hidden_layers = layers;
        cell.hidden_units = units;
        cell.learning_rate = lr;
        cell.parameters = parameter_count_for(static_cast<int>(table.dim()), layers, units);
        ModelConfig cfg = base;
        cfg.n_hidden_layers = layers;
        cfg.hidden_units = units;
        cfg.learning_rate = lr;
        try {
          cell.f1 = evaluate_loso(table, cfg, exec).f1;
        } catch (const Error& e) {
          cell.error = e.what();
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }
  const GridCell& best = result.cells[best_cell_index(result.cells)];
  result.best = base;
  result.best.n_hidden_layers = best.n_hidden_layers;
  result.best.hidden_units = best.hidden_units;
  result.best.learning_rate = best.learning_rate;
  return result;
}

json to_json(const GridResult& g) {
  json cells = json::array();
  for (const auto& c : g.cells) {
    json cj = {{"n_hidden_layers", c.n_hidden_layers},
               {"hidden_units", c.hidden_units},
               {"learning_rate", c.learning_rate},
               {"parameters", c.parameters}};
    cj["f1"] = c.f1 ? json(*c.f1) : json(nullptr);
    if (!c.error.empty()) cj["error"] = c.error;
    cells.push_back(std::move(cj));
  }
  return {{"best", to_json(g.best)}, {"cells", std::move(cells)}};
}

json to_json(const TrainedModel& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    layers.push_back({{"fan_in", l.fan_in},
                      {"fan_out", l.fan_out},
                      {"weights", l.weights},
                      {"bias", l.bias}});
  }
  return {{"config", to_json(m.config)},
          {"schema_hash", m.schema_hash},
          {"input", {{"mean", m.input.mean}, {"scale", m.input.scale}}},
          {"layers", std::move(layers)},
          {"loss_curve", m.loss_curve},
          {"trained", m.trained}};
}

TrainedModel model_from_json(const json& j) {
  TrainedModel m;
  try {
    m.config = model_config_from_json(j.at("config"));
    m.schema_hash = j.at("schema_hash").get<std::string>();
    m.input.mean = j.at("input").at("mean").get<std::vector<double>>();
    m.input.scale = j.at("input").at("scale").get<std::vector<double>>();
    for (const auto& lj : j.at("layers")) {
      DenseLayer l;
      l.fan_in = lj.at("fan_in").get<int>();
      l.fan_out = lj.at("fan_out").get<int>();
      l.weights = lj.at("weights").get<std::vector<double>>();
      l.bias = lj.at("bias").get<std::vector<double>>();
      m.layers.push_back(std::move(l));
    }
    m.loss_curve = j.value("loss_curve", std::vector<double>{});
    m.trained = j.value("trained", false);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model: ") + e.what());
  }

  const auto& cfg = m.config;
  if (static_cast<int>(m.layers.size()) != cfg.n_hidden_layers + 1) {
    throw ValidationError("model has " + std::to_string(m.layers.size()) +
                          " layers, config implies " + std::to_string(cfg.n_hidden_layers + 1));
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    const int expected_out = l + 1 < m.layers.size() ? cfg.hidden_units : kNumClasses;
    if (layer.fan_out != expected_out || layer.fan_in < 1 ||
        (l > 0 && layer.fan_in != m.layers[l - 1].fan_out)) {
      throw ValidationError("layer " + std::to_string(l) + " shape inconsistent with config");
    }
    if (layer.weights.size() != static_cast<std::size_t>(layer.fan_in) * layer.fan_out ||
        layer.bias.size() != static_cast<std::size_t>(layer.fan_out)) {
      throw ValidationError("layer " + std::to_string(l) + " array sizes do not match its shape");
    }
    for (double w : layer.weights) {
      if (!std::isfinite(w)) throw ValidationError("non-finite weight in layer " + std::to_string(l));
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) throw ValidationError("non-finite bias in layer " + std::to_string(l));
    }
  }
  const auto d = static_cast<std::size_t>(m.input_dim());
  if (!m.input.mean.empty() && (m.input.mean.size() != d || m.input.scale.size() != d)) {
    throw ValidationError("input standardizer does not match the input dimension");
  }
  return m;
}

std::string model_id(const TrainedModel& m) { return "m-" + hex64(fnv1a64(to_json(m).dump())); }

}  // namespace rehabxai
