#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rehabxai/common.hpp"
#include "rehabxai/kinematics.hpp"

namespace rehabxai {

class TrainingError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kNumClasses = 2;

inline constexpr std::array<int, 3> kGridLayers = {1, 2, 3};
inline constexpr std::array<int, 5> kGridUnits = {32, 64, 128, 256, 512};
inline constexpr std::array<double, 4> kGridLearningRates = {0.0001, 0.0005, 0.001, 0.005};

struct ModelConfig {
  int n_hidden_layers = 3;
  int hidden_units = 256;
  double learning_rate = 0.005;
  int epochs = 4;
  int batch_size = 1;
  std::uint64_t seed = 0;
  Component component = Component::kRom;
  // Lifts the grid-membership check for layers/units/learning rate. Toy
  // problems and tests use this; the grid search never does.
  bool off_grid = false;

  void validate() const;
  static ModelConfig defaults(Component c);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Weights are stored fan_in x fan_out, row-major.
struct DenseLayer {
  int fan_in = 0;
  int fan_out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  double& w(int i, int j) { return weights[static_cast<std::size_t>(i) * fan_out + j]; }
  double w(int i, int j) const { return weights[static_cast<std::size_t>(i) * fan_out + j]; }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Per-feature affine input map x' = (x - mean) / scale. Identity by default.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

Standardizer fit_standardizer(std::span<const std::vector<double>> rows);
std::vector<double> standardize(const Standardizer& s, std::span<const double> x);

struct TrainedModel {
  ModelConfig config;
  std::string schema_hash;
  Standardizer input;
  std::vector<DenseLayer> layers;  // hidden layers then the output layer
  std::vector<double> loss_curve;  // mean loss per epoch
  bool trained = false;

  int input_dim() const { return layers.empty() ? 0 : layers.front().fan_in; }
  int first_hidden_dim() const { return layers.empty() ? 0 : layers.front().fan_out; }
  std::size_t parameter_count() const;
  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

struct Prediction {
  Label label = Label::kCorrect;
  double confidence = 0.5;
  std::array<double, kNumClasses> probabilities{};
  std::array<double, kNumClasses> logits{};
  std::vector<double> first_hidden_activation;
};

// Uniform Glorot initialization from a seeded RNG; biases zero.
TrainedModel init_model(const ModelConfig& config, int input_dim, std::string schema_hash = {});

Prediction forward(const TrainedModel& model, std::span<const double> x);

// Probability of one class; the cheap path used by attribution sweeps.
double class_probability(const TrainedModel& model, std::span<const double> x, int cls);

struct Gradients {
  std::vector<std::vector<double>> weights;  // same layout as DenseLayer::weights
  std::vector<std::vector<double>> bias;
};

// Cross-entropy loss of one sample and its gradient w.r.t. every weight and
// bias.
double loss_and_gradient(const TrainedModel& model, std::span<const double> x, Label y,
                         Gradients& grad);
double sample_loss(const TrainedModel& model, std::span<const double> x, Label y);

// Mini-batch SGD with per-epoch seeded shuffling. Throws TrainingError on a
// non-finite loss.
TrainedModel train(TrainedModel model, std::span<const std::vector<double>> rows,
                   std::span<const Label> labels);
TrainedModel train(TrainedModel model, std::span<const FeatureVector> features,
                   std::span<const Label> labels);

// Standardizer + init + train on the given rows; the deployable model.
TrainedModel fit_model(const ModelConfig& config, std::span<const std::vector<double>> rows,
                       std::span<const Label> labels, const std::string& schema_hash);

struct ConfusionCounts {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};
ConfusionCounts confusion(std::span<const Label> predicted, std::span<const Label> truth,
                          Label positive = Label::kImpaired);
double f1_score(std::span<const Label> predicted, std::span<const Label> truth,
                Label positive = Label::kImpaired);
double f1_from_counts(const ConfusionCounts& c);

struct LosoEntry {
  std::string trial_id;
  std::string subject_id;
  int fold = 0;
  Label predicted = Label::kCorrect;
  double confidence = 0.5;
  Label truth = Label::kCorrect;
  bool right = false;
  friend bool operator==(const LosoEntry&, const LosoEntry&) = default;
};

struct LosoFold {
  std::string test_subject;
  int n_test = 0;
  double f1 = 0.0;
  double accuracy = 0.0;
  friend bool operator==(const LosoFold&, const LosoFold&) = default;
};

// Held-out predictions for every trial of one component.
struct LosoRecord {
  Component component = Component::kRom;
  ModelConfig config;
  std::vector<LosoEntry> entries;  // dataset trial order
  std::vector<LosoFold> folds;
  // F1 over the pooled held-out predictions of all folds.
  double f1 = 0.0;
  double accuracy = 0.0;

  const LosoEntry* find(const std::string& trial_id) const;
  friend bool operator==(const LosoRecord&, const LosoRecord&) = default;
};

nlohmann::json to_json(const LosoRecord& r);
LosoRecord loso_record_from_json(const nlohmann::json& j);

// One model per held-out subject; fold i trains with seed config.seed + i.
LosoRecord evaluate_loso(const FeatureTable& table, const ModelConfig& config,
                         Exec exec = Exec::kSerial);

struct GridSpec {
  std::vector<int> layers{kGridLayers.begin(), kGridLayers.end()};
  std::vector<int> units{kGridUnits.begin(), kGridUnits.end()};
  std::vector<double> learning_rates{kGridLearningRates.begin(), kGridLearningRates.end()};
  std::size_t cell_count() const { return layers.size() * units.size() * learning_rates.size(); }
};

struct GridCell {
  int n_hidden_layers = 0;
  int hidden_units = 0;
  double learning_rate = 0.0;
  std::size_t parameters = 0;
  std::optional<double> f1;  // empty when training failed
  std::string error;
};

struct GridResult {
  ModelConfig best;
  std::vector<GridCell> cells;  // enumeration order: layers, units, lr
};

// Picks the cell with the highest LOSO F1; ties go to fewer parameters, then
// the lower learning rate.
GridResult grid_search(const FeatureTable& table, const GridSpec& grid, const ModelConfig& base,
                       Exec exec = Exec::kSerial);
std::size_t best_cell_index(const std::vector<GridCell>& cells);

nlohmann::json to_json(const GridResult& g);

nlohmann::json to_json(const TrainedModel& m);
// Validates layer shapes against the config and finiteness of all weights.
TrainedModel model_from_json(const nlohmann::json& j);
// Content hash of the serialized model; identical weights give identical ids.
std::string model_id(const TrainedModel& m);

}  // namespace rehabxai
