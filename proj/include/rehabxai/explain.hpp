#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rehabxai/common.hpp"
#include "rehabxai/dataset.hpp"
#include "rehabxai/kernels.hpp"
#include "rehabxai/kinematics.hpp"
#include "rehabxai/model.hpp"

namespace rehabxai {

// ---------------------------------------------------------------------------
// Projection

enum class ProjectionMethod { kPca, kNeighborEmbedding };
std::string_view to_string(ProjectionMethod m);
ProjectionMethod parse_projection_method(std::string_view s);

struct PcaResult {
  Matrix coords;                          // n x 2
  std::array<double, 2> explained_variance{};        // eigenvalues of the covariance
  std::array<double, 2> explained_variance_ratio{};  // share of total variance
  std::vector<double> mean;               // column means
  Matrix components;                      // 2 x d, rows are unit loadings
  bool degenerate = false;                // every row identical

  // Projects a new row with the fitted mean and components.
  std::array<double, 2> project(std::span<const double> row) const;
};

// Mean-centred projection onto the top two principal components. Each
// component is signed so its largest-magnitude loading is positive.
PcaResult project_pca(const Matrix& matrix);

struct NeighborEmbeddingParams {
  double perplexity = 30.0;  // clamped to (n - 1) / 3
  int iterations = 1000;
  double learning_rate = 0.0;  // <= 0 picks max(n / early_exaggeration / 4, 50)
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

struct NeighborEmbeddingResult {
  Matrix coords;  // n x 2
  double final_kl = 0.0;
  double final_gradient_norm = 0.0;
  int iterations = 0;
  double perplexity = 0.0;  // after clamping
  double learning_rate = 0.0;
};

// Exact (O(n^2)) t-SNE. Needs n >= 10.
NeighborEmbeddingResult project_neighbor_embedding(const Matrix& matrix,
                                                   const NeighborEmbeddingParams& params,
                                                   Exec exec = Exec::kSerial);

// ---------------------------------------------------------------------------
// Embedding spaces and neighbor retrieval

// What a space embeds: first-hidden-layer activations (default) or the
// standardized model inputs.
enum class EmbeddingSource { kFirstHidden, kInputFeatures };
std::string_view to_string(EmbeddingSource s);
EmbeddingSource parse_embedding_source(std::string_view s);

enum class SpaceKind { kProjected, kActivation };
std::string_view to_string(SpaceKind s);
SpaceKind parse_space_kind(std::string_view s);

struct EmbeddingSpace {
  std::string id;
  Component component = Component::kRom;
  std::string model_id;
  std::vector<std::string> sample_ids;
  EmbeddingSource source = EmbeddingSource::kFirstHidden;
  Matrix activations;  // n x representation dim
  Matrix coords;       // n x 2
  ProjectionMethod method = ProjectionMethod::kPca;
  nlohmann::json params;  // method parameters (plus diagnostics)
  // PCA fit, kept so new queries project consistently.
  std::vector<double> pca_mean;
  Matrix pca_components;

  const Matrix& points(SpaceKind kind) const {
    return kind == SpaceKind::kProjected ? coords : activations;
  }
  std::optional<std::size_t> position(const std::string& sample_id) const;
};

struct SpaceBuildOptions {
  ProjectionMethod method = ProjectionMethod::kPca;
  EmbeddingSource source = EmbeddingSource::kFirstHidden;
  NeighborEmbeddingParams neighbor_embedding;
  std::uint64_t seed = 0;
  Exec exec = Exec::kSerial;
};

EmbeddingSpace build_embedding_space(const TrainedModel& model, const FeatureTable& table,
                                     const SpaceBuildOptions& options);

nlohmann::json to_json(const EmbeddingSpace& s);
EmbeddingSpace embedding_space_from_json(const nlohmann::json& j);

inline constexpr int kDefaultK = 5;

struct NeighborQuery {
  // Exactly one of sample_id / features is used; sample_id wins when set.
  std::optional<std::string> sample_id;
  std::vector<double> features;  // raw feature vector, embedded through the model
  int k = kDefaultK;
  Metric metric = Metric::kEuclidean;
  SpaceKind space = SpaceKind::kProjected;
  bool exclude_self = true;
};

struct Neighbor {
  std::string id;
  std::size_t index = 0;
  double distance = 0.0;
  std::array<double, 2> coords{};
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct NeighborResult {
  std::string query_id;  // empty for raw feature queries
  std::vector<Neighbor> neighbors;
};

// A raw feature vector in the space's representation.
std::vector<double> represent(const EmbeddingSpace& space, const TrainedModel& model,
                              std::span<const double> features);

// The query point in the requested space. Raw feature queries go through
// represent() and, for the projected space, the stored PCA.
std::vector<double> embed_query(const EmbeddingSpace& space, const TrainedModel* model,
                                const NeighborQuery& query);

// k nearest samples sorted by (distance, id).
NeighborResult knn(const EmbeddingSpace& space, const NeighborQuery& query,
                   const TrainedModel* model = nullptr, Exec exec = Exec::kSerial);

// Lower-level form over an explicit point matrix.
std::vector<Neighbor> knn_points(const Matrix& points, const std::vector<std::string>& ids,
                                 std::span<const double> query, int k, Metric metric,
                                 std::optional<std::size_t> exclude, Exec exec = Exec::kSerial);

struct SweepCell {
  int k = 0;
  Metric metric = Metric::kEuclidean;
  double accuracy = 0.0;
};

// Leave-one-out majority-vote accuracy per (k, metric). A tied vote goes to
// the label of the nearest neighbor among the tied classes.
std::vector<SweepCell> knn_classifier_sweep(const Matrix& points,
                                            const std::vector<std::string>& ids,
                                            std::span<const Label> labels,
                                            const std::vector<int>& ks = {5, 10, 15, 20, 25, 30},
                                            const std::vector<Metric>& metrics = {Metric::kEuclidean,
                                                                                  Metric::kCosine},
                                            Exec exec = Exec::kSerial);

struct NeighborSets {
  std::vector<std::string> common;
  std::vector<std::string> unique_rom;
  std::vector<std::string> unique_comp;
};

NeighborSets common_unique_neighbors(const NeighborResult& rom, const NeighborResult& comp);

struct BenchmarkInfo {
  std::string sample_id;
  double status_score = 0.0;
  std::string description;
  bool ai_correct = false;
  double ai_confidence = 0.0;
  std::string ai_label;
  bool annotator_agreement = false;
};

BenchmarkInfo benchmark_info(const std::string& neighbor_id, const Dataset& dataset,
                             const LosoRecord& loso);

nlohmann::json to_json(const BenchmarkInfo& b);

// ---------------------------------------------------------------------------
// Feature attribution

enum class ShapleyMode { kExact, kSampled };
std::string_view to_string(ShapleyMode m);
ShapleyMode parse_shapley_mode(std::string_view s);

inline constexpr int kMaxExactPlayers = 20;

struct FeatureAttribution {
  std::vector<std::string> names;  // one per player (feature or group)
  std::vector<double> phi;
  std::vector<double> standard_error;  // sampled mode only
  ShapleyMode mode = ShapleyMode::kExact;
  int n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<double> baseline;
  double value_at_x = 0.0;
  double value_at_baseline = 0.0;
  int explained_class = 0;
  std::vector<std::string> top_features;
};

struct ShapleyOptions {
  ShapleyMode mode = ShapleyMode::kExact;
  int n_samples = 1000;
  std::uint64_t seed = 0;
  // Players as groups of feature indices. Empty means one player per feature.
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> player_names;
  Exec exec = Exec::kSerial;
};

using ValueFunction = std::function<double(std::span<const double>)>;

// Shapley values of f at x against `baseline` with the replacement value
// function v(S) = f(x on S, baseline elsewhere).
FeatureAttribution shapley_attribution(const ValueFunction& f, std::span<const double> x,
                                       std::span<const double> baseline,
                                       const ShapleyOptions& options);

// Explains the probability of the model's predicted class at x.
FeatureAttribution shapley_attribution(const TrainedModel& model, std::span<const double> x,
                                       std::span<const double> baseline,
                                       const ShapleyOptions& options);

// Top k names by |phi|, ties broken by player order.
std::vector<std::string> top_k_features(const FeatureAttribution& attribution, int k = 3);

struct RadarEntry {
  std::string feature;
  double affected = 0.0;
  double unaffected = 0.0;
  bool zero_range = false;
};

// Min-max normalizes each named feature to [0,1] over the given ranges,
// clipping out-of-range values.
std::vector<RadarEntry> radar_payload(const std::vector<std::string>& features,
                                      const FeatureSchema& schema,
                                      std::span<const double> affected,
                                      std::span<const double> unaffected,
                                      const FeatureRanges& ranges);

nlohmann::json to_json(const FeatureAttribution& a);
nlohmann::json to_json(const std::vector<RadarEntry>& radar);

}  // namespace rehabxai
