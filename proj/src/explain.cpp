#include "rehabxai/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

namespace rehabxai {

using nlohmann::json;

std::string_view to_string(ProjectionMethod m) {
  return m == ProjectionMethod::kPca ? "pca" : "neighbor_embedding";
}

ProjectionMethod parse_projection_method(std::string_view s) {
  if (s == "pca") return ProjectionMethod::kPca;
  if (s == "neighbor_embedding" || s == "tsne") return ProjectionMethod::kNeighborEmbedding;
  throw ValidationError("unknown projection method '" + std::string(s) + "'");
}

std::string_view to_string(SpaceKind s) {
  return s == SpaceKind::kProjected ? "projected_2d" : "activation";
}

SpaceKind parse_space_kind(std::string_view s) {
  if (s == "projected_2d" || s == "projected") return SpaceKind::kProjected;
  if (s == "activation") return SpaceKind::kActivation;
  throw ValidationError("unknown space '" + std::string(s) + "' (expected projected_2d or activation)");
}

std::string_view to_string(ShapleyMode m) { return m == ShapleyMode::kExact ? "exact" : "sampled"; }

ShapleyMode parse_shapley_mode(std::string_view s) {
  if (s == "exact") return ShapleyMode::kExact;
  if (s == "sampled") return ShapleyMode::kSampled;
  throw ValidationError("unknown attribution mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// PCA

std::array<double, 2> PcaResult::project(std::span<const double> row) const {
  if (row.size() != mean.size()) throw ValidationError("PCA projection dimension mismatch");
  std::array<double, 2> out{};
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += (row[j] - mean[j]) * components(c, j);
    out[c] = s;
  }
  return out;
}

PcaResult project_pca(const Matrix& matrix) {
  const std::size_t n = matrix.rows, d = matrix.cols;
  if (n < 3) throw ValidationError("PCA needs at least 3 rows");
  if (d < 1) throw ValidationError("PCA needs at least 1 column");
  for (double v : matrix.data) {
    if (!std::isfinite(v)) throw ValidationError("PCA input contains NaN or infinity");
  }

  PcaResult r;
  r.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) r.mean[j] += matrix(i, j);
  }
  for (double& m : r.mean) m /= static_cast<double>(n);

  Eigen::MatrixXd centered(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = matrix(i, j) - r.mean[j];
    }
  }
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double total = cov.trace();

  r.coords = Matrix(n, 2);
  r.components = Matrix(2, d);
  if (!(total > 0.0)) {
    r.degenerate = true;
    return r;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");
  // Eigenvalues come back ascending.
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const auto top = std::min<std::size_t>(2, d);
  for (std::size_t c = 0; c < top; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
    const double lambda = std::max(values(col), 0.0);
    r.explained_variance[c] = lambda;
    r.explained_variance_ratio[c] = lambda / total;
    Eigen::Index arg = 0;
    vectors.col(col).cwiseAbs().maxCoeff(&arg);
    const double sign = vectors(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      r.components(c, j) = sign * vectors(static_cast<Eigen::Index>(j), col);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = r.project(matrix.row(i));
    r.coords(i, 0) = p[0];
    r.coords(i, 1) = p[1];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Neighbor embedding

NeighborEmbeddingResult project_neighbor_embedding(const Matrix& matrix,
                                                   const NeighborEmbeddingParams& params,
                                                   Exec exec) {
  const std::size_t n = matrix.rows;
  if (n < 10) {
    throw ValidationError("neighbor embedding needs at least 10 samples, got " + std::to_string(n));
  }
  if (params.iterations < 1) throw ValidationError("iterations must be >= 1");
  if (!(params.perplexity > 0.0)) throw ValidationError("perplexity must be > 0");

  NeighborEmbeddingResult result;
  result.perplexity = std::min(params.perplexity, static_cast<double>(n - 1) / 3.0);
  const Matrix P = kernels::tsne_affinities(matrix, result.perplexity, exec);

  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> init(0.0, 1e-2);
  Matrix Y(n, 2);
  for (double& v : Y.data) v = init(rng);

  result.learning_rate =
      params.learning_rate > 0.0
          ? params.learning_rate
          : std::max(static_cast<double>(n) / params.early_exaggeration / 4.0, 50.0);

  Matrix update(n, 2), gains(n, 2, 1.0), grad;
  double kl = 0.0;
  for (int iter = 0; iter < params.iterations; ++iter) {
    const bool exaggerate = iter < params.exaggeration_iterations;
    const double momentum = iter < params.exaggeration_iterations ? 0.5 : 0.8;
    kl = kernels::tsne_gradient(P, Y, exaggerate ? params.early_exaggeration : 1.0, grad, exec);
    for (std::size_t q = 0; q < Y.data.size(); ++q) {
      const bool same_sign = (grad.data[q] > 0.0) == (update.data[q] > 0.0);
      gains.data[q] = same_sign ? std::max(gains.data[q] * 0.8, 0.01) : gains.data[q] + 0.2;
      update.data[q] = momentum * update.data[q] - result.learning_rate * gains.data[q] * grad.data[q];
      Y.data[q] += update.data[q];
    }
    for (int axis = 0; axis < 2; ++axis) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += Y(i, static_cast<std::size_t>(axis));
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) Y(i, static_cast<std::size_t>(axis)) -= mean;
    }
  }
  // Diagnostics on the un-exaggerated objective at the final layout.
  kl = kernels::tsne_gradient(P, Y, 1.0, grad, exec);
  double gnorm = 0.0;
  for (double g : grad.data) gnorm += g * g;
  result.final_kl = kl;
  result.final_gradient_norm = std::sqrt(gnorm);
  result.iterations = params.iterations;
  bool finite = std::isfinite(kl) && std::isfinite(result.final_gradient_norm);
  for (double v : Y.data) finite = finite && std::isfinite(v);
  if (!finite) {
    throw Error("neighbor embedding did not converge: final KL " + std::to_string(kl) +
                ", gradient norm " + std::to_string(result.final_gradient_norm) + " after " +
                std::to_string(params.iterations) + " iterations");
  }
  result.coords = std::move(Y);
  return result;
}

// ---------------------------------------------------------------------------
// Embedding spaces

std::string_view to_string(EmbeddingSource s) {
  return s == EmbeddingSource::kFirstHidden ? "first_hidden" : "input_features";
}

EmbeddingSource parse_embedding_source(std::string_view s) {
  if (s == "first_hidden") return EmbeddingSource::kFirstHidden;
  if (s == "input_features") return EmbeddingSource::kInputFeatures;
  throw ValidationError("unknown embedding source '" + std::string(s) +
                        "' (expected first_hidden or input_features)");
}

std::optional<std::size_t> EmbeddingSpace::position(const std::string& sample_id) const {
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    if (sample_ids[i] == sample_id) return i;
  }
  return std::nullopt;
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t expected_cols) {
  std::vector<std::vector<double>> rows = j.get<std::vector<std::vector<double>>>();
  Matrix m = Matrix::from_rows(rows);
  if (rows.empty()) m.cols = expected_cols;
  return m;
}

json params_json(const NeighborEmbeddingParams& p) {
  return {{"perplexity", p.perplexity},
          {"iterations", p.iterations},
          {"learning_rate", p.learning_rate},
          {"early_exaggeration", p.early_exaggeration},
          {"exaggeration_iterations", p.exaggeration_iterations},
          {"seed", p.seed}};
}

}  // namespace

EmbeddingSpace build_embedding_space(const TrainedModel& model, const FeatureTable& table,
                                     const SpaceBuildOptions& options) {
  if (!model.trained) throw ValidationError("embedding spaces need a trained model");
  if (table.size() < 3) throw ValidationError("embedding spaces need at least 3 samples");
  if (table.component != model.config.component) {
    throw ValidationError("feature table component does not match the model");
  }

  std::vector<std::vector<double>> rows;
  rows.reserve(table.size());
  for (const auto& r : table.rows) rows.push_back(r.values);

  EmbeddingSpace space;
  space.component = table.component;
  space.model_id = model_id(model);
  space.sample_ids = table.trial_ids;
  space.method = options.method;
  space.source = options.source;
  if (options.source == EmbeddingSource::kFirstHidden) {
    space.activations = kernels::first_hidden_activations(model, Matrix::from_rows(rows), options.exec);
  } else {
    for (auto& r : rows) r = standardize(model.input, r);
    space.activations = Matrix::from_rows(rows);
  }

  if (options.method == ProjectionMethod::kPca) {
    PcaResult pca = project_pca(space.activations);
    space.coords = std::move(pca.coords);
    space.pca_mean = std::move(pca.mean);
    space.pca_components = std::move(pca.components);
    space.params = {{"seed", options.seed},
                    {"explained_variance", pca.explained_variance},
                    {"explained_variance_ratio", pca.explained_variance_ratio},
                    {"degenerate", pca.degenerate}};
  } else {
    NeighborEmbeddingParams p = options.neighbor_embedding;
    p.seed = options.seed;
    NeighborEmbeddingResult ne = project_neighbor_embedding(space.activations, p, options.exec);
    space.coords = std::move(ne.coords);
    space.params = params_json(p);
    space.params["effective_perplexity"] = ne.perplexity;
    space.params["final_kl"] = ne.final_kl;
    space.params["effective_learning_rate"] = ne.learning_rate;
    space.params["final_gradient_norm"] = ne.final_gradient_norm;
  }
  json content = to_json(space);
  content.erase("id");
  space.id = "sp-" + hex64(fnv1a64(content.dump()));
  return space;
}

json to_json(const EmbeddingSpace& s) {
  return {{"id", s.id},
          {"component", to_string(s.component)},
          {"model_id", s.model_id},
          {"source", to_string(s.source)},
          {"sample_ids", s.sample_ids},
          {"activations", matrix_json(s.activations)},
          {"coords", matrix_json(s.coords)},
          {"method", to_string(s.method)},
          {"params", s.params},
          {"pca_mean", s.pca_mean},
          {"pca_components", matrix_json(s.pca_components)}};
}

EmbeddingSpace embedding_space_from_json(const json& j) {
  EmbeddingSpace s;
  try {
    s.id = j.at("id").get<std::string>();
    s.component = parse_component(j.at("component").get<std::string>());
    s.model_id = j.at("model_id").get<std::string>();
    s.source = parse_embedding_source(j.value("source", "first_hidden"));
    s.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    s.activations = matrix_from_json(j.at("activations"), 0);
    s.coords = matrix_from_json(j.at("coords"), 2);
    s.method = parse_projection_method(j.at("method").get<std::string>());
    s.params = j.at("params");
    s.pca_mean = j.at("pca_mean").get<std::vector<double>>();
    s.pca_components = matrix_from_json(j.at("pca_components"), s.pca_mean.size());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed embedding space: ") + e.what());
  }
  if (s.activations.rows != s.sample_ids.size() || s.coords.rows != s.sample_ids.size() ||
      s.coords.cols != 2) {
    throw ValidationError("embedding space row counts disagree");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Neighbors

std::vector<double> represent(const EmbeddingSpace& space, const TrainedModel& model,
                              std::span<const double> features) {
  if (static_cast<int>(features.size()) != model.input_dim()) {
    throw ValidationError("expected " + std::to_string(model.input_dim()) + " features, got " +
                          std::to_string(features.size()));
  }
  if (space.source == EmbeddingSource::kInputFeatures) return standardize(model.input, features);
  return forward(model, features).first_hidden_activation;
}

std::vector<double> embed_query(const EmbeddingSpace& space, const TrainedModel* model,
                                const NeighborQuery& query) {
  const Matrix& pts = space.points(query.space);
  if (query.sample_id) {
    auto pos = space.position(*query.sample_id);
    if (!pos) throw NotFoundError("sample '" + *query.sample_id + "' not in embedding space");
    return {pts.row(*pos).begin(), pts.row(*pos).end()};
  }
  if (model == nullptr) throw ValidationError("raw feature queries need the space's model");
  const std::vector<double> rep = represent(space, *model, query.features);
  if (query.space == SpaceKind::kActivation) return rep;
  if (space.method != ProjectionMethod::kPca) {
    throw ValidationError(
        "raw feature queries cannot be placed in a neighbor-embedding projection; use "
        "space=activation");
  }
  double c[2] = {0.0, 0.0};
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t j = 0; j < space.pca_mean.size(); ++j) {
      c[a] += (rep[j] - space.pca_mean[j]) * space.pca_components(a, j);
    }
  }
  return {c[0], c[1]};
}

std::vector<Neighbor> knn_points(const Matrix& points, const std::vector<std::string>& ids,
                                 std::span<const double> query, int k, Metric metric,
                                 std::optional<std::size_t> exclude, Exec exec) {
  const std::size_t available = points.rows - (exclude ? 1 : 0);
  if (k < 1 || static_cast<std::size_t>(k) > available) {
    throw ValidationError("k must be in [1, " + std::to_string(available) + "], got " +
                          std::to_string(k));
  }
  const std::vector<double> dist = kernels::distances_to(query, points, metric, exec);
  std::vector<std::size_t> order;
  order.reserve(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i) {
    if (!exclude || *exclude != i) order.push_back(i);
  }
  const auto before = [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), before);
  std::vector<Neighbor> out;
  for (int r = 0; r < k; ++r) {
    const std::size_t i = order[static_cast<std::size_t>(r)];
    out.push_back({ids[i], i, dist[i], {}});
  }
  return out;
}

NeighborResult knn(const EmbeddingSpace& space, const NeighborQuery& query,
                   const TrainedModel* model, Exec exec) {
  const std::vector<double> q = embed_query(space, model, query);
  std::optional<std::size_t> exclude;
  if (query.sample_id && query.exclude_self) exclude = space.position(*query.sample_id);
  NeighborResult result;
  result.query_id = query.sample_id.value_or("");
  result.neighbors = knn_points(space.points(query.space), space.sample_ids, q, query.k,
                                query.metric, exclude, exec);
  for (auto& nb : result.neighbors) nb.coords = {space.coords(nb.index, 0), space.coords(nb.index, 1)};
  return result;
}

std::vector<SweepCell> knn_classifier_sweep(const Matrix& points,
                                            const std::vector<std::string>& ids,
                                            std::span<const Label> labels,
                                            const std::vector<int>& ks,
                                            const std::vector<Metric>& metrics, Exec exec) {
  const std::size_t n = points.rows;
  if (labels.size() != n || ids.size() != n) {
    throw ValidationError("sweep needs one id and one label per sample");
  }
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > n - 1) {
      throw ValidationError("sweep k=" + std::to_string(k) + " outside [1, n-1]");
    }
  }
  std::vector<SweepCell> cells;
  for (Metric metric : metrics) {
    const Matrix dist = kernels::pairwise_distances(points, metric, exec);
    // correct[kk][i]: leave-one-out vote for sample i with ks[kk] neighbors.
    std::vector<std::vector<char>> correct(ks.size(), std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> order;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) order.push_back(j);
      }
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
        return ids[a] < ids[b];
      });
      for (std::size_t kk = 0; kk < ks.size(); ++kk) {
        int votes[kNumClasses] = {0, 0};
        for (int r = 0; r < ks[kk]; ++r) ++votes[class_index(labels[order[static_cast<std::size_t>(r)]])];
        Label vote;
        if (votes[0] != votes[1]) {
          vote = votes[0] > votes[1] ? Label::kCorrect : Label::kImpaired;
        } else {
          vote = labels[order.front()];
        }
        correct[kk][i] = vote == labels[i];
      }
    }
    for (std::size_t kk = 0; kk < ks.size(); ++kk) {
      const auto hits = std::count(correct[kk].begin(), correct[kk].end(), 1);
      cells.push_back({ks[kk], metric, static_cast<double>(hits) / static_cast<double>(n)});
    }
  }
  return cells;
}

NeighborSets common_unique_neighbors(const NeighborResult& rom, const NeighborResult& comp) {
  if (rom.query_id != comp.query_id) {
    throw ValidationError("neighbor results are for different queries ('" + rom.query_id +
                          "' vs '" + comp.query_id + "')");
  }
  const auto contains = [](const NeighborResult& r, const std::string& id) {
    return std::any_of(r.neighbors.begin(), r.neighbors.end(),
                       [&](const Neighbor& n) { return n.id == id; });
  };
  NeighborSets sets;
  for (const auto& n : rom.neighbors) {
    (contains(comp, n.id) ? sets.common : sets.unique_rom).push_back(n.id);
  }
  for (const auto& n : comp.neighbors) {
    if (!contains(rom, n.id)) sets.unique_comp.push_back(n.id);
  }
  return sets;
}

BenchmarkInfo benchmark_info(const std::string& neighbor_id, const Dataset& dataset,
                             const LosoRecord& loso) {
  const LosoEntry* entry = loso.find(neighbor_id);
  if (entry == nullptr) {
    throw NotFoundError("sample '" + neighbor_id + "' has no held-out prediction");
  }
  const ExerciseTrial& trial = dataset.trial(neighbor_id);
  const SubjectProfile& subject = dataset.subject(trial.subject_id);
  BenchmarkInfo b;
  b.sample_id = neighbor_id;
  b.status_score = subject.status_score;
  b.description = subject.description;
  b.ai_correct = entry->predicted == dataset.ground_truth(neighbor_id, loso.component);
  b.ai_confidence = entry->confidence;
  b.ai_label = std::string(to_string(entry->predicted));
  b.annotator_agreement = dataset.annotators_agree(neighbor_id, loso.component);
  return b;
}

json to_json(const BenchmarkInfo& b) {
  return {{"status_score", b.status_score},
          {"description", b.description},
          {"ai_correct", b.ai_correct},
          {"ai_confidence", b.ai_confidence},
          {"ai_label", b.ai_label},
          {"annotator_agreement", b.annotator_agreement}};
}

// ---------------------------------------------------------------------------
// Shapley values

FeatureAttribution shapley_attribution(const ValueFunction& f, std::span<const double> x,
                                       std::span<const double> baseline,
                                       const ShapleyOptions& options) {
  if (x.size() != baseline.size()) {
    throw ValidationError("baseline has " + std::to_string(baseline.size()) +
                          " features, input has " + std::to_string(x.size()));
  }
  for (double v : baseline) {
    if (!std::isfinite(v)) throw ValidationError("baseline contains non-finite values");
  }
  std::vector<std::vector<std::size_t>> groups = options.groups;
  if (groups.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) groups.push_back({i});
  }
  for (const auto& g : groups) {
    for (std::size_t i : g) {
      if (i >= x.size()) throw ValidationError("attribution group index out of range");
    }
  }
  const int n = static_cast<int>(groups.size());
  if (!options.player_names.empty() && options.player_names.size() != groups.size()) {
    throw ValidationError("one player name per attribution group required");
  }

  FeatureAttribution a;
  a.mode = options.mode;
  a.seed = options.seed;
  a.baseline.assign(baseline.begin(), baseline.end());
  a.names = options.player_names;
  if (a.names.empty()) {
    for (int i = 0; i < n; ++i) a.names.push_back("f" + std::to_string(i));
  }
  a.phi.assign(static_cast<std::size_t>(n), 0.0);

  const std::vector<double> x_vec(x.begin(), x.end());
  const auto compose = [&](std::vector<double>& z, int player) {
    for (std::size_t i : groups[static_cast<std::size_t>(player)]) z[i] = x_vec[i];
  };
  a.value_at_x = f(x_vec);
  a.value_at_baseline = f(a.baseline);

  if (options.mode == ShapleyMode::kExact) {
    if (n > kMaxExactPlayers) {
      throw ValidationError("exact attribution supports at most " +
                            std::to_string(kMaxExactPlayers) + " players, got " +
                            std::to_string(n) + "; group features or use sampled mode");
    }
    const std::vector<double> v = kernels::coalition_values(
        n,
        [&](std::uint64_t mask) {
          std::vector<double> z = a.baseline;
          for (int p = 0; p < n; ++p) {
            if (mask & (std::uint64_t{1} << p)) compose(z, p);
          }
          return f(z);
        },
        options.exec);
    // weight(s) = s! (n - s - 1)! / n! = 1 / (n * C(n - 1, s)).
    std::vector<double> weight(static_cast<std::size_t>(std::max(n, 1)));
    double binom = 1.0;
    for (int s = 0; s < n; ++s) {
      weight[static_cast<std::size_t>(s)] = 1.0 / (n * binom);
      binom = binom * (n - 1 - s) / (s + 1);
    }
    for (int p = 0; p < n; ++p) {
      const std::uint64_t bit = std::uint64_t{1} << p;
      double phi = 0.0;
      for (std::uint64_t mask = 0; mask < v.size(); ++mask) {
        if (mask & bit) continue;
        const int size = std::popcount(mask);
        phi += weight[static_cast<std::size_t>(size)] * (v[mask | bit] - v[mask]);
      }
      a.phi[static_cast<std::size_t>(p)] = phi;
    }
  } else {
    if (options.n_samples < 2) throw ValidationError("sampled attribution needs n_samples >= 2");
    a.n_samples = options.n_samples;
    const auto m = static_cast<std::size_t>(options.n_samples);
    std::mt19937_64 rng(options.seed);
    std::vector<std::vector<int>> perms(m);
    for (auto& perm : perms) {
      perm.resize(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    // contrib(s, p): marginal contribution of player p in permutation s.
    Matrix contrib(m, static_cast<std::size_t>(n));
    std::exception_ptr failure;
    const auto walk = [&](std::size_t s) {
      std::vector<double> z = a.baseline;
      double prev = a.value_at_baseline;
      for (int p : perms[s]) {
        compose(z, p);
        const double cur = f(z);
        contrib(s, static_cast<std::size_t>(p)) = cur - prev;
        prev = cur;
      }
    };
    if (options.exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(m); ++s) {
        try {
          walk(static_cast<std::size_t>(s));
        } catch (...) {
#pragma omp critical(rehabxai_shapley_failure)
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
    } else {
      for (std::size_t s = 0; s < m; ++s) walk(s);
    }
    a.standard_error.assign(static_cast<std::size_t>(n), 0.0);
    for (std::size_t p = 0; p < static_cast<std::size_t>(n); ++p) {
      double mean = 0.0;
      for (std::size_t s = 0; s < m; ++s) mean += contrib(s, p);
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t s = 0; s < m; ++s) var += (contrib(s, p) - mean) * (contrib(s, p) - mean);
      var /= static_cast<double>(m - 1);
      a.phi[p] = mean;
      a.standard_error[p] = std::sqrt(var / static_cast<double>(m));
    }
  }
  a.top_features = top_k_features(a, std::min(3, n));
  return a;
}

FeatureAttribution shapley_attribution(const TrainedModel& model, std::span<const double> x,
                                       std::span<const double> baseline,
                                       const ShapleyOptions& options) {
  const Prediction p = forward(model, x);
  const int cls = class_index(p.label);
  FeatureAttribution a = shapley_attribution(
      [&](std::span<const double> z) { return class_probability(model, z, cls); }, x, baseline,
      options);
  a.explained_class = cls;
  return a;
}

std::vector<std::string> top_k_features(const FeatureAttribution& attribution, int k) {
  const std::size_t n = attribution.phi.size();
  if (k < 0 || static_cast<std::size_t>(k) > n) {
    throw ValidationError("top_k_features: need at least " + std::to_string(k) +
                          " features, have " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(attribution.phi[a]) > std::abs(attribution.phi[b]);
  });
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) out.push_back(attribution.names[order[static_cast<std::size_t>(i)]]);
  return out;
}

std::vector<RadarEntry> radar_payload(const std::vector<std::string>& features,
                                      const FeatureSchema& schema,
                                      std::span<const double> affected,
                                      std::span<const double> unaffected,
                                      const FeatureRanges& ranges) {
  if (affected.size() != schema.size() || unaffected.size() != schema.size()) {
    throw ValidationError("radar inputs do not match the feature schema");
  }
  if (ranges.min.size() != schema.size() || ranges.max.size() != schema.size()) {
    throw ValidationError("radar ranges do not match the feature schema");
  }
  std::vector<RadarEntry> out;
  for (const auto& name : features) {
    const std::size_t i = schema.index_of(name);
    RadarEntry e;
    e.feature = name;
    const double lo = ranges.min[i], hi = ranges.max[i];
    if (!(hi > lo)) {
      e.affected = e.unaffected = 0.5;
      e.zero_range = true;
    } else {
      e.affected = std::clamp((affected[i] - lo) / (hi - lo), 0.0, 1.0);
      e.unaffected = std::clamp((unaffected[i] - lo) / (hi - lo), 0.0, 1.0);
    }
    out.push_back(std::move(e));
  }
  return out;
}

json to_json(const FeatureAttribution& a) {
  json j = {{"mode", to_string(a.mode)},
            {"names", a.names},
            {"phi", a.phi},
            {"baseline", a.baseline},
            {"value_at_x", a.value_at_x},
            {"value_at_baseline", a.value_at_baseline},
            {"explained_class", to_string(label_from_index(a.explained_class))},
            {"top_features", a.top_features}};
  if (a.mode == ShapleyMode::kSampled) {
    j["n_samples"] = a.n_samples;
    j["seed"] = a.seed;
    j["standard_error"] = a.standard_error;
  }
  return j;
}

json to_json(const std::vector<RadarEntry>& radar) {
  json arr = json::array();
  for (const auto& e : radar) {
    arr.push_back({{"feature", e.feature},
                   {"affected", e.affected},
                   {"unaffected", e.unaffected},
                   {"zero_range", e.zero_range}});
  }
  return arr;
}

}  // namespace rehabxai
