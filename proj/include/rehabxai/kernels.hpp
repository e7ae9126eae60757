#pragma once

// Data-parallel kernels. Every kernel takes an Exec policy; the serial path is
// the reference and the OpenMP path must reproduce it bit for bit, which the
// kernel tests assert. Parallel loops only ever write disjoint output slots
// and any reduction is finished serially in index order.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rehabxai/common.hpp"

namespace rehabxai {

struct TrainedModel;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class Metric { kEuclidean, kCosine };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

double euclidean_distance(std::span<const double> a, std::span<const double> b);
// 1 - cos(a, b). Throws ValidationError when either vector has zero norm.
double cosine_distance(std::span<const double> a, std::span<const double> b);
double distance(Metric m, std::span<const double> a, std::span<const double> b);

namespace kernels {

// Distance from `query` to every row of `points`.
std::vector<double> distances_to(std::span<const double> query, const Matrix& points, Metric metric,
                                 Exec exec);

// Full n x n distance matrix.
Matrix pairwise_distances(const Matrix& points, Metric metric, Exec exec);

// Symmetrized t-SNE input affinities P (sum 1) from squared Euclidean
// distances, with per-point bandwidths found by bisection to match
// `perplexity`.
Matrix tsne_affinities(const Matrix& points, double perplexity, Exec exec);

// Gradient of KL(P || Q) w.r.t. the 2D embedding Y; returns KL as well.
double tsne_gradient(const Matrix& P, const Matrix& Y, double exaggeration, Matrix& grad,
                     Exec exec);

// v(S) for every coalition mask S in [0, 2^n_players).
std::vector<double> coalition_values(int n_players,
                                     const std::function<double(std::uint64_t)>& value,
                                     Exec exec);

// First-hidden-layer activations for each row.
Matrix first_hidden_activations(const TrainedModel& model, const Matrix& rows, Exec exec);

}  // namespace kernels
}  // namespace rehabxai
