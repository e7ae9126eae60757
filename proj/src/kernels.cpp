#include "rehabxai/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "rehabxai/model.hpp"

namespace rehabxai {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw ValidationError("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::string_view to_string(Metric m) { return m == Metric::kEuclidean ? "euclidean" : "cosine"; }

Metric parse_metric(std::string_view s) {
  if (s == "euclidean") return Metric::kEuclidean;
  if (s == "cosine") return Metric::kCosine;
  throw ValidationError("unknown metric '" + std::string(s) + "' (expected euclidean or cosine)");
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("distance between vectors of different size");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("distance between vectors of different size");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw ValidationError("cosine distance of a zero-norm vector");
  return 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
}

double distance(Metric m, std::span<const double> a, std::span<const double> b) {
  return m == Metric::kEuclidean ? euclidean_distance(a, b) : cosine_distance(a, b);
}

namespace kernels {

namespace {

// Runs body(i) for i in [0, n), serially or under OpenMP, rethrowing the
// first exception raised inside the parallel region.
template <typename Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  if (exec == Exec::kSerial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(rehabxai_kernel_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<double> distances_to(std::span<const double> query, const Matrix& points, Metric metric,
                                 Exec exec) {
  if (query.size() != points.cols) throw ValidationError("query dimension mismatch");
  std::vector<double> out(points.rows);
  for_each_index(points.rows, exec, [&](std::size_t i) { out[i] = distance(metric, query, points.row(i)); });
  return out;
}

Matrix pairwise_distances(const Matrix& points, Metric metric, Exec exec) {
  Matrix out(points.rows, points.rows);
  for_each_index(points.rows, exec, [&](std::size_t i) {
    for (std::size_t j = 0; j < points.rows; ++j) {
      out(i, j) = i == j ? 0.0 : distance(metric, points.row(i), points.row(j));
    }
  });
  return out;
}

Matrix tsne_affinities(const Matrix& points, double perplexity, Exec exec) {
  const std::size_t n = points.rows;
  Matrix cond(n, n);
  const double target_entropy = std::log(perplexity);
  for_each_index(n, exec, [&](std::size_t i) {
    std::vector<double> d2(n);
    for (std::size_t j = 0; j < n; ++j) d2[j] = i == j ? 0.0 : squared_distance(points.row(i), points.row(j));
    // Bisection on beta = 1 / (2 sigma^2).
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    std::vector<double> p(n);
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0;
      // Shift by the smallest off-diagonal distance for numerical range.
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) dmin = std::min(dmin, d2[j]);
      }
      for (std::size_t j = 0; j < n; ++j) {
        p[j] = j == i ? 0.0 : std::exp(-beta * (d2[j] - dmin));
        sum += p[j];
      }
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        p[j] /= sum;
        weighted += p[j] * (d2[j] - dmin);
      }
      const double entropy = std::log(sum) + beta * weighted;
      const double diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-10) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    for (std::size_t j = 0; j < n; ++j) cond(i, j) = p[j];
  });

  Matrix P(n, n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      P(i, j) = std::max((cond(i, j) + cond(j, i)) / denom, 1e-300);
    }
    P(i, i) = 0.0;
  }
  return P;
}

double tsne_gradient(const Matrix& P, const Matrix& Y, double exaggeration, Matrix& grad,
                     Exec exec) {
  const std::size_t n = Y.rows;
  // Student-t kernel rows and their sums; the normalizer is reduced serially.
  Matrix num(n, n);
  std::vector<double> row_sum(n, 0.0);
  for_each_index(n, exec, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = Y(i, 0) - Y(j, 0);
      const double dy = Y(i, 1) - Y(j, 1);
      num(i, j) = 1.0 / (1.0 + dx * dx + dy * dy);
      s += num(i, j);
    }
    row_sum[i] = s;
  });
  double z = 0.0;
  for (double s : row_sum) z += s;

  grad = Matrix(n, 2);
  std::vector<double> row_kl(n, 0.0);
  for_each_index(n, exec, [&](std::size_t i) {
    double gx = 0.0, gy = 0.0, kl = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double q = std::max(num(i, j) / z, 1e-300);
      const double p = P(i, j);
      const double mult = (exaggeration * p - q) * num(i, j);
      gx += mult * (Y(i, 0) - Y(j, 0));
      gy += mult * (Y(i, 1) - Y(j, 1));
      kl += p * std::log(p / q);
    }
    grad(i, 0) = 4.0 * gx;
    grad(i, 1) = 4.0 * gy;
    row_kl[i] = kl;
  });
  double kl = 0.0;
  for (double v : row_kl) kl += v;
  return kl;
}

std::vector<double> coalition_values(int n_players,
                                     const std::function<double(std::uint64_t)>& value,
                                     Exec exec) {
  if (n_players < 0 || n_players > 30) throw ValidationError("coalition sweep supports 0..30 players");
  const std::size_t count = std::size_t{1} << n_players;
  std::vector<double> out(count);
  for_each_index(count, exec, [&](std::size_t mask) { out[mask] = value(mask); });
  return out;
}

Matrix first_hidden_activations(const TrainedModel& model, const Matrix& rows, Exec exec) {
  Matrix out(rows.rows, static_cast<std::size_t>(model.first_hidden_dim()));
  for_each_index(rows.rows, exec, [&](std::size_t i) {
    const Prediction p = forward(model, rows.row(i));
    std::copy(p.first_hidden_activation.begin(), p.first_hidden_activation.end(), out.row(i).begin());
  });
  return out;
}

}  // namespace kernels
}  // namespace rehabxai
