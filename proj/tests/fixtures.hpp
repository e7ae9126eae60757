#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "rehabxai/dataset.hpp"
#include "rehabxai/kernels.hpp"
#include "rehabxai/kinematics.hpp"
#include "rehabxai/model.hpp"
#include "rehabxai/pipeline.hpp"

namespace rehabxai::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("rehabxai_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small cohort for fast end-to-end tests.
inline SynthConfig small_config() {
  SynthConfig c;
  c.n_subjects = 8;
  c.trials_per_side = 5;
  c.frames_per_trial = 60;
  return c;
}

// A deliberately weak model so that LOSO leaves plenty of wrong outputs.
inline ModelConfig weak_config(Component c, std::uint64_t seed = 1) {
  ModelConfig m = ModelConfig::defaults(c);
  m.n_hidden_layers = 1;
  m.hidden_units = 32;
  m.learning_rate = 0.0001;
  m.epochs = 1;
  m.seed = seed;
  return m;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data) v = u(rng);
  return m;
}

// Brute-force kNN: every distance, full sort on (distance, id).
inline std::vector<std::pair<double, std::string>> brute_knn(const Matrix& points,
                                                             const std::vector<std::string>& ids,
                                                             const std::vector<double>& q, int k,
                                                             Metric metric, long exclude) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < points.rows; ++i) {
    if (static_cast<long>(i) == exclude) continue;
    double d = 0.0;
    if (metric == Metric::kEuclidean) {
      long double s = 0.0L;
      for (std::size_t j = 0; j < points.cols; ++j) {
        const long double diff = static_cast<long double>(q[j]) - points(i, j);
        s += diff * diff;
      }
      d = std::sqrt(static_cast<double>(s));
    } else {
      d = cosine_distance(q, points.row(i));
    }
    all.emplace_back(d, ids[i]);
  }
  std::sort(all.begin(), all.end());
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
  return all;
}

// Cyclic Jacobi eigenvalue solver for a symmetric matrix; eigenvalues sorted
// descending with matching eigenvectors as columns.
struct EigenPairs {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;  // vectors[k] is the k-th eigenvector
};

inline EigenPairs jacobi_eigen(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  EigenPairs out;
  for (std::size_t k : order) {
    out.values.push_back(a[k][k]);
    std::vector<double> vec(n);
    for (std::size_t i = 0; i < n; ++i) vec[i] = v[i][k];
    out.vectors.push_back(vec);
  }
  return out;
}

inline std::vector<std::vector<double>> covariance(const Matrix& m) {
  std::vector<double> mean(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) mean[j] += m(i, j);
  }
  for (double& v : mean) v /= static_cast<double>(m.rows);
  std::vector<std::vector<double>> c(m.cols, std::vector<double>(m.cols, 0.0));
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t a = 0; a < m.cols; ++a) {
      for (std::size_t b = 0; b < m.cols; ++b) {
        c[a][b] += (m(i, a) - mean[a]) * (m(i, b) - mean[b]);
      }
    }
  }
  for (auto& row : c) {
    for (double& v : row) v /= static_cast<double>(m.rows - 1);
  }
  return c;
}

// Mean silhouette over all points with Euclidean distance.
inline double silhouette(const Matrix& points, const std::vector<int>& labels) {
  const std::size_t n = points.rows;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> per;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto& [sum, count] = per[labels[j]];
      sum += euclidean_distance(points.row(i), points.row(j));
      ++count;
    }
    const double a = per[labels[i]].second > 0 ? per[labels[i]].first / per[labels[i]].second : 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, sc] : per) {
      if (label != labels[i]) b = std::min(b, sc.first / sc.second);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

// Shapley values by enumerating all n! orderings. Independent of the
// coalition-weight formula used by the library.
inline std::vector<double> shapley_by_permutations(int n, const std::function<double(std::uint64_t)>& v) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  long count = 0;
  do {
    std::uint64_t mask = 0;
    double prev = v(0);
    for (int p : perm) {
      mask |= std::uint64_t{1} << p;
      const double cur = v(mask);
      phi[static_cast<std::size_t>(p)] += cur - prev;
      prev = cur;
    }
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (double& x : phi) x /= static_cast<double>(count);
  return phi;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Random untrained network with perturbed biases so no unit is trivially dead.
inline TrainedModel random_network(int input_dim, int layers, int units, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.n_hidden_layers = layers;
  cfg.hidden_units = units;
  cfg.learning_rate = 0.001;
  cfg.seed = seed;
  cfg.off_grid = true;
  TrainedModel m = init_model(cfg, input_dim);
  std::mt19937_64 rng(seed + 99);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& layer : m.layers) {
    for (double& b : layer.bias) b = u(rng);
  }
  return m;
}

}  // namespace rehabxai::testing
