#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "fixtures.hpp"
#include "rehabxai/kernels.hpp"

namespace rx = rehabxai;
using rx::Exec;
using rx::Matrix;
using rx::Metric;

TEST(Distance, HandValues) {
  const std::vector<double> a = {0, 0, 0}, b = {1, 2, 2}, c = {2, 4, 4}, d = {-2, 1, 0};
  EXPECT_DOUBLE_EQ(rx::euclidean_distance(a, b), 3.0);
  EXPECT_NEAR(rx::cosine_distance(b, c), 0.0, 1e-15);
  EXPECT_NEAR(rx::cosine_distance(b, d), 1.0, 1e-15);
  EXPECT_THROW(rx::cosine_distance(a, b), rx::ValidationError);
  EXPECT_THROW(rx::euclidean_distance(a, std::vector<double>{1.0}), rx::ValidationError);
  EXPECT_EQ(rx::parse_metric("cosine"), Metric::kCosine);
  EXPECT_THROW(rx::parse_metric("manhattan"), rx::ValidationError);
}

TEST(Kernels, DistancesParallelMatchSerial) {
  const Matrix pts = rx::testing::random_matrix(300, 16, 1);
  const auto q = rx::testing::random_vector(16, 2);
  for (Metric m : {Metric::kEuclidean, Metric::kCosine}) {
    const auto s = rx::kernels::distances_to(q, pts, m, Exec::kSerial);
    const auto p = rx::kernels::distances_to(q, pts, m, Exec::kParallel);
    EXPECT_EQ(s, p);
    for (std::size_t i = 0; i < pts.rows; ++i) EXPECT_EQ(s[i], rx::distance(m, q, pts.row(i)));
  }
}

TEST(Kernels, PairwiseSymmetricWithZeroDiagonal) {
  const Matrix pts = rx::testing::random_matrix(60, 5, 3);
  const Matrix s = rx::kernels::pairwise_distances(pts, Metric::kEuclidean, Exec::kSerial);
  EXPECT_EQ(s, rx::kernels::pairwise_distances(pts, Metric::kEuclidean, Exec::kParallel));
  for (std::size_t i = 0; i < pts.rows; ++i) {
    EXPECT_EQ(s(i, i), 0.0);
    for (std::size_t j = 0; j < pts.rows; ++j) EXPECT_EQ(s(i, j), s(j, i));
  }
}

TEST(Kernels, AffinitiesAreAJointDistribution) {
  const Matrix pts = rx::testing::random_matrix(50, 4, 4);
  const Matrix P = rx::kernels::tsne_affinities(pts, 10.0, Exec::kSerial);
  EXPECT_EQ(P, rx::kernels::tsne_affinities(pts, 10.0, Exec::kParallel));
  double total = 0.0;
  for (std::size_t i = 0; i < P.rows; ++i) {
    for (std::size_t j = 0; j < P.cols; ++j) {
      if (i == j) continue;
      total += P(i, j);
      EXPECT_EQ(P(i, j), P(j, i));
      EXPECT_GT(P(i, j), 0.0);
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Kernels, EmbeddingGradientMatchesFiniteDifferences) {
  const Matrix pts = rx::testing::random_matrix(12, 3, 5);
  const Matrix P = rx::kernels::tsne_affinities(pts, 3.0, Exec::kSerial);
  Matrix Y = rx::testing::random_matrix(12, 2, 6);
  Matrix grad, scratch;
  rx::kernels::tsne_gradient(P, Y, 1.0, grad, Exec::kSerial);
  Matrix grad_p;
  rx::kernels::tsne_gradient(P, Y, 1.0, grad_p, Exec::kParallel);
  EXPECT_EQ(grad, grad_p);
  const double h = 1e-6;
  for (std::size_t i = 0; i < Y.rows; ++i) {
    for (std::size_t d = 0; d < 2; ++d) {
      const double saved = Y(i, d);
      Y(i, d) = saved + h;
      const double up = rx::kernels::tsne_gradient(P, Y, 1.0, scratch, Exec::kSerial);
      Y(i, d) = saved - h;
      const double down = rx::kernels::tsne_gradient(P, Y, 1.0, scratch, Exec::kSerial);
      Y(i, d) = saved;
      EXPECT_NEAR(grad(i, d), (up - down) / (2 * h), 1e-6);
    }
  }
}

TEST(Kernels, CoalitionValuesCoverEveryMask) {
  auto v = [](std::uint64_t mask) { return static_cast<double>(std::popcount(mask)) * 0.5; };
  const auto s = rx::kernels::coalition_values(10, v, Exec::kSerial);
  EXPECT_EQ(s, rx::kernels::coalition_values(10, v, Exec::kParallel));
  ASSERT_EQ(s.size(), 1024u);
  for (std::uint64_t m = 0; m < 1024; ++m) EXPECT_EQ(s[m], v(m));
  EXPECT_THROW(rx::kernels::coalition_values(31, v, Exec::kSerial), rx::ValidationError);
}

TEST(Kernels, FirstHiddenActivationsMatchForwardPass) {
  const auto model = rx::testing::random_network(6, 2, 16, 9);
  const Matrix rows = rx::testing::random_matrix(40, 6, 10);
  const Matrix s = rx::kernels::first_hidden_activations(model, rows, Exec::kSerial);
  EXPECT_EQ(s, rx::kernels::first_hidden_activations(model, rows, Exec::kParallel));
  ASSERT_EQ(s.cols, 16u);
  for (std::size_t i = 0; i < rows.rows; ++i) {
    const auto p = rx::forward(model, rows.row(i));
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(s(i, j), p.first_hidden_activation[j]);
  }
}
