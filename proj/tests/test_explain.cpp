#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "rehabxai/explain.hpp"

namespace rx = rehabxai;
using rx::Component;
using rx::Exec;
using rx::Matrix;
using rx::Metric;

namespace {

// Two well separated Gaussian clusters in `dim` dimensions.
Matrix two_clusters(std::size_t per, std::size_t dim, std::uint64_t seed, std::vector<int>& labels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  Matrix m(2 * per, dim);
  labels.clear();
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const double centre = i < per ? -2.0 : 2.0;
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = centre + n(rng);
    labels.push_back(i < per ? 0 : 1);
  }
  return m;
}

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", i);
    ids.emplace_back(buf);
  }
  return ids;
}

rx::NeighborResult result_of(const std::vector<std::string>& ids) {
  rx::NeighborResult r;
  for (const auto& id : ids) r.neighbors.push_back({id, 0, 0.0, {}});
  return r;
}

}  // namespace

TEST(Pca, MatchesJacobiEigenOracle) {
  Matrix m = rx::testing::random_matrix(120, 6, 11);
  const double scale[] = {3.0, 2.0, 1.0, 0.5, 0.25, 0.1};
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < 6; ++j) m(i, j) *= scale[j];
  }
  const auto pca = rx::project_pca(m);
  const auto oracle = rx::testing::jacobi_eigen(rx::testing::covariance(m));
  double total = 0.0;
  for (double v : oracle.values) total += v;
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(pca.explained_variance[k], oracle.values[k], 1e-10 * oracle.values[0]);
    EXPECT_NEAR(pca.explained_variance_ratio[k], oracle.values[k] / total, 1e-10);
    auto vec = oracle.vectors[k];
    const auto big = std::max_element(vec.begin(), vec.end(),
                                      [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (*big < 0) {
      for (double& v : vec) v = -v;
    }
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(pca.components(k, j), vec[j], 1e-8);
  }
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto p = pca.project(m.row(i));
    EXPECT_NEAR(p[0], pca.coords(i, 0), 1e-12);
    EXPECT_NEAR(p[1], pca.coords(i, 1), 1e-12);
  }
}

TEST(Pca, RankTwoInputPreservesDistances) {
  const Matrix plane = rx::testing::random_matrix(40, 2, 12, -3, 3);
  // Orthonormal embedding of the plane into 5D plus an offset.
  const double u[5] = {0.6, 0.8, 0, 0, 0};
  const double v[5] = {0, 0, 0.6, 0, 0.8};
  Matrix m(40, 5);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 5; ++j) m(i, j) = plane(i, 0) * u[j] + plane(i, 1) * v[j] + 1.5;
  }
  const auto pca = rx::project_pca(m);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = i + 1; j < 40; ++j) {
      EXPECT_NEAR(rx::euclidean_distance(pca.coords.row(i), pca.coords.row(j)),
                  rx::euclidean_distance(m.row(i), m.row(j)), 1e-9);
    }
  }
}

TEST(Pca, DegenerateInput) {
  const Matrix m(10, 4, 2.5);
  const auto pca = rx::project_pca(m);
  EXPECT_TRUE(pca.degenerate);
  for (double v : pca.coords.data) EXPECT_EQ(v, 0.0);
}

TEST(Projection, SeparatesClusters) {
  std::vector<int> labels;
  const Matrix m = two_clusters(30, 10, 13, labels);
  EXPECT_GT(rx::testing::silhouette(rx::project_pca(m).coords, labels), 0.5);
  rx::NeighborEmbeddingParams params;
  params.perplexity = 10;
  params.iterations = 400;
  params.seed = 5;
  const auto a = rx::project_neighbor_embedding(m, params, Exec::kSerial);
  EXPECT_GT(rx::testing::silhouette(a.coords, labels), 0.5);
  EXPECT_TRUE(std::isfinite(a.final_kl));
  const auto b = rx::project_neighbor_embedding(m, params, Exec::kParallel);
  EXPECT_EQ(a.coords, b.coords);
  params.perplexity = 100;
  EXPECT_NEAR(rx::project_neighbor_embedding(m, params).perplexity, 59.0 / 3.0, 1e-12);
}

TEST(Knn, MatchesBruteForce) {
  const Matrix pts = rx::testing::random_matrix(200, 8, 14);
  const auto ids = make_ids(200);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t qi = static_cast<std::size_t>(trial * 9);
    const std::vector<double> q(pts.row(qi).begin(), pts.row(qi).end());
    for (int k : {1, 5, 17}) {
      for (Metric metric : {Metric::kEuclidean, Metric::kCosine}) {
        const auto got = rx::knn_points(pts, ids, q, k, metric, qi, Exec::kParallel);
        const auto want = rx::testing::brute_knn(pts, ids, q, k, metric, static_cast<long>(qi));
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t r = 0; r < got.size(); ++r) {
          EXPECT_EQ(got[r].id, want[r].second);
          EXPECT_NEAR(got[r].distance, want[r].first, 1e-12);
        }
        for (const auto& nb : got) EXPECT_NE(nb.id, ids[qi]);
      }
    }
  }
}

TEST(Knn, TiesBrokenById) {
  Matrix pts(4, 2, 1.0);
  const std::vector<std::string> ids = {"d", "b", "c", "a"};
  const auto got = rx::knn_points(pts, ids, std::vector<double>{0.0, 0.0}, 3, Metric::kEuclidean, std::nullopt);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].id, "a");
  EXPECT_EQ(got[1].id, "b");
  EXPECT_EQ(got[2].id, "c");
  EXPECT_THROW(rx::knn_points(pts, ids, std::vector<double>{0.0, 0.0}, 0, Metric::kEuclidean, std::nullopt),
               rx::ValidationError);
  EXPECT_THROW(rx::knn_points(pts, ids, std::vector<double>{0.0, 0.0}, 4, Metric::kEuclidean, 0),
               rx::ValidationError);
}

TEST(Knn, SpaceQueriesByIdAndFeaturesAgree) {
  const auto data = rx::generate_synthetic(rx::testing::small_config(), 3);
  const auto table = rx::extract_table(data, Component::kRom);
  std::vector<std::vector<double>> rows;
  for (const auto& r : table.rows) rows.push_back(r.values);
  const auto model = rx::fit_model(rx::testing::weak_config(Component::kRom), rows, table.labels,
                                   table.rows[0].schema_hash);
  rx::SpaceBuildOptions opts;
  const auto space = rx::build_embedding_space(model, table, opts);
  ASSERT_EQ(space.sample_ids, table.trial_ids);
  ASSERT_EQ(space.coords.rows, table.size());
  EXPECT_EQ(rx::embedding_space_from_json(rx::to_json(space)).coords, space.coords);

  rx::NeighborQuery by_id;
  by_id.sample_id = table.trial_ids[7];
  const auto a = rx::knn(space, by_id, &model);
  ASSERT_EQ(a.neighbors.size(), 5u);
  for (std::size_t i = 1; i < a.neighbors.size(); ++i) {
    EXPECT_LE(a.neighbors[i - 1].distance, a.neighbors[i].distance);
  }
  const auto q = rx::embed_query(space, &model, rx::NeighborQuery{std::nullopt, rows[7]});
  EXPECT_NEAR(q[0], space.coords(7, 0), 1e-9);
  EXPECT_NEAR(q[1], space.coords(7, 1), 1e-9);

  by_id.space = rx::SpaceKind::kActivation;
  by_id.metric = Metric::kCosine;
  by_id.k = 9;
  const auto b = rx::knn(space, by_id, &model);
  EXPECT_EQ(b.neighbors.size(), 9u);
  by_id.sample_id = "missing";
  EXPECT_THROW(rx::knn(space, by_id, &model), rx::NotFoundError);
}

TEST(Knn, InputFeatureSpaceUsesStandardizedRows) {
  const auto data = rx::generate_synthetic(rx::testing::small_config(), 4);
  const auto table = rx::extract_table(data, Component::kComp);
  std::vector<std::vector<double>> rows;
  for (const auto& r : table.rows) rows.push_back(r.values);
  const auto model = rx::fit_model(rx::testing::weak_config(Component::kComp), rows, table.labels,
                                   table.rows[0].schema_hash);
  ASSERT_EQ(model.input.mean.size(), rows[0].size());

  rx::SpaceBuildOptions opts;
  opts.source = rx::EmbeddingSource::kInputFeatures;
  const auto space = rx::build_embedding_space(model, table, opts);
  ASSERT_EQ(space.activations.rows, rows.size());
  ASSERT_EQ(space.activations.cols, rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const double want = (rows[i][j] - model.input.mean[j]) / model.input.scale[j];
      EXPECT_NEAR(space.activations(i, j), want, 1e-12);
    }
  }

  const auto q = rx::embed_query(space, &model, rx::NeighborQuery{std::nullopt, rows[11]});
  EXPECT_NEAR(q[0], space.coords(11, 0), 1e-9);
  EXPECT_NEAR(q[1], space.coords(11, 1), 1e-9);

  const auto back = rx::embedding_space_from_json(rx::to_json(space));
  EXPECT_EQ(back.source, rx::EmbeddingSource::kInputFeatures);
  auto legacy = rx::to_json(space);
  legacy.erase("source");
  EXPECT_EQ(rx::embedding_space_from_json(legacy).source, rx::EmbeddingSource::kFirstHidden);
  EXPECT_EQ(rx::parse_embedding_source("input_features"), rx::EmbeddingSource::kInputFeatures);
  EXPECT_THROW(rx::parse_embedding_source("raw"), rx::ValidationError);
}

TEST(Sweep, TwelveCellsAndSeparableAccuracy) {
  std::vector<int> labels;
  const Matrix m = two_clusters(40, 6, 15, labels);
  std::vector<rx::Label> ls;
  for (int l : labels) ls.push_back(l ? rx::Label::kImpaired : rx::Label::kCorrect);
  const auto ids = make_ids(m.rows);
  const auto cells = rx::knn_classifier_sweep(m, ids, ls);
  ASSERT_EQ(cells.size(), 12u);
  std::set<std::pair<int, Metric>> seen;
  for (const auto& c : cells) {
    seen.insert({c.k, c.metric});
    EXPECT_DOUBLE_EQ(c.accuracy, 1.0);
  }
  EXPECT_EQ(seen.size(), 12u);
  const auto par = rx::knn_classifier_sweep(m, ids, ls, {5, 10, 15, 20, 25, 30},
                                            {Metric::kEuclidean, Metric::kCosine}, Exec::kParallel);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(par[i].accuracy, cells[i].accuracy);
}

TEST(NeighborSets, SetAlgebra) {
  const auto s = rx::common_unique_neighbors(result_of({"a", "b", "c", "d", "e"}),
                                             result_of({"g", "f", "e", "d", "c"}));
  EXPECT_EQ(s.common, (std::vector<std::string>{"c", "d", "e"}));
  EXPECT_EQ(s.unique_rom, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(s.unique_comp, (std::vector<std::string>{"g", "f"}));
}

TEST(NeighborSets, PartitionProperty) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> pool;
    for (int i = 0; i < 12; ++i) pool.push_back("t" + std::to_string(i));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<std::string> rom(pool.begin(), pool.begin() + 5);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<std::string> comp(pool.begin(), pool.begin() + 5);
    const auto s = rx::common_unique_neighbors(result_of(rom), result_of(comp));
    std::multiset<std::string> rom_side(s.common.begin(), s.common.end());
    rom_side.insert(s.unique_rom.begin(), s.unique_rom.end());
    EXPECT_EQ(rom_side, std::multiset<std::string>(rom.begin(), rom.end()));
    std::multiset<std::string> comp_side(s.common.begin(), s.common.end());
    comp_side.insert(s.unique_comp.begin(), s.unique_comp.end());
    EXPECT_EQ(comp_side, std::multiset<std::string>(comp.begin(), comp.end()));
    for (const auto& id : s.unique_rom) {
      EXPECT_EQ(std::count(s.unique_comp.begin(), s.unique_comp.end(), id), 0);
    }
  }
}

TEST(Benchmark, ReportsSubjectAndHeldOutPrediction) {
  const auto data = rx::generate_synthetic(rx::testing::small_config(), 4);
  const auto table = rx::extract_table(data, Component::kComp);
  const auto loso = rx::evaluate_loso(table, rx::testing::weak_config(Component::kComp), Exec::kParallel);
  for (const auto& e : loso.entries) {
    const auto b = rx::benchmark_info(e.trial_id, data, loso);
    const auto& subject = data.subject(data.trial(e.trial_id).subject_id);
    EXPECT_EQ(b.status_score, subject.status_score);
    EXPECT_EQ(b.description, subject.description);
    EXPECT_EQ(b.ai_correct, e.right);
    EXPECT_EQ(b.ai_confidence, e.confidence);
    EXPECT_GE(b.ai_confidence, 0.5);
    EXPECT_EQ(b.annotator_agreement, data.annotators_agree(e.trial_id, Component::kComp));
  }
  EXPECT_THROW(rx::benchmark_info("nope", data, loso), rx::NotFoundError);
}

TEST(Shapley, LinearModelHasClosedForm) {
  const std::vector<double> w = {0.5, -2.0, 1.0, 3.0};
  auto f = [&](std::span<const double> z) {
    double s = 0.25;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * z[i];
    return s;
  };
  const std::vector<double> x = {1, 2, 3, 4}, b = {0, 1, -1, 2};
  const auto a = rx::shapley_attribution(f, x, b, rx::ShapleyOptions{});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.phi[i], w[i] * (x[i] - b[i]), 1e-12);
  EXPECT_EQ(a.top_features, (std::vector<std::string>{"f3", "f2", "f1"}));
}

TEST(Shapley, AxiomsOnNonlinearFunction) {
  // Symmetric in players 0 and 1, ignores player 2.
  auto f = [](std::span<const double> z) {
    return std::tanh(z[0] * z[1] + z[3]) + z[0] * z[0] + z[1] * z[1] + z[3] * z[4];
  };
  const std::vector<double> x = {0.7, 0.7, 5.0, -0.4, 1.2}, b = {0.1, 0.1, 0.0, 0.3, -0.5};
  const auto a = rx::shapley_attribution(f, x, b, rx::ShapleyOptions{});
  double sum = 0.0;
  for (double p : a.phi) sum += p;
  EXPECT_NEAR(sum, f(x) - f(b), 1e-12);
  EXPECT_NEAR(a.phi[0], a.phi[1], 1e-12);
  EXPECT_NEAR(a.phi[2], 0.0, 1e-15);
}

TEST(Shapley, ExactMatchesPermutationOracleOnNetworks) {
  for (int i = 0; i < 5; ++i) {
    const auto model = rx::testing::random_network(6, 1 + i % 3, 8, 30 + i);
    const auto x = rx::testing::random_vector(6, 40 + i, -2, 2);
    const auto b = rx::testing::random_vector(6, 50 + i, -0.5, 0.5);
    rx::ShapleyOptions opts;
    opts.exec = Exec::kParallel;
    const auto a = rx::shapley_attribution(model, x, b, opts);
    const int cls = a.explained_class;
    const auto oracle = rx::testing::shapley_by_permutations(6, [&](std::uint64_t mask) {
      std::vector<double> z = b;
      for (int p = 0; p < 6; ++p) {
        if (mask & (std::uint64_t{1} << p)) z[p] = x[p];
      }
      return rx::forward(model, z).probabilities[static_cast<std::size_t>(cls)];
    });
    for (std::size_t p = 0; p < 6; ++p) EXPECT_NEAR(a.phi[p], oracle[p], 1e-12);
    EXPECT_NEAR(a.value_at_x, rx::forward(model, x).confidence, 1e-15);
  }
}

TEST(Shapley, SampledConvergesToExact) {
  const auto model = rx::testing::random_network(8, 2, 16, 60);
  const auto x = rx::testing::random_vector(8, 61, -2, 2);
  const std::vector<double> b(8, 0.0);
  const auto exact = rx::shapley_attribution(model, x, b, rx::ShapleyOptions{});
  rx::ShapleyOptions opts;
  opts.mode = rx::ShapleyMode::kSampled;
  opts.n_samples = 2000;
  opts.seed = 3;
  const auto s = rx::shapley_attribution(model, x, b, opts);
  opts.exec = Exec::kParallel;
  EXPECT_EQ(rx::shapley_attribution(model, x, b, opts).phi, s.phi);
  double sum = 0.0;
  for (std::size_t p = 0; p < 8; ++p) {
    EXPECT_NEAR(s.phi[p], exact.phi[p], 0.05);
    sum += s.phi[p];
  }
  // Every permutation telescopes, so efficiency holds exactly.
  EXPECT_NEAR(sum, s.value_at_x - s.value_at_baseline, 1e-12);
}

TEST(Shapley, GroupsAndLimits) {
  auto f = [](std::span<const double> z) { return z[0] + 2 * z[1] + 3 * z[2]; };
  const std::vector<double> x = {1, 1, 1}, b = {0, 0, 0};
  rx::ShapleyOptions opts;
  opts.groups = {{0, 2}, {1}};
  opts.player_names = {"outer", "middle"};
  const auto a = rx::shapley_attribution(f, x, b, opts);
  EXPECT_NEAR(a.phi[0], 4.0, 1e-12);
  EXPECT_NEAR(a.phi[1], 2.0, 1e-12);
  EXPECT_EQ(a.names, opts.player_names);
  const std::vector<double> wide(21, 0.0);
  EXPECT_THROW(rx::shapley_attribution([](std::span<const double>) { return 0.0; }, wide, wide,
                                       rx::ShapleyOptions{}),
               rx::ValidationError);
  EXPECT_THROW(rx::shapley_attribution(f, x, std::vector<double>{0, 0}, rx::ShapleyOptions{}),
               rx::ValidationError);
}

TEST(Shapley, TopKTiesFollowPlayerOrder) {
  rx::FeatureAttribution a;
  a.names = {"p", "q", "r", "s"};
  a.phi = {0.3, -0.3, 0.1, 0.3};
  EXPECT_EQ(rx::top_k_features(a, 3), (std::vector<std::string>{"p", "q", "s"}));
  EXPECT_EQ(rx::top_k_features(a, 1), (std::vector<std::string>{"p"}));
}

TEST(Radar, MinMaxNormalization) {
  const auto& schema = rx::rom_schema();
  const auto names = schema.names();
  const std::size_t n = schema.size();
  rx::FeatureRanges ranges{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  std::vector<double> affected(n, 0.5), unaffected(n, 0.5);
  ranges.min[0] = 2;
  ranges.max[0] = 4;
  affected[0] = 3;
  unaffected[0] = 9;
  ranges.min[1] = ranges.max[1] = 7;
  affected[2] = -1;
  const auto r = rx::radar_payload({names[0], names[1], names[2]}, schema, affected, unaffected, ranges);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r[0].affected, 0.5);
  EXPECT_DOUBLE_EQ(r[0].unaffected, 1.0);
  EXPECT_FALSE(r[0].zero_range);
  EXPECT_DOUBLE_EQ(r[1].affected, 0.5);
  EXPECT_TRUE(r[1].zero_range);
  EXPECT_DOUBLE_EQ(r[2].affected, 0.0);
  EXPECT_THROW(rx::radar_payload({"nope.max"}, schema, affected, unaffected, ranges), rx::Error);
}
