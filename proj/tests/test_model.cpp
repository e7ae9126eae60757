#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "rehabxai/model.hpp"

namespace rx = rehabxai;
using rx::Component;
using rx::Label;

namespace {

// Relative error of analytic vs central-difference gradients over every
// parameter of the model.
double gradient_check(rx::TrainedModel m, const std::vector<double>& x, Label y) {
  rx::Gradients g;
  rx::loss_and_gradient(m, x, y, g);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = rx::sample_loss(m, x, y);
      param = saved - h;
      const double down = rx::sample_loss(m, x, y);
      param = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-7);
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    for (std::size_t q = 0; q < m.layers[l].weights.size(); ++q) check(m.layers[l].weights[q], g.weights[l][q]);
    for (std::size_t q = 0; q < m.layers[l].bias.size(); ++q) check(m.layers[l].bias[q], g.bias[l][q]);
  }
  return worst;
}

rx::FeatureTable toy_table(int subjects, int per_side, std::uint64_t seed) {
  auto cfg = rx::testing::small_config();
  cfg.n_subjects = subjects;
  cfg.trials_per_side = per_side;
  cfg.frames_per_trial = 30;
  return rx::extract_table(rx::generate_synthetic(cfg, seed), Component::kComp);
}

}  // namespace

TEST(Config, DefaultsMatchPublishedArchitectures) {
  const auto rom = rx::ModelConfig::defaults(Component::kRom);
  EXPECT_EQ(rom.n_hidden_layers, 3);
  EXPECT_EQ(rom.hidden_units, 256);
  EXPECT_DOUBLE_EQ(rom.learning_rate, 0.005);
  const auto comp = rx::ModelConfig::defaults(Component::kComp);
  EXPECT_EQ(comp.n_hidden_layers, 3);
  EXPECT_EQ(comp.hidden_units, 64);
  EXPECT_DOUBLE_EQ(comp.learning_rate, 0.005);
}

TEST(Config, Validation) {
  auto c = rx::ModelConfig::defaults(Component::kRom);
  c.hidden_units = 100;
  EXPECT_THROW(c.validate(), rx::ValidationError);
  c.off_grid = true;
  EXPECT_NO_THROW(c.validate());
  c.n_hidden_layers = 4;
  EXPECT_THROW(c.validate(), rx::ValidationError);
  c = rx::ModelConfig::defaults(Component::kRom);
  c.epochs = 0;
  EXPECT_THROW(c.validate(), rx::ValidationError);
  const auto back = rx::model_config_from_json(rx::to_json(rx::ModelConfig::defaults(Component::kComp)));
  EXPECT_EQ(back, rx::ModelConfig::defaults(Component::kComp));
}

TEST(Network, ShapesFollowConfig) {
  const auto m = rx::init_model(rx::ModelConfig::defaults(Component::kRom), 44);
  ASSERT_EQ(m.layers.size(), 4u);
  const std::vector<std::pair<int, int>> shapes = {{44, 256}, {256, 256}, {256, 256}, {256, 2}};
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(m.layers[l].fan_in, shapes[l].first);
    EXPECT_EQ(m.layers[l].fan_out, shapes[l].second);
    EXPECT_EQ(m.layers[l].weights.size(), static_cast<std::size_t>(shapes[l].first * shapes[l].second));
  }
  EXPECT_EQ(m.parameter_count(), 44u * 256 + 256 + 2 * (256u * 256 + 256) + 256 * 2 + 2);
}

TEST(Network, GlorotUniformInit) {
  const auto m = rx::init_model(rx::ModelConfig::defaults(Component::kComp), 36);
  for (const auto& layer : m.layers) {
    const double limit = std::sqrt(6.0 / (layer.fan_in + layer.fan_out));
    for (double w : layer.weights) EXPECT_LE(std::abs(w), limit);
    for (double b : layer.bias) EXPECT_EQ(b, 0.0);
  }
  EXPECT_EQ(m, rx::init_model(rx::ModelConfig::defaults(Component::kComp), 36));
}

TEST(Network, HandComputedSoftmax) {
  auto cfg = rx::ModelConfig::defaults(Component::kRom);
  cfg.n_hidden_layers = 1;
  cfg.hidden_units = 2;
  cfg.off_grid = true;
  auto m = rx::init_model(cfg, 2);
  m.layers[0].weights = {1, 0, 0, 1};
  m.layers[0].bias = {0, 0};
  m.layers[1].weights = {1, 0, 0, 1};
  m.layers[1].bias = {0, 0.5};
  const std::vector<double> x = {1.0, 2.0};
  const auto p = rx::forward(m, x);
  const double e1 = std::exp(1.0), e2 = std::exp(2.5);
  EXPECT_NEAR(p.probabilities[0], e1 / (e1 + e2), 1e-15);
  EXPECT_NEAR(p.probabilities[1], e2 / (e1 + e2), 1e-15);
  EXPECT_EQ(p.label, Label::kImpaired);
  EXPECT_NEAR(p.confidence, e2 / (e1 + e2), 1e-15);
  EXPECT_EQ(p.first_hidden_activation, x);
  // ReLU clips the negative unit.
  const auto q = rx::forward(m, std::vector<double>{-3.0, 1.0});
  EXPECT_NEAR(q.logits[0], 0.0, 1e-15);
  EXPECT_NEAR(q.logits[1], 1.5, 1e-15);
  EXPECT_THROW(rx::forward(m, std::vector<double>{1.0}), rx::ValidationError);
}

TEST(Network, GradientMatchesFiniteDifferences) {
  for (int i = 0; i < 6; ++i) {
    auto m = rx::testing::random_network(5, 1 + i % 3, 4 + i, 100 + i);
    m.input.mean = rx::testing::random_vector(5, 7 + i);
    m.input.scale.assign(5, 1.5);
    const auto x = rx::testing::random_vector(5, 200 + i, -2, 2);
    EXPECT_LT(gradient_check(m, x, i % 2 ? Label::kImpaired : Label::kCorrect), 1e-4) << "network " << i;
  }
}

TEST(Training, SeparableToySetReachesFullAccuracy) {
  std::vector<std::vector<double>> rows;
  std::vector<Label> labels;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (int i = 0; i < 40; ++i) {
    const double a = u(rng), b = u(rng);
    rows.push_back({a, b});
    labels.push_back(Label::kCorrect);
    rows.push_back({-a, -b});
    labels.push_back(Label::kImpaired);
  }
  auto cfg = rx::ModelConfig::defaults(Component::kRom);
  cfg.n_hidden_layers = 1;
  cfg.hidden_units = 32;
  cfg.epochs = 50;
  const auto m = rx::fit_model(cfg, rows, labels, "");
  int right = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) right += rx::forward(m, rows[i]).label == labels[i];
  EXPECT_EQ(right, static_cast<int>(rows.size()));
  ASSERT_EQ(m.loss_curve.size(), 50u);
  EXPECT_LT(m.loss_curve.back(), m.loss_curve.front());
  EXPECT_TRUE(m.trained);
}

TEST(Training, DeterministicUnderSeed) {
  const auto t = toy_table(3, 3, 2);
  auto cfg = rx::testing::weak_config(Component::kComp, 5);
  std::vector<std::vector<double>> rows;
  for (const auto& r : t.rows) rows.push_back(r.values);
  const auto a = rx::fit_model(cfg, rows, t.labels, t.rows[0].schema_hash);
  const auto b = rx::fit_model(cfg, rows, t.labels, t.rows[0].schema_hash);
  EXPECT_EQ(a, b);
  EXPECT_EQ(rx::model_id(a), rx::model_id(b));
  cfg.seed = 6;
  EXPECT_NE(rx::model_id(rx::fit_model(cfg, rows, t.labels, t.rows[0].schema_hash)), rx::model_id(a));
}

TEST(Training, NonFiniteLossRaises) {
  std::vector<std::vector<double>> rows = {{1e3, -1e3}, {-1e3, 1e3}};
  std::vector<Label> labels = {Label::kCorrect, Label::kImpaired};
  auto cfg = rx::ModelConfig::defaults(Component::kRom);
  cfg.n_hidden_layers = 1;
  cfg.hidden_units = 32;
  cfg.learning_rate = 1e300;
  cfg.epochs = 20;
  cfg.off_grid = true;
  auto m = rx::init_model(cfg, 2);
  EXPECT_THROW(rx::train(m, rows, labels), rx::TrainingError);
}

TEST(Training, SchemaMismatchRejected) {
  const auto t = toy_table(2, 2, 3);
  auto m = rx::init_model(rx::testing::weak_config(Component::kComp), 36, "not-the-schema");
  EXPECT_THROW(rx::train(m, std::span<const rx::FeatureVector>(t.rows), t.labels), rx::ValidationError);
}

TEST(Metrics, F1FromHandCounts) {
  rx::ConfusionCounts c;
  c.tp = 3;
  c.fp = 1;
  c.fn = 2;
  EXPECT_NEAR(rx::f1_from_counts(c), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(rx::f1_from_counts(rx::ConfusionCounts{}), 0.0);
  const std::vector<Label> pred = {Label::kImpaired, Label::kImpaired, Label::kCorrect, Label::kImpaired};
  const std::vector<Label> truth = {Label::kImpaired, Label::kCorrect, Label::kImpaired, Label::kImpaired};
  const auto cc = rx::confusion(pred, truth);
  EXPECT_EQ(cc.tp, 2);
  EXPECT_EQ(cc.fp, 1);
  EXPECT_EQ(cc.fn, 1);
  EXPECT_EQ(cc.tn, 0);
  EXPECT_NEAR(rx::f1_score(pred, truth), 2.0 / 3.0, 1e-15);
}

TEST(Loso, EveryTrialHeldOutOnceAndParallelMatchesSerial) {
  const auto t = toy_table(4, 3, 8);
  const auto cfg = rx::testing::weak_config(Component::kComp, 2);
  const auto serial = rx::evaluate_loso(t, cfg, rx::Exec::kSerial);
  const auto parallel = rx::evaluate_loso(t, cfg, rx::Exec::kParallel);
  EXPECT_EQ(serial, parallel);
  ASSERT_EQ(serial.entries.size(), t.size());
  ASSERT_EQ(serial.folds.size(), 4u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(serial.entries[i].trial_id, t.trial_ids[i]);
    EXPECT_EQ(serial.folds[serial.entries[i].fold].test_subject, t.subject_ids[i]);
    EXPECT_EQ(serial.entries[i].right, serial.entries[i].predicted == t.labels[i]);
  }
  std::vector<Label> pred, truth;
  for (const auto& e : serial.entries) {
    pred.push_back(e.predicted);
    truth.push_back(e.truth);
  }
  EXPECT_DOUBLE_EQ(serial.f1, rx::f1_score(pred, truth));
  EXPECT_EQ(rx::loso_record_from_json(rx::to_json(serial)), serial);
}

TEST(Grid, FullGridEnumeratesSixtyCellsOnce) {
  const auto t = toy_table(3, 2, 4);
  auto base = rx::testing::weak_config(Component::kComp, 1);
  const auto g = rx::grid_search(t, rx::GridSpec{}, base, rx::Exec::kParallel);
  ASSERT_EQ(g.cells.size(), 60u);
  std::set<std::tuple<int, int, double>> seen;
  for (const auto& c : g.cells) seen.insert({c.n_hidden_layers, c.hidden_units, c.learning_rate});
  EXPECT_EQ(seen.size(), 60u);
  EXPECT_EQ(g.cells[rx::best_cell_index(g.cells)].n_hidden_layers, g.best.n_hidden_layers);
}

TEST(Grid, TieBreakPrefersFewerParametersThenLowerRate) {
  std::vector<rx::GridCell> cells(3);
  cells[0] = {3, 512, 0.005, 1000, 0.9, ""};
  cells[1] = {1, 32, 0.005, 10, 0.9, ""};
  cells[2] = {1, 32, 0.001, 10, 0.9, ""};
  EXPECT_EQ(rx::best_cell_index(cells), 2u);
  cells[0].f1 = 0.95;
  EXPECT_EQ(rx::best_cell_index(cells), 0u);
  for (auto& c : cells) c.f1.reset();
  EXPECT_THROW(rx::best_cell_index(cells), rx::TrainingError);
}

TEST(Serialization, RoundTripAndValidation) {
  const auto m = rx::testing::random_network(4, 2, 8, 3);
  const auto j = rx::to_json(m);
  EXPECT_EQ(rx::model_from_json(j), m);
  auto bad = j;
  bad["layers"][0]["weights"][0] = "x";
  EXPECT_THROW(rx::model_from_json(bad), rx::Error);
  auto shape = j;
  shape["layers"][0]["weights"].erase(0);
  EXPECT_THROW(rx::model_from_json(shape), rx::Error);
  EXPECT_EQ(rx::model_id(m).rfind("m-", 0), 0u);
}
