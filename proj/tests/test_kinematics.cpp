#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "rehabxai/kinematics.hpp"

namespace rx = rehabxai;
using rx::Component;
using rx::Joint;

namespace {

long double angle_oracle(rx::Vec3 a, rx::Vec3 b, rx::Vec3 c) {
  const long double ux = a.x - b.x, uy = a.y - b.y, uz = a.z - b.z;
  const long double vx = c.x - b.x, vy = c.y - b.y, vz = c.z - b.z;
  const long double nu = std::sqrt(ux * ux + uy * uy + uz * uz);
  const long double nv = std::sqrt(vx * vx + vy * vy + vz * vz);
  long double cosv = (ux * vx + uy * vy + uz * vz) / (nu * nv);
  cosv = std::clamp(cosv, -1.0L, 1.0L);
  return std::acos(cosv) * 180.0L / std::numbers::pi_v<long double>;
}

const rx::Dataset& cohort() {
  static const rx::Dataset d = rx::generate_synthetic(rx::testing::small_config(), 21);
  return d;
}

}  // namespace

TEST(JointAngle, HandCases) {
  EXPECT_NEAR(rx::joint_angle({1, 0, 0}, {0, 0, 0}, {0, 1, 0}), 90.0, 1e-12);
  EXPECT_NEAR(rx::joint_angle({1, 0, 0}, {0, 0, 0}, {-2, 0, 0}), 180.0, 1e-12);
  EXPECT_NEAR(rx::joint_angle({1, 1, 0}, {0, 0, 0}, {3, 3, 0}), 0.0, 1e-12);
  EXPECT_NEAR(rx::joint_angle({1, 0, 0}, {0, 0, 0}, {1, 1, 0}), 45.0, 1e-12);
  EXPECT_THROW(rx::joint_angle({0, 0, 0}, {0, 0, 0}, {1, 0, 0}), rx::GeometryError);
}

TEST(JointAngle, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const rx::Vec3 a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)}, c{u(rng), u(rng), u(rng)};
    const double got = rx::joint_angle(a, b, c);
    EXPECT_NEAR(got, static_cast<double>(angle_oracle(a, b, c)), 1e-9);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 180.0);
  }
}

TEST(Series, RelativeDistanceMatchesRecomputation) {
  const auto& t = cohort().trials[3];
  const double n = 0.21;
  const auto series = rx::relative_distance_series(t, Joint::kHead, Joint::kWristLeft, n);
  ASSERT_EQ(series.size(), 4u);
  EXPECT_EQ(series[0].name, "head_wrist_left_x");
  EXPECT_EQ(series[3].name, "head_wrist_left_dist");
  for (std::size_t f = 0; f < t.frames.size(); ++f) {
    const rx::Vec3 h = t.frames[f].at(Joint::kHead), w = t.frames[f].at(Joint::kWristLeft);
    EXPECT_NEAR(series[0].values[f], std::abs(h.x - w.x) / n, 1e-12);
    EXPECT_NEAR(series[1].values[f], std::abs(h.y - w.y) / n, 1e-12);
    EXPECT_NEAR(series[2].values[f], std::abs(h.z - w.z) / n, 1e-12);
    EXPECT_NEAR(series[3].values[f],
                std::sqrt((h.x - w.x) * (h.x - w.x) + (h.y - w.y) * (h.y - w.y) + (h.z - w.z) * (h.z - w.z)) / n,
                1e-12);
  }
  EXPECT_THROW(rx::relative_distance_series(t, Joint::kHead, Joint::kWristLeft, 0.0), rx::ValidationError);
}

TEST(Series, DisplacementMatchesRecomputation) {
  const auto& t = cohort().trials[7];
  const double n = 0.19;
  const auto series = rx::displacement_series(t, Joint::kSpine, n);
  ASSERT_EQ(series.size(), 3u);
  const rx::Vec3 o = t.frames.front().at(Joint::kSpine);
  for (std::size_t f = 0; f < t.frames.size(); ++f) {
    const rx::Vec3 p = t.frames[f].at(Joint::kSpine);
    EXPECT_NEAR(series[0].values[f], std::abs(p.x - o.x) / n, 1e-12);
    EXPECT_NEAR(series[1].values[f], std::abs(p.y - o.y) / n, 1e-12);
    EXPECT_NEAR(series[2].values[f], std::abs(p.z - o.z) / n, 1e-12);
  }
  EXPECT_EQ(series[0].values.front(), 0.0);
}

TEST(Series, SummaryMatchesSortAndFold) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    rx::SeriesChannel ch{"c", {}};
    for (int i = 0; i < 1 + rep * 7; ++i) ch.values.push_back(g(rng));
    auto sorted = ch.values;
    std::sort(sorted.begin(), sorted.end());
    const double mean = std::accumulate(ch.values.begin(), ch.values.end(), 0.0) / ch.values.size();
    const auto s = rx::summarize_series(ch);
    EXPECT_EQ(s.min, sorted.front());
    EXPECT_EQ(s.max, sorted.back());
    EXPECT_EQ(s.mean, mean);
    EXPECT_EQ(s.range, sorted.back() - sorted.front());
  }
  EXPECT_THROW(rx::summarize_series({"empty", {}}), rx::ValidationError);
}

TEST(Schema, SizesAndNames) {
  // (3 angles + 2 distances + 2 x 3 per-axis distances) x 4 summaries.
  EXPECT_EQ(rx::rom_schema().size(), 44u);
  EXPECT_EQ(rx::comp_schema().size(), 36u);
  EXPECT_EQ(rx::rom_schema().names().front(), "elbow_flexion.min");
  EXPECT_EQ(rx::rom_schema().names()[3], "elbow_flexion.range");
  EXPECT_EQ(rx::comp_schema().names().back(), "shoulder_disp_z.range");
  EXPECT_EQ(rx::rom_schema().index_of("head_wrist_dist.max"), 13u);
  EXPECT_THROW(rx::rom_schema().index_of("nope.max"), rx::NotFoundError);
  EXPECT_EQ(rx::rom_schema().channel_groups().size(), 11u);
  EXPECT_EQ(rx::comp_schema().channel_groups().size(), 9u);
  for (const auto& g : rx::rom_schema().channel_groups()) EXPECT_EQ(g.size(), 4u);
  EXPECT_NE(rx::rom_schema().hash(), rx::comp_schema().hash());
  EXPECT_EQ(rx::rom_schema().hash().size(), 16u);
}

TEST(Features, CountsAndSchemaHash) {
  const auto& d = cohort();
  const auto& t = d.trials.front();
  const auto rom = rx::extract_features(t, Component::kRom, d.moving_arm(t), 0.2);
  const auto comp = rx::extract_features(t, Component::kComp, d.moving_arm(t), 0.2);
  EXPECT_EQ(rom.values.size(), 44u);
  EXPECT_EQ(comp.values.size(), 36u);
  EXPECT_EQ(rom.schema_hash, rx::rom_schema().hash());
  EXPECT_EQ(comp.schema_hash, rx::comp_schema().hash());
  // extension is 180 - flexion, so their ranges agree.
  EXPECT_NEAR(rom.values[3], rom.values[11], 1e-9);
}

TEST(Features, NormalizerFromShoulders) {
  rx::Dataset d = rx::generate_synthetic(rx::testing::small_config(), 1);
  for (auto& t : d.trials) {
    if (t.subject_id != "S01") continue;
    auto& f = t.frames.front();
    f.at(Joint::kSpine) = {0, 1.3, 0};
    f.at(Joint::kShoulderLeft) = {0.2, 1.3, 0};
    f.at(Joint::kShoulderRight) = {-0.2, 1.3, 0};
  }
  EXPECT_NEAR(rx::subject_normalizers(d).at("S01"), 0.2, 1e-15);
}

TEST(Features, ImpairedReachLeavesWristFartherFromHead) {
  auto cfg = rx::testing::small_config();
  cfg.n_subjects = 2;
  cfg.trial_jitter = 0.0;
  cfg.impairment = {0.0, 1.0};
  cfg.compensation = {0.0, 0.0};
  const auto d = rx::generate_synthetic(cfg, 4);
  const auto table = rx::extract_table(d, Component::kRom);
  const std::size_t min_dist = rx::rom_schema().index_of("head_wrist_dist.min");
  const auto healthy = table.rows[*table.position("S01-A-01")].values[min_dist];
  const auto impaired = table.rows[*table.position("S02-A-01")].values[min_dist];
  EXPECT_LT(healthy, impaired);
}

TEST(Features, CompensationMovesHeadLaterally) {
  auto cfg = rx::testing::small_config();
  cfg.n_subjects = 2;
  cfg.trial_jitter = 0.0;
  cfg.impairment = {0.0, 0.0};
  cfg.compensation = {0.0, 1.0};
  const auto d = rx::generate_synthetic(cfg, 4);
  const auto table = rx::extract_table(d, Component::kComp);
  const std::size_t head_x = rx::comp_schema().index_of("head_disp_x.max");
  EXPECT_LT(table.rows[*table.position("S01-A-01")].values[head_x],
            table.rows[*table.position("S02-A-01")].values[head_x]);
}

TEST(Features, ParallelTableEqualsSerial) {
  for (auto c : {Component::kRom, Component::kComp}) {
    const auto serial = rx::extract_table(cohort(), c, rx::Exec::kSerial);
    const auto parallel = rx::extract_table(cohort(), c, rx::Exec::kParallel);
    EXPECT_EQ(serial.rows, parallel.rows);
    EXPECT_EQ(serial.labels, parallel.labels);
    EXPECT_EQ(serial.size(), cohort().trials.size());
  }
}

TEST(Features, RangesCoverTable) {
  const auto table = rx::extract_table(cohort(), Component::kRom);
  const auto r = rx::feature_ranges(table);
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.values.size(); ++j) {
      EXPECT_LE(r.min[j], row.values[j]);
      EXPECT_GE(r.max[j], row.values[j]);
    }
  }
}
