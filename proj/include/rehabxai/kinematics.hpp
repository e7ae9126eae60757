#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rehabxai/common.hpp"
#include "rehabxai/dataset.hpp"

namespace rehabxai {

struct SeriesChannel {
  std::string name;
  std::vector<double> values;
};

struct SeriesSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double range = 0.0;
};

inline constexpr std::array<std::string_view, 4> kSummaryNames = {"min", "max", "mean", "range"};

// One scalar in a feature schema: `channel.summary`.
struct FeatureSpec {
  std::string name;
  std::string channel;
  std::string summary;
  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(Component component, std::vector<std::string> channels);

  Component component() const { return component_; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  const std::vector<std::string>& channels() const { return channels_; }
  std::size_t size() const { return features_.size(); }
  const std::string& hash() const { return hash_; }

  std::vector<std::string> names() const;
  std::size_t index_of(const std::string& feature_name) const;
  // Indices of the features summarizing each channel, in channel order.
  std::vector<std::vector<std::size_t>> channel_groups() const;

  nlohmann::json to_json() const;

 private:
  Component component_ = Component::kRom;
  std::vector<std::string> channels_;
  std::vector<FeatureSpec> features_;
  std::string hash_;
};

const FeatureSchema& rom_schema();
const FeatureSchema& comp_schema();
const FeatureSchema& schema_for(Component c);

struct FeatureVector {
  std::string trial_id;
  Component component = Component::kRom;
  std::vector<double> values;  // schema order
  std::string schema_hash;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Interior angle at b between rays b->a and b->c, degrees in [0, 180].
double joint_angle(Vec3 a, Vec3 b, Vec3 c);

// Per-axis |A-B| (x, y, z) followed by the Euclidean norm, each divided by
// normalizer. Channel names are `<prefix>_x`, `_y`, `_z`, `_dist`.
std::vector<SeriesChannel> relative_distance_series(const ExerciseTrial& trial, Joint a, Joint b,
                                                    double normalizer);

// Per-axis |p_t - p_0| divided by normalizer.
std::vector<SeriesChannel> displacement_series(const ExerciseTrial& trial, Joint joint,
                                               double normalizer);

SeriesSummary summarize_series(const SeriesChannel& channel);

// Mean shoulder-to-spine distance over the first frame of every trial of
// each subject (both shoulders).
std::map<std::string, double> subject_normalizers(const Dataset& dataset);

FeatureVector extract_rom_features(const ExerciseTrial& trial, Laterality arm, double normalizer);
FeatureVector extract_comp_features(const ExerciseTrial& trial, Laterality arm, double normalizer);
FeatureVector extract_features(const ExerciseTrial& trial, Component c, Laterality arm,
                               double normalizer);

// Feature matrix for one component over a dataset, rows in dataset trial
// order.
struct FeatureTable {
  Component component = Component::kRom;
  std::vector<std::string> trial_ids;
  std::vector<std::string> subject_ids;
  std::vector<FeatureVector> rows;
  std::vector<Label> labels;  // ground truth

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return rows.empty() ? 0 : rows.front().values.size(); }
  std::optional<std::size_t> position(const std::string& trial_id) const;
};

FeatureTable extract_table(const Dataset& dataset, Component c, Exec exec = Exec::kSerial);

// Per-feature [min, max] over the rows of a table.
struct FeatureRanges {
  std::vector<double> min;
  std::vector<double> max;
};
FeatureRanges feature_ranges(const FeatureTable& table);

}  // namespace rehabxai
