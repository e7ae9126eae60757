#include "rehabxai/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rehabxai {

namespace {

constexpr double kMinRayLength = 1e-9;

Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

void check_normalizer(double normalizer) {
  if (!(normalizer > 0.0) || !std::isfinite(normalizer)) {
    throw ValidationError("normalizer must be a positive finite length");
  }
}

constexpr std::array<char, 3> kAxes = {'x', 'y', 'z'};

}  // namespace

FeatureSchema::FeatureSchema(Component component, std::vector<std::string> channels)
    : component_(component), channels_(std::move(channels)) {
  for (const auto& ch : channels_) {
    for (auto summary : kSummaryNames) {
      features_.push_back({ch + "." + std::string(summary), ch, std::string(summary)});
    }
  }
  hash_ = hex64(fnv1a64(to_json().dump()));
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

std::size_t FeatureSchema::index_of(const std::string& feature_name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == feature_name) return i;
  }
  throw NotFoundError("feature '" + feature_name + "' not in schema");
}

std::vector<std::vector<std::size_t>> FeatureSchema::channel_groups() const {
  std::vector<std::vector<std::size_t>> groups(channels_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    auto it = std::find(channels_.begin(), channels_.end(), features_[i].channel);
    groups[static_cast<std::size_t>(it - channels_.begin())].push_back(i);
  }
  return groups;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : features_) {
    list.push_back({{"name", f.name}, {"channel", f.channel}, {"summary", f.summary}});
  }
  return list;
}

const FeatureSchema& rom_schema() {
  static const FeatureSchema schema(
      Component::kRom,
      {"elbow_flexion", "shoulder_flexion", "elbow_extension", "head_wrist_dist",
       "head_elbow_dist", "head_wrist_x", "head_wrist_y", "head_wrist_z", "shoulder_wrist_x",
       "shoulder_wrist_y", "shoulder_wrist_z"});
  return schema;
}

const FeatureSchema& comp_schema() {
  static const FeatureSchema schema(
      Component::kComp,
      {"head_disp_x", "head_disp_y", "head_disp_z", "spine_disp_x", "spine_disp_y",
       "spine_disp_z", "shoulder_disp_x", "shoulder_disp_y", "shoulder_disp_z"});
  return schema;
}

const FeatureSchema& schema_for(Component c) {
  return c == Component::kRom ? rom_schema() : comp_schema();
}

double joint_angle(Vec3 a, Vec3 b, Vec3 c) {
  const Vec3 u = a - b;
  const Vec3 v = c - b;
  if (norm(u) < kMinRayLength || norm(v) < kMinRayLength) {
    throw GeometryError("degenerate joint angle: ray shorter than 1e-9 m");
  }
  // atan2 keeps full precision near 0 and 180 degrees where acos does not.
  const double radians = std::atan2(norm(cross(u, v)), dot(u, v));
  return radians * 180.0 / std::numbers::pi;
}

std::vector<SeriesChannel> relative_distance_series(const ExerciseTrial& trial, Joint a, Joint b,
                                                    double normalizer) {
  check_normalizer(normalizer);
  const std::string prefix = std::string(to_string(a)) + "_" + std::string(to_string(b));
  std::vector<SeriesChannel> out(4);
  for (int axis = 0; axis < 3; ++axis) out[axis].name = prefix + "_" + kAxes[axis];
  out[3].name = prefix + "_dist";
  for (auto& ch : out) ch.values.reserve(trial.frames.size());
  for (const auto& f : trial.frames) {
    const Vec3 d = f.at(a) - f.at(b);
    for (int axis = 0; axis < 3; ++axis) out[axis].values.push_back(std::abs(d[axis]) / normalizer);
    out[3].values.push_back(norm(d) / normalizer);
  }
  return out;
}

std::vector<SeriesChannel> displacement_series(const ExerciseTrial& trial, Joint joint,
                                               double normalizer) {
  check_normalizer(normalizer);
  if (trial.frames.empty()) throw ValidationError("trial has no frames");
  std::vector<SeriesChannel> out(3);
  for (int axis = 0; axis < 3; ++axis) {
    out[axis].name = std::string(to_string(joint)) + "_disp_" + kAxes[axis];
    out[axis].values.reserve(trial.frames.size());
  }
  const Vec3 origin = trial.frames.front().at(joint);
  for (const auto& f : trial.frames) {
    const Vec3 d = f.at(joint) - origin;
    for (int axis = 0; axis < 3; ++axis) out[axis].values.push_back(std::abs(d[axis]) / normalizer);
  }
  return out;
}

SeriesSummary summarize_series(const SeriesChannel& channel) {
  if (channel.values.empty()) {
    throw ValidationError("cannot summarize empty series '" + channel.name + "'");
  }
  const auto [lo, hi] = std::minmax_element(channel.values.begin(), channel.values.end());
  double sum = 0.0;
  for (double v : channel.values) sum += v;
  SeriesSummary s;
  s.min = *lo;
  s.max = *hi;
  s.mean = sum / static_cast<double>(channel.values.size());
  s.range = s.max - s.min;
  return s;
}

std::map<std::string, double> subject_normalizers(const Dataset& dataset) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& t : dataset.trials) {
    if (t.frames.empty()) continue;
    const auto& f = t.frames.front();
    const Vec3 spine = f.at(Joint::kSpine);
    auto& [sum, count] = acc[t.subject_id];
    sum += norm(f.at(Joint::kShoulderLeft) - spine) + norm(f.at(Joint::kShoulderRight) - spine);
    count += 2;
  }
  std::map<std::string, double> out;
  for (const auto& [subject, sc] : acc) {
    const double value = sc.first / sc.second;
    if (!(value > 0.0)) {
      throw GeometryError("subject '" + subject + "' has zero shoulder-to-spine distance");
    }
    out[subject] = value;
  }
  return out;
}

namespace {

void append_summary(std::vector<double>& values, const SeriesChannel& ch) {
  const SeriesSummary s = summarize_series(ch);
  values.insert(values.end(), {s.min, s.max, s.mean, s.range});
}

}  // namespace

FeatureVector extract_rom_features(const ExerciseTrial& trial, Laterality arm, double normalizer) {
  check_normalizer(normalizer);
  const Joint shoulder = shoulder_of(arm);
  const Joint elbow = elbow_of(arm);
  const Joint wrist = wrist_of(arm);

  SeriesChannel elbow_flexion{"elbow_flexion", {}};
  SeriesChannel shoulder_flexion{"shoulder_flexion", {}};
  SeriesChannel elbow_extension{"elbow_extension", {}};
  for (const auto& f : trial.frames) {
    const double flex = joint_angle(f.at(shoulder), f.at(elbow), f.at(wrist));
    elbow_flexion.values.push_back(flex);
    elbow_extension.values.push_back(180.0 - flex);
    shoulder_flexion.values.push_back(joint_angle(f.at(Joint::kSpine), f.at(shoulder), f.at(elbow)));
  }
  const auto head_wrist = relative_distance_series(trial, Joint::kHead, wrist, normalizer);
  const auto head_elbow = relative_distance_series(trial, Joint::kHead, elbow, normalizer);
  const auto shoulder_wrist = relative_distance_series(trial, shoulder, wrist, normalizer);

  FeatureVector fv;
  fv.trial_id = trial.trial_id;
  fv.component = Component::kRom;
  fv.schema_hash = rom_schema().hash();
  fv.values.reserve(rom_schema().size());
  append_summary(fv.values, elbow_flexion);
  append_summary(fv.values, shoulder_flexion);
  append_summary(fv.values, elbow_extension);
  append_summary(fv.values, head_wrist[3]);
  append_summary(fv.values, head_elbow[3]);
  for (int axis = 0; axis < 3; ++axis) append_summary(fv.values, head_wrist[axis]);
  for (int axis = 0; axis < 3; ++axis) append_summary(fv.values, shoulder_wrist[axis]);
  return fv;
}

FeatureVector extract_comp_features(const ExerciseTrial& trial, Laterality arm, double normalizer) {
  check_normalizer(normalizer);
  FeatureVector fv;
  fv.trial_id = trial.trial_id;
  fv.component = Component::kComp;
  fv.schema_hash = comp_schema().hash();
  fv.values.reserve(comp_schema().size());
  for (Joint j : {Joint::kHead, Joint::kSpine, shoulder_of(arm)}) {
    for (const auto& ch : displacement_series(trial, j, normalizer)) append_summary(fv.values, ch);
  }
  return fv;
}

FeatureVector extract_features(const ExerciseTrial& trial, Component c, Laterality arm,
                               double normalizer) {
  return c == Component::kRom ? extract_rom_features(trial, arm, normalizer)
                              : extract_comp_features(trial, arm, normalizer);
}

std::optional<std::size_t> FeatureTable::position(const std::string& trial_id) const {
  for (std::size_t i = 0; i < trial_ids.size(); ++i) {
    if (trial_ids[i] == trial_id) return i;
  }
  return std::nullopt;
}

FeatureTable extract_table(const Dataset& dataset, Component c, Exec exec) {
  const auto normalizers = subject_normalizers(dataset);
  const std::size_t n = dataset.trials.size();

  FeatureTable table;
  table.component = c;
  table.rows.resize(n);
  std::vector<Laterality> arms(n);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = dataset.trials[i];
    table.trial_ids.push_back(t.trial_id);
    table.subject_ids.push_back(t.subject_id);
    table.labels.push_back(dataset.ground_truth(t.trial_id, c));
    arms[i] = dataset.moving_arm(t);
    norms[i] = normalizers.at(t.subject_id);
  }

  const auto body = [&](std::size_t i) {
    table.rows[i] = extract_features(dataset.trials[i], c, arms[i], norms[i]);
  };
  if (exec == Exec::kParallel) {
    // Exceptions must not escape an OpenMP region; the first one is rethrown.
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t i = 0; i < n; ++i) body(i);
  }
  return table;
}

FeatureRanges feature_ranges(const FeatureTable& table) {
  if (table.rows.empty()) throw ValidationError("feature ranges need at least one row");
  FeatureRanges r;
  r.min = table.rows.front().values;
  r.max = table.rows.front().values;
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.values.size(); ++j) {
      r.min[j] = std::min(r.min[j], row.values[j]);
      r.max[j] = std::max(r.max[j], row.values[j]);
    }
  }
  return r;
}

}  // namespace rehabxai
