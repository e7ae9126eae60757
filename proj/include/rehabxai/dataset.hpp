#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rehabxai/common.hpp"

namespace rehabxai {

// Fixed joint order; also the column order of serialized frames.
enum class Joint : int {
  kHead = 0,
  kSpine,
  kShoulderLeft,
  kShoulderRight,
  kElbowLeft,
  kElbowRight,
  kWristLeft,
  kWristRight,
};
inline constexpr int kJointCount = 8;

std::string_view to_string(Joint j);
Joint parse_joint(std::string_view name);

Joint shoulder_of(Laterality side);
Joint elbow_of(Laterality side);
Joint wrist_of(Laterality side);

struct JointFrame {
  double time_s = 0.0;
  std::array<Vec3, kJointCount> positions{};

  const Vec3& at(Joint j) const { return positions[static_cast<int>(j)]; }
  Vec3& at(Joint j) { return positions[static_cast<int>(j)]; }
  friend bool operator==(const JointFrame&, const JointFrame&) = default;
};

struct ExerciseTrial {
  std::string trial_id;
  std::string subject_id;
  Side side = Side::kAffected;
  int trial_index = 1;
  std::vector<JointFrame> frames;
  friend bool operator==(const ExerciseTrial&, const ExerciseTrial&) = default;
};

struct SubjectProfile {
  std::string subject_id;
  double status_score = 1.0;  // 1 = unimpaired
  Laterality affected_side = Laterality::kLeft;
  std::string description;
  friend bool operator==(const SubjectProfile&, const SubjectProfile&) = default;
};

struct Annotation {
  std::string trial_id;
  Component component = Component::kRom;
  std::string annotator_id;
  Label label = Label::kCorrect;
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

class Dataset {
 public:
  std::vector<SubjectProfile> subjects;
  std::vector<ExerciseTrial> trials;
  std::vector<Annotation> annotations;
  std::string ground_truth_annotator;

  friend bool operator==(const Dataset&, const Dataset&) = default;

  // Throws ValidationError naming the first violated invariant.
  void validate() const;

  const SubjectProfile& subject(const std::string& subject_id) const;
  const ExerciseTrial& trial(const std::string& trial_id) const;
  std::optional<std::size_t> trial_position(const std::string& trial_id) const;

  // The arm that moves in this trial: the affected side for affected trials,
  // the opposite arm otherwise.
  Laterality moving_arm(const ExerciseTrial& trial) const;

  Label ground_truth(const std::string& trial_id, Component c) const;
  // True when every annotator gave the same label for (trial, component).
  bool annotators_agree(const std::string& trial_id, Component c) const;

  // Same subject and trial_index, opposite side.
  const ExerciseTrial* counterpart(const ExerciseTrial& trial) const;

  std::vector<std::string> subject_ids() const;
};

nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

// Canonical serialization: compact JSON, sorted keys, shortest round-trip
// doubles.
std::string serialize_dataset(const Dataset& d);
Dataset parse_dataset(std::string_view text);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

struct SynthConfig {
  int n_subjects = 15;
  int trials_per_side = 10;
  int frames_per_trial = 120;
  double frame_rate_hz = 30.0;
  double noise_std_m = 0.003;
  // Per-subject parameters in [0,1]. Empty means "draw from the seeded RNG".
  std::vector<double> impairment;
  std::vector<double> compensation;
  // Half-width of the uniform per-trial jitter added to impairment and
  // compensation of affected-side trials.
  double trial_jitter = 0.05;
  double annotator_disagreement = 0.15;
  double rom_ratio_threshold = 0.8;
  double comp_displacement_threshold_m = 0.05;
  // Head displacement at compensation = 1, meters.
  double max_compensation_m = 0.15;
  std::string ground_truth_annotator = "therapist_1";
  std::string second_annotator = "therapist_2";
};

// Per-trial generation parameters, exposed for tests and label audits.
struct TrialParameters {
  double reach_ratio = 1.0;          // affected reach amplitude / unaffected
  double peak_displacement_m = 0.0;  // peak head displacement
};

TrialParameters trial_parameters(const SynthConfig& cfg, double impairment,
                                 double compensation);

Dataset generate_synthetic(const SynthConfig& config, std::uint64_t seed);

struct LosoSplit {
  std::vector<std::string> train_subjects;
  std::string test_subject;
  friend bool operator==(const LosoSplit&, const LosoSplit&) = default;
};

std::vector<LosoSplit> loso_splits(const Dataset& d);

}  // namespace rehabxai
