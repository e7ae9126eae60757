#include "rehabxai/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace rehabxai {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "head",       "spine",       "shoulder_left", "shoulder_right",
    "elbow_left", "elbow_right", "wrist_left",    "wrist_right"};

constexpr int kSchemaVersion = 1;

[[noreturn]] void invalid(const std::string& what) { throw ValidationError(what); }

}  // namespace

std::string_view to_string(Joint j) { return kJointNames[static_cast<int>(j)]; }

Joint parse_joint(std::string_view name) {
  for (int i = 0; i < kJointCount; ++i) {
    if (kJointNames[i] == name) return static_cast<Joint>(i);
  }
  throw ValidationError("unknown joint '" + std::string(name) + "'");
}

Joint shoulder_of(Laterality side) {
  return side == Laterality::kLeft ? Joint::kShoulderLeft : Joint::kShoulderRight;
}
Joint elbow_of(Laterality side) {
  return side == Laterality::kLeft ? Joint::kElbowLeft : Joint::kElbowRight;
}
Joint wrist_of(Laterality side) {
  return side == Laterality::kLeft ? Joint::kWristLeft : Joint::kWristRight;
}

void Dataset::validate() const {
  std::set<std::string> subject_ids;
  for (const auto& s : subjects) {
    if (s.subject_id.empty()) invalid("subject with empty subject_id");
    if (!subject_ids.insert(s.subject_id).second) {
      invalid("duplicate subject_id '" + s.subject_id + "'");
    }
    if (!(s.status_score >= 0.0 && s.status_score <= 1.0)) {
      invalid("subject '" + s.subject_id + "' status_score outside [0,1]");
    }
  }

  std::set<std::string> trial_ids;
  for (const auto& t : trials) {
    if (t.trial_id.empty()) invalid("trial with empty trial_id");
    if (!trial_ids.insert(t.trial_id).second) invalid("duplicate trial_id '" + t.trial_id + "'");
    if (!subject_ids.contains(t.subject_id)) {
      invalid("trial '" + t.trial_id + "' references unknown subject '" + t.subject_id + "'");
    }
    if (t.trial_index < 1) invalid("trial '" + t.trial_id + "' has trial_index < 1");
    if (t.frames.size() < 2) invalid("trial '" + t.trial_id + "' has fewer than 2 frames");
    double prev = -1.0;
    for (std::size_t f = 0; f < t.frames.size(); ++f) {
      const auto& frame = t.frames[f];
      if (!std::isfinite(frame.time_s) || frame.time_s < 0.0) {
        invalid("trial '" + t.trial_id + "' frame " + std::to_string(f) + " has invalid time");
      }
      if (f > 0 && !(frame.time_s > prev)) {
        invalid("trial '" + t.trial_id + "' frame times not strictly increasing at frame " +
                std::to_string(f));
      }
      prev = frame.time_s;
      for (const auto& p : frame.positions) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
          invalid("trial '" + t.trial_id + "' frame " + std::to_string(f) +
                  " has non-finite coordinates");
        }
      }
    }
  }

  std::set<std::tuple<std::string, Component, std::string>> seen;
  std::set<std::pair<std::string, Component>> labeled;
  for (const auto& a : annotations) {
    if (!trial_ids.contains(a.trial_id)) {
      invalid("annotation references unknown trial '" + a.trial_id + "'");
    }
    if (!seen.insert({a.trial_id, a.component, a.annotator_id}).second) {
      invalid("duplicate annotation for trial '" + a.trial_id + "' component " +
              std::string(to_string(a.component)) + " annotator '" + a.annotator_id + "'");
    }
    if (a.annotator_id == ground_truth_annotator) labeled.insert({a.trial_id, a.component});
  }
  for (const auto& t : trials) {
    for (Component c : {Component::kRom, Component::kComp}) {
      if (!labeled.contains({t.trial_id, c})) {
        invalid("trial '" + t.trial_id + "' lacks a ground-truth " + std::string(to_string(c)) +
                " label");
      }
    }
  }
}

const SubjectProfile& Dataset::subject(const std::string& subject_id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == subject_id) return s;
  }
  throw NotFoundError("unknown subject '" + subject_id + "'");
}

std::optional<std::size_t> Dataset::trial_position(const std::string& trial_id) const {
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].trial_id == trial_id) return i;
  }
  return std::nullopt;
}

const ExerciseTrial& Dataset::trial(const std::string& trial_id) const {
  auto pos = trial_position(trial_id);
  if (!pos) throw NotFoundError("unknown trial '" + trial_id + "'");
  return trials[*pos];
}

Laterality Dataset::moving_arm(const ExerciseTrial& trial) const {
  Laterality affected = subject(trial.subject_id).affected_side;
  if (trial.side == Side::kAffected) return affected;
  return affected == Laterality::kLeft ? Laterality::kRight : Laterality::kLeft;
}

Label Dataset::ground_truth(const std::string& trial_id, Component c) const {
  for (const auto& a : annotations) {
    if (a.trial_id == trial_id && a.component == c && a.annotator_id == ground_truth_annotator) {
      return a.label;
    }
  }
  throw NotFoundError("no ground-truth " + std::string(to_string(c)) + " label for trial '" +
                      trial_id + "'");
}

bool Dataset::annotators_agree(const std::string& trial_id, Component c) const {
  std::optional<Label> first;
  for (const auto& a : annotations) {
    if (a.trial_id != trial_id || a.component != c) continue;
    if (!first) {
      first = a.label;
    } else if (*first != a.label) {
      return false;
    }
  }
  return true;
}

const ExerciseTrial* Dataset::counterpart(const ExerciseTrial& trial) const {
  for (const auto& t : trials) {
    if (t.subject_id == trial.subject_id && t.trial_index == trial.trial_index &&
        t.side != trial.side) {
      return &t;
    }
  }
  return nullptr;
}

std::vector<std::string> Dataset::subject_ids() const {
  std::vector<std::string> ids;
  ids.reserve(subjects.size());
  for (const auto& s : subjects) ids.push_back(s.subject_id);
  return ids;
}

json to_json(const Dataset& d) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["ground_truth_annotator"] = d.ground_truth_annotator;
  j["subjects"] = json::array();
  for (const auto& s : d.subjects) {
    j["subjects"].push_back({{"subject_id", s.subject_id},
                             {"status_score", s.status_score},
                             {"affected_side", to_string(s.affected_side)},
                             {"description", s.description}});
  }
  j["trials"] = json::array();
  for (const auto& t : d.trials) {
    json frames = json::array();
    for (const auto& f : t.frames) {
      json row = json::array();
      row.push_back(f.time_s);
      for (const auto& p : f.positions) {
        row.push_back(p.x);
        row.push_back(p.y);
        row.push_back(p.z);
      }
      frames.push_back(std::move(row));
    }
    j["trials"].push_back({{"trial_id", t.trial_id},
                           {"subject_id", t.subject_id},
                           {"side", to_string(t.side)},
                           {"trial_index", t.trial_index},
                           {"frames", std::move(frames)}});
  }
  j["annotations"] = json::array();
  for (const auto& a : d.annotations) {
    j["annotations"].push_back({{"trial_id", a.trial_id},
                                {"component", to_string(a.component)},
                                {"annotator_id", a.annotator_id},
                                {"label", to_string(a.label)}});
  }
  return j;
}

Dataset dataset_from_json(const json& j) {
  Dataset d;
  try {
    if (!j.is_object()) throw ParseError("dataset document must be a JSON object");
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw ParseError("unsupported schema_version " + j.at("schema_version").dump());
    }
    d.ground_truth_annotator = j.at("ground_truth_annotator").get<std::string>();
    for (const auto& s : j.at("subjects")) {
      SubjectProfile p;
      p.subject_id = s.at("subject_id").get<std::string>();
      p.status_score = s.at("status_score").get<double>();
      p.affected_side = parse_laterality(s.at("affected_side").get<std::string>());
      p.description = s.value("description", "");
      d.subjects.push_back(std::move(p));
    }
    for (const auto& tj : j.at("trials")) {
      ExerciseTrial t;
      t.trial_id = tj.at("trial_id").get<std::string>();
      t.subject_id = tj.at("subject_id").get<std::string>();
      t.side = parse_side(tj.at("side").get<std::string>());
      t.trial_index = tj.at("trial_index").get<int>();
      for (const auto& row : tj.at("frames")) {
        if (!row.is_array() || row.size() != 1 + 3 * kJointCount) {
          throw ParseError("trial '" + t.trial_id + "' frame row must have " +
                           std::to_string(1 + 3 * kJointCount) + " numbers");
        }
        JointFrame f;
        f.time_s = row[0].get<double>();
        for (int k = 0; k < kJointCount; ++k) {
          f.positions[k] = {row[1 + 3 * k].get<double>(), row[2 + 3 * k].get<double>(),
                            row[3 + 3 * k].get<double>()};
        }
        t.frames.push_back(f);
      }
      d.trials.push_back(std::move(t));
    }
    for (const auto& aj : j.at("annotations")) {
      Annotation a;
      a.trial_id = aj.at("trial_id").get<std::string>();
      a.component = parse_component(aj.at("component").get<std::string>());
      a.annotator_id = aj.at("annotator_id").get<std::string>();
      a.label = parse_label(aj.at("label").get<std::string>());
      d.annotations.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset: ") + e.what());
  }
  d.validate();
  return d;
}

std::string serialize_dataset(const Dataset& d) { return to_json(d).dump(); }

Dataset parse_dataset(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dataset is not valid JSON: ") + e.what());
  }
  return dataset_from_json(j);
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  write_file_atomic(path, serialize_dataset(d));
}

TrialParameters trial_parameters(const SynthConfig& cfg, double impairment,
                                 double compensation) {
  TrialParameters p;
  p.reach_ratio = 1.0 - std::clamp(impairment, 0.0, 1.0);
  p.peak_displacement_m = std::clamp(compensation, 0.0, 1.0) * cfg.max_compensation_m;
  return p;
}

namespace {

Vec3 lerp(Vec3 a, Vec3 b, double t) { return a + t * (b - a); }

struct Body {
  double scale = 1.0;
};

// Builds one wrist-to-mouth repetition. x is lateral (positive toward the
// subject's left), y is up, z is forward.
std::vector<JointFrame> synthesize_frames(const SynthConfig& cfg, const Body& body,
                                          Laterality arm, const TrialParameters& params,
                                          std::mt19937_64& rng) {
  const double s = body.scale;
  const double arm_sign = arm == Laterality::kLeft ? 1.0 : -1.0;

  const Vec3 head{0.0, 1.65 * s, 0.0};
  const Vec3 spine{0.0, 1.25 * s, 0.0};
  const Vec3 shoulder_l{0.18 * s, 1.45 * s, 0.0};
  const Vec3 shoulder_r{-0.18 * s, 1.45 * s, 0.0};
  const Vec3 upper_arm{0.0, -0.30 * s, 0.0};
  const Vec3 forearm{0.0, -0.27 * s, 0.0};

  // Lean away from the moving arm and slightly forward.
  Vec3 lean{-arm_sign, 0.0, 0.5};
  lean = (1.0 / norm(lean)) * lean;

  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = cfg.frames_per_trial;
  std::vector<JointFrame> frames(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double phase = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (n - 1)));
    const Vec3 head_shift = (params.peak_displacement_m * phase) * lean;
    const Vec3 shoulder_shift = 0.75 * head_shift;

    JointFrame& f = frames[static_cast<std::size_t>(i)];
    f.time_s = i / cfg.frame_rate_hz;
    f.at(Joint::kHead) = head + head_shift;
    f.at(Joint::kSpine) = spine + 0.5 * head_shift;
    f.at(Joint::kShoulderLeft) = shoulder_l + shoulder_shift;
    f.at(Joint::kShoulderRight) = shoulder_r + shoulder_shift;
    for (Laterality side : {Laterality::kLeft, Laterality::kRight}) {
      const Vec3 shoulder = f.at(shoulder_of(side));
      const Vec3 elbow_rest = shoulder + upper_arm;
      const Vec3 wrist_rest = elbow_rest + forearm;
      if (side == arm) {
        const double reach = params.reach_ratio * phase;
        const Vec3 mouth = f.at(Joint::kHead) + Vec3{0.0, -0.10 * s, 0.08 * s};
        const Vec3 elbow_flexed = shoulder + Vec3{arm_sign * 0.05 * s, -0.17 * s, 0.20 * s};
        f.at(elbow_of(side)) = lerp(elbow_rest, elbow_flexed, reach);
        f.at(wrist_of(side)) = lerp(wrist_rest, mouth, reach);
      } else {
        f.at(elbow_of(side)) = elbow_rest;
        f.at(wrist_of(side)) = wrist_rest;
      }
    }
    for (auto& p : f.positions) {
      // Drawn unconditionally so the stream does not depend on noise_std_m.
      const double nx = gauss(rng), ny = gauss(rng), nz = gauss(rng);
      p = p + cfg.noise_std_m * Vec3{nx, ny, nz};
    }
  }
  return frames;
}

std::string two_digits(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.n_subjects < 1) throw ValidationError("n_subjects must be >= 1");
  if (cfg.trials_per_side < 1) throw ValidationError("trials_per_side must be >= 1");
  if (cfg.frames_per_trial < 2) throw ValidationError("frames_per_trial must be >= 2");
  if (!(cfg.frame_rate_hz > 0.0)) throw ValidationError("frame_rate_hz must be > 0");
  if (!(cfg.noise_std_m >= 0.0)) throw ValidationError("noise_std_m must be >= 0");
  if (!(cfg.trial_jitter >= 0.0)) throw ValidationError("trial_jitter must be >= 0");
  if (!(cfg.annotator_disagreement >= 0.0 && cfg.annotator_disagreement <= 1.0)) {
    throw ValidationError("annotator_disagreement must be in [0,1]");
  }
  auto check_params = [&](const std::vector<double>& v, const char* name) {
    if (!v.empty() && v.size() != static_cast<std::size_t>(cfg.n_subjects)) {
      throw ValidationError(std::string(name) + " must list one value per subject");
    }
    for (double x : v) {
      if (!(x >= 0.0 && x <= 1.0)) throw ValidationError(std::string(name) + " outside [0,1]");
    }
  };
  check_params(cfg.impairment, "impairment");
  check_params(cfg.compensation, "compensation");
  if (cfg.ground_truth_annotator == cfg.second_annotator) {
    throw ValidationError("annotator ids must differ");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  struct SubjectDraw {
    double impairment, compensation, scale;
    Laterality affected;
  };
  std::vector<SubjectDraw> draws;
  for (int i = 0; i < cfg.n_subjects; ++i) {
    SubjectDraw sd{};
    const double u_imp = unit(rng), u_comp = unit(rng), u_scale = unit(rng), u_side = unit(rng);
    sd.impairment = cfg.impairment.empty() ? 0.6 * u_imp : cfg.impairment[i];
    sd.compensation = cfg.compensation.empty() ? 0.6 * u_comp : cfg.compensation[i];
    sd.scale = 0.9 + 0.2 * u_scale;
    sd.affected = u_side < 0.5 ? Laterality::kLeft : Laterality::kRight;
    draws.push_back(sd);
  }

  Dataset d;
  d.ground_truth_annotator = cfg.ground_truth_annotator;
  for (int i = 0; i < cfg.n_subjects; ++i) {
    const auto& sd = draws[i];
    SubjectProfile p;
    p.subject_id = "S" + two_digits(i + 1);
    p.status_score = 1.0 - sd.impairment;
    p.affected_side = sd.affected;
    std::ostringstream desc;
    desc.precision(2);
    desc << std::fixed << "Post-stroke survivor, " << to_string(sd.affected)
         << " side affected, status " << p.status_score;
    p.description = desc.str();
    d.subjects.push_back(p);

    for (Side side : {Side::kAffected, Side::kUnaffected}) {
      for (int k = 1; k <= cfg.trials_per_side; ++k) {
        const double j_imp = cfg.trial_jitter * (2.0 * unit(rng) - 1.0);
        const double j_comp = cfg.trial_jitter * (2.0 * unit(rng) - 1.0);
        double impairment = 0.0, compensation = 0.0;
        if (side == Side::kAffected) {
          impairment = std::clamp(sd.impairment + j_imp, 0.0, 1.0);
          compensation = std::clamp(sd.compensation + j_comp, 0.0, 1.0);
        }
        const TrialParameters tp = trial_parameters(cfg, impairment, compensation);

        ExerciseTrial t;
        t.subject_id = p.subject_id;
        t.side = side;
        t.trial_index = k;
        t.trial_id = p.subject_id + (side == Side::kAffected ? "-A-" : "-U-") + two_digits(k);
        Laterality arm = sd.affected;
        if (side == Side::kUnaffected) {
          arm = sd.affected == Laterality::kLeft ? Laterality::kRight : Laterality::kLeft;
        }
        t.frames = synthesize_frames(cfg, Body{sd.scale}, arm, tp, rng);

        const Label rom = tp.reach_ratio >= cfg.rom_ratio_threshold ? Label::kCorrect
                                                                    : Label::kImpaired;
        const Label comp = tp.peak_displacement_m < cfg.comp_displacement_threshold_m
                               ? Label::kCorrect
                               : Label::kImpaired;
        for (auto [component, truth] : {std::pair{Component::kRom, rom},
                                        std::pair{Component::kComp, comp}}) {
          const bool flip = unit(rng) < cfg.annotator_disagreement;
          d.annotations.push_back({t.trial_id, component, cfg.ground_truth_annotator, truth});
          Label second = truth;
          if (flip) second = truth == Label::kCorrect ? Label::kImpaired : Label::kCorrect;
          d.annotations.push_back({t.trial_id, component, cfg.second_annotator, second});
        }
        d.trials.push_back(std::move(t));
      }
    }
  }
  d.validate();
  return d;
}

std::vector<LosoSplit> loso_splits(const Dataset& d) {
  if (d.subjects.size() < 2) {
    throw ValidationError("leave-one-subject-out needs at least 2 subjects, got " +
                          std::to_string(d.subjects.size()));
  }
  std::vector<LosoSplit> splits;
  for (const auto& held_out : d.subjects) {
    LosoSplit s;
    s.test_subject = held_out.subject_id;
    for (const auto& other : d.subjects) {
      if (other.subject_id != held_out.subject_id) s.train_subjects.push_back(other.subject_id);
    }
    splits.push_back(std::move(s));
  }
  return splits;
}

}  // namespace rehabxai
