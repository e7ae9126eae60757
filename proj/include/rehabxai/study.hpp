#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rehabxai/common.hpp"
#include "rehabxai/dataset.hpp"
#include "rehabxai/model.hpp"

namespace rehabxai {

enum class Condition { kFeatures, kExamplesFeatures };
std::string_view to_string(Condition c);
Condition parse_condition(std::string_view s);
// Neutral label shown to participants ("Condition A" / "Condition B").
std::string_view display_name(Condition c);

enum class Phase { kInitial, kFinal };
std::string_view to_string(Phase p);
Phase parse_phase(std::string_view s);

inline constexpr int kCasesPerCondition = 8;
inline constexpr int kRightPerCondition = 4;

// AI output and ground truth for one component of a case, frozen at session
// creation so sessions can be analyzed without the model or dataset.
struct CaseComponentInfo {
  Label ai_label = Label::kCorrect;
  double ai_confidence = 0.5;
  Label truth = Label::kCorrect;
  bool ai_right() const { return ai_label == truth; }
  friend bool operator==(const CaseComponentInfo&, const CaseComponentInfo&) = default;
};

struct StudyCase {
  std::string trial_id;
  bool ai_output_right = false;  // on the assignment's component
  std::map<Component, CaseComponentInfo> components;
  friend bool operator==(const StudyCase&, const StudyCase&) = default;
};

struct CaseAssignment {
  Condition condition = Condition::kFeatures;
  Component component = Component::kRom;
  std::vector<StudyCase> cases;
  friend bool operator==(const CaseAssignment&, const CaseAssignment&) = default;
};

struct Assessment {
  std::string session_id;
  std::string case_id;
  Component component = Component::kRom;
  Phase phase = Phase::kInitial;
  Label label = Label::kCorrect;
  double t_video_start = 0.0;
  double t_submit = 0.0;
  friend bool operator==(const Assessment&, const Assessment&) = default;
};

struct StudySession {
  std::string session_id;
  std::string participant_id;
  std::array<Condition, 2> order{Condition::kFeatures, Condition::kExamplesFeatures};
  std::array<CaseAssignment, 2> assignments;  // in `order`
  std::vector<Assessment> assessments;
  std::uint64_t seed = 0;

  const CaseAssignment& assignment(Condition c) const;
  // The assignment holding a case, if any.
  const CaseAssignment* assignment_of(const std::string& case_id) const;
  const StudyCase* find_case(const std::string& case_id) const;
  const Assessment* find_assessment(const std::string& case_id, Component c, Phase p) const;
  friend bool operator==(const StudySession&, const StudySession&) = default;
};

// Per-component LOSO records feeding case selection and AI outputs.
using LosoRecords = std::map<Component, LosoRecord>;

struct AssignmentOptions {
  Component component = Component::kRom;  // balances right/wrong on this one
};

// Two disjoint 4-right + 4-wrong assignments, case order shuffled. The first
// is labeled FEATURES, the second EXAMPLES_FEATURES; sessions may swap them.
std::array<CaseAssignment, 2> assign_cases(const LosoRecords& records, const Dataset& dataset,
                                           std::uint64_t seed,
                                           const AssignmentOptions& options = {});

StudySession create_session(const std::string& participant_id, const LosoRecords& records,
                            const Dataset& dataset, std::uint64_t seed,
                            const AssignmentOptions& options = {});

// Sessions created in pairs with opposite condition orders and swapped
// case-set/condition pairings; all pairs share one case draw.
std::vector<StudySession> create_session_batch(const std::vector<std::string>& participant_ids,
                                               const LosoRecords& records, const Dataset& dataset,
                                               std::uint64_t seed,
                                               const AssignmentOptions& options = {});

// Validates and appends. Throws NotFoundError (unknown case), ConflictError
// (phase order, duplicate) or ValidationError (timestamps).
StudySession record_assessment(StudySession session, const Assessment& assessment);

// ---------------------------------------------------------------------------
// Metrics

struct F1Block {
  double human = 0.0;     // initial assessments
  double human_ai = 0.0;  // final assessments
  double delta = 0.0;     // human_ai - human
  int n = 0;
};

struct PerformanceBlock {
  F1Block all;
  F1Block right;  // cases whose AI output was right
  F1Block wrong;
};

struct ConditionPerformance {
  PerformanceBlock pooled;
  std::map<Component, PerformanceBlock> per_component;
};

// Throws ValidationError listing incomplete sessions.
std::map<Condition, ConditionPerformance> compute_performance(
    std::span<const StudySession> sessions);

struct Decision {
  Label final_label;
  Label ai_label;
  Label truth;
};

struct DecisionCounts {
  int agree_right = 0;
  int reject_wrong = 0;
  int agree_wrong = 0;
  int reject_right = 0;
  int total() const { return agree_right + reject_wrong + agree_wrong + reject_right; }
};

struct DecisionRatios {
  DecisionCounts counts;
  double right = 0.0;
  double wrong = 0.0;
  double agree_right = 0.0;
  double reject_wrong = 0.0;
  double agree_wrong = 0.0;
  double reject_right = 0.0;
};

DecisionCounts tally_decisions(std::span<const Decision> decisions);
DecisionRatios decision_ratios(const DecisionCounts& counts);

// Final decisions of every session, per condition.
std::map<Condition, DecisionRatios> compute_decision_ratios(std::span<const StudySession> sessions);

struct DurationStats {
  double mean_s = 0.0;
  double initial_mean_s = 0.0;
  double final_mean_s = 0.0;
  int n = 0;
};

DurationStats compute_duration(std::span<const StudySession> sessions, Condition condition);

struct RelianceReport {
  int n_sessions = 0;
  std::map<Condition, ConditionPerformance> performance;
  std::map<Condition, DecisionRatios> decisions;
  std::map<Condition, DurationStats> duration;
};

RelianceReport build_report(std::span<const StudySession> sessions);
// Sessions with every assigned case assessed in both phases.
bool session_complete(const StudySession& s);

nlohmann::json to_json(const RelianceReport& r);
// Plain-text rendering laid out like the published tables.
std::string render_tables(const RelianceReport& r);

nlohmann::json to_json(const Assessment& a);
Assessment assessment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudySession& s);
StudySession session_from_json(const nlohmann::json& j);

// One event per line: {session, case, component, phase, label,
// t_video_start, t_submit}.
std::string export_event_log(const StudySession& s);

}  // namespace rehabxai
