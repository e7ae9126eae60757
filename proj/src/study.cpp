#include "rehabxai/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace rehabxai {

using nlohmann::json;

std::string_view to_string(Condition c) {
  return c == Condition::kFeatures ? "FEATURES" : "EXAMPLES_FEATURES";
}

Condition parse_condition(std::string_view s) {
  if (s == "FEATURES") return Condition::kFeatures;
  if (s == "EXAMPLES_FEATURES") return Condition::kExamplesFeatures;
  throw ParseError("unknown condition '" + std::string(s) + "'");
}

std::string_view display_name(Condition c) {
  return c == Condition::kFeatures ? "Condition A" : "Condition B";
}

std::string_view to_string(Phase p) { return p == Phase::kInitial ? "initial" : "final"; }

Phase parse_phase(std::string_view s) {
  if (s == "initial") return Phase::kInitial;
  if (s == "final") return Phase::kFinal;
  throw ParseError("unknown phase '" + std::string(s) + "'");
}

const CaseAssignment& StudySession::assignment(Condition c) const {
  return assignments[0].condition == c ? assignments[0] : assignments[1];
}

const CaseAssignment* StudySession::assignment_of(const std::string& case_id) const {
  for (const auto& a : assignments) {
    for (const auto& c : a.cases) {
      if (c.trial_id == case_id) return &a;
    }
  }
  return nullptr;
}

const StudyCase* StudySession::find_case(const std::string& case_id) const {
  for (const auto& a : assignments) {
    for (const auto& c : a.cases) {
      if (c.trial_id == case_id) return &c;
    }
  }
  return nullptr;
}

const Assessment* StudySession::find_assessment(const std::string& case_id, Component c,
                                                Phase p) const {
  for (const auto& a : assessments) {
    if (a.case_id == case_id && a.component == c && a.phase == p) return &a;
  }
  return nullptr;
}

namespace {

StudyCase make_case(const std::string& trial_id, const LosoRecords& records,
                    const Dataset& dataset, Component designated) {
  StudyCase sc;
  sc.trial_id = trial_id;
  for (const auto& [component, record] : records) {
    const LosoEntry* e = record.find(trial_id);
    if (e == nullptr) continue;
    sc.components[component] = {e->predicted, e->confidence,
                                dataset.ground_truth(trial_id, component)};
  }
  sc.ai_output_right = sc.components.at(designated).ai_right();
  return sc;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string session_id_for(const std::string& participant, std::uint64_t seed) {
  return "s-" + hex64(fnv1a64(participant + ":" + std::to_string(seed))).substr(0, 12);
}

StudySession assemble(const std::string& participant, std::uint64_t seed, bool features_first,
                      const CaseAssignment& features_set, const CaseAssignment& examples_set) {
  StudySession s;
  s.session_id = session_id_for(participant, seed);
  s.participant_id = participant;
  s.seed = seed;
  CaseAssignment f = features_set;
  CaseAssignment e = examples_set;
  f.condition = Condition::kFeatures;
  e.condition = Condition::kExamplesFeatures;
  std::mt19937_64 rng(mix(seed, 3));
  std::shuffle(f.cases.begin(), f.cases.end(), rng);
  std::shuffle(e.cases.begin(), e.cases.end(), rng);
  if (features_first) {
    s.order = {Condition::kFeatures, Condition::kExamplesFeatures};
    s.assignments = {std::move(f), std::move(e)};
  } else {
    s.order = {Condition::kExamplesFeatures, Condition::kFeatures};
    s.assignments = {std::move(e), std::move(f)};
  }
  return s;
}

}  // namespace

std::array<CaseAssignment, 2> assign_cases(const LosoRecords& records, const Dataset& dataset,
                                           std::uint64_t seed, const AssignmentOptions& options) {
  auto it = records.find(options.component);
  if (it == records.end()) {
    throw ValidationError("no LOSO record for component " +
                          std::string(to_string(options.component)));
  }
  std::vector<std::string> right, wrong;
  for (const auto& e : it->second.entries) {
    const bool is_right = e.predicted == dataset.ground_truth(e.trial_id, options.component);
    (is_right ? right : wrong).push_back(e.trial_id);
  }
  const int need = 2 * kRightPerCondition;
  const int need_wrong = 2 * (kCasesPerCondition - kRightPerCondition);
  if (static_cast<int>(right.size()) < need || static_cast<int>(wrong.size()) < need_wrong) {
    throw ValidationError("insufficient case pool: " + std::to_string(right.size()) +
                          " right and " + std::to_string(wrong.size()) + " wrong AI outputs (need " +
                          std::to_string(need) + " and " + std::to_string(need_wrong) + ")");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(right.begin(), right.end(), rng);
  std::shuffle(wrong.begin(), wrong.end(), rng);

  std::array<CaseAssignment, 2> out;
  out[0].condition = Condition::kFeatures;
  out[1].condition = Condition::kExamplesFeatures;
  for (int set = 0; set < 2; ++set) {
    auto& a = out[static_cast<std::size_t>(set)];
    a.component = options.component;
    for (int k = 0; k < kRightPerCondition; ++k) {
      a.cases.push_back(make_case(right[static_cast<std::size_t>(set * kRightPerCondition + k)],
                                  records, dataset, options.component));
    }
    const int n_wrong = kCasesPerCondition - kRightPerCondition;
    for (int k = 0; k < n_wrong; ++k) {
      a.cases.push_back(make_case(wrong[static_cast<std::size_t>(set * n_wrong + k)], records,
                                  dataset, options.component));
    }
    std::shuffle(a.cases.begin(), a.cases.end(), rng);
  }
  return out;
}

StudySession create_session(const std::string& participant_id, const LosoRecords& records,
                            const Dataset& dataset, std::uint64_t seed,
                            const AssignmentOptions& options) {
  auto sets = assign_cases(records, dataset, seed, options);
  std::mt19937_64 rng(mix(seed, 1));
  const bool features_first = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
  return assemble(participant_id, seed, features_first, sets[0], sets[1]);
}

std::vector<StudySession> create_session_batch(const std::vector<std::string>& participant_ids,
                                               const LosoRecords& records, const Dataset& dataset,
                                               std::uint64_t seed,
                                               const AssignmentOptions& options) {
  const auto sets = assign_cases(records, dataset, seed, options);
  std::mt19937_64 rng(mix(seed, 2));
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<StudySession> sessions;
  for (std::size_t i = 0; i < participant_ids.size(); i += 2) {
    const bool features_first = coin(rng) == 0;
    sessions.push_back(assemble(participant_ids[i], seed + i, features_first, sets[0], sets[1]));
    if (i + 1 < participant_ids.size()) {
      sessions.push_back(
          assemble(participant_ids[i + 1], seed + i + 1, !features_first, sets[1], sets[0]));
    }
  }
  return sessions;
}

StudySession record_assessment(StudySession session, const Assessment& a) {
  if (!a.session_id.empty() && a.session_id != session.session_id) {
    throw ValidationError("assessment for session '" + a.session_id + "' sent to session '" +
                          session.session_id + "'");
  }
  const StudyCase* sc = session.find_case(a.case_id);
  if (sc == nullptr) {
    throw NotFoundError("case '" + a.case_id + "' is not assigned to session '" +
                        session.session_id + "'");
  }
  if (!sc->components.contains(a.component)) {
    throw ValidationError("case '" + a.case_id + "' has no AI output for component " +
                          std::string(to_string(a.component)));
  }
  if (!std::isfinite(a.t_video_start) || !std::isfinite(a.t_submit) || a.t_submit < a.t_video_start) {
    throw ValidationError("t_submit must not precede t_video_start");
  }
  if (session.find_assessment(a.case_id, a.component, a.phase) != nullptr) {
    throw ConflictError("duplicate " + std::string(to_string(a.phase)) + " assessment for case '" +
                        a.case_id + "' component " + std::string(to_string(a.component)));
  }
  if (a.phase == Phase::kFinal) {
    const Assessment* initial = session.find_assessment(a.case_id, a.component, Phase::kInitial);
    if (initial == nullptr) {
      throw ConflictError("final assessment for case '" + a.case_id +
                          "' before its initial assessment");
    }
    if (a.t_video_start < initial->t_submit) {
      throw ValidationError("final assessment starts before the initial one was submitted");
    }
  }
  Assessment stored = a;
  stored.session_id = session.session_id;
  session.assessments.push_back(stored);
  return session;
}

bool session_complete(const StudySession& s) {
  for (const auto& a : s.assignments) {
    for (const auto& c : a.cases) {
      if (!s.find_assessment(c.trial_id, a.component, Phase::kInitial) ||
          !s.find_assessment(c.trial_id, a.component, Phase::kFinal)) {
        return false;
      }
    }
  }
  return true;
}

namespace {

void require_complete(std::span<const StudySession> sessions) {
  if (sessions.empty()) throw ValidationError("no complete sessions");
  std::string missing;
  for (const auto& s : sessions) {
    if (!session_complete(s)) missing += (missing.empty() ? "" : ", ") + s.session_id;
  }
  if (!missing.empty()) throw ValidationError("incomplete sessions: " + missing);
}

struct Triple {
  Label initial, final_label, truth;
  bool ai_right;
};

F1Block f1_block(const std::vector<Triple>& rows) {
  F1Block b;
  b.n = static_cast<int>(rows.size());
  if (rows.empty()) return b;
  std::vector<Label> initial, final_labels, truth;
  for (const auto& r : rows) {
    initial.push_back(r.initial);
    final_labels.push_back(r.final_label);
    truth.push_back(r.truth);
  }
  b.human = f1_score(initial, truth);
  b.human_ai = f1_score(final_labels, truth);
  b.delta = b.human_ai - b.human;
  return b;
}

PerformanceBlock performance_block(const std::vector<Triple>& rows) {
  std::vector<Triple> right, wrong;
  for (const auto& r : rows) (r.ai_right ? right : wrong).push_back(r);
  return {f1_block(rows), f1_block(right), f1_block(wrong)};
}

}  // namespace

std::map<Condition, ConditionPerformance> compute_performance(
    std::span<const StudySession> sessions) {
  require_complete(sessions);
  std::map<Condition, ConditionPerformance> out;
  for (Condition cond : {Condition::kFeatures, Condition::kExamplesFeatures}) {
    std::vector<Triple> pooled;
    std::map<Component, std::vector<Triple>> by_component;
    for (const auto& s : sessions) {
      const CaseAssignment& asg = s.assignment(cond);
      for (const auto& c : asg.cases) {
        for (const auto& [component, info] : c.components) {
          const Assessment* ini = s.find_assessment(c.trial_id, component, Phase::kInitial);
          const Assessment* fin = s.find_assessment(c.trial_id, component, Phase::kFinal);
          if (!ini || !fin) continue;
          Triple t{ini->label, fin->label, info.truth, info.ai_right()};
          pooled.push_back(t);
          by_component[component].push_back(t);
        }
      }
    }
    ConditionPerformance cp;
    cp.pooled = performance_block(pooled);
    for (const auto& [component, rows] : by_component) cp.per_component[component] = performance_block(rows);
    out[cond] = std::move(cp);
  }
  return out;
}

DecisionCounts tally_decisions(std::span<const Decision> decisions) {
  DecisionCounts c;
  for (const auto& d : decisions) {
    const bool agree = d.final_label == d.ai_label;
    const bool ai_right = d.ai_label == d.truth;
    if (agree && ai_right) ++c.agree_right;
    else if (!agree && !ai_right) ++c.reject_wrong;
    else if (agree) ++c.agree_wrong;
    else ++c.reject_right;
  }
  return c;
}

DecisionRatios decision_ratios(const DecisionCounts& counts) {
  const int total = counts.total();
  if (total == 0) throw ValidationError("no final decisions to analyze");
  DecisionRatios r;
  r.counts = counts;
  const double n = static_cast<double>(total);
  r.agree_right = counts.agree_right / n;
  r.reject_wrong = counts.reject_wrong / n;
  r.agree_wrong = counts.agree_wrong / n;
  r.reject_right = counts.reject_right / n;
  r.right = (counts.agree_right + counts.reject_wrong) / n;
  r.wrong = (counts.agree_wrong + counts.reject_right) / n;
  return r;
}

std::map<Condition, DecisionRatios> compute_decision_ratios(std::span<const StudySession> sessions) {
  require_complete(sessions);
  std::map<Condition, DecisionRatios> out;
  for (Condition cond : {Condition::kFeatures, Condition::kExamplesFeatures}) {
    std::vector<Decision> decisions;
    for (const auto& s : sessions) {
      for (const auto& a : s.assessments) {
        if (a.phase != Phase::kFinal) continue;
        const CaseAssignment* asg = s.assignment_of(a.case_id);
        if (asg == nullptr || asg->condition != cond) continue;
        const CaseComponentInfo& info = s.find_case(a.case_id)->components.at(a.component);
        decisions.push_back({a.label, info.ai_label, info.truth});
      }
    }
    out[cond] = decision_ratios(tally_decisions(decisions));
  }
  return out;
}

DurationStats compute_duration(std::span<const StudySession> sessions, Condition condition) {
  DurationStats d;
  double sum = 0.0, sum_initial = 0.0, sum_final = 0.0;
  int n_initial = 0, n_final = 0;
  for (const auto& s : sessions) {
    for (const auto& a : s.assessments) {
      const CaseAssignment* asg = s.assignment_of(a.case_id);
      if (asg == nullptr || asg->condition != condition) continue;
      if (!std::isfinite(a.t_video_start) || !std::isfinite(a.t_submit)) {
        throw ValidationError("assessment for case '" + a.case_id + "' lacks timestamps");
      }
      const double dt = a.t_submit - a.t_video_start;
      sum += dt;
      if (a.phase == Phase::kInitial) {
        sum_initial += dt;
        ++n_initial;
      } else {
        sum_final += dt;
        ++n_final;
      }
    }
  }
  d.n = n_initial + n_final;
  if (d.n == 0) {
    throw ValidationError("no timed assessments for " + std::string(to_string(condition)));
  }
  d.mean_s = sum / d.n;
  d.initial_mean_s = n_initial > 0 ? sum_initial / n_initial : 0.0;
  d.final_mean_s = n_final > 0 ? sum_final / n_final : 0.0;
  return d;
}

RelianceReport build_report(std::span<const StudySession> sessions) {
  require_complete(sessions);
  RelianceReport r;
  r.n_sessions = static_cast<int>(sessions.size());
  r.performance = compute_performance(sessions);
  r.decisions = compute_decision_ratios(sessions);
  for (Condition c : {Condition::kFeatures, Condition::kExamplesFeatures}) {
    r.duration[c] = compute_duration(sessions, c);
  }
  return r;
}

namespace {

json f1_json(const F1Block& b) {
  return {{"human", b.human}, {"human_ai", b.human_ai}, {"delta", b.delta}, {"n", b.n}};
}

json perf_json(const PerformanceBlock& p) {
  return {{"all", f1_json(p.all)}, {"right_ai", f1_json(p.right)}, {"wrong_ai", f1_json(p.wrong)}};
}

}  // namespace

json to_json(const RelianceReport& r) {
  json conditions = json::object();
  for (Condition c : {Condition::kFeatures, Condition::kExamplesFeatures}) {
    json cj;
    cj["display_name"] = display_name(c);
    const auto& perf = r.performance.at(c);
    json per_component = json::object();
    for (const auto& [component, block] : perf.per_component) {
      per_component[std::string(to_string(component))] = perf_json(block);
    }
    cj["performance"] = {{"pooled", perf_json(perf.pooled)}, {"per_component", per_component}};
    const auto& d = r.decisions.at(c);
    cj["decisions"] = {{"counts",
                        {{"agree_right", d.counts.agree_right},
                         {"reject_wrong", d.counts.reject_wrong},
                         {"agree_wrong", d.counts.agree_wrong},
                         {"reject_right", d.counts.reject_right},
                         {"total", d.counts.total()}}},
                       {"ratios",
                        {{"right", d.right},
                         {"wrong", d.wrong},
                         {"agree_right", d.agree_right},
                         {"reject_wrong", d.reject_wrong},
                         {"agree_wrong", d.agree_wrong},
                         {"reject_right", d.reject_right}}}};
    const auto& du = r.duration.at(c);
    cj["duration"] = {{"mean_s", du.mean_s},
                      {"initial_mean_s", du.initial_mean_s},
                      {"final_mean_s", du.final_mean_s},
                      {"n", du.n}};
    conditions[std::string(to_string(c))] = std::move(cj);
  }
  return {{"n_sessions", r.n_sessions}, {"conditions", std::move(conditions)}};
}

namespace {

std::string pct0(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0f", 100.0 * v);
  return buf;
}

std::string pct1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

std::string signed_pct(double v, bool one_decimal) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), one_decimal ? "%+.1f" : "%+.0f", 100.0 * v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string render_tables(const RelianceReport& r) {
  const auto& fa = r.performance.at(Condition::kFeatures).pooled;
  const auto& fb = r.performance.at(Condition::kExamplesFeatures).pooled;
  std::ostringstream out;
  out << "Performance (F1, %)\n";
  out << pad("", 18) << pad("Condition A: Features", 26) << "Condition B: Examples + Features\n";
  out << pad("", 18) << pad("Human", 9) << pad("Human + AI", 17) << pad("Human", 9)
      << "Human + AI\n";
  const auto row = [&](const char* name, const F1Block& a, const F1Block& b) {
    out << pad(name, 18) << pad(pct0(a.human), 9)
        << pad(pct0(a.human_ai) + " (" + signed_pct(a.delta, false) + ")", 17)
        << pad(pct0(b.human), 9) << pct0(b.human_ai) << " (" << signed_pct(b.delta, false)
        << ")\n";
  };
  row("All", fa.all, fb.all);
  row("Right AI outputs", fa.right, fb.right);
  row("Wrong AI outputs", fa.wrong, fb.wrong);

  const auto& da = r.decisions.at(Condition::kFeatures);
  const auto& db = r.decisions.at(Condition::kExamplesFeatures);
  out << "\nRight and wrong decisions (%)\n";
  out << pad("", 24) << pad("Condition A: Features", 24) << "Condition B: Examples + Features\n";
  const auto drow = [&](const char* name, double a, double b) {
    out << pad(name, 24) << pad(pct1(a), 24) << pct1(b) << " (" << signed_pct(b - a, true)
        << ")\n";
  };
  drow("Right decision", da.right, db.right);
  drow("Wrong decision", da.wrong, db.wrong);
  drow("Agree right AI outputs", da.agree_right, db.agree_right);
  drow("Reject wrong AI outputs", da.reject_wrong, db.reject_wrong);
  drow("Agree wrong AI outputs", da.agree_wrong, db.agree_wrong);
  drow("Reject right AI outputs", da.reject_right, db.reject_right);
  out << pad("Decisions (count)", 24) << pad(std::to_string(da.counts.total()), 24)
      << db.counts.total() << "\n";

  const auto& ta = r.duration.at(Condition::kFeatures);
  const auto& tb = r.duration.at(Condition::kExamplesFeatures);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "\nMean duration per assessment (s): A %.1f, B %.1f\n", ta.mean_s,
                tb.mean_s);
  out << buf;
  return out.str();
}

json to_json(const Assessment& a) {
  return {{"session", a.session_id},
          {"case", a.case_id},
          {"component", to_string(a.component)},
          {"phase", to_string(a.phase)},
          {"label", to_string(a.label)},
          {"t_video_start", a.t_video_start},
          {"t_submit", a.t_submit}};
}

Assessment assessment_from_json(const json& j) {
  Assessment a;
  try {
    a.session_id = j.value("session", "");
    a.case_id = j.at("case").get<std::string>();
    a.component = parse_component(j.at("component").get<std::string>());
    a.phase = parse_phase(j.at("phase").get<std::string>());
    a.label = parse_label(j.at("label").get<std::string>());
    a.t_video_start = j.at("t_video_start").get<double>();
    a.t_submit = j.at("t_submit").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed assessment: ") + e.what());
  }
  return a;
}

json to_json(const StudySession& s) {
  json assignments = json::array();
  for (const auto& a : s.assignments) {
    json cases = json::array();
    for (const auto& c : a.cases) {
      json comps = json::object();
      for (const auto& [component, info] : c.components) {
        comps[std::string(to_string(component))] = {{"ai_label", to_string(info.ai_label)},
                                                    {"ai_confidence", info.ai_confidence},
                                                    {"truth", to_string(info.truth)}};
      }
      cases.push_back({{"trial_id", c.trial_id},
                       {"ai_output_right", c.ai_output_right},
                       {"components", std::move(comps)}});
    }
    assignments.push_back({{"condition", to_string(a.condition)},
                           {"component", to_string(a.component)},
                           {"cases", std::move(cases)}});
  }
  json log = json::array();
  for (const auto& a : s.assessments) log.push_back(to_json(a));
  return {{"session_id", s.session_id},
          {"participant_id", s.participant_id},
          {"order", {to_string(s.order[0]), to_string(s.order[1])}},
          {"assignments", std::move(assignments)},
          {"assessments", std::move(log)},
          {"seed", s.seed}};
}

StudySession session_from_json(const json& j) {
  StudySession s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.participant_id = j.at("participant_id").get<std::string>();
    s.seed = j.value("seed", std::uint64_t{0});
    const auto& order = j.at("order");
    s.order = {parse_condition(order.at(0).get<std::string>()),
               parse_condition(order.at(1).get<std::string>())};
    if (s.order[0] == s.order[1]) throw ValidationError("session order must hold both conditions");
    const auto& asg = j.at("assignments");
    if (asg.size() != 2) throw ValidationError("session must have two assignments");
    for (std::size_t k = 0; k < 2; ++k) {
      CaseAssignment a;
      a.condition = parse_condition(asg[k].at("condition").get<std::string>());
      a.component = parse_component(asg[k].at("component").get<std::string>());
      for (const auto& cj : asg[k].at("cases")) {
        StudyCase c;
        c.trial_id = cj.at("trial_id").get<std::string>();
        c.ai_output_right = cj.at("ai_output_right").get<bool>();
        for (const auto& [name, info] : cj.at("components").items()) {
          c.components[parse_component(name)] = {
              parse_label(info.at("ai_label").get<std::string>()),
              info.at("ai_confidence").get<double>(),
              parse_label(info.at("truth").get<std::string>())};
        }
        a.cases.push_back(std::move(c));
      }
      s.assignments[k] = std::move(a);
    }
    if (s.assignments[0].condition != s.order[0] || s.assignments[1].condition != s.order[1]) {
      throw ValidationError("session assignments must follow the condition order");
    }
    for (const auto& aj : j.at("assessments")) s.assessments.push_back(assessment_from_json(aj));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed session: ") + e.what());
  }
  return s;
}

std::string export_event_log(const StudySession& s) {
  std::string out;
  for (const auto& a : s.assessments) {
    out += to_json(a).dump();
    out += '\n';
  }
  return out;
}

}  // namespace rehabxai
