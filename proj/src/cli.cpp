#include "rehabxai/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "rehabxai/dataset.hpp"
#include "rehabxai/explain.hpp"
#include "rehabxai/pipeline.hpp"
#include "rehabxai/service.hpp"
#include "rehabxai/store.hpp"
#include "rehabxai/study.hpp"

namespace rehabxai {

using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool json_out = false;
  std::string store;
};

struct ConfigFlags {
  std::optional<int> layers;
  std::optional<int> units;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<int> batch;
  bool off_grid = false;

  void add(CLI::App* app) {
    app->add_option("--layers", layers, "Hidden layers");
    app->add_option("--units", units, "Hidden units per layer");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch", batch, "Mini-batch size");
    app->add_flag("--off-grid", off_grid, "Allow values outside the search grid");
  }

  ModelConfig build(Component c, std::uint64_t seed) const {
    ModelConfig cfg = ModelConfig::defaults(c);
    if (layers) cfg.n_hidden_layers = *layers;
    if (units) cfg.hidden_units = *units;
    if (lr) cfg.learning_rate = *lr;
    if (epochs) cfg.epochs = *epochs;
    if (batch) cfg.batch_size = *batch;
    cfg.off_grid = off_grid;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void emit(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

int cmd_generate(const Globals& g, std::optional<int> subjects, std::optional<int> trials_per_side,
                 std::optional<int> frames,
                 const std::string& config_path, const std::string& out_path, std::ostream& out) {
  SynthConfig cfg;
  if (!config_path.empty()) {
    try {
      cfg = synth_config_from_json(json::parse(read_file(config_path)));
    } catch (const json::parse_error& e) {
      throw ParseError(config_path + ": " + e.what());
    }
  }
  if (subjects) cfg.n_subjects = *subjects;
  if (trials_per_side) cfg.trials_per_side = *trials_per_side;
  if (frames) cfg.frames_per_trial = *frames;
  if (cfg.n_subjects < 1) throw ValidationError("--subjects must be at least 1");
  if (cfg.trials_per_side < 1) throw ValidationError("--trials-per-side must be at least 1");
  const Dataset d = generate_synthetic(cfg, g.seed);
  save_dataset(d, out_path);
  const json report = {{"id", dataset_id(d)},
                       {"path", out_path},
                       {"n_subjects", d.subjects.size()},
                       {"n_trials", d.trials.size()}};
  if (g.json_out) {
    emit(out, report);
  } else {
    out << "wrote " << d.trials.size() << " trials of " << d.subjects.size() << " subjects to "
        << out_path << " (" << report["id"].get<std::string>() << ")\n";
  }
  return kExitOk;
}

json train_report(const ModelBundle& b, const std::string& path) {
  return {{"model_id", b.id},
          {"path", path},
          {"dataset_id", b.dataset_id},
          {"component", to_string(b.component)},
          {"config", to_json(b.model.config)},
          {"loso", b.loso ? to_json(*b.loso) : json(nullptr)}};
}

void print_loso(const LosoRecord& r, std::ostream& out) {
  const ModelConfig& c = r.config;
  out << to_string(r.component) << " " << c.n_hidden_layers << "x" << c.hidden_units << " lr "
      << fixed(c.learning_rate, 4) << " epochs " << c.epochs << "\n";
  out << "fold  subject  n   F1     accuracy\n";
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    const auto& f = r.folds[i];
    out << std::string(4 - std::min<std::size_t>(4, std::to_string(i).size()), ' ') << i << "  "
        << f.test_subject << "      " << f.n_test << "  " << fixed(f.f1, 3) << "  "
        << fixed(f.accuracy, 3) << "\n";
  }
  const auto wrong = std::count_if(r.entries.begin(), r.entries.end(), [](const LosoEntry& e) { return !e.right; });
  out << "LOSO F1 " << fixed(r.f1, 3) << ", accuracy " << fixed(r.accuracy, 3) << ", "
      << (r.entries.size() - static_cast<std::size_t>(wrong)) << " right / " << wrong
      << " wrong AI outputs\n";
}

int cmd_train(const Globals& g, const std::string& data, const std::string& component,
              const ConfigFlags& flags, bool no_loso, bool parallel, const std::string& out_path,
              std::ostream& out) {
  const Component c = parse_component(component);
  const ModelConfig cfg = flags.build(c, g.seed);
  const Dataset d = load_dataset(data);
  const FeatureTable table = extract_table(d, c, parallel ? Exec::kParallel : Exec::kSerial);
  const ModelBundle b =
      train_bundle(table, dataset_id(d), cfg, !no_loso, parallel ? Exec::kParallel : Exec::kSerial);
  save_bundle(b, out_path);
  if (g.json_out) {
    emit(out, train_report(b, out_path));
  } else {
    out << "model " << b.id << " -> " << out_path << "\n";
    if (b.loso) print_loso(*b.loso, out);
  }
  return kExitOk;
}

int cmd_evaluate(const Globals& g, const std::string& data, const std::string& component,
                 const ConfigFlags& flags, bool grid, bool parallel, std::ostream& out) {
  const Component c = parse_component(component);
  const ModelConfig cfg = flags.build(c, g.seed);
  const Exec exec = parallel ? Exec::kParallel : Exec::kSerial;
  const Dataset d = load_dataset(data);
  const FeatureTable table = extract_table(d, c, exec);
  if (grid) {
    const GridResult r = grid_search(table, GridSpec{}, cfg, exec);
    if (g.json_out) {
      emit(out, to_json(r));
      return kExitOk;
    }
    out << "layers  units  lr      params   F1\n";
    for (const auto& cell : r.cells) {
      out << cell.n_hidden_layers << "       " << cell.hidden_units
          << std::string(7 - std::to_string(cell.hidden_units).size(), ' ') << fixed(cell.learning_rate, 4)
          << "  " << cell.parameters << std::string(9 - std::min<std::size_t>(8, std::to_string(cell.parameters).size()), ' ')
          << (cell.f1 ? fixed(*cell.f1, 3) : "failed: " + cell.error) << "\n";
    }
    out << "best: " << r.best.n_hidden_layers << "x" << r.best.hidden_units << " lr "
        << fixed(r.best.learning_rate, 4) << "\n";
    return kExitOk;
  }
  const LosoRecord r = evaluate_loso(table, cfg, exec);
  if (g.json_out) {
    emit(out, to_json(r));
  } else {
    print_loso(r, out);
  }
  return kExitOk;
}

int cmd_explain(const Globals& g, const std::string& data, const std::string& rom_model,
                const std::string& comp_model, const std::string& case_id, int k,
                const std::string& metric, const std::string& space, const std::string& method,
                const std::string& embedding, const std::string& attribution, int samples,
                std::ostream& out) {
  const Dataset d = load_dataset(data);
  const std::map<Component, ModelBundle> bundles = {{Component::kRom, load_bundle(rom_model)},
                                                    {Component::kComp, load_bundle(comp_model)}};
  ExplainRequest req;
  req.case_id = case_id;
  req.k = k;
  req.metric = parse_metric(metric);
  req.space = parse_space_kind(space);
  req.attribution = parse_attribution_mode(attribution);
  req.n_samples = samples;
  req.seed = g.seed;

  SpaceBuildOptions opts;
  opts.method = parse_projection_method(method);
  opts.source = parse_embedding_source(embedding);
  opts.seed = g.seed;
  opts.neighbor_embedding.seed = g.seed;

  std::map<Component, FeatureTable> tables;
  std::map<Component, EmbeddingSpace> spaces;
  ExplainContext ctx;
  ctx.dataset = &d;
  for (const auto& [c, b] : bundles) {
    if (b.component != c) {
      throw ValidationError("model " + b.id + " is not a " + std::string(to_string(c)) + " model");
    }
    tables[c] = extract_table(d, c);
    spaces[c] = build_embedding_space(b.model, tables[c], opts);
  }
  for (const auto& [c, b] : bundles) {
    ctx.models[c] = &b;
    ctx.tables[c] = &tables.at(c);
    ctx.spaces[c] = &spaces.at(c);
  }
  emit(out, explain_case(ctx, req));
  return kExitOk;
}

int cmd_serve(const Globals& g, int port, int workers, const std::string& app_dir) {
  ServiceConfig cfg;
  cfg.port = port;
  cfg.seed = g.seed;
  cfg.workers = workers;
  cfg.store_root = g.store.empty() ? default_store_root() : std::filesystem::path(g.store);
  cfg.app_dir = app_dir;
  Service service(cfg);
  service.run();
  return kExitOk;
}

int cmd_analyze(const Globals& g, const std::string& path, std::ostream& out, std::ostream& err) {
  std::istringstream in(read_file(path));
  std::vector<StudySession> sessions;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    StudySession s = session_from_json(j.contains("session") ? j.at("session") : j);
    if (!session_complete(s)) {
      err << "skipping incomplete session " << s.session_id << "\n";
      continue;
    }
    sessions.push_back(std::move(s));
  }
  if (sessions.empty()) throw ValidationError("no complete sessions");
  const RelianceReport report = build_report(sessions);
  if (g.json_out) {
    emit(out, to_json(report));
  } else {
    out << render_tables(report);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rehabilitation assessment decision support"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_flag("--json", g.json_out, "Machine-readable JSON on stdout");
  app.add_option("--store", g.store, "Store root (default $REHABXAI_STORE or ./rehabxai_store)");

  std::optional<int> subjects, trials_per_side, frames;
  std::string synth_config, out_path;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic cohort");
  generate->add_option("--subjects", subjects, "Number of subjects");
  generate->add_option("--trials-per-side", trials_per_side, "Trials per side per subject");
  generate->add_option("--frames", frames, "Frames per trial");
  generate->add_option("--config", synth_config, "JSON file with generator overrides")->check(CLI::ExistingFile);
  generate->add_option("--out", out_path, "Output dataset file")->required();

  std::string data, component = "ROM";
  ConfigFlags flags;
  bool no_loso = false, parallel = false, grid = false;
  std::string model_out;
  auto* train = app.add_subcommand("train", "Train a model with a LOSO record");
  train->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--component", component, "ROM or COMP");
  flags.add(train);
  train->add_flag("--no-loso", no_loso, "Skip the LOSO evaluation");
  train->add_flag("--parallel", parallel, "Run LOSO folds in parallel");
  train->add_option("--out", model_out, "Output model file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "LOSO evaluation or grid search");
  evaluate->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--component", component, "ROM or COMP");
  flags.add(evaluate);
  evaluate->add_flag("--grid", grid, "Grid search over layers x units x learning rate");
  evaluate->add_flag("--parallel", parallel, "Run folds in parallel");

  std::string rom_model, comp_model, case_id, metric = "euclidean", space = "projected_2d",
                                             method = "pca", embedding = "first_hidden",
                                             attribution = "sampled";
  int k = kDefaultK, samples = 256;
  auto* explain = app.add_subcommand("explain", "Explanation payload for one case");
  explain->add_option("--data", data, "Dataset file")->required()->check(CLI::ExistingFile);
  explain->add_option("--rom-model", rom_model, "ROM model file")->required()->check(CLI::ExistingFile);
  explain->add_option("--comp-model", comp_model, "COMP model file")->required()->check(CLI::ExistingFile);
  explain->add_option("--case", case_id, "Trial id")->required();
  explain->add_option("-k,--k", k, "Neighbors per component");
  explain->add_option("--metric", metric, "euclidean or cosine");
  explain->add_option("--space", space, "projected_2d or activation");
  explain->add_option("--method", method, "pca or neighbor_embedding");
  explain->add_option("--embedding", embedding, "first_hidden or input_features");
  explain->add_option("--attribution", attribution, "sampled or exact_grouped");
  explain->add_option("--samples", samples, "Permutations for sampled attribution");

  int port = 8080, workers = 2;
  std::string app_dir;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", port, "Port");
  serve->add_option("--workers", workers, "Job worker threads");
  serve->add_option("--app-dir", app_dir, "Static UI bundle served under /app");

  std::string sessions_path;
  auto* analyze = app.add_subcommand("analyze", "Reliance report from session logs");
  analyze->add_option("--sessions", sessions_path, "JSON-lines file of sessions")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*generate) return cmd_generate(g, subjects, trials_per_side, frames, synth_config, out_path, out);
    if (*train) return cmd_train(g, data, component, flags, no_loso, parallel, model_out, out);
    if (*evaluate) return cmd_evaluate(g, data, component, flags, grid, parallel, out);
    if (*explain) {
      return cmd_explain(g, data, rom_model, comp_model, case_id, k, metric, space, method, embedding,
                         attribution, samples, out);
    }
    if (*serve) return cmd_serve(g, port, workers, app_dir);
    if (*analyze) return cmd_analyze(g, sessions_path, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NotFoundError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace rehabxai
