#include "rehabxai/service.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <thread>

#include "rehabxai/explain.hpp"
#include "rehabxai/pipeline.hpp"
#include "rehabxai/store.hpp"
#include "rehabxai/study.hpp"

namespace rehabxai {

namespace fs = std::filesystem;
using nlohmann::json;

std::string make_ulid() {
  static constexpr char kAlphabet[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
  static std::mutex mu;
  static std::uint64_t last_ms = 0;
  static std::uint64_t hi = 0;  // top 16 bits of entropy
  static std::uint64_t lo = 0;  // low 64 bits of entropy
  static std::mt19937_64 rng{std::random_device{}()};

  std::lock_guard<std::mutex> g(mu);
  auto ms = static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                           std::chrono::system_clock::now().time_since_epoch())
                                           .count());
  if (ms <= last_ms) {
    ms = last_ms;
    if (++lo == 0) hi = (hi + 1) & 0xFFFF;
  } else {
    last_ms = ms;
    hi = rng() & 0xFFFF;
    lo = rng();
  }
  std::string out(26, '0');
  for (int i = 9; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kAlphabet[ms & 31];
    ms >>= 5;
  }
  // 80 entropy bits as 16 base32 digits, most significant first.
  std::uint64_t l = lo, h = hi;
  for (int i = 25; i >= 10; --i) {
    out[static_cast<std::size_t>(i)] = kAlphabet[l & 31];
    l = (l >> 5) | ((h & 31) << 59);
    h >>= 5;
  }
  return out;
}

namespace {

constexpr std::array<Component, 2> kComponents{Component::kRom, Component::kComp};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not JSON: ") + e.what());
  }
}

std::string body_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string()) {
    throw ValidationError(std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

int parse_int_param(const std::string& s, const char* name) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("parameter '") + name + "' must be an integer");
  }
}

std::string param(const httplib::Request& req, const char* name, const std::string& fallback = {}) {
  return req.has_param(name) ? req.get_param_value(name) : fallback;
}

}  // namespace

struct Service::Impl {
  ServiceConfig config;
  Store store;
  httplib::Server server;
  std::thread server_thread;
  int bound_port = -1;

  // Job pool.
  std::mutex job_mu;
  std::condition_variable job_cv;
  std::deque<std::function<void()>> job_queue;
  std::vector<std::thread> workers;
  bool stopping = false;

  // Parsed records, keyed by id.
  std::mutex cache_mu;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets;
  std::map<std::string, std::shared_ptr<const FeatureTable>> tables;
  std::map<std::string, std::shared_ptr<const ModelBundle>> models;
  std::map<std::string, std::shared_ptr<const EmbeddingSpace>> spaces;

  explicit Impl(ServiceConfig c)
      : config(std::move(c)),
        store(config.store_root.empty() ? default_store_root() : config.store_root) {
    const int n = std::max(1, config.workers);
    for (int i = 0; i < n; ++i) workers.emplace_back([this] { worker_loop(); });
    routes();
  }

  ~Impl() {
    server.stop();
    if (server_thread.joinable()) server_thread.join();
    {
      std::lock_guard<std::mutex> g(job_mu);
      stopping = true;
    }
    job_cv.notify_all();
    for (auto& w : workers) w.join();
  }

  // ---------------------------------------------------------------------
  // Jobs

  void worker_loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lk(job_mu);
        job_cv.wait(lk, [this] { return stopping || !job_queue.empty(); });
        if (job_queue.empty()) return;
        job = std::move(job_queue.front());
        job_queue.pop_front();
      }
      job();
    }
  }

  json submit(const std::string& kind, const json& request, std::function<json()> fn) {
    const std::string id = make_ulid();
    json record = {{"id", id}, {"kind", kind}, {"state", "queued"}, {"request", request},
                   {"result", nullptr}, {"diagnostics", nullptr}};
    store.put(RecordKind::kJob, id, record);
    {
      std::lock_guard<std::mutex> g(job_mu);
      job_queue.push_back([this, id, fn = std::move(fn)] {
        set_job(id, "running", nullptr, nullptr);
        try {
          set_job(id, "done", fn(), nullptr);
        } catch (const std::exception& e) {
          set_job(id, "failed", nullptr, e.what());
        }
      });
    }
    job_cv.notify_one();
    return record;
  }

  void set_job(const std::string& id, const char* state, const json& result, const json& diagnostics) {
    store.update(RecordKind::kJob, id, [&](json j) {
      j["state"] = state;
      j["result"] = result;
      j["diagnostics"] = diagnostics;
      return j;
    });
  }

  // ---------------------------------------------------------------------
  // Record access

  std::shared_ptr<const Dataset> dataset(const std::string& id) {
    {
      std::lock_guard<std::mutex> g(cache_mu);
      if (auto it = datasets.find(id); it != datasets.end()) return it->second;
    }
    auto d = std::make_shared<const Dataset>(dataset_from_json(store.require(RecordKind::kDataset, id)));
    std::lock_guard<std::mutex> g(cache_mu);
    return datasets.emplace(id, d).first->second;
  }

  std::shared_ptr<const FeatureTable> table(const std::string& ds_id, Component c) {
    const std::string key = ds_id + "/" + std::string(to_string(c));
    {
      std::lock_guard<std::mutex> g(cache_mu);
      if (auto it = tables.find(key); it != tables.end()) return it->second;
    }
    auto t = std::make_shared<const FeatureTable>(extract_table(*dataset(ds_id), c, config.exec));
    std::lock_guard<std::mutex> g(cache_mu);
    return tables.emplace(key, t).first->second;
  }

  std::shared_ptr<const ModelBundle> model(const std::string& id) {
    {
      std::lock_guard<std::mutex> g(cache_mu);
      if (auto it = models.find(id); it != models.end()) return it->second;
    }
    auto m = std::make_shared<const ModelBundle>(bundle_from_json(store.require(RecordKind::kModel, id)));
    std::lock_guard<std::mutex> g(cache_mu);
    return models.emplace(id, m).first->second;
  }

  std::shared_ptr<const EmbeddingSpace> space(const std::string& id) {
    {
      std::lock_guard<std::mutex> g(cache_mu);
      if (auto it = spaces.find(id); it != spaces.end()) return it->second;
    }
    auto s = std::make_shared<const EmbeddingSpace>(
        embedding_space_from_json(store.require(RecordKind::kSpace, id)));
    std::lock_guard<std::mutex> g(cache_mu);
    return spaces.emplace(id, s).first->second;
  }

  // ---------------------------------------------------------------------
  // Routing

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const ParseError& e) {
        send_json(res, 400, {{"error", e.what()}});
      } catch (const ValidationError& e) {
        send_json(res, 400, {{"error", e.what()}});
      } catch (const NotFoundError& e) {
        send_json(res, 404, {{"error", e.what()}});
      } catch (const ConflictError& e) {
        send_json(res, 409, {{"error", e.what()}});
      } catch (const std::exception& e) {
        const std::string diag = "diag-" + make_ulid();
        std::cerr << diag << " " << req.method << " " << req.path << ": " << e.what() << "\n";
        send_json(res, 500, {{"error", "internal error"}, {"diagnostic_id", diag}});
      }
    };
  }

  void routes() {
    static const std::string kId = "([A-Za-z0-9_-]+)";
    server.Get("/health", guarded([](const auto&, auto& res) { send_json(res, 200, {{"status", "ok"}}); }));

    server.Post("/datasets", guarded([this](const auto& req, auto& res) { post_dataset(req, res); }));
    server.Get("/datasets", guarded([this](const auto&, auto& res) {
      send_json(res, 200, {{"datasets", store.list(RecordKind::kDataset)}});
    }));
    server.Get("/datasets/" + kId, guarded([this](const auto& req, auto& res) {
      send_json(res, 200, dataset_summary(req.matches[1]));
    }));
    server.Get("/datasets/" + kId + "/trials/" + kId, guarded([this](const auto& req, auto& res) {
      send_json(res, 200, trial_payload(req.matches[1], req.matches[2]));
    }));

    server.Post("/models/train", guarded([this](const auto& req, auto& res) { post_train(req, res); }));
    server.Post("/models/grid", guarded([this](const auto& req, auto& res) { post_grid(req, res); }));
    server.Get("/models/" + kId, guarded([this](const auto& req, auto& res) {
      send_json(res, 200, model_summary(req.matches[1], param(req, "full") == "1"));
    }));
    server.Post("/models/" + kId + "/predict", guarded([this](const auto& req, auto& res) {
      send_json(res, 200, predict(req.matches[1], parse_body(req)));
    }));

    server.Post("/spaces/build", guarded([this](const auto& req, auto& res) { post_space(req, res); }));
    server.Get("/spaces/" + kId, guarded([this](const auto& req, auto& res) {
      send_json(res, 200, space_summary(req.matches[1]));
    }));

    server.Get("/explain", guarded([this](const auto& req, auto& res) { send_json(res, 200, explain(req)); }));

    server.Post("/sessions", guarded([this](const auto& req, auto& res) { post_sessions(req, res); }));
    server.Get("/sessions/" + kId, guarded([this](const auto& req, auto& res) {
      send_json(res, 200, store.require(RecordKind::kSession, req.matches[1]));
    }));
    server.Get("/sessions/" + kId + "/cases", guarded([this](const auto& req, auto& res) {
      send_json(res, 200, session_cases(req.matches[1]));
    }));
    server.Get("/sessions/" + kId + "/log", guarded([this](const auto& req, auto& res) {
      res.status = 200;
      res.set_content(export_event_log(load_session(req.matches[1])), "application/x-ndjson");
    }));
    server.Post("/sessions/" + kId + "/assessments", guarded([this](const auto& req, auto& res) {
      post_assessment(req.matches[1], parse_body(req), res);
    }));
    server.Get("/sessions/" + kId + "/report", guarded([this](const auto& req, auto& res) {
      const StudySession s = load_session(req.matches[1]);
      if (!session_complete(s)) {
        throw ConflictError("session '" + s.session_id + "' is incomplete");
      }
      const std::vector<StudySession> one{s};
      send_json(res, 200, to_json(build_report(one)));
    }));

    server.Get("/jobs/" + kId, guarded([this](const auto& req, auto& res) {
      send_json(res, 200, store.require(RecordKind::kJob, req.matches[1]));
    }));

    if (!config.app_dir.empty() && fs::is_directory(config.app_dir)) {
      server.set_mount_point("/app", config.app_dir.string());
    }
  }

  // ---------------------------------------------------------------------
  // Datasets

  void post_dataset(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    Dataset d;
    if (body.contains("generate")) {
      const SynthConfig cfg = synth_config_from_json(body.at("generate"));
      if (cfg.n_subjects < 1) throw ValidationError("n_subjects must be at least 1");
      d = generate_synthetic(cfg, body.value("seed", config.seed));
    } else {
      d = dataset_from_json(body);
    }
    d.validate();
    const std::string id = dataset_id(d);
    const bool created = store.put_if_absent(RecordKind::kDataset, id, to_json(d));
    send_json(res, created ? 201 : 200,
              {{"id", id}, {"n_subjects", d.subjects.size()}, {"n_trials", d.trials.size()}});
  }

  json dataset_summary(const std::string& id) {
    const auto d = dataset(id);
    json subjects = json::array();
    for (const auto& s : d->subjects) {
      subjects.push_back({{"subject_id", s.subject_id},
                          {"status_score", s.status_score},
                          {"affected_side", to_string(s.affected_side)},
                          {"description", s.description}});
    }
    json trials = json::array();
    for (const auto& t : d->trials) {
      trials.push_back({{"trial_id", t.trial_id},
                        {"subject_id", t.subject_id},
                        {"side", to_string(t.side)},
                        {"trial_index", t.trial_index},
                        {"n_frames", t.frames.size()}});
    }
    return {{"id", id}, {"subjects", subjects}, {"trials", trials}};
  }

  json trial_payload(const std::string& ds_id, const std::string& trial_id) {
    const auto d = dataset(ds_id);
    const ExerciseTrial& t = d->trial(trial_id);
    json frames = json::array();
    for (const auto& f : t.frames) {
      json row = json::array({f.time_s});
      for (const auto& p : f.positions) {
        row.push_back(p.x);
        row.push_back(p.y);
        row.push_back(p.z);
      }
      frames.push_back(std::move(row));
    }
    json joints = json::array();
    for (int j = 0; j < kJointCount; ++j) joints.push_back(to_string(static_cast<Joint>(j)));
    return {{"trial_id", t.trial_id},
            {"subject_id", t.subject_id},
            {"side", to_string(t.side)},
            {"joints", joints},
            {"frames", frames}};
  }

  // ---------------------------------------------------------------------
  // Models

  ModelConfig config_from_body(const json& body, Component c) {
    json cfg = to_json(ModelConfig::defaults(c));
    if (auto it = body.find("config"); it != body.end()) {
      if (!it->is_object()) throw ValidationError("'config' must be an object");
      cfg.merge_patch(*it);
    }
    cfg["component"] = to_string(c);
    if (body.contains("seed")) cfg["seed"] = body.at("seed");
    return model_config_from_json(cfg);
  }

  void post_train(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const std::string ds_id = body_string(body, "dataset_id");
    const Component c = parse_component(body_string(body, "component"));
    const ModelConfig cfg = config_from_body(body, c);
    const bool with_loso = body.value("loso", true);
    if (!store.exists(RecordKind::kDataset, ds_id)) throw NotFoundError("unknown dataset id '" + ds_id + "'");
    const json record = submit("train", body, [this, ds_id, c, cfg, with_loso]() -> json {
      const auto t = table(ds_id, c);
      ModelBundle b = train_bundle(*t, ds_id, cfg, with_loso, config.exec);
      store.put_if_absent(RecordKind::kModel, b.id, to_json(b));
      json result = {{"model_id", b.id}};
      if (b.loso) result["loso_f1"] = b.loso->f1;
      return result;
    });
    send_json(res, 202, record);
  }

  void post_grid(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const std::string ds_id = body_string(body, "dataset_id");
    const Component c = parse_component(body_string(body, "component"));
    const ModelConfig base = config_from_body(body, c);
    GridSpec grid;
    if (auto it = body.find("grid"); it != body.end()) {
      grid.layers = it->value("layers", grid.layers);
      grid.units = it->value("units", grid.units);
      grid.learning_rates = it->value("learning_rates", grid.learning_rates);
    }
    if (!store.exists(RecordKind::kDataset, ds_id)) throw NotFoundError("unknown dataset id '" + ds_id + "'");
    const json record = submit("grid_search", body, [this, ds_id, c, base, grid]() -> json {
      return to_json(grid_search(*table(ds_id, c), grid, base, config.exec));
    });
    send_json(res, 202, record);
  }

  json model_summary(const std::string& id, bool full) {
    if (full) return store.require(RecordKind::kModel, id);
    const auto b = model(id);
    json out = {{"id", b->id},
                {"dataset_id", b->dataset_id},
                {"component", to_string(b->component)},
                {"config", to_json(b->model.config)},
                {"parameters", b->model.parameter_count()},
                {"loss_curve", b->model.loss_curve}};
    if (b->loso) {
      json folds = json::array();
      for (const auto& f : b->loso->folds) {
        folds.push_back({{"test_subject", f.test_subject}, {"n_test", f.n_test}, {"f1", f.f1}, {"accuracy", f.accuracy}});
      }
      out["loso"] = {{"f1", b->loso->f1}, {"accuracy", b->loso->accuracy}, {"folds", folds}};
    }
    return out;
  }

  json predict(const std::string& id, const json& body) {
    const auto b = model(id);
    std::vector<double> x;
    if (body.contains("trial_id")) {
      const auto t = table(b->dataset_id, b->component);
      const std::string trial = body_string(body, "trial_id");
      auto pos = t->position(trial);
      if (!pos) throw NotFoundError("unknown trial '" + trial + "'");
      x = t->rows[*pos].values;
    } else {
      try {
        x = body.at("features").get<std::vector<double>>();
      } catch (const json::exception&) {
        throw ValidationError("body needs 'trial_id' or a numeric 'features' array");
      }
    }
    if (static_cast<int>(x.size()) != b->model.input_dim()) {
      throw ValidationError("expected " + std::to_string(b->model.input_dim()) + " features, got " +
                            std::to_string(x.size()));
    }
    const Prediction p = forward(b->model, x);
    return {{"model_id", b->id},
            {"label", to_string(p.label)},
            {"confidence", p.confidence},
            {"probabilities", {{"correct", p.probabilities[0]}, {"impaired", p.probabilities[1]}}}};
  }

  // ---------------------------------------------------------------------
  // Spaces

  void post_space(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    const std::string m_id = body_string(body, "model_id");
    SpaceBuildOptions opts;
    opts.method = parse_projection_method(body.value("method", "pca"));
    opts.source = parse_embedding_source(body.value("source", "first_hidden"));
    opts.seed = body.value("seed", config.seed);
    opts.neighbor_embedding.seed = opts.seed;
    opts.neighbor_embedding.perplexity = body.value("perplexity", opts.neighbor_embedding.perplexity);
    opts.neighbor_embedding.iterations = body.value("iterations", opts.neighbor_embedding.iterations);
    opts.exec = config.exec;
    if (!store.exists(RecordKind::kModel, m_id)) throw NotFoundError("unknown model id '" + m_id + "'");
    const json record = submit("build_embedding", body, [this, m_id, opts]() -> json {
      const auto b = model(m_id);
      const auto t = table(b->dataset_id, b->component);
      EmbeddingSpace s = build_embedding_space(b->model, *t, opts);
      s.model_id = b->id;
      const std::string id = s.id;
      store.put_if_absent(RecordKind::kSpace, id, to_json(s));
      return {{"space_id", id}};
    });
    send_json(res, 202, record);
  }

  json space_summary(const std::string& id) {
    const auto s = space(id);
    json coords = json::array();
    for (std::size_t i = 0; i < s->coords.rows; ++i) coords.push_back({s->coords(i, 0), s->coords(i, 1)});
    return {{"id", s->id},
            {"component", to_string(s->component)},
            {"model_id", s->model_id},
            {"method", to_string(s->method)},
            {"source", to_string(s->source)},
            {"params", s->params},
            {"sample_ids", s->sample_ids},
            {"coords", coords}};
  }

  // ---------------------------------------------------------------------
  // Explanations

  json explain(const httplib::Request& req) {
    ExplainRequest er;
    er.case_id = param(req, "case");
    if (er.case_id.empty()) throw ValidationError("missing parameter 'case'");
    if (req.has_param("k")) er.k = parse_int_param(req.get_param_value("k"), "k");
    if (er.k < 1) throw ValidationError("k must be at least 1");
    er.metric = parse_metric(param(req, "metric", "euclidean"));
    er.space = parse_space_kind(param(req, "space", "projected_2d"));
    er.attribution = parse_attribution_mode(param(req, "attribution", "sampled"));
    er.seed = config.seed;

    std::map<Component, std::string> space_ids;
    json gate = nullptr;
    const std::string session_id = param(req, "session");
    if (!session_id.empty()) {
      const json record = store.require(RecordKind::kSession, session_id);
      const StudySession s = session_from_json(record.at("session"));
      for (Component c : kComponents) {
        space_ids[c] = record.at("context").at("spaces").at(std::string(to_string(c))).get<std::string>();
      }
      const CaseAssignment* asg = s.assignment_of(er.case_id);
      if (asg != nullptr) {
        if (s.find_assessment(er.case_id, asg->component, Phase::kInitial) == nullptr) {
          throw ConflictError("AI output for case '" + er.case_id +
                              "' is available only after its initial assessment");
        }
        er.examples = asg->condition == Condition::kExamplesFeatures;
        er.decision = true;
        gate = {{"condition", display_name(asg->condition)}, {"phase", "decision"}};
      } else {
        er.examples = true;
        er.decision = false;
        gate = {{"phase", "onboarding"}};
      }
    } else {
      space_ids[Component::kRom] = param(req, "rom_space");
      space_ids[Component::kComp] = param(req, "comp_space");
      for (const auto& [c, id] : space_ids) {
        if (id.empty()) {
          throw ValidationError("without a session, 'rom_space' and 'comp_space' are required");
        }
      }
    }

    std::map<Component, std::shared_ptr<const EmbeddingSpace>> sp;
    std::map<Component, std::shared_ptr<const ModelBundle>> md;
    std::map<Component, std::shared_ptr<const FeatureTable>> tb;
    std::string ds_id;
    for (Component c : kComponents) {
      sp[c] = space(space_ids.at(c));
      if (sp[c]->component != c) {
        throw ValidationError("space '" + sp[c]->id + "' is not a " + std::string(to_string(c)) + " space");
      }
      md[c] = model(sp[c]->model_id);
      if (ds_id.empty()) ds_id = md[c]->dataset_id;
      if (md[c]->dataset_id != ds_id) throw ValidationError("ROM and COMP models use different datasets");
      tb[c] = table(ds_id, c);
    }
    const auto ds = dataset(ds_id);
    ExplainContext ctx;
    ctx.dataset = ds.get();
    for (Component c : kComponents) {
      ctx.spaces[c] = sp[c].get();
      ctx.models[c] = md[c].get();
      ctx.tables[c] = tb[c].get();
    }
    json out = explain_case(ctx, er, config.exec);
    if (!gate.is_null()) out["session"] = gate;
    return out;
  }

  // ---------------------------------------------------------------------
  // Sessions

  StudySession load_session(const std::string& id) {
    return session_from_json(store.require(RecordKind::kSession, id).at("session"));
  }

  void post_sessions(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    json context = {{"models", json::object()}, {"spaces", json::object()}};
    LosoRecords records;
    std::string ds_id;
    for (Component c : kComponents) {
      const std::string name = c == Component::kRom ? "rom" : "comp";
      const std::string m_id = body_string(body, (name + "_model_id").c_str());
      const std::string s_id = body_string(body, (name + "_space_id").c_str());
      const auto b = model(m_id);
      if (b->component != c) throw ValidationError("model '" + m_id + "' is not a " + std::string(to_string(c)) + " model");
      if (!b->loso) throw ValidationError("model '" + m_id + "' has no LOSO record");
      const auto s = space(s_id);
      if (s->component != c) throw ValidationError("space '" + s_id + "' is not a " + std::string(to_string(c)) + " space");
      if (ds_id.empty()) ds_id = b->dataset_id;
      if (b->dataset_id != ds_id) throw ValidationError("ROM and COMP models use different datasets");
      records[c] = *b->loso;
      context["models"][std::string(to_string(c))] = m_id;
      context["spaces"][std::string(to_string(c))] = s_id;
    }
    context["dataset_id"] = ds_id;
    AssignmentOptions opts;
    opts.component = parse_component(body.value("component", "ROM"));
    const std::uint64_t seed = body.value("seed", config.seed);
    const auto ds = dataset(ds_id);

    std::vector<StudySession> sessions;
    if (body.contains("participant_ids")) {
      std::vector<std::string> ids;
      try {
        ids = body.at("participant_ids").get<std::vector<std::string>>();
      } catch (const json::exception&) {
        throw ValidationError("'participant_ids' must be an array of strings");
      }
      if (ids.empty()) throw ValidationError("'participant_ids' is empty");
      sessions = create_session_batch(ids, records, *ds, seed, opts);
    } else {
      sessions.push_back(create_session(body_string(body, "participant_id"), records, *ds, seed, opts));
    }
    for (const auto& s : sessions) {
      if (store.exists(RecordKind::kSession, s.session_id)) {
        throw ConflictError("session '" + s.session_id + "' already exists");
      }
    }
    json out = json::array();
    for (const auto& s : sessions) {
      if (!store.put_if_absent(RecordKind::kSession, s.session_id, {{"session", to_json(s)}, {"context", context}})) {
        throw ConflictError("session '" + s.session_id + "' already exists");
      }
      out.push_back({{"session_id", s.session_id},
                     {"participant_id", s.participant_id},
                     {"order", {display_name(s.order[0]), display_name(s.order[1])}}});
    }
    send_json(res, 201, body.contains("participant_ids") ? json{{"sessions", out}} : out.at(0));
  }

  json session_cases(const std::string& id) {
    const StudySession s = load_session(id);
    json blocks = json::array();
    for (const auto& a : s.assignments) {
      json cases = json::array();
      for (const auto& c : a.cases) cases.push_back(c.trial_id);
      blocks.push_back({{"condition", display_name(a.condition)},
                        {"component", to_string(a.component)},
                        {"cases", cases}});
    }
    return {{"session_id", s.session_id}, {"participant_id", s.participant_id}, {"blocks", blocks}};
  }

  void post_assessment(const std::string& id, const json& body, httplib::Response& res) {
    Assessment a = assessment_from_json(body);
    if (a.session_id.empty()) a.session_id = id;
    StudySession updated;
    store.update(RecordKind::kSession, id, [&](json record) {
      updated = record_assessment(session_from_json(record.at("session")), a);
      record["session"] = to_json(updated);
      return record;
    });
    send_json(res, 201,
              {{"session_id", id},
               {"n_assessments", updated.assessments.size()},
               {"complete", session_complete(updated)}});
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::start() {
  auto& s = impl_->server;
  if (impl_->config.port == 0) {
    impl_->bound_port = s.bind_to_any_port(impl_->config.host);
  } else if (s.bind_to_port(impl_->config.host, impl_->config.port)) {
    impl_->bound_port = impl_->config.port;
  }
  if (impl_->bound_port <= 0) {
    throw IoError("cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  }
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->bound_port;
}

void Service::run() {
  auto& s = impl_->server;
  if (impl_->config.port == 0) {
    impl_->bound_port = s.bind_to_any_port(impl_->config.host);
  } else if (s.bind_to_port(impl_->config.host, impl_->config.port)) {
    impl_->bound_port = impl_->config.port;
  }
  if (impl_->bound_port <= 0) {
    throw IoError("cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  }
  std::cerr << "listening on " << impl_->config.host << ":" << impl_->bound_port << "\n";
  s.listen_after_bind();
}

void Service::stop() { impl_->server.stop(); }

int Service::port() const { return impl_->bound_port; }

}  // namespace rehabxai
