#include "grag/service.hpp"

#include <cctype>
#include <set>

#include <httplib.h>

#include <json.hpp>

#include "grag/error.hpp"

namespace grag {

using nlohmann::json;

std::string_view to_string(JobKind k) { return k == JobKind::ingest ? "ingest" : "build"; }

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

struct Service::Server {
  httplib::Server http;
};

namespace {

HttpResponse json_response(int status, const json& body) {
  HttpResponse r;
  r.status = status;
  r.body = body.dump();
  r.headers["Content-Type"] = "application/json";
  return r;
}

HttpResponse error_response(int status, std::string_view code, std::string_view message, bool retryable) {
  return json_response(status, {{"error", {{"code", code}, {"message", message}, {"retryable", retryable}}}});
}

bool is_provider_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::transport:
    case ErrorCode::timeout:
    case ErrorCode::auth:
    case ErrorCode::rate_limit:
    case ErrorCode::malformed_response:
    case ErrorCode::scripting_gap:
    case ErrorCode::extraction_format:
      return true;
    default:
      return false;
  }
}

json diagnostics_json(const Diagnostics& d) {
  return {{"llm_calls", d.llm_calls},
          {"embedding_calls", d.embedding_calls},
          {"embedded_texts", d.embedded_texts},
          {"wall_time_ms", d.wall_time_ms},
          {"dropped_citations", d.dropped_citations}};
}

json job_json(const JobStatus& j) {
  json out = {{"id", j.id},
              {"kind", to_string(j.kind)},
              {"state", to_string(j.state)},
              {"documents", j.documents},
              {"chunks_processed", j.chunks_processed},
              {"triples_extracted", j.triples_extracted}};
  if (!j.error.empty()) out["error"] = j.error;
  return out;
}

// "/users/<id>/metadata" -> id
std::optional<std::string> user_path(std::string_view path) {
  constexpr std::string_view prefix = "/users/";
  constexpr std::string_view suffix = "/metadata";
  if (path.size() <= prefix.size() + suffix.size()) return std::nullopt;
  if (path.substr(0, prefix.size()) != prefix) return std::nullopt;
  if (path.substr(path.size() - suffix.size()) != suffix) return std::nullopt;
  std::string id(path.substr(prefix.size(), path.size() - prefix.size() - suffix.size()));
  if (id.empty() || id.find('/') != std::string::npos) return std::nullopt;
  return id;
}

}  // namespace

Service::Service(ServiceConfig config, ProviderSet providers, Clock clock)
    : config_(std::move(config)), providers_(std::move(providers)), clock_(std::move(clock)) {
  config_.validate();
  worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Service::load_graph(const std::filesystem::path& path) { set_graph(KnowledgeGraph::load(path)); }

void Service::set_graph(KnowledgeGraph g) {
  {
    std::unique_lock lock(users_mutex_);
    for (const auto& [id, row] : g.users().rows()) users_.set(row);
  }
  install(std::move(g));
}

void Service::install(KnowledgeGraph g) {
  auto snap = std::make_shared<Snapshot>();
  snap->graph = std::make_shared<const KnowledgeGraph>(std::move(g));
  snap->engine = std::make_shared<const Engine>(snap->graph, providers_.handles(), config_.retrieval, clock_);
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(snap);
}

std::shared_ptr<const Service::Snapshot> Service::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

bool Service::graph_loaded() const { return snapshot() != nullptr; }

HttpResponse Service::handle(const HttpRequest& request) {
  std::string rid;
  if (auto it = request.headers.find("X-Request-Id"); it != request.headers.end() && !it->second.empty()) {
    rid = it->second;
  } else {
    std::lock_guard lock(request_mutex_);
    rid = "req-" + std::to_string(next_request_++);
  }

  std::string_view path = request.path;
  if (auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
  const std::string& m = request.method;

  HttpResponse r;
  try {
    if (path == "/query") {
      r = m == "POST" ? query(request) : error_response(405, "method_not_allowed", "use POST", false);
    } else if (auto user = user_path(path)) {
      if (m == "PUT") r = put_user(*user, request);
      else if (m == "GET") r = get_user(*user);
      else r = error_response(405, "method_not_allowed", "use GET or PUT", false);
    } else if (path == "/documents") {
      r = m == "POST" ? post_documents(request) : error_response(405, "method_not_allowed", "use POST", false);
    } else if (path == "/kg/build") {
      r = m == "POST" ? post_build() : error_response(405, "method_not_allowed", "use POST", false);
    } else if (path.substr(0, 6) == "/jobs/" && path.size() > 6) {
      r = m == "GET" ? get_job(std::string(path.substr(6)))
                     : error_response(405, "method_not_allowed", "use GET", false);
    } else if (path == "/graph/stats") {
      r = m == "GET" ? graph_stats() : error_response(405, "method_not_allowed", "use GET", false);
    } else if (path == "/health") {
      r = m == "GET" ? health() : error_response(405, "method_not_allowed", "use GET", false);
    } else {
      r = error_response(404, "not_found", "no route for " + std::string(path), false);
    }
  } catch (const Error& e) {
    if (is_provider_error(e.code())) {
      r = error_response(502, "provider_failure", e.what(), e.retryable());
    } else if (e.code() == ErrorCode::invalid_argument) {
      r = error_response(400, "bad_request", e.what(), false);
    } else {
      r = error_response(500, "internal", e.what(), false);
    }
  } catch (const std::exception& e) {
    r = error_response(500, "internal", e.what(), false);
  }
  r.headers["X-Request-Id"] = rid;
  return r;
}

HttpResponse Service::query(const HttpRequest& req) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    return error_response(400, "bad_request", "body is not valid JSON", false);
  }
  if (!body.is_object()) return error_response(400, "bad_request", "body must be a JSON object", false);
  const auto str = [&](const char* key) -> std::optional<std::string> {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw Error(ErrorCode::invalid_argument, std::string("'") + key + "' must be a string");
    return it->get<std::string>();
  };
  const std::string question = str("question").value_or("");
  bool blank = true;
  for (unsigned char c : question) blank = blank && std::isspace(c);
  if (blank) return error_response(400, "empty_question", "question must not be empty", false);
  const std::string mode = str("mode").value_or("graph");
  if (mode != "graph" && mode != "llm_only") {
    return error_response(400, "bad_request", "mode must be 'graph' or 'llm_only'", false);
  }

  AnswerRequest ar;
  ar.question = question;
  if (auto uid = str("user_id")) {
    std::shared_lock lock(users_mutex_);
    if (auto row = users_.get(*uid)) ar.user = *row;
  }
  if (auto lang = str("language"); lang && !lang->empty()) ar.language = *lang;
  else if (!ar.user.language.empty()) ar.language = ar.user.language;
  else ar.language = config_.default_language;

  auto snap = snapshot();
  if (!snap) return error_response(503, "graph_not_loaded", "no knowledge graph is loaded", true);

  Answer a;
  try {
    a = mode == "graph" ? snap->engine->ask(ar) : snap->engine->ask_llm_only(ar.question, ar.language);
  } catch (const AnswerError& e) {
    if (e.code() == ErrorCode::invalid_argument) return error_response(400, "bad_request", e.what(), false);
    HttpResponse r = error_response(is_provider_error(e.code()) ? 502 : 500,
                                    is_provider_error(e.code()) ? "provider_failure" : "internal", e.what(),
                                    e.retryable());
    json j = json::parse(r.body);
    j["diagnostics"] = diagnostics_json(e.partial_diagnostics());
    r.body = j.dump();
    return r;
  }
  const json out = json::parse(answer_json(a, config_.debug_context));
  return json_response(200, out);
}

HttpResponse Service::put_user(const std::string& id, const HttpRequest& req) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    return error_response(400, "bad_request", "body is not valid JSON", false);
  }
  if (!body.is_object()) return error_response(400, "bad_request", "body must be a JSON object", false);
  UserMetadata m;
  m.user_id = id;
  try {
    m.language = body.value("language", "");
    m.country = body.value("country", "");
    if (auto it = body.find("preferences"); it != body.end()) {
      if (!it->is_object()) return error_response(400, "bad_request", "preferences must be an object", false);
      for (const auto& [k, v] : it->items()) m.preferences[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  } catch (const json::exception&) {
    return error_response(400, "bad_request", "language and country must be strings", false);
  }
  std::unique_lock lock(users_mutex_);
  users_.set(std::move(m));
  HttpResponse r;
  r.status = 204;
  return r;
}

HttpResponse Service::get_user(const std::string& id) {
  std::shared_lock lock(users_mutex_);
  auto row = users_.get(id);
  if (!row) return error_response(404, "unknown_user", "no metadata for user '" + id + "'", false);
  json prefs = json::object();
  for (const auto& [k, v] : row->preferences) prefs[k] = v;
  return json_response(200, {{"user_id", row->user_id},
                             {"language", row->language},
                             {"country", row->country},
                             {"preferences", prefs}});
}

HttpResponse Service::post_documents(const HttpRequest& req) {
  std::vector<SourceDocument> docs;
  try {
    docs = parse_manifest(req.body);
  } catch (const Error& e) {
    return error_response(400, "bad_request", e.what(), false);
  }
  if (docs.empty()) return error_response(400, "bad_request", "manifest contains no documents", false);
  const std::size_t count = docs.size();
  const std::string id = enqueue(JobKind::ingest, [this, docs = std::move(docs)](JobStatus& st) {
    std::vector<ChunkRecord> records;
    for (const auto& d : docs) {
      for (auto& c : make_chunks(d, config_.chunking)) records.push_back({std::move(c), d.uri, d.language});
      update_job(st.id, [&](JobStatus& s) {
        ++s.documents;
        s.chunks_processed = records.size();
      });
    }
    std::lock_guard lock(staging_mutex_);
    for (auto& r : records) staged_.push_back(std::move(r));
  });
  json out = {{"job_id", id}, {"documents", count}};
  return json_response(202, out);
}

HttpResponse Service::post_build() {
  {
    std::lock_guard lock(jobs_mutex_);
    for (const auto& [jid, st] : jobs_) {
      if (st.kind == JobKind::build && (st.state == JobState::queued || st.state == JobState::running)) {
        return error_response(409, "build_in_progress", "build job " + jid + " has not finished", true);
      }
    }
  }
  const std::string id = enqueue(JobKind::build, [this](JobStatus& st) {
    std::vector<ChunkRecord> chunks;
    {
      std::lock_guard lock(staging_mutex_);
      chunks.swap(staged_);
    }
    try {
      ExtractionReport report;
      const std::string job_id = st.id;
      auto triples = extract_corpus(chunks, *providers_.chat, {}, config_.extraction_concurrency, &report,
                                    [&](const ExtractionReport& p) {
                                      update_job(job_id, [&](JobStatus& s) {
                                        s.chunks_processed = p.chunks_processed;
                                        s.triples_extracted = p.triples_extracted;
                                      });
                                    });
      auto current = snapshot();
      KnowledgeGraph g = current ? *current->graph : init_ontology();
      populate_graph(g, chunks, triples, *providers_.embedder);
      {
        std::shared_lock lock(users_mutex_);
        for (const auto& [uid, row] : users_.rows()) g.users().set(row);
      }
      std::set<std::string> docs;
      for (const auto& c : chunks) docs.insert(c.chunk.doc_id);
      update_job(job_id, [&](JobStatus& s) {
        s.documents = docs.size();
        s.chunks_processed = report.chunks_processed;
        s.triples_extracted = report.triples_extracted;
      });
      if (!config_.graph_path.empty()) g.save(std::filesystem::path(config_.graph_path));
      install(std::move(g));
    } catch (...) {
      // Put the chunks back so a retried build sees them.
      std::lock_guard lock(staging_mutex_);
      staged_.insert(staged_.begin(), chunks.begin(), chunks.end());
      throw;
    }
  });
  return json_response(202, {{"job_id", id}});
}

HttpResponse Service::get_job(const std::string& id) {
  auto st = job(id);
  if (!st) return error_response(404, "unknown_job", "no job '" + id + "'", false);
  return json_response(200, job_json(*st));
}

HttpResponse Service::graph_stats() {
  auto snap = snapshot();
  if (!snap) return error_response(503, "graph_not_loaded", "no knowledge graph is loaded", true);
  const GraphStats s = snap->graph->stats();
  return json_response(200, {{"entities", s.entities},
                             {"relationships", s.relationships},
                             {"documents", s.documents},
                             {"chunks", s.chunks},
                             {"embedding_dim", s.embedding_dim},
                             {"nodes", snap->graph->node_count()},
                             {"edges", snap->graph->edge_count()}});
}

HttpResponse Service::health() {
  return json_response(200, {{"status", "ok"},
                             {"graph_loaded", graph_loaded()},
                             {"provider_kind", providers_.chat->kind()}});
}

std::string Service::enqueue(JobKind kind, std::function<void(JobStatus&)> work) {
  std::string id;
  {
    std::lock_guard lock(jobs_mutex_);
    id = "job-" + std::to_string(next_job_++);
    JobStatus st;
    st.id = id;
    st.kind = kind;
    jobs_[id] = st;
    queue_.emplace_back(id, std::move(work));
  }
  jobs_cv_.notify_all();
  return id;
}

void Service::update_job(const std::string& id, const std::function<void(JobStatus&)>& fn) {
  std::lock_guard lock(jobs_mutex_);
  if (auto it = jobs_.find(id); it != jobs_.end()) fn(it->second);
}

std::optional<JobStatus> Service::job(const std::string& id) const {
  std::lock_guard lock(jobs_mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void Service::worker_loop() {
  for (;;) {
    std::pair<std::string, std::function<void(JobStatus&)>> item;
    {
      std::unique_lock lock(jobs_mutex_);
      jobs_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      item = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
      jobs_.at(item.first).state = JobState::running;
    }
    JobStatus scratch;
    scratch.id = item.first;
    std::string failure;
    try {
      item.second(scratch);
    } catch (const std::exception& e) {
      failure = e.what();
      if (failure.empty()) failure = "job failed";
    }
    {
      std::lock_guard lock(jobs_mutex_);
      auto& st = jobs_.at(item.first);
      st.state = failure.empty() ? JobState::done : JobState::failed;
      st.error = failure;
      busy_ = false;
    }
    idle_cv_.notify_all();
  }
}

void Service::wait_idle() {
  std::unique_lock lock(jobs_mutex_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

namespace {

void bridge(Service& svc, const httplib::Request& in, httplib::Response& out) {
  HttpRequest r;
  r.method = in.method;
  r.path = in.path;
  r.body = in.body;
  for (const auto& [k, v] : in.headers) r.headers[k] = v;
  HttpResponse res = svc.handle(r);
  out.status = res.status;
  std::string type = "application/json";
  for (const auto& [k, v] : res.headers) {
    if (k == "Content-Type") type = v;
    else out.set_header(k, v);
  }
  if (res.status != 204) out.set_content(res.body, type);
}

}  // namespace

bool Service::listen(const std::string& host, int port) {
  if (!server_) {
    server_ = std::make_unique<Server>();
    auto h = [this](const httplib::Request& in, httplib::Response& out) { bridge(*this, in, out); };
    server_->http.Get(".*", h);
    server_->http.Post(".*", h);
    server_->http.Put(".*", h);
    server_->http.Delete(".*", h);
  }
  return server_->http.listen(host, port);
}

int Service::listen_background(const std::string& host) {
  stop();
  server_ = std::make_unique<Server>();
  auto h = [this](const httplib::Request& in, httplib::Response& out) { bridge(*this, in, out); };
  server_->http.Get(".*", h);
  server_->http.Post(".*", h);
  server_->http.Put(".*", h);
  server_->http.Delete(".*", h);
  const int port = server_->http.bind_to_any_port(host);
  if (port < 0) throw Error(ErrorCode::io, "cannot bind " + host);
  server_thread_ = std::thread([this] { server_->http.listen_after_bind(); });
  server_->http.wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->http.stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace grag
