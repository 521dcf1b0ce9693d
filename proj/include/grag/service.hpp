#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "grag/config.hpp"
#include "grag/corpus.hpp"
#include "grag/knowledge_graph.hpp"
#include "grag/pipeline.hpp"

namespace grag {

struct HttpRequest {
  std::string method;
  std::string path;
  std::string body;
  std::map<std::string, std::string> headers;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::map<std::string, std::string> headers;
};

enum class JobKind { ingest, build };
enum class JobState { queued, running, done, failed };
std::string_view to_string(JobKind k);
std::string_view to_string(JobState s);

struct JobStatus {
  std::string id;
  JobKind kind = JobKind::ingest;
  JobState state = JobState::queued;
  std::size_t documents = 0;
  std::size_t chunks_processed = 0;
  std::size_t triples_extracted = 0;
  std::string error;
};

/// HTTP front end over the engine. Queries run concurrently against an
/// immutable graph snapshot; ingestion and builds run one at a time on a
/// background worker and a finished build replaces the snapshot atomically.
class Service {
 public:
  Service(ServiceConfig config, ProviderSet providers, Clock clock = steady_clock());
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void load_graph(const std::filesystem::path& path);
  void set_graph(KnowledgeGraph g);
  bool graph_loaded() const;

  /// Transport-independent dispatch.
  HttpResponse handle(const HttpRequest& request);

  /// Blocks until stop(). Returns false if the socket could not be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and serves on a background thread.
  int listen_background(const std::string& host);
  void stop();

  /// Blocks until the worker queue is empty.
  void wait_idle();

  std::optional<JobStatus> job(const std::string& id) const;
  const ServiceConfig& config() const { return config_; }

 private:
  struct Snapshot {
    std::shared_ptr<const KnowledgeGraph> graph;
    std::shared_ptr<const Engine> engine;
  };

  std::shared_ptr<const Snapshot> snapshot() const;
  void install(KnowledgeGraph g);

  HttpResponse query(const HttpRequest& r);
  HttpResponse put_user(const std::string& id, const HttpRequest& r);
  HttpResponse get_user(const std::string& id);
  HttpResponse post_documents(const HttpRequest& r);
  HttpResponse post_build();
  HttpResponse get_job(const std::string& id);
  HttpResponse graph_stats();
  HttpResponse health();

  std::string enqueue(JobKind kind, std::function<void(JobStatus&)> work);
  void update_job(const std::string& id, const std::function<void(JobStatus&)>& fn);
  void worker_loop();

  ServiceConfig config_;
  ProviderSet providers_;
  Clock clock_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;

  mutable std::shared_mutex users_mutex_;
  UserTable users_;

  std::mutex staging_mutex_;
  std::vector<ChunkRecord> staged_;

  mutable std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, JobStatus> jobs_;
  std::deque<std::pair<std::string, std::function<void(JobStatus&)>>> queue_;
  std::size_t next_job_ = 1;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread worker_;

  std::mutex request_mutex_;
  std::size_t next_request_ = 1;

  struct Server;
  std::unique_ptr<Server> server_;
  std::thread server_thread_;
};

}  // namespace grag
